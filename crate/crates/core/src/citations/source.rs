use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use flate2::read::MultiGzDecoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Gzip,
    Zip,
}

impl Compression {
    pub fn sniff(magic: &[u8]) -> Self {
        if magic.starts_with(&[0x1f, 0x8b]) {
            Compression::Gzip
        } else if magic.starts_with(b"PK\x03\x04") || magic.starts_with(b"PK\x05\x06") {
            Compression::Zip
        } else {
            Compression::None
        }
    }
}

/// Calls `f` once per CSV stream in `path`: once for raw or gzip files,
/// once per non-directory entry for zip archives.
pub fn for_each_stream<F>(path: &Path, mut f: F) -> io::Result<Compression>
where
    F: FnMut(&mut dyn Read) -> io::Result<()>,
{
    let mut file = File::open(path)?;
    let mut magic = [0u8; 4];
    let n = read_up_to(&mut file, &mut magic)?;
    file.seek(SeekFrom::Start(0))?;
    let kind = Compression::sniff(&magic[..n]);
    match kind {
        Compression::None => f(&mut BufReader::new(file))?,
        Compression::Gzip => f(&mut BufReader::new(MultiGzDecoder::new(BufReader::new(file))))?,
        Compression::Zip => {
            let mut archive = zip::ZipArchive::new(BufReader::new(file)).map_err(io::Error::other)?;
            for i in 0..archive.len() {
                let mut entry = archive.by_index(i).map_err(io::Error::other)?;
                if entry.is_dir() {
                    continue;
                }
                f(&mut entry)?;
            }
        }
    }
    Ok(kind)
}

fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
