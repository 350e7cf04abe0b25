//! CSV tables and SVG bar charts for agreement reports.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{AgreementReport, GroupKey, Tally};
use crate::taxonomy::{Level, RecruitmentField};

/// Row labels of a wide table, in order.
pub const TABLE_ROWS: [&str; 5] = [
    "Number of candidates",
    "Overall agreement",
    "Journals (A)",
    "Citations (B)",
    "H-index (C)",
];

fn pct_cell(t: &Tally) -> String {
    t.pct().map(|p| format!("{p:.2}")).unwrap_or_default()
}

/// Wide table: one column per group, rows as in [`TABLE_ROWS`]. Cells
/// with no known per-metric agreement are left empty.
pub fn write_table<W: Write>(w: W, reports: &[AgreementReport]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.key.label()));
    out.write_record(&header)?;

    let mut n_row = vec![TABLE_ROWS[0].to_string()];
    n_row.extend(reports.iter().map(|r| r.n().to_string()));
    out.write_record(&n_row)?;

    let mut overall = vec![TABLE_ROWS[1].to_string()];
    overall.extend(reports.iter().map(|r| pct_cell(&r.overall)));
    out.write_record(&overall)?;

    for (i, label) in TABLE_ROWS[2..].iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(reports.iter().map(|r| pct_cell(&r.metrics[i])));
        out.write_record(&row)?;
    }
    out.flush()
}

/// Long table: `level,group,measure,agree,n,pct`, one row per cell.
pub fn write_long<W: Write>(w: W, reports: &[AgreementReport]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "group", "measure", "agree", "n", "pct"])?;
    for r in reports {
        let level = r.key.level().to_string();
        let group = r.key.label();
        let cells = [("overall", r.overall), ("a", r.metrics[0]), ("b", r.metrics[1]), ("c", r.metrics[2])];
        for (measure, tally) in cells {
            out.write_record([
                level.as_str(),
                group.as_str(),
                measure,
                &tally.agree.to_string(),
                &tally.n.to_string(),
                &pct_cell(&tally),
            ])?;
        }
    }
    out.flush()
}

const BAR_W: f64 = 28.0;
const BAR_GAP: f64 = 6.0;
const GROUP_GAP: f64 = 40.0;
const PLOT_H: f64 = 200.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];
const BAR_LABELS: [&str; 4] = ["Overall", "A", "B", "C"];

/// Bar chart for one recruitment field: FP and AP side by side, four bars
/// each (overall, A, B, C). Returns `None` when neither level has data.
pub fn render_rf_chart(rf: RecruitmentField, reports: &[AgreementReport]) -> Option<String> {
    let groups: Vec<(Level, &AgreementReport)> = Level::ALL
        .iter()
        .filter_map(|&level| {
            reports
                .iter()
                .find(|r| r.key == GroupKey::LevelRf(level, rf))
                .map(|r| (level, r))
        })
        .collect();
    if groups.is_empty() {
        return None;
    }

    let group_w = 4.0 * BAR_W + 3.0 * BAR_GAP;
    let width = 2.0 * MARGIN + group_w * groups.len() as f64 + GROUP_GAP * (groups.len() - 1) as f64;
    let height = PLOT_H + 2.0 * MARGIN + 20.0;
    let base = MARGIN + PLOT_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<title>Agreement {rf}</title>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{rf}</text>"#,
        width / 2.0
    );
    for tick in [0, 25, 50, 75, 100] {
        let y = base - PLOT_H * f64::from(tick) / 100.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>",
            width - MARGIN / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#,
            MARGIN - 4.0,
            y + 4.0
        );
    }

    for (gi, (level, report)) in groups.iter().enumerate() {
        let x0 = MARGIN + gi as f64 * (group_w + GROUP_GAP);
        let tallies = [report.overall, report.metrics[0], report.metrics[1], report.metrics[2]];
        for (bi, tally) in tallies.iter().enumerate() {
            let x = x0 + bi as f64 * (BAR_W + BAR_GAP);
            let pct = tally.pct().unwrap_or(0.0);
            let h = PLOT_H * pct / 100.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{}" width="{BAR_W}" height="{h}" fill="{}"><title>{level} {}: {} ({}/{})</title></rect>"#,
                base - h,
                COLORS[bi],
                BAR_LABELS[bi],
                pct_cell(tally),
                tally.agree,
                tally.n
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + BAR_W / 2.0,
                base + 14.0,
                BAR_LABELS[bi]
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{level} (n={})</text>"#,
            x0 + group_w / 2.0,
            base + 32.0,
            report.n()
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(key: GroupKey, overall: (u64, u64)) -> AgreementReport {
        AgreementReport {
            key,
            overall: Tally { agree: overall.0, n: overall.1 },
            metrics: [
                Tally { agree: 1, n: 3 },
                Tally::default(),
                Tally { agree: 2, n: 2 },
            ],
        }
    }

    #[test]
    fn wide_table_layout() {
        let reports = [
            report(GroupKey::LevelSa(Level::FullProfessor, 1), (1, 2)),
            report(GroupKey::LevelSa(Level::FullProfessor, 3), (2, 3)),
        ];
        let mut buf = Vec::new();
        write_table(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "metric,SA 01,SA 03");
        assert_eq!(lines[1], "Number of candidates,2,3");
        assert_eq!(lines[2], "Overall agreement,50.00,66.67");
        assert_eq!(lines[3], "Journals (A),33.33,33.33");
        assert_eq!(lines[4], "Citations (B),,");
        assert_eq!(lines[5], "H-index (C),100.00,100.00");
    }

    #[test]
    fn long_table_rows() {
        let reports = [report(GroupKey::Level(Level::AssociateProfessor), (1, 2))];
        let mut buf = Vec::new();
        write_long(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("AP,AP,overall,1,2,50.00"));
    }

    #[test]
    fn chart_has_bars_per_level() {
        let rf = RecruitmentField::parse("09/D3").unwrap();
        let reports = [
            report(GroupKey::LevelRf(Level::FullProfessor, rf), (1, 2)),
            report(GroupKey::LevelRf(Level::AssociateProfessor, rf), (2, 2)),
        ];
        let svg = render_rf_chart(rf, &reports).unwrap();
        assert_eq!(svg.matches("<rect").count(), 8);
        assert!(svg.starts_with("<svg"));
        let other = RecruitmentField::parse("01/A1").unwrap();
        assert!(render_rf_chart(other, &reports).is_none());
    }
}
