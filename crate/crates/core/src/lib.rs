//! Reproduces the bibliometric phase of the Italian National Scientific
//! Qualification (ASN) from open data: DOIs harvested from CVs,
//! publication types from Crossref and citation counts from the COCI dump.
//! Simulated outcomes are compared with the official ones and aggregated
//! into agreement tables.

pub mod agreement;
pub mod assessment;
pub mod citations;
pub mod doi;
pub mod harvest;
pub mod http;
pub mod metadata;
pub mod metrics;
pub mod pipeline;
pub mod taxonomy;

pub use doi::Doi;
