//! DOI harvesting from CV text: extraction, repair, de-duplication and
//! existence validation.

mod extract;
mod validate;

pub use extract::{extract_dois, format_list, ExtractionReport, RejectReason, Rejection};
pub use validate::{
    validate_dois, DoiProxyResolver, Existence, ExistenceOracle, FixtureResolver, RetryPolicy,
    Validation,
};
