use alloc::string::String;
use alloc::vec::Vec;

use crate::solver::TraceEntry;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("support of size {support} exceeds the {sensors} available sensors")]
    OvercompleteSupport { support: usize, sensors: usize },

    #[error("no knee solution with fewer than {max_sources} sources")]
    KneeUnavailable { max_sources: usize },

    #[error("{estimated} estimates cannot cover {truth} true directions")]
    NotAdmissible { estimated: usize, truth: usize },

    #[error("estimation failed after {} generations without a knee solution", trace.len())]
    EstimationFailed { trace: Vec<TraceEntry> },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
