use thiserror::Error;

/// Errors raised by the simulation and identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure in {what} (achieved tolerance {achieved:.3e})")]
    Numeric { what: String, achieved: f64 },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("no admissible segmentation: {0}")]
    Infeasible(String),

    #[error("segment {segment} too short for {m} refine points (usable length {usable}); widen the band or lower m")]
    SegmentTooShort {
        segment: usize,
        m: usize,
        usable: i64,
    },

    #[error("covariance matrix ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("stage `{stage}` failed at K={k}: {source}")]
    Stage {
        stage: &'static str,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str, k: usize) -> Error {
        Error::Stage {
            stage,
            k,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
