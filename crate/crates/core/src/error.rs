use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("derivative order {order} unsupported (maximum is 6)")]
    UnsupportedOrder { order: usize },

    #[error("degenerate kernel: {reason}")]
    DegenerateKernel { reason: String },

    #[error("matrix is singular or near-singular (condition estimate {cond:.3e})")]
    SingularMatrix { cond: f64 },

    #[error("degenerate pair at separation {r:.6e} (condition estimate {cond:.3e})")]
    DegeneratePair { r: f64, cond: f64 },

    #[error("conditional covariance has eigenvalue {value:.3e} below the PSD tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("lemma denominator 2a - a^2 is singular (a in {{0, 2}})")]
    SingularLemmaDenominator,

    #[error("spectral measure is not sampleable for this kernel")]
    NonSampleableMeasure,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
