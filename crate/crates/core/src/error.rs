use thiserror::Error;

/// Which schedule condition a [`crate::spectral::PerturbationSchedule`] failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleCondition {
    /// `M_j` increasing, `q_j` nondecreasing, `M_j^2 / q_j` decreasing.
    Mq,
    /// Consecutive perturbation zones must not overlap.
    Nonover,
    /// A zone must sit strictly inside `(0, pi)` and be nonempty.
    ZoneRange,
}

impl std::fmt::Display for ScheduleCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ScheduleCondition::Mq => "Mq",
            ScheduleCondition::Nonover => "nonover",
            ScheduleCondition::ZoneRange => "zone-range",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular point: the density for H = {hurst} is unbounded at u = 0")]
    SingularPoint { hurst: f64 },

    #[error("adjoint iteration diverged (last residual {residual:e})")]
    AdjointDiverged { residual: f64 },

    #[error(
        "invalid perturbation schedule: condition {condition} fails at level {level}: {detail}"
    )]
    InvalidSchedule {
        condition: ScheduleCondition,
        level: usize,
        detail: String,
    },

    #[error("quadrature tolerance not met (achieved error {achieved:e}, requested {requested:e})")]
    QuadratureTolerance { achieved: f64, requested: f64 },

    #[error("autocovariance horizon too short: need lag {needed}, model stops at {available}")]
    HorizonTooShort { needed: usize, available: usize },

    #[error("singular covariance (Kolmogorov criterion may fail)")]
    SingularCovariance,

    #[error("covariance is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("embedding failed, use cholesky (circulant eigenvalue {eigenvalue:e})")]
    EmbeddingFailed { eigenvalue: f64 },

    #[error("atom sampler requires purely atomic measure")]
    NotPurelyAtomic,

    #[error("degenerate covariance: use analytic reduction")]
    DegenerateCovariance,

    #[error("theorem not applicable in this regime ({regime})")]
    RegimeMismatch { regime: String },

    #[error("irregular sequence: Szegő term undefined")]
    IrregularSequence,

    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge")]
    EigenNoConvergence,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
