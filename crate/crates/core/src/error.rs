use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("level {level} outside [0, {max}]")]
    LevelOutOfRange { level: i64, max: u32 },

    #[error("count overflows: {0}")]
    Overflow(String),

    #[error("cannot parse point {input:?}: {reason}")]
    PointParse { input: String, reason: String },

    #[error("point {0} lies outside the ball")]
    OutsideBall(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("expected {expected:.3e} open edges exceeds the memory budget of {budget}")]
    EdgeBudget { expected: f64, budget: u64 },

    #[error("kernel is not radially symmetric: {0}")]
    NonRadialKernel(String),

    #[error("beta {beta} exceeds the divergence guard {guard} for infinite-volume exploration")]
    DivergenceGuard { beta: f64, guard: f64 },

    #[error("enumeration over {edges} pairs exceeds the limit of {limit}")]
    EnumerationTooLarge { edges: usize, limit: usize },

    #[error("invalid estimator input: {0}")]
    Estimator(String),

    #[error("no sign change of R_{upper} - R_{lower} over [{lo}, {hi}]")]
    NoSignChange { lower: u32, upper: u32, lo: f64, hi: f64 },
}
