use thiserror::Error;

/// Errors produced by constructions, solvers and experiment pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bump width {width} must be positive and smaller than half the period {period}")]
    BumpWidth { width: f64, period: f64 },

    #[error("support condition failed: min eta2' over supp eta1 is {min_slope}")]
    SupportCondition { min_slope: f64 },

    #[error("coefficient bound violated: {name} has range [{lo}, {hi}] outside [{nu}, {nu_inv}]")]
    BoundViolation {
        name: &'static str,
        lo: f64,
        hi: f64,
        nu: f64,
        nu_inv: f64,
    },

    #[error("invariant density is not strictly positive (min {min_v})")]
    PositivityFailure { min_v: f64 },

    #[error("coefficients are not mirror-compatible: |{name}'| = {slope} within {margin} of an integer")]
    MirrorCheck {
        name: &'static str,
        slope: f64,
        margin: f64,
    },

    #[error("drift integral over one period is {g1}, expected {expected}")]
    DriftSign { g1: f64, expected: &'static str },

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("explicit scheme unstable: dt = {dt} exceeds {max_dt}")]
    StabilityViolation { dt: f64, max_dt: f64 },

    #[error("grid request exceeds resource cap: {what} = {requested} > {cap}")]
    ResourceCap {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("orthogonality violated: (f, v) = {inner} exceeds tolerance {tol}")]
    Orthogonality { inner: f64, tol: f64 },

    #[error("iteration is not contracting: c_k increased over {count} consecutive periods")]
    NonContraction { count: usize },

    #[error("region contains {nodes} grid nodes, need at least {needed}")]
    Resolution { nodes: usize, needed: usize },

    #[error("field is negative ({min}) inside the comparison region")]
    Negativity { min: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
