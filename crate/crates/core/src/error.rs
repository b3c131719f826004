use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian: max |m - m†| = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("trace deviates from one by {deviation:.3e} (tolerance {tolerance:.3e})")]
    TraceNotOne { deviation: f64, tolerance: f64 },

    #[error("state is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("population {p} outside [0, 1]")]
    PopulationOutOfRange { p: f64 },

    #[error("coherence violates purity bound: |u|^2 = {u_sq:.3e} > p(1-p) = {bound:.3e}")]
    PurityViolation { u_sq: f64, bound: f64 },

    #[error("collapse operator has (near-)degenerate eigenvalues: min gap {gap:.3e}")]
    DegenerateEigenvalues { gap: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("integration step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Kraus step trace vanished ({trace:.3e}); dt is too large for this model")]
    VanishingTrace { trace: f64 },

    #[error("averaged master equation step too large: dt * total rate = {product:.3} > 0.1")]
    StepSizeTooLarge { product: f64 },

    #[error("{unresolved} of {total} trajectories did not resolve to a pointer; horizon too short")]
    TooManyUnresolved { unresolved: usize, total: usize },

    #[error("fit window [{t_min}, {t_max}] contains {count} usable samples (need >= 2)")]
    EmptyFitWindow { t_min: f64, t_max: f64, count: usize },

    #[error("non-positive values in fit window; exponential fit needs positive data")]
    NonPositiveFitData,

    #[error("insufficient events: {found} found, {needed} needed for {context}")]
    InsufficientEvents {
        found: usize,
        needed: usize,
        context: &'static str,
    },

    #[error("spike thresholds must satisfy 0 < delta < epsilon < 0.5 (got delta={delta}, epsilon={epsilon})")]
    BadThresholds { delta: f64, epsilon: f64 },

    #[error("Liouvillian violates the rate formula's hypotheses: {message}")]
    ScalingHypothesis { message: String },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
