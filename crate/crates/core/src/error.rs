use thiserror::Error;

/// Errors surfaced by the numeric and combinatorial kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Block volume 2^(d*j) exceeds the f64 exponent range.
    #[error("level overflow: 2^({d}*{j}) is not representable")]
    LevelOverflow { d: u32, j: u32 },

    /// Model parameters fail validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Density profile fails validation.
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    /// Profile mass Σρ + σ∞ exceeds 1; no activity system reproduces it.
    #[error("profile outside unit ball: total mass {norm}")]
    OutsideUnitBall { norm: f64 },

    /// Inversion requested for a profile at or beyond close packing.
    #[error("saturated profile: residual free volume {free} below threshold")]
    Saturated { free: f64 },

    /// The scalar map x -> 1 + eps*x^m has no fixed point on [1, inf).
    #[error("no fixed points: eps {eps} exceeds the tangency constant {c_d}")]
    NoFixedPoints { eps: f64, c_d: f64 },

    /// eps sits numerically on the tangency constant; the double root is unstable.
    #[error("tangent case: eps {eps} within tolerance of c_d = {c_d}")]
    Tangent { eps: f64, c_d: f64 },

    /// Fixed-point iteration escaped its a-priori envelope.
    #[error("zeta iteration diverging at sweep {sweep}: mass {mass}")]
    Diverging { sweep: usize, mass: f64 },

    /// Exact enumeration or factorization exceeds the configured cap.
    #[error("problem too large: {0}")]
    TooLarge(String),

    /// Operation needs the parametric (energy) form of the activities.
    #[error("operation requires an energy-parameterized model")]
    EnergyModelRequired,
}

pub type Result<T> = std::result::Result<T, Error>;
