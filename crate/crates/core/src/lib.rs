//! Hierarchical mixture of dyadic cubes on Z^d: exact thermodynamics.
//!
//! Blocks are aligned cubes of side 2^j that are pairwise nested or
//! disjoint. The partition function factorizes level by level, which makes
//! pressure, block densities, entropy, and the full phase diagram computable
//! to machine precision. Small volumes are cross-checked against exact
//! rational enumeration, and a recursive sampler draws finite-volume
//! configurations for Monte Carlo estimates.

pub mod combin;
pub mod density;
pub mod entropy;
pub mod error;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod phase;
pub mod pressure;
pub mod sampler;

pub use density::{densities, equation_of_state, invert, DensityReport, InversionReport};
pub use entropy::{
    bernoulli_entropy, chemical_potentials, entropy_hat, entropy_report, entropy_sigma,
    entropy_upper_bound, free_energy, legendre_objective, phi_series, EntropyReport,
};
pub use error::{Error, Result};
pub use model::{ActivityModel, Configuration, ModelConfig, Profile, StabilityReport};
pub use oracle::{ln_rational, rational_from_f64, BigRational, Census};
pub use phase::{
    classify_constant_energy, critical_lambda, first_order_report, fixed_points, mu_c_scan,
    phase_report, tangency_constant, v_iteration, zeta_solver, Certificate, FirstOrderReport,
    FixedPoints, PhaseReport, TransitionKind,
};
pub use pressure::{
    effective_activities, finite_volume_densities, finite_volume_log_partition,
    finite_volume_pressure, pressure, PressureReport, Regime,
};
pub use sampler::{fractal_export, run_replicas, FractalCube, SampleStats, Sampler};
