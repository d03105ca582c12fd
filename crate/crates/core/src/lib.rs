//! Approximate highest-posterior-density credible regions for log-concave
//! imaging models, with MAP estimation, proximal MCMC references and
//! analytic checks.

mod admm;
pub mod analytic;
pub mod error;
pub mod image;
pub mod io;
pub mod map_admm;
pub mod model;
pub mod operators;
pub mod prox;
pub mod pxmala;
pub mod region;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod surrogate;
pub mod synth;

pub use analytic::{asymptotic_limit, error_curve, exact_gamma, mc_gamma, ErrorCurvePoint, GenGaussianModel};
pub use error::{Result, UqError};
pub use image::{ComplexGrid, GradientField, Image};
pub use map_admm::{kkt_check, kkt_threshold, run_map_solver, solve_map, AdmmConfig, SolveReport};
pub use model::{ModelKind, PosteriorModel, PotentialValue};
pub use prox::{prox_full_potential, ProxConfig, ProxSolver};
pub use pxmala::{estimate_gamma, pxmala_step, relative_error, run_chain, ChainConfig, ChainOutput, PxMala};
pub use region::{build_region, is_member, knockout_test, scalar_sweep, error_band, CredibleRegion, ErrorBand, SweepConfig, SweepResult, TestOutcome};
pub use scalar::Real;
pub use stats::QuantileEstimate;
pub use surrogate::Roi;

/// Double-precision image.
pub type GridImage = Image<f64>;
/// Double-precision Fourier coefficients.
pub type ComplexImage = ComplexGrid<f64>;
/// Double-precision posterior.
pub type Posterior = PosteriorModel<f64>;
