//! Stochastic SIR epidemics on complete graphs with i.i.d. random edge
//! weights, together with the numerical machinery for studying their large
//! and moderate deviations at desk scale.
//!
//! The crate is organised around the pipeline
//!
//! 1. [`environment`] — edge-weight environments, bipartite weight sums and
//!    the worst-case mean-field discrepancy `delta_n`;
//! 2. [`sir`] — exact event-driven simulation of the quenched epidemic chain
//!    and trajectory bookkeeping;
//! 3. [`fluid`] — the deterministic layer: fluid limit, tilted and controlled
//!    ODEs, and the linearization `(b_t, sigma_t, M_0)` used at moderate
//!    deviation scale;
//! 4. [`rates`] — closed-form and variational evaluation of the rate
//!    functionals `I_ini`, `I_dyn`, `J_ini`, `J_dyn`;
//! 5. [`tilting`] — exponential martingale weights and exact simulation of
//!    the exponentially tilted chains via thinning;
//! 6. [`estimators`] — plain and importance-sampling estimation of
//!    path-space rare events with empirical rate extraction.

pub mod environment;
pub mod error;
pub mod estimators;
pub mod fluid;
pub mod mat2;
pub mod path;
pub mod rates;
pub mod rng;
pub mod sir;
pub mod stats;
pub mod tilting;

pub use environment::{Environment, WeightDistribution};
pub use error::{Error, Result};
pub use fluid::{ControlPair, Linearization};
pub use path::{Grid, Path, Path1, Path2};
pub use rates::RateReport;
pub use sir::{EpidemicState, ModelParams, Trajectory};
pub use tilting::{TiltSpec, WeightedTrajectory};
