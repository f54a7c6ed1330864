//! Multilevel Monte Carlo path simulation for scalar SDEs.
//!
//! Paths are discretised with the Milstein (or Euler) scheme. Fine and coarse
//! paths of each level share one Brownian draw, and the payoff estimators use
//! Brownian-bridge interpolation between timesteps so that lookback, barrier
//! and digital options keep fast variance decay across levels.
//!
//! ```
//! use mlmc_core::{gbm_model, mlmc_run, GbmParams, MlmcConfig, MlmcProblem, PayoffSpec, Scheme};
//!
//! let params = GbmParams::new(0.05, 0.2, 1.0, 1.0).unwrap();
//! let problem = MlmcProblem::new(
//!     gbm_model(params).unwrap(),
//!     PayoffSpec::european_call(1.0, 1.0),
//!     Scheme::Milstein,
//! )
//! .unwrap();
//! let config = MlmcConfig { n_warm: 1000, ..MlmcConfig::default() };
//! let result = mlmc_run(&problem, 5e-3, &config).unwrap();
//! assert!((result.estimate - 0.1045).abs() < 0.02);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod error;
pub mod mlmc;
pub mod model;
pub mod payoffs;
pub mod reference;
pub mod schemes;
pub mod stats;
pub mod stream;
pub mod validation;

pub use brownian::{CoupledIncrements, LevelGrid};
pub use error::{Error, Result};
pub use mlmc::{
    consistency_statistic, convergence_table, coupling_statistic, estimate_level, fit_table_rates,
    mlmc_run, optimal_allocation, LevelEstimate, MlmcConfig, MlmcProblem, MlmcResult, RunError,
    TableRates,
};
pub use model::{gbm_exact_terminal, gbm_model, GbmParams, ScalarSdeModel};
pub use payoffs::{AsianTreatment, BarrierKind, PayoffPair, PayoffSpec};
pub use schemes::{CoupledPathRecord, Scheme};
pub use stats::{fit_rate, normal_cdf, normal_inv_cdf, RateFit, RunningMoments};
