//! Direct and spillover treatment effects for outcomes that interact through
//! an Ising-type Gibbs measure.
//!
//! Estimators:
//! - [`exact`]: brute-force enumeration, the reference for everything else.
//! - [`glauber`]: heat-bath MCMC baseline and mixing diagnostics.
//! - [`block`]: exact collapsed computation on a block approximation of a
//!   dense coupling matrix (built by [`regularity`]).
//! - [`parisi`]: Parisi-PDE limits and the AMP estimator for Gaussian couplings.
//! - [`inference`]: pseudo-likelihood fitting and plug-in estimation.
//! - [`limits`]: mean-field graphon limits and free-energy identities.

pub mod effects;
pub mod error;
pub mod exact;
pub mod glauber;
pub mod inference;
pub mod limits;
pub mod block;
pub mod model;
pub mod parisi;
pub mod regularity;
pub mod rng;

pub use effects::{EffectEstimate, Estimate, ReplicateDraw};
pub use error::{Error, Result};
pub use model::{
    CovariateLaw, CovariateMatrix, InteractionKind, InteractionMatrix, OutcomeParams,
    PropensityParams, Spin,
};
