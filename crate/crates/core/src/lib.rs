//! Resource-competition ecosystems with self-limitation and extinction
//! thresholds.
//!
//! The closed-form parts are generic over [`num::Scalar`] (`f32`, `f64`,
//! [`num_rational::Rational64`]); integration and equilibrium solving need
//! [`num::Real`].

pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod estimates;
pub mod model;
pub mod num;

pub use error::{Error, Result};
pub use model::{EcosystemParams, GrowthKind, GrowthLaw};

/// Double-precision parameter set.
pub type Params = model::EcosystemParams<f64>;
/// Parameter set with exact rational coefficients.
pub type ExactParams = model::EcosystemParams<num_rational::Rational64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type Equilibrium = equilibrium::EquilibriumResult<f64>;
