//! Multiscale diagnostics for `C^{1,alpha}` rectifiability of weighted point
//! clouds: plane fitting, beta numbers, paraboloid and cylinder excess,
//! plane-rotation rates, Whitney jet constants, and synthetic test sets.

pub mod cloud;
pub mod error;
pub mod fitting;
pub mod generators;
pub mod geometry;
pub mod multiscale;
pub mod numeric;
pub mod verify;
pub mod whitney;

pub use cloud::{DensityEstimate, WeightedCloud};
pub use error::{Error, Result};
pub use fitting::{BetaResult, Exponent, FitOptions};
