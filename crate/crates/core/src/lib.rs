//! The multivariate inverse Gaussian (MIG) distribution on half-spaces.
//!
//! A MIG law lives on `H_d(β) = {x : βᵀx > 0}` and has density
//!
//! ```text
//! k(x) = (2π)^{-d/2} βᵀξ |Ω|^{-1/2} (βᵀx)^{-(d/2+1)} exp{-(x-ξ)ᵀΩ⁻¹(x-ξ) / (2βᵀx)}
//! ```
//!
//! with mean `ξ` and covariance `βᵀξ Ω`. The crate covers
//!
//! * densities, derivatives, bounds and estimators ([`MigParams`], [`estimate`]),
//! * exact sampling ([`sampling`]),
//! * the distribution function by plain Monte Carlo and sequential importance
//!   sampling ([`cdf`]),
//! * the asymmetric MIG kernel smoother with bandwidth selection ([`kde`]),
//! * numerical checks of the Gaussian local approximation ([`llt`]),
//! * the simulation study targets and metrics ([`experiments`]).
//!
//! ```
//! use mig::{MigParams, RngStream};
//! use mig::sampling::MigSampler;
//!
//! let p = MigParams::from_slices(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
//! assert!((p.log_density(&[1.0, 1.0]).unwrap() - (1.0 / (4.0 * std::f64::consts::PI)).ln()).abs() < 1e-14);
//!
//! let draws = MigSampler::new(&p).sample(1000, &RngStream::new(7, 0)).unwrap();
//! assert!(draws.rows().all(|x| x[0] + x[1] > 0.0));
//! ```

pub mod cdf;
mod density;
mod error;
pub mod estimate;
pub mod experiments;
pub mod kde;
pub mod linalg;
pub mod llt;
mod params;
mod rng;
pub mod sampling;
pub mod special;

pub use density::mvn_log_density;
pub use error::{Error, Result};
pub use linalg::SpdMatrix;
pub use params::{HalfSpace, IgParams, MigParams, SampleBatch};
pub use rng::RngStream;
