//! critlab: a numerical laboratory for critical-point statistics of
//! stationary planar Gaussian fields.
//!
//! The crate provides:
//! - isotropic covariance kernels with derivatives to order 6 and their
//!   spectral measures (`kernel`);
//! - the Gaussian covariance algebra around pairs of points: conditional
//!   covariances, densities, closed-form determinant lemmas and the
//!   determinant-moment bound (`gauss`);
//! - Monte Carlo evaluation of the pair-correlation intensity functions and
//!   the second-moment bound predictions (`intensity`);
//! - random-wave field synthesis with exact derivatives (`simulate`);
//! - grid-seeded Newton detection of critical points (`critpoints`);
//! - replication studies of count moments against the bound shape
//!   (`moments`), and the one-dimensional analogue (`oned`).

pub mod critpoints;
pub mod dd;
pub mod error;
pub mod gauss;
pub mod intensity;
pub mod kernel;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use kernel::{ConditionReport, KernelConfig, KernelKind, KernelModel, SpectralMeasure};
