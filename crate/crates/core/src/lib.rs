//! Sampling continuous determinantal point processes on boxes.
//!
//! Points are drawn one coordinate at a time by inverting closed-form
//! conditional CDFs of the posterior variance of a Gaussian process, for
//! square-exponential and exponential kernels. Finite-rank (Nyström and
//! spectral) approximations trade exactness for cost independent of the
//! number of points, and an oracle module judges both against quadrature and
//! rejection sampling.
//!
//! ```
//! use dpp_core::kernels::{KernelFamily, KernelSpec};
//!
//! let spec = KernelSpec::isotropic(KernelFamily::SquareExponential, 0.1, 2)?;
//! let set = dpp_core::sampler::draw(&spec, 20, 7)?;
//! assert_eq!(set.points.len(), 20);
//! assert!(set.points.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
//! # Ok::<(), dpp_core::error::DppError>(())
//! ```

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values.
// Quadrature nodes and erf coefficients are kept digit-for-digit as tabulated.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod compare;
pub mod error;
pub mod kernels;
pub mod lowrank;
pub mod oracle;
pub mod sampler;
pub mod special;
pub mod state;
pub mod validate;

pub use error::{DppError, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use sampler::{draw, ExactSampler, PointSet};
pub use state::DppState;
