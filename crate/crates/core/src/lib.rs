//! Spatio-temporal alignment (STA) between series of spatial measures.
//!
//! STA compares two series `x ∈ ℝ^{T₁×p}₊`, `y ∈ ℝ^{T₂×p}₊` by running
//! soft-DTW over the matrix of unbalanced Sinkhorn divergences between their
//! frames, so that both the temporal and the spatial position of activity
//! contribute to the dissimilarity.
//!
//! - [`align`]: soft-DTW forward/backward passes and a brute-force oracle.
//! - [`delannoy`]: Delannoy numbers and the exact inequalities behind the
//!   quadratic shift bound.
//! - [`timeshift`]: onset/offset, temporal shifts, zero-cost census and the
//!   shift-gap experiment.
//! - [`uot`]: ground metrics, Gibbs kernels, the unbalanced Sinkhorn solver
//!   and the Sinkhorn divergence.
//! - [`sta`]: the STA dissimilarity, its gradient and pairwise matrices.
//! - [`synth`]: seeded synthetic fixtures.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`.
//!
//! ```
//! use sta_core::{align::CostMatrix, align::sdtw};
//!
//! let delta = CostMatrix::squared_euclidean(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
//! assert_eq!(sdtw(&delta, 0.0).unwrap(), 1.0);
//! ```

pub mod align;
pub mod delannoy;
pub mod error;
pub mod scalar;
pub mod sta;
pub mod surd;
pub mod synth;
pub mod timeshift;
pub mod uot;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CostMatrixF64 = align::CostMatrix<f64>;
pub type SeriesF64 = sta::SpatioTemporalSeries<f64>;
pub type UotParamsF64 = uot::UotParams<f64>;
pub type GibbsKernelF64 = uot::GibbsKernel<f64>;
pub type GroundGeometryF64 = uot::GroundGeometry<f64>;
pub type CostProviderF64 = sta::CostProvider<f64>;
pub type DissimilarityMatrixF64 = sta::DissimilarityMatrix<f64>;
