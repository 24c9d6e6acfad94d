//! Data-driven distributionally robust chance constraints.
//!
//! A chance constraint `Pr(aᵀx ≤ 0) ≥ 1 − α` over an unknown distribution is
//! replaced by a deterministic second-order-cone surrogate built from streamed
//! sample moments, a support radius and sample-size dependent coefficients that
//! absorb the estimation error of the moments themselves.
//!
//! The crate is `no_std` (with `alloc`). Modules:
//!
//! - [`moments`]: streaming mean / covariance accumulators.
//! - [`support`]: support sets and the radius function `r(z)`.
//! - [`schedules`]: the `κ_N`, `φ_N`, `ν_N` coefficient schedules and related bounds.
//! - [`surrogate`]: constraint blocks for every surrogate method.
//! - [`conic`]: conic program model, feasibility checker and interior-point solver.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod conic;
mod error;
mod math;
pub mod moments;
pub mod quantile;
pub mod schedules;
pub mod support;
pub mod surrogate;

pub use error::{Error, Result};
pub use moments::{Covariance, CovarianceMode, MomentState, Moments};
pub use support::SupportSet;
