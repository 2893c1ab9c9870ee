//! Power allocation for layered broadcast coding with successive refinement
//! over fading channels without transmitter channel knowledge.
//!
//! The crate is `no_std` (it needs `alloc`). Modules:
//!
//! - [`fading`]: discrete pmfs and continuous gain densities.
//! - [`two_layer`]: closed-form split between a layer and the aggregate above it.
//! - [`discrete_alloc`]: optimal multi-layer allocation for a discrete pmf.
//! - [`convex_cost`]: convex distortion costs (risk-sensitive, capped) via an
//!   interior-point solver over the realized distortions.
//! - [`continuous_alloc`]: optimal power density for continuous fading.
//! - [`bounds`]: CSIT and infinite-diversity reference curves, distortion exponent.
//! - [`montecarlo`]: seeded sampling estimates of the expected distortion.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod continuous_alloc;
pub mod convex_cost;
pub mod discrete_alloc;
pub mod error;
pub mod fading;
pub mod montecarlo;
pub mod numeric;
pub mod two_layer;

pub use error::{Error, Result};
