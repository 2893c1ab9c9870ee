//! Scalar numerical building blocks: adaptive quadrature and bracketed root finding.

pub mod gamma;
pub mod linalg;
pub mod quad;
pub mod root;

pub use quad::{integrate, Quadrature, QuadratureResult};
pub use root::{bisect, Bracket};
