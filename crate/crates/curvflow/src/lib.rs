//! Numerical lab for the prescribed scalar curvature flow.
//!
//! Three levels of the same problem live here:
//!
//! * the conformal-factor PDE on `S^n` in rotational symmetry ([`pdeflow`], [`energy`]),
//! * the finite-dimensional bubble dynamics ([`shadow`], [`bubbles`]),
//! * the radial-integral constants tying them together ([`constants`]).
//!
//! Everything works in dimensions 3, 4 and 5, see [`Dim`].
//!
//! ```
//! use curvflow::{constants::constants_table, Dim};
//!
//! let t = constants_table(Dim::new(5).unwrap()).unwrap();
//! assert!((t.gamma3_over_gamma2() - 3.0).abs() < 1e-6);
//! ```

pub mod bubbles;
pub mod constants;
pub mod decompose;
mod dim;
mod error;
pub mod energy;
pub mod geometry;
pub mod ode;
pub mod pdeflow;
pub mod poly;
pub mod quad;
pub mod shadow;

pub use dim::Dim;
pub use error::{Error, Result};
