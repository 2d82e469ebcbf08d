//! Two-scale spectral asymptotics for periodic media with doubly high-contrast
//! inclusions: stiffness ε and density ε⁻¹ inside the inclusions.

pub mod error;
pub mod sparse;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
pub mod bessel;
pub mod caseb;
pub mod cell;
pub mod eigen;
pub mod fem;
pub mod finescale;
pub mod geometry;
pub mod homogenized;
pub mod micro;
pub mod richardson;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
