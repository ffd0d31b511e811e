//! Explicit solutions of matrix Riemann-Hilbert problems with quasi-permutation
//! monodromy, built from theta functions and Szegő kernels on branched coverings
//! of the sphere, together with numerical checks of the Schlesinger system and
//! the isomonodromic tau-function.

pub mod config;
pub mod covering;
pub mod error;
pub mod io;
pub mod isomono;
pub mod kernels;
pub mod linalg;
pub mod monodromy;
pub mod poly;
pub mod quad;
pub mod rhp;
pub mod surface;
pub mod theta;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used throughout.
pub type CMat = nalgebra::DMatrix<C64>;

pub(crate) const TWO_PI_I: C64 = C64::new(0.0, 2.0 * std::f64::consts::PI);
