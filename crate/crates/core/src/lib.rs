//! Off-grid direction-of-arrival estimation in impulsive noise with a bilevel
//! multiobjective evolutionary search.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or wall-clock time lives in the `doa-cli` companion.
//! The `std` feature only switches the dependencies' float math from `libm`
//! to the platform's. The two can differ in the last bit, and the evolutionary
//! search amplifies that, so a given seed reproduces only under the same
//! feature set.
//!
//! Layout:
//!
//! * [`array`] uniform linear array, grids, manifolds and synthetic snapshots
//! * [`noise`] Gaussian-mixture and symmetric alpha-stable noise
//! * [`correntropy`] Gaussian kernel, correntropy loss and kernel annealing
//! * [`decode`] correntropy-weighted least squares recovery of row-sparse signals
//! * [`moea`] on-grid evolutionary machinery (sorting, selection, knee)
//! * [`solver`] bilevel loop with forward-search grid refinement
//! * [`metrics`] assignment-based RMSE and source-number statistics
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod array;
pub mod correntropy;
pub mod decode;
mod error;
pub mod metrics;
pub mod moea;
pub mod noise;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

/// Complex double used for all array data.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix (column-major).
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// `|z|` without relying on `std` float intrinsics.
#[inline]
pub(crate) fn modulus(z: C64) -> f64 {
    libm::hypot(z.re, z.im)
}
