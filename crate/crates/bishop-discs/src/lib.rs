//! Pseudoholomorphic Bishop discs attached to real hypersurfaces in almost
//! complex `C^2`.
//!
//! * [`grid`]: boundary and disc discretizations.
//! * [`ops`]: Cauchy-Green, Cauchy, Schwarz and Hilbert operators.
//! * [`acs`]: almost complex structures in `J` and `A` form.
//! * [`expr`]: expressions for user-defined structures and hypersurfaces.
//! * [`geom`]: hypersurfaces and Levi forms.
//! * [`bishop`]: the nonlinear Bishop equation.
//! * [`linrh`]: the linearized Riemann-Hilbert problem and its diagnostics.
//! * [`cli`]: experiment runners behind the `bishop` binary.

pub mod acs;
pub mod bishop;
pub mod cli;
pub mod error;
pub mod expr;
pub mod geom;
pub mod grid;
pub mod linrh;
pub mod ops;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// `max` that keeps `NaN`, so a broken residual never folds to a small number.
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}
