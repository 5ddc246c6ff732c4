//! Realizability-preserving Runge-Kutta discontinuous Galerkin solver for
//! the two-dimensional M1 model of radiative transfer.
//!
//! Start with [`scenarios::builtin`] and [`scenarios::run_scenario`], or
//! drive the pieces directly: build a [`mesh::Mesh`], wrap it in a
//! [`dg::Discretization`], project data with [`dg::project_initial`] and
//! advance it with [`stepper::run`]. The guide in `book/` walks through each
//! part; its code blocks are compiled and run as doc tests of this crate.
//!
//! ```
//! use m1dg::closure::MomentVector;
//! use m1dg::limiters::realizability_theta;
//!
//! let mean = MomentVector::new(1.0, 0.0, 0.0);
//! let theta = realizability_theta(&mean, &MomentVector::new(1.0, 0.0, -2.0)).unwrap();
//! assert!((theta - 0.5).abs() < 1e-14);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod closure;
pub mod diagnostics;
pub mod dg;
pub mod error;
pub mod fv;
pub mod limiters;
pub mod mesh;
pub mod quadrature;
pub mod scenarios;
pub mod stepper;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/closure.md")]
    mod closure {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/limiters.md")]
    mod limiters {}
    #[doc = include_str!("../../../book/src/time_stepping.md")]
    mod time_stepping {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
