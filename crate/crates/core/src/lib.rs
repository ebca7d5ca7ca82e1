//! Image inpainting with the weighted Laplacian, together with a
//! verification toolkit for the conditions under which the underlying
//! degenerate elliptic problem is well posed.
//!
//! The model blends data fidelity and harmonic smoothing through a
//! confidence weight c in [0, 1]: `c (u - f) + (1 - c) (-Δu) = 0`. For
//! binary weights this is exactly harmonic inpainting with hard Dirichlet
//! data; for general weights the crate assembles the collocation and
//! divergence (weak) forms, solves them, and estimates every constant of
//! the well-posedness theory — the weight growth constants, the Friedrichs
//! constant, the boundary-concentration sequence, the stability bound and
//! the α-capacity of the data region.
//!
//! Start with [`domain::DomainSpec`], [`weight::WeightField`] and the
//! assembly functions in [`assembly`]; the long-form guide lives in the
//! [`guide`] module and in `book/`.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod domain;
pub mod error;
pub mod field;
pub mod io;
pub mod solver;
pub mod sparse;
pub mod weight;

pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use field::{BoolField, ScalarField};
pub use solver::{SolveMethod, SolveReport};
pub use sparse::SparseSystem;
pub use weight::WeightField;

/// The user guide, mirrored from the mdbook sources in `book/` so that
/// every code snippet in the book is compiled and run as a doc-test.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}

    #[doc = include_str!("../../../book/src/grids-and-domains.md")]
    pub mod grids_and_domains {}

    #[doc = include_str!("../../../book/src/weights.md")]
    pub mod weights {}

    #[doc = include_str!("../../../book/src/assembly-and-solvers.md")]
    pub mod assembly_and_solvers {}

    #[doc = include_str!("../../../book/src/analysis.md")]
    pub mod analysis {}

    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
