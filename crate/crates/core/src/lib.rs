//! Mixed-dimensional Poisson transmission between a self-similar weighted metric tree
//! and the exterior of a disk, coupled through the interface circle.
//!
//! The tree side is reduced to its Dirichlet-to-Neumann map on piecewise-constant
//! interface functions via condensed finite trees; the exterior side is handled
//! spectrally. [`transmission`] assembles and solves the coupled interface equation.

pub mod acceptance;
pub mod csv;
pub mod exterior;
pub mod transmission;
pub mod tree_dtn;
pub mod error;
pub mod interface;
pub mod poly;
pub mod quadrature;
pub mod tree_calculus;
pub mod tree_model;

pub use error::{Error, Result};
