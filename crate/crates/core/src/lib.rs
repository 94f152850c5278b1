//! Synchronization of unit vectors on spheres under pairwise and d-body
//! couplings.

pub mod analysis;
pub mod catalog;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod reduced;

pub use error::{Error, Result};

/// Runs the guide's code blocks as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/running.md")]
    struct Running;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/dynamics.md")]
    struct Dynamics;
    #[doc = include_str!("../../../book/src/catalog.md")]
    struct Catalog;
    #[doc = include_str!("../../../book/src/three-nodes.md")]
    struct ThreeNodes;
    #[doc = include_str!("../../../book/src/verification.md")]
    struct Verification;
}
