//! Numerical toolkit for minimal bi-foliations of the two-torus.
//!
//! Circle maps and rotation numbers, concrete foliations with leaf tracing,
//! asymptotic cycles, the simultaneous straightening of a transverse pair
//! onto a linear pair, and the affine rigidity computations built on top.

pub mod circle;
pub mod cli;
pub mod foliation;
pub mod geom;
pub mod homology;
pub mod straighten;
pub mod rigidity;
