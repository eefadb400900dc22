//! Matrix-weighted dyadic harmonic analysis on finite atomic filtrations.
//!
//! The crate models a finite rooted tree of atoms carrying a scalar base
//! measure and matrix-valued measures, and builds the operator toolbox on
//! top of it: unweighted and weighted martingale projections, (generalized
//! big) Haar shift operators, weighted paraproducts, and the quantitative
//! machinery — testing constants, joint A₂ characteristics, Carleson
//! embedding constants — needed to certify two-weight norm inequalities on
//! concrete instances.
//!
//! Everything here is desk-scale and exact-by-SVD: functions are leaf
//! tables, operators are small dense matrices over the leaf basis, and
//! every supremum is a finite eigenvalue or singular-value problem.
//!
//! The crate is `no_std` (with `alloc`); IO, serialization and the batch
//! verification harness live in the companion `haarmw-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod certificate;
pub mod filtration;
pub mod linalg;
pub mod martingale;
pub mod measure;
pub mod paraproduct;
pub mod shift;
pub mod tol;

pub use certificate::{Certificate, InstanceParams};
pub use filtration::{Atom, Branching, Filtration};
pub use measure::{MatrixMeasure, VecFunction};
pub use shift::{KernelBlock, ShiftFlags, ShiftOperator};

use thiserror::Error;

/// Errors produced by constructors and operations with real preconditions.
///
/// Numerical checks (certificates, property reports) never error; they
/// report pass/fail data instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("leaf mass count {got} does not match leaf count {want}")]
    MassCountMismatch { got: usize, want: usize },
    #[error("negative leaf mass {mass} at leaf {leaf}")]
    NegativeMass { leaf: usize, mass: f64 },
    #[error("branching spec shape does not match the tree")]
    BadBranching,
    #[error("every atom needs at least one child")]
    EmptyBranching,
    #[error("generation offset {r} exceeds remaining depth {remaining}")]
    DepthExceeded { r: usize, remaining: usize },
    #[error("no ancestor of order {k} above rank {rank}; tree is truncated at the root")]
    NoAncestor { k: usize, rank: usize },
    #[error("matrix dimension mismatch: {got} vs {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("input matrix is not symmetric")]
    NotSymmetric,
    #[error("leaf matrix {leaf} is not positive semidefinite (min eigenvalue {min_eig})")]
    NotPsd { leaf: usize, min_eig: f64 },
    #[error("shift complexity ({m},{n}) exceeds tree depth {depth}")]
    ComplexityExceedsDepth { m: usize, n: usize, depth: usize },
    #[error("every atom of the filtration has zero mass")]
    AllMassZero,
}

pub type Result<T> = core::result::Result<T, Error>;
