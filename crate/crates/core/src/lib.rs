//! Grouped incoherent measurements for compressive sensing.
//!
//! When measurements of a sparse signal can only be acquired in predefined
//! groups (lines through k-space, bursts of consecutive time samples, frames
//! sharing one projection pattern) the classical sample-count guarantee picks
//! up a multiplicative penalty. This crate computes that penalty factor
//! `γ(A, T, G)`, builds the common group structures, solves the `ℓ1` recovery
//! program, checks dual certificates, evaluates the measurement-count bounds
//! and runs the `γ` versus minimal-`M` experiments.
//!
//! Modules:
//!
//! * [`operators`]: orthonormal bases, `A = Vᴴ U`, coherence, submatrices.
//! * [`grouping`]: group structures and grouped random sampling.
//! * [`gamma`]: the `2→1` operator norm and the penalty factor.
//! * [`recovery`]: basis pursuit and the dual certificate.
//! * [`bounds`]: measurement-count bounds and Monte-Carlo checks of them.
//! * [`harness`]: signals, sweeps, config, CSV, and the command line.
//!
//! The `book/` directory at the repository root walks through the concepts;
//! its code listings are compiled as doc-tests of this crate.

pub mod bounds;
pub mod error;
pub mod gamma;
pub mod grouping;
pub mod harness;
pub mod operators;
pub mod recovery;

mod linalg;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/bases.md")]
    struct Bases;
    #[doc = include_str!("../../../book/src/groups.md")]
    struct Groups;
    #[doc = include_str!("../../../book/src/penalty.md")]
    struct Penalty;
    #[doc = include_str!("../../../book/src/recovery.md")]
    struct Recovery;
    #[doc = include_str!("../../../book/src/bounds.md")]
    struct Bounds;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
