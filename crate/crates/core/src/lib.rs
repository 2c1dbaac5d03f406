//! Generalized Bloch analysis and image-sum propagators on discretized
//! covering spaces.
//!
//! A covering `M̃ → M` with deck group `Γ` is modelled as a `Γ`-invariant
//! weighted graph ([`covering::CoveringGraph`]) whose vertices are pairs
//! `(copy, base node)`. On top of it the crate provides
//!
//! - exact group arithmetic for finite abelian groups, `ℤ^d` and the
//!   Klein-bottle group ([`group`]),
//! - irreducible unitary representations, Plancherel quadrature on the dual
//!   and the group Fourier transform ([`harmonic`]),
//! - invariant and twisted Hamiltonians with their heat and evolution
//!   kernels ([`operators`]),
//! - the Bloch transform `Φ` together with defect diagnostics ([`bloch`]),
//! - image sums `K^Λ(x,y) = Σ_s Λ(s) K(s⁻¹x, y)` and the inverse trace
//!   reconstruction ([`schulman`]).
//!
//! ```
//! use covbloch_core::covering::micro_model;
//! use covbloch_core::harmonic::dual_grid;
//! use covbloch_core::operators::{assemble_invariant, assemble_twisted, Potential};
//! use std::sync::Arc;
//!
//! let graph = Arc::new(micro_model(2).unwrap());
//! let grid = dual_grid(graph.spec(), 1).unwrap();
//! let v = Potential::zero(graph.base_len());
//! let h = assemble_invariant(&graph, &v).unwrap();
//! assert_eq!(h.dense().unwrap()[(0, 1)], -1.0);
//! let sign = assemble_twisted(&graph, &v, &grid.nodes()[1].irrep).unwrap();
//! assert!((sign.matrix()[(0, 0)].re - 2.0).abs() < 1e-15);
//! ```

pub mod bloch;
pub mod covering;
pub mod defect;
pub mod group;
pub mod harmonic;
pub mod linalg;
pub mod operators;
pub mod schulman;

pub use defect::{Defect, Flagged, Flags};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix (irrep values, kernel blocks, twisted operators).
pub type CMatrix = nalgebra::DMatrix<C64>;
