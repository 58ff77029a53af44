//! Global identifiability of linear structural equation models on mixed
//! graphs.
//!
//! A mixed graph `G = (V, D, B)` carries directed edges (regression
//! coefficients, collected in `Λ`) and bidirected edges (error covariances,
//! collected in `Ω`). The model's covariance matrices are the image of
//!
//! ```text
//! φ_G(Λ, Ω) = (I - Λ)^{-T} Ω (I - Λ)^{-1}
//! ```
//!
//! This crate decides whether `φ_G` is injective ([`criterion`]), inverts it
//! step by step along a topological order ([`inversion`]), traces fibers
//! where a step is rank deficient ([`fiber`]), builds explicit pairs of
//! parameters with equal covariance when injectivity fails ([`witness`],
//! [`cycle`]) and enumerates small graphs ([`census`]).
//!
//! ```
//! use semident::{check_global_identifiability, parse_graph};
//!
//! let g = parse_graph("1 -> 2\n2 -> 3\n2 <-> 3").unwrap().graph;
//! let verdict = check_global_identifiability(&g);
//! assert!(!verdict.identifiable);
//! assert_eq!(verdict.violating_set, Some(vec![1, 2]));
//! ```

pub mod census;
pub mod criterion;
pub mod cycle;
pub mod fiber;
pub mod field;
pub mod graph;
pub mod inversion;
pub mod linalg;
pub mod params;
pub mod poly;
pub mod witness;

pub use criterion::{check_global_identifiability, find_violating_set, IdentVerdict};
pub use field::{Field, Rational, RealField};
pub use graph::{parse_graph, GraphError, MixedGraph};
pub use inversion::{invert, rank_condition, InversionError, StepRecord};
pub use linalg::Matrix;
pub use params::{kappa, phi, Covariance, DeltaDiagonal, LambdaMatrix, OmegaMatrix, ParamError};
