//! Numerical workbench for the weighted elliptic operator
//! `L f = div(T grad f) - <grad eta, T grad f>` on discretized compact
//! manifolds, together with first-order (Hadamard-type) eigenvalue
//! variation formulas under metric, tensor, weight and domain
//! deformations, and eigenvalue evolution along homogeneous Ricci flows.
//!
//! The crate is organized around a small pipeline:
//! mesh construction ([`mesh`]) -> geometric fields ([`fields`]) ->
//! weak-form assembly ([`operator`]) -> generalized eigensolve ([`eigen`])
//! -> variation formulas and finite-difference oracles ([`variation`],
//! [`domain`], [`splitting`], [`ricci`]).

pub mod domain;
pub mod eigen;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod operator;
pub mod ricci;
pub mod sparse;
pub mod splitting;
pub mod variation;

pub use error::{Error, Result};
