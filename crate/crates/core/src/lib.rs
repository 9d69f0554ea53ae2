//! Numerical verification engine for harmonic maps between chart-based
//! model Riemannian manifolds.
//!
//! The crate computes connection and curvature data ([`curvature`]), first
//! and second order invariants of maps ([`map`]), the curvature term of the
//! Bochner identity for harmonic maps and its split into a Ricci part and a
//! sectional part ([`bochner`]), pointwise algebraic sign checks on synthetic
//! data ([`lemma`]), a discretised harmonic-map heat flow on flat tori
//! ([`flow`]) with rigidity diagnostics ([`rigidity`]), and residual checks for
//! harmonic-Einstein and prescribed-Ricci equations ([`prescription`]).

pub mod bochner;
pub mod convergence;
pub mod curvature;
pub mod error;
pub mod flow;
pub mod lemma;
pub mod linalg;
pub mod manifold;
pub mod map;
pub mod prescription;
pub mod rigidity;

pub use error::{Error, Result};
pub use manifold::{Chart, ChartPoint, Derivatives, ManifoldKind, ManifoldModel, MetricJet};
