use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {coords:?} lies outside the domain of chart {chart}")]
    Domain { chart: usize, coords: Vec<f64> },

    #[error("chart index {0} does not exist on this manifold")]
    UnknownChart(usize),

    #[error("no transition from chart {from} to chart {to}")]
    NoTransition { from: usize, to: usize },

    #[error("metric condition number {condition:.3e} exceeds {limit:.1e}")]
    Conditioning { condition: f64, limit: f64 },

    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("plane is degenerate (gram determinant {gram:.3e} below {threshold:.3e})")]
    DegeneratePlane { gram: f64, threshold: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("map image is not placeable in any target chart: {0}")]
    Chart(String),

    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    #[error("map is not harmonic on the grid (sup |tau| = {sup_tau:.3e} > {tolerance:.1e})")]
    NotHarmonic { sup_tau: f64, tolerance: f64 },

    #[error("flow blow-up at step {step}: {reason}")]
    FlowBlowUp { step: usize, reason: String },

    #[error("numerical instability at step {step}: non-finite values")]
    Instability { step: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}
