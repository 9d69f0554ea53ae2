//! Rigidity diagnostics for harmonic maps: constant, homothetic immersion,
//! or (under a zero bound) totally geodesic, plus the hypothesis audit
//! `Ric_g ≥ (m−1)K φ*h`, `sec_h ≤ K`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curvature::{random_vector, sec_upper_bound_check, SecBoundReport};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::linalg;
use crate::manifold::ChartPoint;
use crate::map::{ricci_residual_from, MapModel, MapPointData};

/// Verdict tolerance for maps obtained from the heat flow.
pub const FLOW_VERDICT_TOL: f64 = 1e-5;
/// Verdict tolerance for analytic fixtures.
pub const ANALYTIC_VERDICT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ConstantMap,
    HomotheticImmersion,
    /// `∇dφ = 0` with constant energy density; reported only when `K ≤ 0`.
    TotallyGeodesic,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidityResiduals {
    /// `sup |∇dφ|`
    pub sff_sup: f64,
    /// `sup |dφ|`
    pub differential_sup: f64,
    /// `max − min` of `|dφ|²` over the samples.
    pub energy_variation: f64,
    /// `sup ‖φ*h − μg‖` in the g-operator norm.
    pub conformal_residual: f64,
    /// `sup |K_g − μK|` over sampled source planes.
    pub kg_check: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidityVerdict {
    pub verdict: Verdict,
    /// `mean |dφ|² / m`.
    pub mu: Option<f64>,
    pub k: f64,
    pub tolerance: f64,
    pub residuals: RigidityResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidityOptions {
    pub tolerance: f64,
    /// Source planes sampled per point for `kg_check`.
    pub planes_per_point: usize,
    pub seed: u64,
}

impl Default for RigidityOptions {
    fn default() -> Self {
        Self {
            tolerance: ANALYTIC_VERDICT_TOL,
            planes_per_point: 16,
            seed: 0,
        }
    }
}

/// Diagnostics for an analytic map at the given points.
pub fn rigidity_diagnostics(map: &MapModel, points: &[ChartPoint], k: f64, options: RigidityOptions) -> Result<RigidityVerdict> {
    let data = points.iter().map(|p| MapPointData::at(map, p)).collect::<Result<Vec<_>>>()?;
    rigidity_from_data(&data, k, options)
}

/// Diagnostics for a flow output, with jets from grid differences.
pub fn rigidity_from_state(state: &FlowState, k: f64, options: RigidityOptions) -> Result<RigidityVerdict> {
    rigidity_from_data(&state.node_data()?, k, options)
}

pub fn rigidity_from_data(data: &[MapPointData], k: f64, options: RigidityOptions) -> Result<RigidityVerdict> {
    if data.is_empty() {
        return Err(Error::Invalid("rigidity diagnostics need at least one sample".into()));
    }
    let tol = options.tolerance;
    let m = data[0].source.metric.nrows();
    let energies: Vec<f64> = data.iter().map(|d| d.energy_density()).collect();
    let e_max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let sff_sup = data
        .iter()
        .map(|d| d.second_fundamental_form().norm_sq.max(0.0).sqrt())
        .fold(0.0, f64::max);
    let mu = energies.iter().sum::<f64>() / energies.len() as f64 / m as f64;
    let mut conformal_residual: f64 = 0.0;
    for d in data {
        let diff = d.pullback() - &d.source.metric * mu;
        conformal_residual = conformal_residual.max(linalg::operator_norm(&diff, &d.source.metric)?);
    }
    let differential_sup = e_max.max(0.0).sqrt();
    let constant = differential_sup <= tol;
    let kg_check = if constant || m < 2 {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut worst: f64 = 0.0;
        for d in data {
            let mut done = 0;
            while done < options.planes_per_point {
                let x = random_vector(&mut rng, m);
                let y = random_vector(&mut rng, m);
                if let Ok(kg) = d.source.riemann.sectional(&d.source.metric, &x, &y) {
                    worst = worst.max((kg - mu * k).abs());
                    done += 1;
                }
            }
        }
        Some(worst)
    };
    let residuals = RigidityResiduals {
        sff_sup,
        differential_sup,
        energy_variation: e_max - e_min,
        conformal_residual,
        kg_check,
    };
    let geodesic = sff_sup <= tol && residuals.energy_variation <= tol;
    let verdict = if constant {
        Verdict::ConstantMap
    } else if k > 0.0 {
        if geodesic && conformal_residual <= tol {
            Verdict::HomotheticImmersion
        } else {
            Verdict::Indeterminate
        }
    } else if geodesic {
        Verdict::TotallyGeodesic
    } else {
        Verdict::Indeterminate
    };
    Ok(RigidityVerdict {
        verdict,
        mu: (!constant).then_some(mu),
        k,
        tolerance: tol,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub k: f64,
    pub tolerance: f64,
    /// Smallest generalised eigenvalue of `Ric_g − (m−1)K φ*h` against `g`.
    pub ricci_min_residual: f64,
    pub ricci_pass: bool,
    pub sec: SecBoundReport,
    /// `max sec_h − K` over the sampled planes.
    pub sec_residual: Option<f64>,
    pub pass: bool,
}

/// Checks both curvature hypotheses on samples: the Ricci inequality at
/// the source points and `sec_h ≤ K` at their images.
pub fn hypothesis_audit(map: &MapModel, k: f64, points: &[ChartPoint], planes_per_point: usize, seed: u64, tolerance: f64) -> Result<AuditReport> {
    if points.is_empty() {
        return Err(Error::Invalid("hypothesis audit needs at least one point".into()));
    }
    let mut ricci_min = f64::INFINITY;
    let mut images = Vec::with_capacity(points.len());
    for p in points {
        let data = MapPointData::at(map, p)?;
        ricci_min = ricci_min.min(ricci_residual_from(&data, k)?);
        images.push(data.jet.image.clone());
    }
    let sec = sec_upper_bound_check(map.target(), k, &images, planes_per_point, seed, tolerance)?;
    let ricci_pass = ricci_min >= -tolerance;
    Ok(AuditReport {
        k,
        tolerance,
        ricci_min_residual: ricci_min,
        ricci_pass,
        sec_residual: sec.max_sectional.map(|s| s - k),
        pass: ricci_pass && sec.pass,
        sec,
    })
}
