//! Residual checks for harmonic-Einstein structures
//! `Ric_g − α φ*h = λ g`, conservative maps, the prescribed Ricci problem
//! `Ric_g = c h`, and homothety of two metrics.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::ricci;
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Chart, ChartPoint, ManifoldModel};
use crate::map::{MapModel, MapPointData};

/// A candidate harmonic-Einstein structure `(g, φ)` with constants `α, λ`.
#[derive(Debug, Clone)]
pub struct StructureSpec {
    pub phi: MapModel,
    pub alpha: f64,
    pub lambda: f64,
}

impl StructureSpec {
    pub fn new(phi: MapModel, alpha: f64, lambda: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() || !lambda.is_finite() {
            return Err(Error::Invalid(format!("need finite alpha != 0 and finite lambda, got {alpha}, {lambda}")));
        }
        Ok(Self { phi, alpha, lambda })
    }

    pub fn g(&self) -> &ManifoldModel {
        self.phi.source()
    }

    pub fn h(&self) -> &ManifoldModel {
        self.phi.target()
    }
}

/// Pointwise residual values with their supremum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualField {
    pub values: Vec<f64>,
    pub sup: f64,
    /// Index of the worst sample.
    pub worst: Option<usize>,
}

impl ResidualField {
    fn from_values(values: Vec<f64>) -> Self {
        let worst = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i);
        Self {
            sup: linalg::max_abs(values.iter().copied()),
            values,
            worst,
        }
    }
}

fn per_point(points: &[ChartPoint], f: impl Fn(&ChartPoint) -> Result<f64> + Send + Sync) -> Result<ResidualField> {
    if points.is_empty() {
        return Err(Error::Invalid("no sample points".into()));
    }
    let values = points.par_iter().map(f).collect::<Result<Vec<_>>>()?;
    Ok(ResidualField::from_values(values))
}

/// `sup ‖Ric_g − α φ*h − λ g‖` in the g-operator norm.
pub fn harmonic_einstein_residual(spec: &StructureSpec, points: &[ChartPoint]) -> Result<ResidualField> {
    per_point(points, |p| {
        let d = MapPointData::at(&spec.phi, p)?;
        let r = &d.source.ricci - d.pullback() * spec.alpha - &d.source.metric * spec.lambda;
        linalg::operator_norm(&r, &d.source.metric)
    })
}

/// `sup |⟨τ(φ), dφ⟩_h|`, the g-norm of the covector `h_ab τᵃ φᵇᵢ`.
pub fn conservativity_residual(spec: &StructureSpec, points: &[ChartPoint]) -> Result<ResidualField> {
    per_point(points, |p| {
        let d = MapPointData::at(&spec.phi, p)?;
        let x = d.differential().transpose() * (&d.target.metric * d.tension());
        Ok((&d.source.metric_inv * &x).dot(&x).max(0.0).sqrt())
    })
}

/// `sup ‖Ric_g − c h‖` in the g-operator norm, with `g` and `h` two metrics
/// on the same charts.
pub fn prescribed_ricci_residual(g: &ManifoldModel, h: &ManifoldModel, c: f64, points: &[ChartPoint]) -> Result<ResidualField> {
    if !(c > 0.0) {
        return Err(Error::Invalid(format!("prescribed Ricci constant must be positive, got {c}")));
    }
    if g.dim() != h.dim() {
        return Err(Error::Dimension("g and h live on manifolds of different dimension".into()));
    }
    per_point(points, |p| {
        let hm = h.metric_at(p)?;
        linalg::check_metric(&hm)?;
        let gm = g.metric_at(p)?;
        let r = ricci(g, p)? - hm * c;
        linalg::operator_norm(&r, &gm)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomothetyFit {
    /// Mean of `tr(h⁻¹g)/m` over the samples.
    pub mu: f64,
    /// `sup ‖g − μh‖ / sup ‖g‖`, both in the h-operator norm.
    pub residual: f64,
}

pub fn homothety_fit(g: &ManifoldModel, h: &ManifoldModel, points: &[ChartPoint]) -> Result<HomothetyFit> {
    if points.is_empty() {
        return Err(Error::Invalid("no sample points".into()));
    }
    let pairs = points
        .iter()
        .map(|p| Ok((g.metric_at(p)?, h.metric_at(p)?)))
        .collect::<Result<Vec<(DMatrix<f64>, DMatrix<f64>)>>>()?;
    let m = g.dim() as f64;
    let mut mu = 0.0;
    for (gm, hm) in &pairs {
        mu += (linalg::spd_inverse(hm)? * gm).trace() / m;
    }
    mu /= pairs.len() as f64;
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (gm, hm) in &pairs {
        gap = gap.max(linalg::operator_norm(&(gm - hm * mu), hm)?);
        scale = scale.max(linalg::operator_norm(gm, hm)?);
    }
    Ok(HomothetyFit {
        mu,
        residual: if scale == 0.0 { gap } else { gap / scale },
    })
}

/// Round 2-sphere of radius one with the constant form `ε dx¹⊗dx¹` added to
/// the north stereographic metric; a single chart on `|x| < 1.5`.
pub fn perturbed_sphere(amplitude: f64) -> Result<ManifoldModel> {
    let metric = Arc::new(move |x: &nalgebra::DVector<f64>| {
        let s = 4.0 / (1.0 + x.norm_squared()).powi(2);
        let mut g = DMatrix::identity(2, 2) * s;
        g[(0, 0)] += amplitude;
        g
    });
    let chart = Chart::new("perturbed-north", metric).with_domain(Arc::new(|x: &nalgebra::DVector<f64>| x.norm() < 1.5));
    ManifoldModel::custom(2, vec![chart])
}

/// A shipped structure with the sample points it is checked on.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub spec: StructureSpec,
    pub points: Vec<ChartPoint>,
    /// `φ` is harmonic.
    pub harmonic: bool,
}

/// Sample points spread over both stereographic charts.
pub fn sphere_points() -> Vec<ChartPoint> {
    vec![
        ChartPoint::new(0, &[0.0, 0.0]),
        ChartPoint::new(0, &[0.5, -0.2]),
        ChartPoint::new(0, &[-0.8, 0.6]),
        ChartPoint::new(0, &[1.1, 0.3]),
        ChartPoint::new(1, &[0.1, 0.4]),
        ChartPoint::new(1, &[-0.6, -0.7]),
    ]
}

pub fn torus_points() -> Vec<ChartPoint> {
    vec![
        ChartPoint::new(0, &[0.0, 0.0]),
        ChartPoint::new(0, &[0.25, 0.5]),
        ChartPoint::new(0, &[0.8, 0.1]),
        ChartPoint::new(0, &[0.45, 0.9]),
    ]
}

/// Harmonic-Einstein fixtures with `α > 0`, `λ = 0`.
pub fn shipped_fixtures() -> Result<Vec<Fixture>> {
    let unit = ManifoldModel::round_sphere(2, 1.0)?;
    let torus = ManifoldModel::standard_torus(2);
    let mut out = Vec::new();
    for (name, c) in [("sphere-identity-c0.5", 0.5), ("sphere-identity-c1", 1.0), ("sphere-identity-c4", 4.0)] {
        out.push(Fixture {
            name,
            spec: StructureSpec::new(MapModel::identity(unit.scaled(c), unit.clone())?, 1.0, 0.0)?,
            points: sphere_points(),
            harmonic: true,
        });
    }
    out.push(Fixture {
        name: "torus-constant",
        spec: StructureSpec::new(MapModel::constant(torus, unit, ChartPoint::new(0, &[0.3, -0.2]))?, 1.0, 0.0)?,
        points: torus_points(),
        harmonic: true,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn flat_constant_structure() {
        let t = ManifoldModel::standard_torus(2);
        let phi = MapModel::constant(t.clone(), t, ChartPoint::new(0, &[0.5, 0.5])).unwrap();
        let spec = StructureSpec::new(phi, 1.0, 0.0).unwrap();
        assert_eq!(harmonic_einstein_residual(&spec, &torus_points()).unwrap().sup, 0.0);
        assert!(StructureSpec::new(spec.phi.clone(), 0.0, 0.0).is_err());
    }

    #[test]
    fn sphere_identity_structure() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let phi = MapModel::identity(unit.scaled(3.0), unit).unwrap();
        let spec = StructureSpec::new(phi.clone(), 1.0, 0.0).unwrap();
        assert!(harmonic_einstein_residual(&spec, &sphere_points()).unwrap().sup <= 1e-8);
        let shifted = StructureSpec::new(phi, 1.0, 1.0).unwrap();
        let r = harmonic_einstein_residual(&shifted, &sphere_points()).unwrap();
        assert!((r.sup - 1.0).abs() <= 1e-8);
        assert!(conservativity_residual(&spec, &sphere_points()).unwrap().sup <= 1e-8);
    }

    #[test]
    fn conservativity_of_sine_map_matches_closed_form() {
        // φ(u) = u + ε sin(2πu_a) in component a; τᵃ = −4π²ε sin(2πuᵃ)
        let t = ManifoldModel::standard_torus(2);
        let eps = 0.3;
        let phi = MapModel::torus_sine(t.clone(), t, DMatrix::identity(2, 2), DVector::zeros(2), eps).unwrap();
        let spec = StructureSpec::new(phi, 1.0, 0.0).unwrap();
        let pts = torus_points();
        let r = conservativity_residual(&spec, &pts).unwrap();
        let tau2 = std::f64::consts::TAU;
        for (p, v) in pts.iter().zip(&r.values) {
            let mut x = [0.0; 2];
            for a in 0..2 {
                let u = p.coords[a];
                let tau = -tau2 * tau2 * eps * (tau2 * u).sin();
                let dphi_aa = 1.0 + eps * tau2 * (tau2 * u).cos();
                x[a] = tau * dphi_aa;
            }
            let expected = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((v - expected).abs() <= 1e-5 * expected.max(1.0), "{v} vs {expected}");
        }
        assert!(r.sup > 1.0);
    }

    #[test]
    fn prescribed_ricci_examples() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        for mu in [0.5, 1.0, 3.0] {
            let r = prescribed_ricci_residual(&unit.scaled(mu), &unit, 1.0, &sphere_points()).unwrap();
            assert!(r.sup <= 1e-8);
        }
        let t = ManifoldModel::standard_torus(2);
        let r = prescribed_ricci_residual(&t, &t, 1.0, &torus_points()).unwrap();
        assert!((r.sup - 1.0).abs() < 1e-12);
        assert!(prescribed_ricci_residual(&t, &t, 0.0, &torus_points()).is_err());
    }

    #[test]
    fn perturbed_metric_is_not_a_solution() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let g = perturbed_sphere(0.1).unwrap();
        let pts: Vec<ChartPoint> = sphere_points().into_iter().filter(|p| p.chart == 0).collect();
        let r = prescribed_ricci_residual(&g, &unit, 1.0, &pts).unwrap();
        assert!(r.sup > 0.01, "{}", r.sup);
        assert!(homothety_fit(&g, &unit, &pts).unwrap().residual > 0.0);
    }

    #[test]
    fn homothety_examples() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let fit = homothety_fit(&unit.scaled(2.5), &unit, &sphere_points()).unwrap();
        assert!((fit.mu - 2.5).abs() <= 1e-12 && fit.residual <= 1e-12);
    }

    #[test]
    fn equivalence_with_identity_structure() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let g = unit.scaled(2.0);
        let direct = prescribed_ricci_residual(&g, &unit, 1.5, &sphere_points()).unwrap();
        let spec = StructureSpec::new(MapModel::identity(g, unit).unwrap(), 1.5, 0.0).unwrap();
        let via = harmonic_einstein_residual(&spec, &sphere_points()).unwrap();
        for (a, b) in direct.values.iter().zip(&via.values) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
