//! Smooth maps between model manifolds and their pointwise invariants.
//!
//! Components follow the usual chart conventions: `φᵃᵢ = ∂(yᵃ∘φ)/∂xⁱ` is an
//! n×m matrix, and the second fundamental form of the map is
//! `(∇dφ)ᵃᵢⱼ = ∂ᵢ∂ⱼφᵃ − Γᵏᵢⱼ(g) φᵃₖ + Γᵃ_bc(h)∘φ φᵇᵢ φᶜⱼ`.

use std::fmt;
use std::ops::AddAssign;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::{random_vector, Christoffel, CurvatureBundle};
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{ChartPoint, Derivatives, ManifoldModel, FD_FIRST_STEP, FD_SECOND_STEP};

/// Default relative singular-value cutoff for [`rank_at`].
pub const RANK_REL_TOL: f64 = 1e-8;

/// Value, differential and component Hessians of a map at a point.
#[derive(Debug, Clone)]
pub struct MapJet {
    pub image: ChartPoint,
    /// n×m matrix `φᵃᵢ`.
    pub differential: DMatrix<f64>,
    /// `hessians[a]` is the m×m coordinate Hessian of `φᵃ`.
    pub hessians: Vec<DMatrix<f64>>,
}

impl MapJet {
    /// Re-expresses the jet through a chart transition of the target.
    fn through_transition(self, target: &ManifoldModel, to: usize) -> Result<Self> {
        if to == self.image.chart {
            return Ok(self);
        }
        let (y, jac, hess_t) = target.transition_jet(&self.image, to)?;
        let n = y.len();
        let d = &jac * &self.differential;
        let hessians = (0..n)
            .map(|a| {
                let mut h = self.differential.transpose() * &hess_t[a] * &self.differential;
                for (b, hb) in self.hessians.iter().enumerate() {
                    h += hb * jac[(a, b)];
                }
                h
            })
            .collect();
        Ok(MapJet {
            image: ChartPoint::from_vector(to, y),
            differential: d,
            hessians,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Constant,
    Identity,
    LinearTorus { a: DMatrix<f64>, b: DVector<f64> },
    EquatorInclusion,
    Custom(String),
}

pub type ChartMapFn = Arc<dyn Fn(&ChartPoint) -> Result<ChartPoint> + Send + Sync>;
pub type MapJetFn = Arc<dyn Fn(&ChartPoint) -> Result<MapJet> + Send + Sync>;

/// A smooth map `φ : (M, g) → (N, h)` given chartwise.
#[derive(Clone)]
pub struct MapModel {
    source: ManifoldModel,
    target: ManifoldModel,
    kind: MapKind,
    chart_map: ChartMapFn,
    jet: Option<MapJetFn>,
    derivatives: Derivatives,
}

impl fmt::Debug for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapModel")
            .field("kind", &self.kind)
            .field("source_dim", &self.source.dim())
            .field("target_dim", &self.target.dim())
            .field("analytic_jet", &self.jet.is_some())
            .field("derivatives", &self.derivatives)
            .finish()
    }
}

impl MapModel {
    pub fn custom(
        source: ManifoldModel,
        target: ManifoldModel,
        name: impl Into<String>,
        chart_map: ChartMapFn,
        jet: Option<MapJetFn>,
    ) -> Self {
        Self {
            source,
            target,
            kind: MapKind::Custom(name.into()),
            chart_map,
            jet,
            derivatives: Derivatives::Analytic,
        }
    }

    pub fn constant(source: ManifoldModel, target: ManifoldModel, value: ChartPoint) -> Result<Self> {
        target.check_point(&value)?;
        let (m, n) = (source.dim(), target.dim());
        let v1 = value.clone();
        let v2 = value;
        Ok(Self {
            source,
            target,
            kind: MapKind::Constant,
            chart_map: Arc::new(move |_| Ok(v1.clone())),
            jet: Some(Arc::new(move |_| {
                Ok(MapJet {
                    image: v2.clone(),
                    differential: DMatrix::zeros(n, m),
                    hessians: vec![DMatrix::zeros(m, m); n],
                })
            })),
            derivatives: Derivatives::Analytic,
        })
    }

    /// Identity in coordinates: chart `c` of the source goes to chart `c` of
    /// the target. Source and target share the chart structure and may
    /// differ in their metrics.
    pub fn identity(source: ManifoldModel, target: ManifoldModel) -> Result<Self> {
        check_same_atlas(&source, &target)?;
        let m = source.dim();
        Ok(Self {
            source,
            target,
            kind: MapKind::Identity,
            chart_map: Arc::new(|p| Ok(p.clone())),
            jet: Some(Arc::new(move |p| {
                Ok(MapJet {
                    image: p.clone(),
                    differential: DMatrix::identity(m, m),
                    hessians: vec![DMatrix::zeros(m, m); m],
                })
            })),
            derivatives: Derivatives::Analytic,
        })
    }

    /// Identity with images expressed in a fixed target chart through the
    /// chart transition (e.g. north chart to south chart on a sphere).
    pub fn identity_into_chart(source: ManifoldModel, target: ManifoldModel, chart: usize) -> Result<Self> {
        check_same_atlas(&source, &target)?;
        if chart >= target.chart_count() {
            return Err(Error::UnknownChart(chart));
        }
        let t1 = target.clone();
        let t2 = target.clone();
        Ok(Self {
            source,
            target,
            kind: MapKind::Identity,
            chart_map: Arc::new(move |p| Ok(ChartPoint::from_vector(chart, t1.transition(p, chart)?))),
            jet: Some(Arc::new(move |p| {
                let (y, jac, hessians) = t2.transition_jet(p, chart)?;
                Ok(MapJet {
                    image: ChartPoint::from_vector(chart, y),
                    differential: jac,
                    hessians,
                })
            })),
            derivatives: Derivatives::Analytic,
        })
    }

    /// Affine map `u ↦ A u + b` between flat tori in lattice coordinates.
    pub fn linear_torus(source: ManifoldModel, target: ManifoldModel, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != target.dim() || a.ncols() != source.dim() || b.len() != target.dim() {
            return Err(Error::Dimension("linear torus map needs A: n×m and b: n".into()));
        }
        let (m, n) = (source.dim(), target.dim());
        let (a1, b1) = (a.clone(), b.clone());
        let (a2, b2) = (a.clone(), b.clone());
        Ok(Self {
            source,
            target,
            kind: MapKind::LinearTorus { a, b },
            chart_map: Arc::new(move |p| Ok(ChartPoint::from_vector(0, &a1 * &p.coords + &b1))),
            jet: Some(Arc::new(move |p| {
                Ok(MapJet {
                    image: ChartPoint::from_vector(0, &a2 * &p.coords + &b2),
                    differential: a2.clone(),
                    hessians: vec![DMatrix::zeros(m, m); n],
                })
            })),
            derivatives: Derivatives::Analytic,
        })
    }

    /// Great-circle inclusion `S¹(r) → S²(r)`, `x ↦ (x, 0)` in matching
    /// stereographic charts.
    pub fn equator_inclusion(radius: f64) -> Result<Self> {
        let source = ManifoldModel::round_sphere(1, radius)?;
        let target = ManifoldModel::round_sphere(2, radius)?;
        Ok(Self {
            source,
            target,
            kind: MapKind::EquatorInclusion,
            chart_map: Arc::new(|p| Ok(ChartPoint::new(p.chart, &[p.coords[0], 0.0]))),
            jet: Some(Arc::new(|p| {
                Ok(MapJet {
                    image: ChartPoint::new(p.chart, &[p.coords[0], 0.0]),
                    differential: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
                    hessians: vec![DMatrix::zeros(1, 1); 2],
                })
            })),
            derivatives: Derivatives::Analytic,
        })
    }

    /// `φᵃ(u) = (A u + b)ᵃ + ε sin(2π u_{a mod m})` between flat tori; periodic
    /// perturbation of an affine map.
    pub fn torus_sine(
        source: ManifoldModel,
        target: ManifoldModel,
        a: DMatrix<f64>,
        b: DVector<f64>,
        amplitude: f64,
    ) -> Result<Self> {
        if a.nrows() != target.dim() || a.ncols() != source.dim() || b.len() != target.dim() {
            return Err(Error::Dimension("torus sine map needs A: n×m and b: n".into()));
        }
        let (m, n) = (source.dim(), target.dim());
        let tau = 2.0 * std::f64::consts::PI;
        let eval = {
            let (a, b) = (a.clone(), b.clone());
            move |u: &DVector<f64>| {
                let mut y = &a * u + &b;
                for k in 0..n {
                    y[k] += amplitude * (tau * u[k % m]).sin();
                }
                y
            }
        };
        let eval2 = eval.clone();
        let a2 = a.clone();
        Ok(Self::custom(
            source,
            target,
            "torus_sine",
            Arc::new(move |p| Ok(ChartPoint::from_vector(0, eval(&p.coords)))),
            Some(Arc::new(move |p| {
                let u = &p.coords;
                let mut d = a2.clone();
                let mut hessians = vec![DMatrix::zeros(m, m); n];
                for k in 0..n {
                    let j = k % m;
                    d[(k, j)] += amplitude * tau * (tau * u[j]).cos();
                    hessians[k][(j, j)] = -amplitude * tau * tau * (tau * u[j]).sin();
                }
                Ok(MapJet {
                    image: ChartPoint::from_vector(0, eval2(u)),
                    differential: d,
                    hessians,
                })
            })),
        ))
    }

    /// `φᵃ(x) = cᵃ + (A x)ᵃ + ½ xᵀQₐx` in fixed source and target charts;
    /// `Qₐ` are symmetrised. Source points in other charts are read with the
    /// same formula.
    pub fn quadratic(
        source: ManifoldModel,
        target: ManifoldModel,
        target_chart: usize,
        c: DVector<f64>,
        a: DMatrix<f64>,
        q: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let (m, n) = (source.dim(), target.dim());
        if c.len() != n || a.shape() != (n, m) || q.len() != n || q.iter().any(|qa| qa.shape() != (m, m)) {
            return Err(Error::Dimension("quadratic map needs c: n, A: n×m and n symmetric m×m forms".into()));
        }
        if target_chart >= target.chart_count() {
            return Err(Error::UnknownChart(target_chart));
        }
        let q: Vec<DMatrix<f64>> = q.iter().map(linalg::symmetrize).collect();
        let eval = {
            let (c, a, q) = (c.clone(), a.clone(), q.clone());
            move |x: &DVector<f64>| {
                let mut y = &c + &a * x;
                for (k, qk) in q.iter().enumerate() {
                    y[k] += 0.5 * (qk * x).dot(x);
                }
                y
            }
        };
        let eval2 = eval.clone();
        Ok(Self::custom(
            source,
            target,
            "quadratic",
            Arc::new(move |p| Ok(ChartPoint::from_vector(target_chart, eval(&p.coords)))),
            Some(Arc::new(move |p| {
                let x = &p.coords;
                let mut d = a.clone();
                for (k, qk) in q.iter().enumerate() {
                    d.row_mut(k).add_assign(&(qk * x).transpose());
                }
                Ok(MapJet {
                    image: ChartPoint::from_vector(target_chart, eval2(x)),
                    differential: d,
                    hessians: q.clone(),
                })
            })),
        ))
    }

    /// Forces finite differences on the map and on both manifolds.
    pub fn with_derivatives(&self, derivatives: Derivatives) -> Self {
        let mut out = self.clone();
        out.derivatives = derivatives;
        out.source = self.source.with_derivatives(derivatives);
        out.target = self.target.with_derivatives(derivatives);
        out
    }

    pub fn source(&self) -> &ManifoldModel {
        &self.source
    }

    pub fn target(&self) -> &ManifoldModel {
        &self.target
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// Image of `p`, re-expressed in the target's preferred chart.
    pub fn image(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.source.check_point(p)?;
        let y = self.target.normalize(&(self.chart_map)(p)?);
        if !self.target.in_domain(&y) {
            return Err(Error::Chart(format!("image {:?} outside every target chart", y.coords.as_slice())));
        }
        Ok(y)
    }

    /// Raw chart map with no domain handling, for stencils.
    pub(crate) fn eval_raw(&self, p: &ChartPoint) -> Result<ChartPoint> {
        (self.chart_map)(p)
    }

    pub fn jet(&self, p: &ChartPoint) -> Result<MapJet> {
        let image = self.image(p)?;
        match (&self.jet, self.derivatives) {
            (Some(jet), Derivatives::Analytic) => jet(p)?.through_transition(&self.target, image.chart),
            (_, Derivatives::Analytic) => self.fd_jet(p, &image, FD_FIRST_STEP, FD_SECOND_STEP),
            (_, Derivatives::FiniteDifference { first, second }) => self.fd_jet(p, &image, first, second),
        }
    }

    fn fd_jet(&self, p: &ChartPoint, image: &ChartPoint, h1: f64, h2: f64) -> Result<MapJet> {
        let (m, n) = (self.source.dim(), self.target.dim());
        let f = |offsets: &[(usize, f64)]| -> Result<DVector<f64>> {
            let mut q = p.clone();
            for &(k, s) in offsets {
                q.coords[k] += s;
            }
            let y = (self.chart_map)(&q)?;
            self.target.express_near(&y, image)
        };
        let y0 = &image.coords;
        let mut d = DMatrix::zeros(n, m);
        for i in 0..m {
            let col = (f(&[(i, h1)])? - f(&[(i, -h1)])?) / (2.0 * h1);
            d.set_column(i, &col);
        }
        let mut hessians = vec![DMatrix::zeros(m, m); n];
        for i in 0..m {
            for j in i..m {
                let v = if i == j {
                    (f(&[(i, h2)])? - y0 * 2.0 + f(&[(i, -h2)])?) / (h2 * h2)
                } else {
                    (f(&[(i, h2), (j, h2)])? - f(&[(i, h2), (j, -h2)])? - f(&[(i, -h2), (j, h2)])?
                        + f(&[(i, -h2), (j, -h2)])?)
                        / (4.0 * h2 * h2)
                };
                for a in 0..n {
                    hessians[a][(i, j)] = v[a];
                    hessians[a][(j, i)] = v[a];
                }
            }
        }
        Ok(MapJet {
            image: image.clone(),
            differential: d,
            hessians,
        })
    }
}

fn check_same_atlas(source: &ManifoldModel, target: &ManifoldModel) -> Result<()> {
    if source.dim() != target.dim() || source.chart_count() != target.chart_count() {
        return Err(Error::Dimension("identity needs matching dimension and charts".into()));
    }
    Ok(())
}

/// Second fundamental form `∇dφ` of a map at a point.
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    pub point: ChartPoint,
    /// `tensor[a]` is the symmetric m×m matrix `(∇dφ)ᵃᵢⱼ`.
    pub tensor: Vec<DMatrix<f64>>,
    /// `|∇dφ|² = g^ik g^jl h_ab (∇dφ)ᵃᵢⱼ (∇dφ)ᵇₖₗ`.
    pub norm_sq: f64,
}

impl SecondFundamentalForm {
    /// Value on a pair of source vectors, `(∇dφ)(u, v)`.
    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.tensor.len(), |a, _| (&self.tensor[a] * v).dot(u))
    }

    /// Largest asymmetry `|Bᵃᵢⱼ − Bᵃⱼᵢ|`.
    pub fn asymmetry(&self) -> f64 {
        self.tensor
            .iter()
            .map(|b| (b - b.transpose()).amax())
            .fold(0.0, f64::max)
    }
}

/// Everything pointwise about a map: both curvature bundles and the jet.
#[derive(Debug, Clone)]
pub struct MapPointData {
    pub point: ChartPoint,
    pub source: CurvatureBundle,
    pub target: CurvatureBundle,
    pub jet: MapJet,
}

impl MapPointData {
    pub fn at(map: &MapModel, p: &ChartPoint) -> Result<Self> {
        let jet = map.jet(p)?;
        let source = CurvatureBundle::at(&map.source, p)?;
        let target = CurvatureBundle::at(&map.target, &jet.image)?;
        Ok(Self {
            point: p.clone(),
            source,
            target,
            jet,
        })
    }

    pub fn differential(&self) -> &DMatrix<f64> {
        &self.jet.differential
    }

    pub fn pullback(&self) -> DMatrix<f64> {
        pullback_from(&self.jet.differential, &self.target.metric)
    }

    pub fn energy_density(&self) -> f64 {
        energy_from(&self.jet.differential, &self.source.metric_inv, &self.target.metric)
    }

    pub fn second_fundamental_form(&self) -> SecondFundamentalForm {
        sff_from(
            &self.point,
            &self.jet,
            &self.source.christoffel,
            &self.target.christoffel,
            &self.source.metric_inv,
            &self.target.metric,
        )
    }

    pub fn tension(&self) -> DVector<f64> {
        tension_from(&self.second_fundamental_form(), &self.source.metric_inv)
    }

    /// Differential expressed in g- and h-orthonormal frames.
    pub fn orthonormal_differential(&self) -> Result<DMatrix<f64>> {
        orthonormal_differential(&self.jet.differential, &self.source.metric, &self.target.metric)
    }
}

pub(crate) fn pullback_from(d: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(&(d.transpose() * h * d))
}

/// `gⁱʲ h_ab φᵃᵢ φᵇⱼ` summed index by index.
pub(crate) fn energy_from(d: &DMatrix<f64>, g_inv: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let (n, m) = d.shape();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            if g_inv[(i, j)] == 0.0 {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    s += g_inv[(i, j)] * h[(a, b)] * d[(a, i)] * d[(b, j)];
                }
            }
        }
    }
    s
}

pub(crate) fn sff_from(
    point: &ChartPoint,
    jet: &MapJet,
    gamma_g: &Christoffel,
    gamma_h: &Christoffel,
    g_inv: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> SecondFundamentalForm {
    let d = &jet.differential;
    let (n, m) = d.shape();
    let tensor: Vec<DMatrix<f64>> = (0..n)
        .map(|a| {
            DMatrix::from_fn(m, m, |i, j| {
                let mut v = jet.hessians[a][(i, j)];
                for k in 0..m {
                    v -= gamma_g.get(k, i, j) * d[(a, k)];
                }
                for b in 0..n {
                    for c in 0..n {
                        v += gamma_h.get(a, b, c) * d[(b, i)] * d[(c, j)];
                    }
                }
                v
            })
        })
        .collect();
    let mut norm_sq = 0.0;
    for a in 0..n {
        for b in 0..n {
            if h[(a, b)] == 0.0 {
                continue;
            }
            // g⁻¹ Bᵃ g⁻¹ contracted with Bᵇ
            let left = g_inv * &tensor[a] * g_inv;
            norm_sq += h[(a, b)] * left.component_mul(&tensor[b]).sum();
        }
    }
    SecondFundamentalForm {
        point: point.clone(),
        tensor,
        norm_sq,
    }
}

pub(crate) fn tension_from(sff: &SecondFundamentalForm, g_inv: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(sff.tensor.len(), |a, _| g_inv.component_mul(&sff.tensor[a]).sum())
}

pub(crate) fn orthonormal_differential(d: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lg = linalg::cholesky_lower(g)?;
    let lh = linalg::cholesky_lower(h)?;
    let lg_inv = lg
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    Ok(lh.transpose() * d * lg_inv.transpose())
}

pub fn differential(map: &MapModel, p: &ChartPoint) -> Result<DMatrix<f64>> {
    Ok(map.jet(p)?.differential)
}

/// `(φ*h)ᵢⱼ = h_ab φᵃᵢ φᵇⱼ`.
pub fn pullback_metric(map: &MapModel, p: &ChartPoint) -> Result<DMatrix<f64>> {
    let jet = map.jet(p)?;
    let h = map.target.metric_at(&jet.image)?;
    Ok(pullback_from(&jet.differential, &h))
}

/// `|dφ|² = gⁱʲ h_ab φᵃᵢ φᵇⱼ`.
pub fn energy_density(map: &MapModel, p: &ChartPoint) -> Result<f64> {
    let jet = map.jet(p)?;
    let g_inv = linalg::spd_inverse(&map.source.metric_at(p)?)?;
    let h = map.target.metric_at(&jet.image)?;
    Ok(energy_from(&jet.differential, &g_inv, &h))
}

pub fn second_fundamental_form(map: &MapModel, p: &ChartPoint) -> Result<SecondFundamentalForm> {
    let jet = map.jet(p)?;
    let gamma_g = crate::curvature::christoffel(&map.source, p)?;
    let gamma_h = crate::curvature::christoffel(&map.target, &jet.image)?;
    let g_inv = linalg::spd_inverse(&map.source.metric_at(p)?)?;
    let h = map.target.metric_at(&jet.image)?;
    Ok(sff_from(p, &jet, &gamma_g, &gamma_h, &g_inv, &h))
}

/// `τ(φ)ᵃ = gⁱʲ (∇dφ)ᵃᵢⱼ`, a target vector in the image chart.
pub fn tension_field(map: &MapModel, p: &ChartPoint) -> Result<DVector<f64>> {
    let sff = second_fundamental_form(map, p)?;
    let g_inv = linalg::spd_inverse(&map.source.metric_at(p)?)?;
    Ok(tension_from(&sff, &g_inv))
}

/// Rank of `dφ` measured in g/h-orthonormal frames.
pub fn rank_at(map: &MapModel, p: &ChartPoint, rel_tol: f64) -> Result<usize> {
    let jet = map.jet(p)?;
    let g = map.source.metric_at(p)?;
    let h = map.target.metric_at(&jet.image)?;
    let d = orthonormal_differential(&jet.differential, &g, &h)?;
    Ok(linalg::numerical_rank(&d, rel_tol))
}

/// Smallest eigenvalue of `Ric_g − (m−1) K φ*h` against `g`; non-negative
/// exactly where the Ricci lower bound holds.
pub fn ricci_lower_bound_residual(map: &MapModel, p: &ChartPoint, k: f64) -> Result<f64> {
    let data = MapPointData::at(map, p)?;
    ricci_residual_from(&data, k)
}

pub(crate) fn ricci_residual_from(data: &MapPointData, k: f64) -> Result<f64> {
    let m = data.source.metric.nrows() as f64;
    let a = &data.source.ricci - data.pullback() * ((m - 1.0) * k);
    Ok(linalg::generalized_eigenvalues(&a, &data.source.metric)?[0])
}

/// Step used by [`curve_identity_residual`].
pub const CURVE_FD_STEP: f64 = 1e-4;

/// Validates `∇dφ` through the curve identity `σ̈ = dφ(γ̈) + (∇dφ)(γ̇, γ̇)` on
/// random quintic curves through `p`, with `σ = φ∘γ` differentiated by
/// central differences. Returns the largest coordinate mismatch relative to
/// `max(1, |σ̈|)`.
pub fn curve_identity_residual(map: &MapModel, p: &ChartPoint, curves: usize, seed: u64) -> Result<f64> {
    let m = map.source.dim();
    let data = MapPointData::at(map, p)?;
    let sff = data.second_fundamental_form();
    let image = data.jet.image.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = CURVE_FD_STEP;
    let mut worst = 0.0_f64;
    for _ in 0..curves {
        let coeffs: Vec<DVector<f64>> = (0..5).map(|_| random_vector(&mut rng, m) * rng.random_range(0.2..0.6)).collect();
        let gamma = |t: f64| {
            let mut x = p.coords.clone();
            let mut tk = 1.0;
            for c in &coeffs {
                tk *= t;
                x += c * tk;
            }
            ChartPoint::from_vector(p.chart, x)
        };
        let sigma = |t: f64| -> Result<DVector<f64>> {
            let y = map.eval_raw(&gamma(t))?;
            map.target.express_near(&y, &image)
        };
        let s_plus = sigma(h)?;
        let s_minus = sigma(-h)?;
        let s0 = &image.coords;
        let ds = (&s_plus - &s_minus) / (2.0 * h);
        let dds = (&s_plus - s0 * 2.0 + &s_minus) / (h * h);
        let sigma_acc = dds + data.target.christoffel.contract(&ds, &ds);
        let vel = coeffs[0].clone();
        let gamma_acc = &coeffs[1] * 2.0 + data.source.christoffel.contract(&vel, &vel);
        let predicted = data.differential() * gamma_acc + sff.apply(&vel, &vel);
        let err = (&sigma_acc - predicted).amax() / sigma_acc.amax().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(n: usize) -> ManifoldModel {
        ManifoldModel::standard_torus(n)
    }

    #[test]
    fn constant_map_invariants_vanish() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let map = MapModel::constant(torus(2), s, ChartPoint::new(0, &[0.2, 0.1])).unwrap();
        let p = ChartPoint::new(0, &[0.3, 0.4]);
        assert_eq!(differential(&map, &p).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(pullback_metric(&map, &p).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(energy_density(&map, &p).unwrap(), 0.0);
        assert_eq!(rank_at(&map, &p, RANK_REL_TOL).unwrap(), 0);
    }

    #[test]
    fn identity_map_basics() {
        let s = ManifoldModel::round_sphere(3, 1.0).unwrap();
        let map = MapModel::identity(s.clone(), s.clone()).unwrap();
        let p = ChartPoint::new(0, &[0.3, -0.2, 0.5]);
        assert_eq!(differential(&map, &p).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(pullback_metric(&map, &p).unwrap(), s.metric_at(&p).unwrap());
        assert!((energy_density(&map, &p).unwrap() - 3.0).abs() < 1e-13);
        assert!(tension_field(&map, &p).unwrap().amax() < 1e-8);
        assert_eq!(rank_at(&map, &p, RANK_REL_TOL).unwrap(), 3);
    }

    #[test]
    fn linear_torus_map() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let map = MapModel::linear_torus(torus(2), torus(2), a.clone(), DVector::zeros(2)).unwrap();
        let p = ChartPoint::new(0, &[0.7, 0.1]);
        assert_eq!(differential(&map, &p).unwrap(), a);
        assert_eq!(rank_at(&map, &p, RANK_REL_TOL).unwrap(), 1);
        let sff = second_fundamental_form(&map, &p).unwrap();
        assert_eq!(sff.norm_sq, 0.0);
        assert_eq!(tension_field(&map, &p).unwrap().amax(), 0.0);
    }

    #[test]
    fn homothety_pullback() {
        let c = 2.5;
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let map = MapModel::identity(unit.scaled(c), unit).unwrap();
        let p = ChartPoint::new(0, &[0.4, 0.9]);
        let g = map.source().metric_at(&p).unwrap();
        let pb = pullback_metric(&map, &p).unwrap();
        assert!((pb - &g / c).amax() <= 1e-10 * g.amax());
        assert!((energy_density(&map, &p).unwrap() - 2.0 / c).abs() < 1e-12);
    }

    #[test]
    fn equator_inclusion_is_totally_geodesic() {
        let map = MapModel::equator_inclusion(1.0).unwrap();
        for x in [-1.2, -0.3, 0.0, 0.8, 1.4] {
            let p = ChartPoint::new(0, &[x]);
            let sff = second_fundamental_form(&map, &p).unwrap();
            assert!(sff.tensor.iter().all(|b| b.amax() < 1e-7));
            assert!(curve_identity_residual(&map, &p, 4, 1).unwrap() < 1e-6);
        }
    }

    #[test]
    fn flat_to_flat_sff_is_componentwise_hessian() {
        let map = MapModel::torus_sine(torus(2), torus(2), DMatrix::identity(2, 2), DVector::zeros(2), 0.1).unwrap();
        let p = ChartPoint::new(0, &[0.13, 0.71]);
        let sff = second_fundamental_form(&map, &p).unwrap();
        let jet = map.jet(&p).unwrap();
        for a in 0..2 {
            assert_eq!(sff.tensor[a], jet.hessians[a]);
        }
        let tau = tension_field(&map, &p).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let lap0 = -0.1 * two_pi * two_pi * (two_pi * 0.13_f64).sin();
        assert!((tau[0] - lap0).abs() < 1e-12);
    }

    #[test]
    fn curve_identity_on_curved_maps() {
        let map = MapModel::identity_into_chart(
            ManifoldModel::round_sphere(2, 1.0).unwrap().scaled(2.0),
            ManifoldModel::round_sphere(2, 1.0).unwrap(),
            1,
        )
        .unwrap();
        let p = ChartPoint::new(0, &[0.9, 0.4]);
        assert!(curve_identity_residual(&map, &p, 8, 3).unwrap() < 1e-6);

        // a non-totally-geodesic map: torus into the sphere chart
        let sphere = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let bump = MapModel::custom(
            torus(2),
            sphere,
            "bump",
            Arc::new(|p| {
                let u = &p.coords;
                Ok(ChartPoint::new(0, &[0.3 * (u[0] * 6.0).sin(), 0.2 * u[1] * u[0]]))
            }),
            None,
        );
        let q = ChartPoint::new(0, &[0.2, 0.5]);
        let sff = second_fundamental_form(&bump, &q).unwrap();
        assert!(sff.norm_sq > 1e-3);
        assert!(sff.asymmetry() < 1e-9);
        assert!(curve_identity_residual(&bump, &q, 8, 4).unwrap() < 1e-5);
    }

    #[test]
    fn fd_and_analytic_differentials_agree() {
        let map = MapModel::identity_into_chart(
            ManifoldModel::round_sphere(2, 1.0).unwrap(),
            ManifoldModel::round_sphere(2, 1.0).unwrap(),
            1,
        )
        .unwrap();
        let p = ChartPoint::new(0, &[1.1, -0.3]);
        let a = map.jet(&p).unwrap();
        let f = map.with_derivatives(Derivatives::finite_difference(1e-4)).jet(&p).unwrap();
        assert!((&a.differential - &f.differential).amax() < 1e-7);
        for (x, y) in a.hessians.iter().zip(&f.hessians) {
            assert!((x - y).amax() < 1e-5);
        }
    }

    #[test]
    fn trace_of_pullback_is_energy() {
        let map = MapModel::identity_into_chart(
            ManifoldModel::round_sphere(2, 1.0).unwrap().scaled(0.7),
            ManifoldModel::round_sphere(2, 1.0).unwrap(),
            1,
        )
        .unwrap();
        let p = ChartPoint::new(0, &[0.8, 0.6]);
        let data = MapPointData::at(&map, &p).unwrap();
        let tr = (&data.source.metric_inv * data.pullback()).trace();
        assert!((tr - data.energy_density()).abs() < 1e-12 * tr.abs().max(1.0));
    }

    #[test]
    fn ricci_residual_examples() {
        let flat = MapModel::constant(torus(2), torus(3), ChartPoint::new(0, &[0.0, 0.0, 0.0])).unwrap();
        let p = ChartPoint::new(0, &[0.5, 0.5]);
        assert_eq!(ricci_lower_bound_residual(&flat, &p, 3.0).unwrap(), 0.0);

        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let eq = MapModel::identity(unit.scaled(4.0), unit).unwrap();
        let q = ChartPoint::new(0, &[0.3, -0.4]);
        assert!(ricci_lower_bound_residual(&eq, &q, 1.0).unwrap().abs() < 1e-8);

        let lin = MapModel::linear_torus(torus(2), torus(2), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert!(ricci_lower_bound_residual(&lin, &p, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn image_outside_target_is_chart_error() {
        let disk = ManifoldModel::hyperbolic_disk(2, 1.0).unwrap();
        let map = MapModel::custom(
            torus(2),
            disk,
            "escape",
            Arc::new(|p| Ok(ChartPoint::from_vector(0, &p.coords * 10.0))),
            None,
        );
        assert!(matches!(map.image(&ChartPoint::new(0, &[0.5, 0.5])), Err(Error::Chart(_))));
    }

    #[test]
    fn quadratic_map_jet_matches_finite_differences() {
        let s2 = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let h3 = ManifoldModel::hyperbolic_disk(3, 1.0).unwrap();
        let q = vec![
            DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, -0.3]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.2, 0.2, 0.1]),
            DMatrix::from_row_slice(2, 2, &[-0.1, 0.0, 0.0, 0.05]),
        ];
        let a = DMatrix::from_row_slice(3, 2, &[0.3, 0.1, -0.2, 0.25, 0.05, 0.1]);
        let map = MapModel::quadratic(s2, h3, 0, DVector::from_vec(vec![0.1, -0.1, 0.05]), a, q).unwrap();
        let p = ChartPoint::new(0, &[0.3, -0.4]);
        let exact = map.jet(&p).unwrap();
        let fd = map.with_derivatives(Derivatives::FiniteDifference { first: 1e-5, second: 1e-4 }).jet(&p).unwrap();
        assert!((&exact.differential - &fd.differential).amax() < 1e-8);
        for (x, y) in exact.hessians.iter().zip(&fd.hessians) {
            assert!((x - y).amax() < 1e-6);
        }
    }
}
