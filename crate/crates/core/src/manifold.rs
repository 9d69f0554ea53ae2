//! Chart-based model Riemannian manifolds.
//!
//! A [`ManifoldModel`] owns one or more coordinate charts and evaluates the
//! metric together with its first and second coordinate derivatives (the
//! metric *jet*). Builtin models carry closed-form jets; custom charts may
//! supply one, otherwise central finite differences are used.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default central-difference step for first metric derivatives.
pub const FD_FIRST_STEP: f64 = 1e-5;
/// Default central-difference step for second metric derivatives.
pub const FD_SECOND_STEP: f64 = 1e-4;
/// Stereographic points farther than this multiple of the radius from the
/// chart origin are re-expressed in the antipodal chart.
pub const SPHERE_CHART_SWITCH: f64 = 1.5;

/// A point given by its chart index and coordinates in that chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: DVector<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: &[f64]) -> Self {
        Self {
            chart,
            coords: DVector::from_column_slice(coords),
        }
    }

    pub fn from_vector(chart: usize, coords: DVector<f64>) -> Self {
        Self { chart, coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// How metric derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivatives {
    /// Closed-form jets where the chart provides one, finite differences with
    /// the default steps otherwise.
    Analytic,
    /// Always central finite differences with the given steps.
    FiniteDifference { first: f64, second: f64 },
}

impl Derivatives {
    pub fn finite_difference(step: f64) -> Self {
        Derivatives::FiniteDifference {
            first: step,
            second: step,
        }
    }
}

/// Metric value with first and second coordinate derivatives at a point.
///
/// `first[k]` is `∂_k g`, `second[k * m + l]` is `∂_k ∂_l g`.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub value: DMatrix<f64>,
    pub first: Vec<DMatrix<f64>>,
    pub second: Vec<DMatrix<f64>>,
}

impl MetricJet {
    pub fn dim(&self) -> usize {
        self.value.nrows()
    }

    fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.first.iter_mut().for_each(|d| *d *= c);
        self.second.iter_mut().for_each(|d| *d *= c);
        self
    }

    /// Jet of a metric `φ(x)·I` from the conformal factor and its derivatives.
    fn conformal(dim: usize, factor: f64, grad: &[f64], hess: &DMatrix<f64>) -> Self {
        let id = DMatrix::<f64>::identity(dim, dim);
        MetricJet {
            value: &id * factor,
            first: grad.iter().map(|&d| &id * d).collect(),
            second: (0..dim * dim).map(|kl| &id * hess[(kl / dim, kl % dim)]).collect(),
        }
    }
}

pub type DomainFn = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;
pub type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type JetFn = Arc<dyn Fn(&DVector<f64>) -> MetricJet + Send + Sync>;

/// A user-supplied coordinate chart.
#[derive(Clone)]
pub struct Chart {
    pub name: String,
    pub domain: DomainFn,
    pub metric: MetricFn,
    pub jet: Option<JetFn>,
    /// Period of each coordinate, when the chart wraps.
    pub periods: Option<Vec<f64>>,
}

impl Chart {
    pub fn new(name: impl Into<String>, metric: MetricFn) -> Self {
        Self {
            name: name.into(),
            domain: Arc::new(|_| true),
            metric,
            jet: None,
            periods: None,
        }
    }

    pub fn with_domain(mut self, domain: DomainFn) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_jet(mut self, jet: JetFn) -> Self {
        self.jet = Some(jet);
        self
    }
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("analytic_jet", &self.jet.is_some())
            .field("periods", &self.periods)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ManifoldKind {
    /// `ℝᵐ / Λ` in lattice coordinates `u`, metric `BᵀB` for lattice basis
    /// columns `B`; every coordinate has period one.
    FlatTorus { lattice: DMatrix<f64> },
    /// Round sphere of radius `r` with the north/south stereographic chart
    /// pair (charts 0 and 1), metric `4r⁴/(r² + |x|²)² δ`.
    RoundSphere { radius: f64 },
    /// Poincaré ball of radius `s`, metric `4s⁴/(s² − |x|²)² δ`, sectional
    /// curvature `−1/s²`.
    HyperbolicDisk { scale: f64 },
    /// Riemannian product; chart `i·n₂ + j` pairs factor charts `i` and `j`.
    Product(Box<ManifoldModel>, Box<ManifoldModel>),
    Custom(Vec<Chart>),
}

/// A model Riemannian manifold: charts, metric, and derivative access.
///
/// Immutable after construction; cloning is cheap for custom charts since
/// their callbacks are reference counted.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    dim: usize,
    kind: ManifoldKind,
    scale: f64,
    derivatives: Derivatives,
}

impl ManifoldModel {
    pub fn flat_torus(lattice: DMatrix<f64>) -> Result<Self> {
        if lattice.nrows() != lattice.ncols() || lattice.nrows() == 0 {
            return Err(Error::Dimension("lattice basis must be square".into()));
        }
        let gram = lattice.transpose() * &lattice;
        linalg::check_metric(&gram)?;
        Ok(Self::from_kind(lattice.nrows(), ManifoldKind::FlatTorus { lattice }))
    }

    pub fn standard_torus(dim: usize) -> Self {
        Self::from_kind(
            dim,
            ManifoldKind::FlatTorus {
                lattice: DMatrix::identity(dim, dim),
            },
        )
    }

    pub fn round_sphere(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) {
            return Err(Error::Invalid(format!("sphere needs dim ≥ 1 and radius > 0, got {dim}, {radius}")));
        }
        Ok(Self::from_kind(dim, ManifoldKind::RoundSphere { radius }))
    }

    pub fn hyperbolic_disk(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale > 0.0) {
            return Err(Error::Invalid(format!("hyperbolic disk needs dim ≥ 1 and scale > 0, got {dim}, {scale}")));
        }
        Ok(Self::from_kind(dim, ManifoldKind::HyperbolicDisk { scale }))
    }

    pub fn product(a: ManifoldModel, b: ManifoldModel) -> Self {
        let dim = a.dim + b.dim;
        Self::from_kind(dim, ManifoldKind::Product(Box::new(a), Box::new(b)))
    }

    pub fn custom(dim: usize, charts: Vec<Chart>) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::Invalid("custom manifold needs at least one chart".into()));
        }
        Ok(Self::from_kind(dim, ManifoldKind::Custom(charts)))
    }

    fn from_kind(dim: usize, kind: ManifoldKind) -> Self {
        Self {
            dim,
            kind,
            scale: 1.0,
            derivatives: Derivatives::Analytic,
        }
    }

    /// The same manifold with metric `c·g`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale *= c;
        out
    }

    pub fn with_derivatives(&self, derivatives: Derivatives) -> Self {
        let mut out = self.clone();
        out.derivatives = derivatives;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn derivatives(&self) -> Derivatives {
        self.derivatives
    }

    pub fn chart_count(&self) -> usize {
        match &self.kind {
            ManifoldKind::FlatTorus { .. } | ManifoldKind::HyperbolicDisk { .. } => 1,
            ManifoldKind::RoundSphere { .. } => 2,
            ManifoldKind::Product(a, b) => a.chart_count() * b.chart_count(),
            ManifoldKind::Custom(charts) => charts.len(),
        }
    }

    /// True when the metric is constant in every chart.
    pub fn is_flat(&self) -> bool {
        match &self.kind {
            ManifoldKind::FlatTorus { .. } => true,
            ManifoldKind::Product(a, b) => a.is_flat() && b.is_flat(),
            _ => false,
        }
    }

    /// Sectional curvature for the constant-curvature builtins.
    pub fn constant_curvature(&self) -> Option<f64> {
        match &self.kind {
            ManifoldKind::FlatTorus { .. } => Some(0.0),
            ManifoldKind::RoundSphere { radius } if self.dim >= 2 => Some(1.0 / (radius * radius * self.scale)),
            ManifoldKind::RoundSphere { .. } => Some(0.0),
            ManifoldKind::HyperbolicDisk { scale } if self.dim >= 2 => Some(-1.0 / (scale * scale * self.scale)),
            ManifoldKind::HyperbolicDisk { .. } => Some(0.0),
            ManifoldKind::Product(a, b) if a.is_flat() && b.is_flat() => Some(0.0),
            _ => None,
        }
    }

    /// Coordinate periods of a chart, if it wraps.
    pub fn periods(&self, chart: usize) -> Option<Vec<f64>> {
        match &self.kind {
            ManifoldKind::FlatTorus { .. } => Some(vec![1.0; self.dim]),
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(chart, a, b);
                let pa = a.periods(ca);
                let pb = b.periods(cb);
                if pa.is_none() && pb.is_none() {
                    return None;
                }
                let mut out = pa.unwrap_or_else(|| vec![0.0; a.dim]);
                out.extend(pb.unwrap_or_else(|| vec![0.0; b.dim]));
                Some(out)
            }
            ManifoldKind::Custom(charts) => charts.get(chart).and_then(|c| c.periods.clone()),
            _ => None,
        }
    }

    fn split_chart(&self, chart: usize, _a: &ManifoldModel, b: &ManifoldModel) -> (usize, usize) {
        let nb = b.chart_count();
        (chart / nb, chart % nb)
    }

    fn split_coords(&self, x: &DVector<f64>, a: &ManifoldModel) -> (DVector<f64>, DVector<f64>) {
        let xa = x.rows(0, a.dim).into_owned();
        let xb = x.rows(a.dim, x.len() - a.dim).into_owned();
        (xa, xb)
    }

    pub fn in_domain(&self, p: &ChartPoint) -> bool {
        if p.dim() != self.dim || p.chart >= self.chart_count() || p.coords.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let x = &p.coords;
        match &self.kind {
            ManifoldKind::FlatTorus { .. } => true,
            ManifoldKind::RoundSphere { radius } => x.norm() <= SPHERE_CHART_SWITCH * radius,
            ManifoldKind::HyperbolicDisk { scale } => x.norm() < *scale,
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(p.chart, a, b);
                let (xa, xb) = self.split_coords(x, a);
                a.in_domain(&ChartPoint::from_vector(ca, xa)) && b.in_domain(&ChartPoint::from_vector(cb, xb))
            }
            ManifoldKind::Custom(charts) => (charts[p.chart].domain)(x),
        }
    }

    pub fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.chart >= self.chart_count() {
            return Err(Error::UnknownChart(p.chart));
        }
        if p.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, manifold has dimension {}",
                p.dim(),
                self.dim
            )));
        }
        if !self.in_domain(p) {
            return Err(Error::Domain {
                chart: p.chart,
                coords: p.coords.iter().copied().collect(),
            });
        }
        Ok(())
    }

    /// Metric without domain or conditioning checks, including the scale.
    pub(crate) fn metric_unchecked(&self, chart: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.base_metric(chart, x) * self.scale
    }

    fn base_metric(&self, chart: usize, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ManifoldKind::FlatTorus { lattice } => lattice.transpose() * lattice,
            ManifoldKind::RoundSphere { radius } => {
                let r2 = radius * radius;
                let f = 4.0 * r2 * r2 / (r2 + x.norm_squared()).powi(2);
                DMatrix::from_diagonal_element(self.dim, self.dim, f)
            }
            ManifoldKind::HyperbolicDisk { scale } => {
                let s2 = scale * scale;
                let f = 4.0 * s2 * s2 / (s2 - x.norm_squared()).powi(2);
                DMatrix::from_diagonal_element(self.dim, self.dim, f)
            }
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(chart, a, b);
                let (xa, xb) = self.split_coords(x, a);
                block_diag(&a.metric_unchecked(ca, &xa), &b.metric_unchecked(cb, &xb))
            }
            ManifoldKind::Custom(charts) => (charts[chart].metric)(x),
        }
    }

    /// Metric matrix at a point; symmetric positive definite and conditioned.
    pub fn metric_at(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let g = self.metric_unchecked(p.chart, &p.coords);
        linalg::check_metric(&g)?;
        Ok(g)
    }

    /// Metric with first and second derivatives at a point.
    pub fn metric_jet(&self, p: &ChartPoint) -> Result<MetricJet> {
        self.check_point(p)?;
        let jet = match self.derivatives {
            Derivatives::Analytic => match self.analytic_jet(p.chart, &p.coords) {
                Some(jet) => jet,
                None => self.fd_jet(p.chart, &p.coords, FD_FIRST_STEP, FD_SECOND_STEP),
            },
            Derivatives::FiniteDifference { first, second } => self.fd_jet(p.chart, &p.coords, first, second),
        };
        linalg::check_metric(&jet.value)?;
        Ok(jet)
    }

    /// Closed-form jet, scaled; `None` when the chart has no analytic form.
    fn analytic_jet(&self, chart: usize, x: &DVector<f64>) -> Option<MetricJet> {
        let m = self.dim;
        let jet = match &self.kind {
            ManifoldKind::FlatTorus { lattice } => MetricJet {
                value: lattice.transpose() * lattice,
                first: vec![DMatrix::zeros(m, m); m],
                second: vec![DMatrix::zeros(m, m); m * m],
            },
            ManifoldKind::RoundSphere { radius } => {
                let r2 = radius * radius;
                let r4 = r2 * r2;
                let d = r2 + x.norm_squared();
                let factor = 4.0 * r4 / (d * d);
                let grad: Vec<f64> = x.iter().map(|&xk| -16.0 * r4 * xk / d.powi(3)).collect();
                let hess = DMatrix::from_fn(m, m, |k, l| {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    -16.0 * r4 * delta / d.powi(3) + 96.0 * r4 * x[k] * x[l] / d.powi(4)
                });
                MetricJet::conformal(m, factor, &grad, &hess)
            }
            ManifoldKind::HyperbolicDisk { scale } => {
                let s2 = scale * scale;
                let s4 = s2 * s2;
                let d = s2 - x.norm_squared();
                let factor = 4.0 * s4 / (d * d);
                let grad: Vec<f64> = x.iter().map(|&xk| 16.0 * s4 * xk / d.powi(3)).collect();
                let hess = DMatrix::from_fn(m, m, |k, l| {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    16.0 * s4 * delta / d.powi(3) + 96.0 * s4 * x[k] * x[l] / d.powi(4)
                });
                MetricJet::conformal(m, factor, &grad, &hess)
            }
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(chart, a, b);
                let (xa, xb) = self.split_coords(x, a);
                let ja = a.metric_jet(&ChartPoint::from_vector(ca, xa)).ok()?;
                let jb = b.metric_jet(&ChartPoint::from_vector(cb, xb)).ok()?;
                // factor jets already carry their own scale
                return Some(product_jet(&ja, &jb).scaled(self.scale));
            }
            ManifoldKind::Custom(charts) => charts[chart].jet.as_ref()?(x),
        };
        Some(jet.scaled(self.scale))
    }

    fn fd_jet(&self, chart: usize, x: &DVector<f64>, h1: f64, h2: f64) -> MetricJet {
        let m = self.dim;
        let g = |y: &DVector<f64>| self.metric_unchecked(chart, y);
        let shifted = |y: &DVector<f64>, k: usize, s: f64| {
            let mut z = y.clone();
            z[k] += s;
            z
        };
        let value = g(x);
        let first = (0..m)
            .map(|k| (g(&shifted(x, k, h1)) - g(&shifted(x, k, -h1))) / (2.0 * h1))
            .collect();
        let mut second = vec![DMatrix::zeros(m, m); m * m];
        for k in 0..m {
            for l in k..m {
                let d = if k == l {
                    (g(&shifted(x, k, h2)) - &value * 2.0 + g(&shifted(x, k, -h2))) / (h2 * h2)
                } else {
                    let pp = g(&shifted(&shifted(x, k, h2), l, h2));
                    let pm = g(&shifted(&shifted(x, k, h2), l, -h2));
                    let mp = g(&shifted(&shifted(x, k, -h2), l, h2));
                    let mm = g(&shifted(&shifted(x, k, -h2), l, -h2));
                    (pp - pm - mp + mm) / (4.0 * h2 * h2)
                };
                second[l * m + k] = d.clone();
                second[k * m + l] = d;
            }
        }
        MetricJet { value, first, second }
    }

    /// Coordinates of `p` re-expressed in chart `to`, with no domain check on
    /// the result.
    pub fn transition(&self, p: &ChartPoint, to: usize) -> Result<DVector<f64>> {
        if p.chart == to {
            return Ok(p.coords.clone());
        }
        if to >= self.chart_count() {
            return Err(Error::UnknownChart(to));
        }
        match &self.kind {
            ManifoldKind::RoundSphere { radius } => {
                let n2 = p.coords.norm_squared();
                if n2 == 0.0 {
                    return Err(Error::Chart("pole has no image in the antipodal chart".into()));
                }
                Ok(&p.coords * (radius * radius / n2))
            }
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(p.chart, a, b);
                let (ta, tb) = self.split_chart(to, a, b);
                let (xa, xb) = self.split_coords(&p.coords, a);
                let ya = a.transition(&ChartPoint::from_vector(ca, xa), ta)?;
                let yb = b.transition(&ChartPoint::from_vector(cb, xb), tb)?;
                Ok(concat(&ya, &yb))
            }
            _ => Err(Error::NoTransition { from: p.chart, to }),
        }
    }

    /// Value, Jacobian and per-component Hessians of the chart transition.
    /// `hessians[a]` is the coordinate Hessian of output component `a`.
    pub fn transition_jet(
        &self,
        p: &ChartPoint,
        to: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let m = self.dim;
        if p.chart == to {
            return Ok((p.coords.clone(), DMatrix::identity(m, m), vec![DMatrix::zeros(m, m); m]));
        }
        match &self.kind {
            ManifoldKind::RoundSphere { radius } => {
                let x = &p.coords;
                let r2 = radius * radius;
                let s = x.norm_squared();
                if s == 0.0 {
                    return Err(Error::Chart("pole has no image in the antipodal chart".into()));
                }
                let y = x * (r2 / s);
                let jac = DMatrix::from_fn(m, m, |a, i| {
                    let delta = if a == i { 1.0 } else { 0.0 };
                    r2 * (delta / s - 2.0 * x[a] * x[i] / (s * s))
                });
                let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                let hess = (0..m)
                    .map(|a| {
                        DMatrix::from_fn(m, m, |i, j| {
                            r2 * (-2.0 * (d(a, j) * x[i] + d(a, i) * x[j] + x[a] * d(i, j)) / (s * s)
                                + 8.0 * x[a] * x[i] * x[j] / (s * s * s))
                        })
                    })
                    .collect();
                Ok((y, jac, hess))
            }
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(p.chart, a, b);
                let (ta, tb) = self.split_chart(to, a, b);
                let (xa, xb) = self.split_coords(&p.coords, a);
                let (ya, ja, ha) = a.transition_jet(&ChartPoint::from_vector(ca, xa), ta)?;
                let (yb, jb, hb) = b.transition_jet(&ChartPoint::from_vector(cb, xb), tb)?;
                let hess = ha
                    .iter()
                    .map(|h| block_diag(h, &DMatrix::zeros(b.dim, b.dim)))
                    .chain(hb.iter().map(|h| block_diag(&DMatrix::zeros(a.dim, a.dim), h)))
                    .collect();
                Ok((concat(&ya, &yb), block_diag(&ja, &jb), hess))
            }
            _ => Err(Error::NoTransition { from: p.chart, to }),
        }
    }

    /// Re-expresses a point in its preferred chart (the antipodal
    /// stereographic chart once `|x| > 1.5 r`).
    pub fn normalize(&self, p: &ChartPoint) -> ChartPoint {
        match &self.kind {
            ManifoldKind::RoundSphere { radius } if p.coords.norm() > SPHERE_CHART_SWITCH * radius => {
                let to = 1 - p.chart.min(1);
                match self.transition(p, to) {
                    Ok(coords) => ChartPoint::from_vector(to, coords),
                    Err(_) => p.clone(),
                }
            }
            ManifoldKind::Product(a, b) => {
                let (ca, cb) = self.split_chart(p.chart, a, b);
                let (xa, xb) = self.split_coords(&p.coords, a);
                let pa = a.normalize(&ChartPoint::from_vector(ca, xa));
                let pb = b.normalize(&ChartPoint::from_vector(cb, xb));
                ChartPoint::from_vector(pa.chart * b.chart_count() + pb.chart, concat(&pa.coords, &pb.coords))
            }
            _ => p.clone(),
        }
    }

    /// Coordinates of `p` in the chart of `reference`, shifted by whole
    /// periods to the representative nearest `reference`.
    pub fn express_near(&self, p: &ChartPoint, reference: &ChartPoint) -> Result<DVector<f64>> {
        let mut y = self.transition(p, reference.chart)?;
        if let Some(periods) = self.periods(reference.chart) {
            for (k, &period) in periods.iter().enumerate() {
                if period > 0.0 {
                    let shift = ((y[k] - reference.coords[k]) / period).round();
                    y[k] -= shift * period;
                }
            }
        }
        Ok(y)
    }
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

fn product_jet(a: &MetricJet, b: &MetricJet) -> MetricJet {
    let (ma, mb) = (a.dim(), b.dim());
    let m = ma + mb;
    let za = DMatrix::zeros(ma, ma);
    let zb = DMatrix::zeros(mb, mb);
    let first = (0..m)
        .map(|k| {
            if k < ma {
                block_diag(&a.first[k], &zb)
            } else {
                block_diag(&za, &b.first[k - ma])
            }
        })
        .collect();
    let second = (0..m * m)
        .map(|kl| {
            let (k, l) = (kl / m, kl % m);
            if k < ma && l < ma {
                block_diag(&a.second[k * ma + l], &zb)
            } else if k >= ma && l >= ma {
                block_diag(&za, &b.second[(k - ma) * mb + (l - ma)])
            } else {
                DMatrix::zeros(m, m)
            }
        })
        .collect();
    MetricJet {
        value: block_diag(&a.value, &b.value),
        first,
        second,
    }
}
