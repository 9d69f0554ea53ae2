//! Pointwise sign lemmas for `Q₀` and `Q₁` on synthetic algebraic data.
//!
//! Everything here lives in orthonormal frames: the differential is an
//! `n×m` matrix, the target metric is the identity and the target curvature
//! is an algebraic curvature tensor on `ℝⁿ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bochner::{q1_frame_value, q1_sum_form, FrameData, SumForm};
use crate::curvature::{random_vector, RiemannTensor, PLANE_DEGENERACY};
use crate::error::{Error, Result};
use crate::linalg;

/// Random planes used to estimate the largest sectional curvature.
pub const SEC_SAMPLE_PLANES: usize = 1000;
/// Alternating ascent steps started from the best sampled planes.
pub const SEC_ASCENT_STEPS: usize = 50;
/// Number of sampled planes that seed an ascent.
const ASCENT_STARTS: usize = 4;
/// Amount by which the shifted tensor stays below the bound.
pub const SEC_MARGIN: f64 = 1e-6;
/// Slack allowed when re-verifying a shifted tensor on fresh planes.
pub const SEC_VERIFY_TOL: f64 = 1e-9;
const KN_TERMS: usize = 3;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    linalg::symmetrize(&random_matrix(rng, n, n))
}

/// `G_ijkl = δ_ik δ_jl − δ_il δ_jk`; every plane has sectional value one.
pub fn unit_curvature(n: usize) -> RiemannTensor {
    RiemannTensor::constant_curvature(&DMatrix::identity(n, n), 1.0)
}

/// A random algebraic curvature tensor `Σ Sₛ ⊙ Tₛ` with Gaussian symmetric
/// factors.
pub fn random_curvature_tensor(n: usize, rng: &mut ChaCha8Rng) -> RiemannTensor {
    let mut r = RiemannTensor::zeros(n);
    for _ in 0..KN_TERMS {
        let s = random_symmetric(rng, n);
        let t = random_symmetric(rng, n);
        r.add_scaled(&RiemannTensor::kulkarni_nomizu(&s, &t), 0.5);
    }
    r
}

/// `M_bd = R(x, e_b, x, e_d)`.
fn directional(r: &RiemannTensor, x: &DVector<f64>) -> DMatrix<f64> {
    let n = r.dim();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        if x[a] == 0.0 {
            continue;
        }
        for c in 0..n {
            let xx = x[a] * x[c];
            if xx == 0.0 {
                continue;
            }
            for b in 0..n {
                for d in 0..n {
                    m[(b, d)] += r.get(a, b, c, d) * xx;
                }
            }
        }
    }
    m
}

/// Sectional value in the Euclidean metric; `None` for degenerate planes.
pub fn euclidean_sectional(r: &RiemannTensor, x: &DVector<f64>, y: &DVector<f64>) -> Option<f64> {
    BivectorForm::new(r).sectional(x.as_slice(), y.as_slice())
}

/// `R` as a quadratic form on bivectors, `R(x, y, x, y) = ωᵀ B ω` with
/// `ω_ab = x_a y_b − x_b y_a` for `a < b`.
#[derive(Debug, Clone)]
pub struct BivectorForm {
    n: usize,
    form: DMatrix<f64>,
}

impl BivectorForm {
    pub fn new(r: &RiemannTensor) -> Self {
        let n = r.dim();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let form = DMatrix::from_fn(pairs.len(), pairs.len(), |p, q| {
            let ((a, b), (c, d)) = (pairs[p], pairs[q]);
            r.get(a, b, c, d)
        });
        Self { n, form }
    }

    fn sectional_with(&self, x: &[f64], y: &[f64], w: &mut [f64]) -> Option<f64> {
        let n = self.n;
        let mut idx = 0;
        let mut area = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let v = x[a] * y[b] - x[b] * y[a];
                w[idx] = v;
                area += v * v;
                idx += 1;
            }
        }
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if !(area > PLANE_DEGENERACY * xx * yy) || area == 0.0 {
            return None;
        }
        let mut num = 0.0;
        for q in 0..idx {
            let col = self.form.column(q);
            let mut acc = 0.0;
            for p in 0..idx {
                acc += col[p] * w[p];
            }
            num += acc * w[q];
        }
        Some(num / area)
    }

    pub fn sectional(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let mut w = vec![0.0; self.n * (self.n - 1) / 2];
        self.sectional_with(x, y, &mut w)
    }

    /// Draws `count` Gaussian planes and calls `visit` on each
    /// non-degenerate one.
    fn sample(&self, count: usize, rng: &mut ChaCha8Rng, mut visit: impl FnMut(f64, &[f64], &[f64])) {
        let n = self.n;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut w = vec![0.0; n * (n - 1) / 2];
        for _ in 0..count {
            x.iter_mut().for_each(|v| *v = normal(rng));
            y.iter_mut().for_each(|v| *v = normal(rng));
            if let Some(s) = self.sectional_with(&x, &y, &mut w) {
                visit(s, &x, &y);
            }
        }
    }

    /// Largest sectional value over `count` random planes.
    pub fn sampled_max(&self, count: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut best = f64::NEG_INFINITY;
        self.sample(count, rng, |s, _, _| best = best.max(s));
        best
    }
}

#[cfg(test)]
fn random_planes(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<(DVector<f64>, DVector<f64>)> {
    (0..count)
        .map(|_| (random_vector(rng, n), random_vector(rng, n)))
        .collect()
}

/// Orthonormal pair spanning the same plane.
fn orthonormalize(x: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let xn = x.norm();
    if xn == 0.0 {
        return None;
    }
    let e1 = x / xn;
    let y = y - &e1 * e1.dot(y);
    let yn = y.norm();
    (yn > 1e-8 * xn.max(1.0)).then(|| (e1, y / yn))
}

/// Maximises `R(x, y, x, y)` over `y ⊥ x` for fixed unit `x`.
fn best_partner(r: &RiemannTensor, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = r.dim();
    let proj = DMatrix::identity(n, n) - x * x.transpose();
    let m = &proj * directional(r, x) * &proj;
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(&m));
    // eigenvalues ascend; the top one with an eigenvector orthogonal to x
    for idx in (0..n).rev() {
        let v = vecs.column(idx).into_owned();
        if v.dot(x).abs() < 1e-6 {
            return (vals[idx], v);
        }
    }
    (vals[n - 1], vecs.column(n - 1).into_owned())
}

/// Estimate of the largest sectional curvature: best of `planes` random
/// planes, refined by alternating ascent from the top samples.
pub fn max_sectional_estimate(r: &RiemannTensor, planes: usize, rng: &mut ChaCha8Rng) -> f64 {
    let form = BivectorForm::new(r);
    let mut scored: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::with_capacity(ASCENT_STARTS + 1);
    form.sample(planes, rng, |s, x, y| {
        if scored.len() < ASCENT_STARTS || s > scored[scored.len() - 1].0 {
            scored.push((s, DVector::from_column_slice(x), DVector::from_column_slice(y)));
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            scored.truncate(ASCENT_STARTS.max(1));
        }
    });
    let mut best = scored.first().map_or(f64::NEG_INFINITY, |s| s.0);
    for (_, x0, y0) in scored.into_iter().take(ASCENT_STARTS) {
        let Some((mut x, mut y)) = orthonormalize(&x0, &y0) else {
            continue;
        };
        let mut last = f64::NEG_INFINITY;
        for step in 0..SEC_ASCENT_STEPS {
            let (val, partner) = if step % 2 == 0 { best_partner(r, &x) } else { best_partner(r, &y) };
            if step % 2 == 0 {
                y = partner;
            } else {
                x = partner;
            }
            best = best.max(val);
            if val - last <= 1e-10 * val.abs().max(1.0) {
                break;
            }
            last = val;
        }
    }
    best
}

/// Curvature tensor with `sec ≤ k`, certified on fresh random planes.
#[derive(Debug, Clone)]
pub struct BoundedCurvature {
    pub tensor: RiemannTensor,
    pub bound: f64,
    /// Largest sectional value found on the verification sample.
    pub verified_max: f64,
    pub shift: f64,
}

/// Random algebraic curvature tensor shifted by a multiple of `G` so that
/// its largest sectional curvature sits just below `k`.
pub fn sample_curvature_with_bound(n: usize, k: f64, seed: u64) -> Result<BoundedCurvature> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_bounded_with(n, k, &mut rng)
}

fn sample_bounded_with(n: usize, k: f64, rng: &mut ChaCha8Rng) -> Result<BoundedCurvature> {
    if n < 2 {
        return Err(Error::Dimension(format!("curvature samples need n >= 2, got {n}")));
    }
    let g = unit_curvature(n);
    let mut tensor = random_curvature_tensor(n, rng);
    let est = max_sectional_estimate(&tensor, SEC_SAMPLE_PLANES, rng);
    let mut shift = est - k + SEC_MARGIN;
    tensor.add_scaled(&g, -shift);
    loop {
        let verified_max = BivectorForm::new(&tensor).sampled_max(SEC_SAMPLE_PLANES, rng);
        if verified_max <= k - SEC_MARGIN + SEC_VERIFY_TOL {
            return Ok(BoundedCurvature {
                tensor,
                bound: k,
                verified_max,
                shift,
            });
        }
        let extra = verified_max - k + SEC_MARGIN;
        tensor.add_scaled(&g, -extra);
        shift += extra;
    }
}

/// `Q₀ = ⟨A, φ*h⟩` evaluated two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q0Value {
    /// `Σᵢⱼ A_ij (dφᵀdφ)_ij`
    pub contraction: f64,
    /// `Σᵢ λᵢ |dφ vᵢ|²` over an eigenbasis of `A`.
    pub eigen: f64,
}

impl Q0Value {
    pub fn value(&self) -> f64 {
        self.contraction
    }

    pub fn defect(&self) -> f64 {
        let scale = self.contraction.abs().max(self.eigen.abs()).max(1.0);
        (self.contraction - self.eigen).abs() / scale
    }
}

pub fn q0_value(a: &DMatrix<f64>, dphi: &DMatrix<f64>) -> Q0Value {
    let p = dphi.transpose() * dphi;
    let contraction = a.component_mul(&p).sum();
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(a));
    let eigen = vals
        .iter()
        .enumerate()
        .map(|(i, l)| l * (dphi * vecs.column(i)).norm_squared())
        .sum();
    Q0Value { contraction, eigen }
}

/// `Q₁` by direct contraction and by the pair-sum form.
#[derive(Debug, Clone)]
pub struct Q1Value {
    pub direct: f64,
    pub frame: f64,
    pub sum: SumForm,
    pub data: FrameData,
}

impl Q1Value {
    pub fn value(&self) -> f64 {
        self.direct
    }

    /// Relative disagreement between the direct and pair-sum evaluations.
    pub fn defect(&self) -> f64 {
        let scale = self.direct.abs().max(self.sum.value.abs()).max(1.0);
        (self.direct - self.sum.value).abs() / scale
    }
}

pub fn q1_value(dphi: &DMatrix<f64>, r: &RiemannTensor, k: f64) -> Result<Q1Value> {
    let (n, m) = dphi.shape();
    if r.dim() != n {
        return Err(Error::Dimension(format!("curvature on R^{} but dphi has {n} rows", r.dim())));
    }
    let cols: Vec<DVector<f64>> = (0..m).map(|i| dphi.column(i).into_owned()).collect();
    let mut quartic = 0.0;
    let mut riem = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = cols[i].dot(&cols[j]);
            quartic += c * c;
            riem += r.eval(&cols[i], &cols[j], &cols[i], &cols[j]);
        }
    }
    let direct = (m as f64 - 1.0) * k * quartic - riem;
    let data = FrameData::from_images(DMatrix::identity(m, m), dphi.clone(), &DMatrix::identity(n, n), r)?;
    let frame = q1_frame_value(&data.gram, &data.kappa, k);
    let sum = q1_sum_form(&data.gram, &data.kappa, k);
    Ok(Q1Value { direct, frame, sum, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EqualityCase {
    RankGe2ConstCurvK,
    RankLe1,
    NotEquality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EqualitySub {
    ConformalAtPoint,
    ZeroDifferential,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualityResiduals {
    pub q1: f64,
    pub rank: usize,
    /// `max |sec(Π) − K|` over sampled planes inside the image.
    pub sec_defect: Option<f64>,
    /// `‖c − μ·Id‖` in the spectral norm.
    pub conformal_fit: Option<f64>,
    pub dphi_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualityVerdict {
    pub case: EqualityCase,
    pub sub: EqualitySub,
    pub mu_estimate: Option<f64>,
    pub residuals: EqualityResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualityTolerances {
    pub q1: f64,
    pub fit: f64,
    pub rank_rel: f64,
    pub image_planes: usize,
}

impl Default for EqualityTolerances {
    fn default() -> Self {
        Self {
            q1: 1e-9,
            fit: 1e-8,
            rank_rel: crate::map::RANK_REL_TOL,
            image_planes: 1000,
        }
    }
}

/// Sorts a point with `Q₁ ≈ 0` into the equality cases of the sign lemma.
pub fn classify_equality_case(
    dphi: &DMatrix<f64>,
    r: &RiemannTensor,
    k: f64,
    tol: EqualityTolerances,
    seed: u64,
) -> Result<EqualityVerdict> {
    let q1 = q1_value(dphi, r, k)?;
    let m = dphi.ncols();
    let rank = linalg::numerical_rank(dphi, tol.rank_rel);
    let mut residuals = EqualityResiduals {
        q1: q1.value(),
        rank,
        sec_defect: None,
        conformal_fit: None,
        dphi_norm: dphi.norm(),
    };
    let not_equality = |residuals| EqualityVerdict {
        case: EqualityCase::NotEquality,
        sub: EqualitySub::None,
        mu_estimate: None,
        residuals,
    };
    if q1.value().abs() > tol.q1 {
        return Ok(not_equality(residuals));
    }
    if rank >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let form = BivectorForm::new(r);
        let mut defect: f64 = 0.0;
        let mut done = 0;
        while done < tol.image_planes {
            let x = dphi * random_vector(&mut rng, m);
            let y = dphi * random_vector(&mut rng, m);
            if let Some(s) = form.sectional(x.as_slice(), y.as_slice()) {
                defect = defect.max((s - k).abs());
                done += 1;
            }
        }
        residuals.sec_defect = Some(defect);
        if defect > tol.fit {
            return Ok(not_equality(residuals));
        }
        if k > 0.0 {
            let c = &q1.data.gram;
            let mu = c.trace() / m as f64;
            let fit = linalg::sym_eigenvalues(&(c - DMatrix::identity(m, m) * mu))
                .into_iter()
                .fold(0.0, |a: f64, v| a.max(v.abs()));
            residuals.conformal_fit = Some(fit);
            if fit > tol.fit {
                return Ok(not_equality(residuals));
            }
            return Ok(EqualityVerdict {
                case: EqualityCase::RankGe2ConstCurvK,
                sub: EqualitySub::ConformalAtPoint,
                mu_estimate: Some(mu),
                residuals,
            });
        }
        return Ok(EqualityVerdict {
            case: EqualityCase::RankGe2ConstCurvK,
            sub: EqualitySub::None,
            mu_estimate: None,
            residuals,
        });
    }
    if k > 0.0 {
        if residuals.dphi_norm > tol.fit {
            return Ok(not_equality(residuals));
        }
        return Ok(EqualityVerdict {
            case: EqualityCase::RankLe1,
            sub: EqualitySub::ZeroDifferential,
            mu_estimate: None,
            residuals,
        });
    }
    Ok(EqualityVerdict {
        case: EqualityCase::RankLe1,
        sub: EqualitySub::None,
        mu_estimate: None,
        residuals,
    })
}

/// One synthetic input for the lemma checks.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaSample {
    pub m: usize,
    pub n: usize,
    pub k: f64,
    pub seed: u64,
    pub stream: u64,
    /// `n×m` differential in orthonormal frames, column-major.
    pub dphi: Vec<f64>,
    /// Symmetric PSD stand-in for `Ric_g − (m−1)K φ*h`, column-major.
    pub a: Vec<f64>,
    /// Curvature components `R_ijkl`, row-major in `(i, j, k, l)`.
    pub curvature: Vec<f64>,
    pub sec_bounded: bool,
}

impl LemmaSample {
    pub fn dphi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.m, &self.dphi)
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.m, &self.a)
    }

    pub fn curvature_tensor(&self) -> RiemannTensor {
        let mut r = RiemannTensor::zeros(self.n);
        let n = self.n;
        for (idx, v) in self.curvature.iter().enumerate() {
            r.set(idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n, *v);
        }
        r
    }
}

/// Sample RNG for `(seed, stream)`; each campaign sample gets its own stream.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rank-`r` truncation of `d` by SVD.
pub fn truncate_rank(d: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let svd = d.clone().svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return d.clone();
    };
    let mut s = svd.singular_values.clone();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    for &i in order.iter().skip(r) {
        s[i] = 0.0;
    }
    u * DMatrix::from_diagonal(&s) * vt
}

/// `√μ` times an `n×m` matrix with orthonormal columns (`n ≥ m`).
pub fn conformal_differential(n: usize, m: usize, mu: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if n < m {
        return Err(Error::Dimension(format!("conformal differential needs n >= m, got n={n}, m={m}")));
    }
    let q = random_matrix(rng, n, m).qr().q();
    Ok(q.columns(0, m).into_owned() * mu.sqrt())
}

/// Random sample: Gaussian `dφ`, PSD `A = BBᵀ`, curvature with `sec ≤ K`.
pub fn random_sample(m: usize, n: usize, k: f64, seed: u64, stream: u64) -> Result<LemmaSample> {
    let mut rng = sample_rng(seed, stream);
    let dphi = random_matrix(&mut rng, n, m);
    let b = random_matrix(&mut rng, m, m);
    let a = &b * b.transpose();
    let bounded = sample_bounded_with(n, k, &mut rng)?;
    Ok(LemmaSample {
        m,
        n,
        k,
        seed,
        stream,
        dphi: dphi.as_slice().to_vec(),
        a: a.as_slice().to_vec(),
        curvature: bounded.tensor.as_slice().to_vec(),
        sec_bounded: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub m: usize,
    pub n: usize,
    pub ks: Vec<f64>,
    /// Samples per value of `K`.
    pub samples: usize,
    pub seed: u64,
}

/// Outcome of one property over a campaign.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignCheck {
    pub name: String,
    pub tolerance: f64,
    pub evaluated: usize,
    pub violations: usize,
    /// Smallest margin `value − lower bound` seen (or largest defect for
    /// agreement checks, reported negated).
    pub worst_margin: f64,
    pub witness: Option<LemmaSample>,
}

impl CampaignCheck {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            evaluated: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            witness: None,
        }
    }

    /// Records `margin ≥ −tolerance`.
    fn record(&mut self, margin: f64, sample: &LemmaSample) {
        self.evaluated += 1;
        let bad = !(margin >= -self.tolerance);
        if bad {
            self.violations += 1;
        }
        if margin < self.worst_margin || (bad && self.witness.is_none()) {
            self.worst_margin = self.worst_margin.min(margin);
            if bad || self.witness.is_none() {
                self.witness = Some(sample.clone());
            }
        }
    }

    fn merge(&mut self, other: CampaignCheck) {
        self.evaluated += other.evaluated;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin {
            self.worst_margin = other.worst_margin;
            if self.violations == other.violations || other.violations > 0 {
                self.witness = other.witness.or(self.witness.take());
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub checks: Vec<CampaignCheck>,
}

impl CampaignReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn pass(&self) -> bool {
        self.violations() == 0
    }

    pub fn check(&self, name: &str) -> Option<&CampaignCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const Q0_TOL: f64 = 1e-12;
pub const Q1_TOL: f64 = 1e-10;

fn check_set() -> Vec<CampaignCheck> {
    vec![
        CampaignCheck::new("q0_nonnegative", Q0_TOL),
        CampaignCheck::new("q0_forms_agree", Q0_TOL),
        CampaignCheck::new("q1_nonnegative", Q1_TOL),
        CampaignCheck::new("q1_summands_nonnegative", Q1_TOL),
        CampaignCheck::new("q1_forms_agree", Q1_TOL),
        CampaignCheck::new("chain_nonpositive_kappa", Q1_TOL),
        CampaignCheck::new("chain_positive_kappa", Q1_TOL),
        CampaignCheck::new("rank_one_strict", Q1_TOL),
        CampaignCheck::new("equality_forcing", 1e-8),
        CampaignCheck::new("rank_dichotomy", 0.0),
    ]
}

fn evaluate_sample(m: usize, n: usize, k: f64, seed: u64, stream: u64) -> Result<Vec<CampaignCheck>> {
    let mut checks = check_set();
    let sample = random_sample(m, n, k, seed, stream)?;
    let dphi = sample.dphi_matrix();
    let r = sample.curvature_tensor();

    let q0 = q0_value(&sample.a_matrix(), &dphi);
    checks[0].record(q0.value(), &sample);
    checks[1].record(-q0.defect(), &sample);

    let q1 = q1_value(&dphi, &r, k)?;
    let c = &q1.data.gram;
    let kappa = &q1.data.kappa;
    checks[2].record(q1.value(), &sample);
    for t in &q1.sum.terms {
        checks[3].record(t.value, &sample);
        let (cii, cjj, cij, kij) = (c[(t.i, t.i)], c[(t.j, t.j)], c[(t.i, t.j)], kappa[(t.i, t.j)]);
        if kij <= 0.0 {
            checks[5].record(t.value + 2.0 * kij * (cii * cjj - cij * cij), &sample);
        } else {
            checks[6].record(t.value - 2.0 * (k - kij) * cii * cjj, &sample);
        }
    }
    checks[4].record(-q1.defect(), &sample);

    let mut rng = sample_rng(seed ^ 0x5EED_0001, stream);
    if k > 0.0 {
        let d1 = truncate_rank(&random_matrix(&mut rng, n, m), 1);
        let v = q1_value(&d1, &r, k)?;
        let c1 = &v.data.gram;
        let max_cii = (0..m).map(|i| c1[(i, i)] * c1[(i, i)]).fold(0.0, f64::max);
        checks[7].record(v.value() - k * max_cii, &sample);
    }

    if k > 0.0 && n >= m {
        let mu = 0.5 + 1.5 * rng.random::<f64>();
        let d = conformal_differential(n, m, mu, &mut rng)?;
        let model = RiemannTensor::constant_curvature(&DMatrix::identity(n, n), k);
        let v = q1_value(&d, &model, k)?;
        if v.value() <= 1e-12 && linalg::numerical_rank(&d, crate::map::RANK_REL_TOL) == m {
            let cg = &v.data.gram;
            let fit = cg.trace() / m as f64;
            let dev = (cg - DMatrix::identity(m, m) * fit).abs().max();
            checks[8].record(-dev, &sample);
        }
        for rank in 1..m {
            let d = truncate_rank(&conformal_differential(n, m, mu, &mut rng)?, rank);
            let v = q1_value(&d, &model, k)?;
            checks[9].record(if v.value() > 0.0 { v.value() } else { -1.0 }, &sample);
        }
    }
    Ok(checks)
}

/// Runs every lemma property on `samples` random draws for each `K`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport> {
    if config.m < 2 {
        return Err(Error::Invalid(format!("campaign needs m >= 2, got {}", config.m)));
    }
    if config.n < 2 {
        return Err(Error::Invalid(format!("campaign needs n >= 2, got {}", config.n)));
    }
    if config.ks.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::Invalid("campaign K values must be finite and non-negative".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..config.ks.len())
        .flat_map(|ki| (0..config.samples).map(move |s| (ki, s)))
        .collect();
    let results: Vec<Vec<CampaignCheck>> = jobs
        .par_iter()
        .map(|&(ki, s)| {
            let stream = (ki * config.samples + s) as u64;
            evaluate_sample(config.m, config.n, config.ks[ki], config.seed, stream)
        })
        .collect::<Result<_>>()?;
    let mut checks = check_set();
    for sample_checks in results {
        for (acc, c) in checks.iter_mut().zip(sample_checks) {
            acc.merge(c);
        }
    }
    Ok(CampaignReport {
        config: config.clone(),
        checks,
    })
}
