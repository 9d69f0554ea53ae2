//! Levi-Civita connection and curvature of a [`ManifoldModel`] at a point.
//!
//! Sign convention: `R(X,Y,X,Y) = κ (g(X,X)g(Y,Y) − g(X,Y)²)` on a space of
//! constant curvature `κ`, so round spheres have positive sectional values.
//! In components `R_ijkl = g_kp R^p_ijl` with
//! `R^l_ijk = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_ip Γ^p_jk − Γ^l_jp Γ^p_ik`,
//! and `Ric_jl = g^kp R_kjpl`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{ChartPoint, ManifoldModel, MetricJet};

/// Relative Gram-determinant cutoff below which a plane is degenerate.
pub const PLANE_DEGENERACY: f64 = 1e-12;

/// Christoffel symbols `Γᵏᵢⱼ`, stored with the upper index first.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    /// `Γᵏᵢⱼ uⁱ vʲ`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let m = self.dim;
        DVector::from_fn(m, |k, _| {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += self.get(k, i, j) * u[i] * v[j];
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.data.iter().copied())
    }
}

/// A (0,4) tensor with the Riemann index layout `R_ijkl`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.dim + j) * self.dim + k) * self.dim + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.idx(i, j, k, l);
        self.data[n] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Kulkarni–Nomizu product of two symmetric forms,
    /// `(a ⊙ b)_ijkl = a_ik b_jl + a_jl b_ik − a_il b_jk − a_jk b_il`.
    pub fn kulkarni_nomizu(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut r = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = a[(i, k)] * b[(j, l)] + a[(j, l)] * b[(i, k)]
                            - a[(i, l)] * b[(j, k)]
                            - a[(j, k)] * b[(i, l)];
                        r.set(i, j, k, l, v);
                    }
                }
            }
        }
        r
    }

    /// `κ (g_ik g_jl − g_il g_jk)`: every plane has sectional curvature `κ`.
    pub fn constant_curvature(g: &DMatrix<f64>, kappa: f64) -> Self {
        let mut r = Self::kulkarni_nomizu(g, g);
        r.data.iter_mut().for_each(|v| *v *= 0.5 * kappa);
        r
    }

    pub fn add_scaled(&mut self, other: &RiemannTensor, c: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// `R(x, y, z, w) = R_ijkl xⁱ yʲ zᵏ wˡ`.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let xyz = xy * z[k];
                    for l in 0..n {
                        s += self.get(i, j, k, l) * xyz * w[l];
                    }
                }
            }
        }
        s
    }

    /// Sectional curvature of span{x, y} with respect to the metric `g`.
    pub fn sectional(&self, g: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let gxx = (g * x).dot(x);
        let gyy = (g * y).dot(y);
        let gxy = (g * y).dot(x);
        let gram = gxx * gyy - gxy * gxy;
        let threshold = PLANE_DEGENERACY * gxx * gyy;
        if !(gram > threshold) || !(gram > 0.0) {
            return Err(Error::DegeneratePlane { gram, threshold });
        }
        Ok(self.eval(x, y, x, y) / gram)
    }

    /// Pullback along a linear map `d : ℝᵐ → ℝⁿ` (an n×m matrix).
    pub fn pull_back(&self, d: &DMatrix<f64>) -> RiemannTensor {
        let m = d.ncols();
        let cols: Vec<DVector<f64>> = (0..m).map(|i| d.column(i).into_owned()).collect();
        let mut out = RiemannTensor::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v = self.eval(&cols[i], &cols[j], &cols[k], &cols[l]);
                        out.set(i, j, k, l, v);
                    }
                }
            }
        }
        out
    }

    /// Largest violation of the curvature symmetries and the first Bianchi
    /// identity, relative to the largest component (absolute when zero).
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let scale = linalg::max_abs(self.data.iter().copied()).max(1.0);
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r + self.get(j, i, k, l)).abs())
                            .max((r + self.get(i, j, l, k)).abs())
                            .max((r - self.get(k, l, i, j)).abs())
                            .max((r + self.get(i, k, l, j) + self.get(i, l, j, k)).abs());
                    }
                }
            }
        }
        worst / scale
    }
}

/// Connection and curvature data at a point.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub point: ChartPoint,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub christoffel: Christoffel,
    pub riemann: RiemannTensor,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl CurvatureBundle {
    pub fn at(manifold: &ManifoldModel, p: &ChartPoint) -> Result<Self> {
        let jet = manifold.metric_jet(p)?;
        Self::from_jet(p.clone(), &jet)
    }

    pub fn from_jet(point: ChartPoint, jet: &MetricJet) -> Result<Self> {
        let m = jet.dim();
        let g = &jet.value;
        let g_inv = linalg::spd_inverse(g)?;
        let (christoffel, lowered) = christoffel_from_jet(jet, &g_inv);

        // ∂_p Γᵏᵢⱼ = ∂_p gᵏˡ Γ_lij + gᵏˡ ∂_p Γ_lij
        let mut d_gamma = vec![0.0; m * m * m * m]; // [p][k][i][j]
        for p in 0..m {
            let d_inv = -(&g_inv * &jet.first[p] * &g_inv);
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let mut s = 0.0;
                        for l in 0..m {
                            let d_low = 0.5
                                * (jet.second[p * m + i][(j, l)] + jet.second[p * m + j][(i, l)]
                                    - jet.second[p * m + l][(i, j)]);
                            s += d_inv[(k, l)] * lowered[(l * m + i) * m + j] + g_inv[(k, l)] * d_low;
                        }
                        d_gamma[((p * m + k) * m + i) * m + j] = s;
                    }
                }
            }
        }
        let dg = |p: usize, k: usize, i: usize, j: usize| d_gamma[((p * m + k) * m + i) * m + j];

        // R^l_ijk, stored [l][i][j][k]
        let mut up = vec![0.0; m * m * m * m];
        for l in 0..m {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let mut v = dg(i, l, j, k) - dg(j, l, i, k);
                        for p in 0..m {
                            v += christoffel.get(l, i, p) * christoffel.get(p, j, k)
                                - christoffel.get(l, j, p) * christoffel.get(p, i, k);
                        }
                        up[((l * m + i) * m + j) * m + k] = v;
                    }
                }
            }
        }
        let mut riemann = RiemannTensor::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v: f64 = (0..m).map(|p| g[(k, p)] * up[((p * m + i) * m + j) * m + l]).sum();
                        riemann.set(i, j, k, l, v);
                    }
                }
            }
        }
        let ricci = ricci_trace(&riemann, &g_inv);
        let scalar = (&g_inv * &ricci).trace();
        Ok(Self {
            point,
            metric: g.clone(),
            metric_inv: g_inv,
            christoffel,
            riemann,
            ricci,
            scalar,
        })
    }

    pub fn sectional(&self, plane: &PlaneSpec) -> Result<f64> {
        self.riemann.sectional(&self.metric, &plane.x, &plane.y)
    }
}

/// `Ric_jl = g^kp R_kjpl`.
pub fn ricci_trace(riemann: &RiemannTensor, g_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let m = riemann.dim();
    DMatrix::from_fn(m, m, |j, l| {
        let mut s = 0.0;
        for k in 0..m {
            for p in 0..m {
                s += g_inv[(k, p)] * riemann.get(k, j, p, l);
            }
        }
        s
    })
}

/// Christoffel symbols plus the lowered symbols `Γ_lij` stored `[l][i][j]`.
fn christoffel_from_jet(jet: &MetricJet, g_inv: &DMatrix<f64>) -> (Christoffel, Vec<f64>) {
    let m = jet.dim();
    let mut lowered = vec![0.0; m * m * m];
    for l in 0..m {
        for i in 0..m {
            for j in 0..m {
                lowered[(l * m + i) * m + j] =
                    0.5 * (jet.first[i][(j, l)] + jet.first[j][(i, l)] - jet.first[l][(i, j)]);
            }
        }
    }
    let mut gamma = Christoffel::zeros(m);
    for k in 0..m {
        for i in 0..m {
            for j in i..m {
                let v: f64 = (0..m).map(|l| g_inv[(k, l)] * lowered[(l * m + i) * m + j]).sum();
                gamma.set(k, i, j, v);
                gamma.set(k, j, i, v);
            }
        }
    }
    (gamma, lowered)
}

/// Christoffel symbols of the Levi-Civita connection at a point.
pub fn christoffel(manifold: &ManifoldModel, p: &ChartPoint) -> Result<Christoffel> {
    let jet = manifold.metric_jet(p)?;
    let g_inv = linalg::spd_inverse(&jet.value)?;
    Ok(christoffel_from_jet(&jet, &g_inv).0)
}

pub fn riemann(manifold: &ManifoldModel, p: &ChartPoint) -> Result<RiemannTensor> {
    Ok(CurvatureBundle::at(manifold, p)?.riemann)
}

pub fn ricci(manifold: &ManifoldModel, p: &ChartPoint) -> Result<DMatrix<f64>> {
    Ok(CurvatureBundle::at(manifold, p)?.ricci)
}

/// A tangent 2-plane spanned by two coordinate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpec {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PlaneSpec {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        Self {
            x: DVector::from_column_slice(x),
            y: DVector::from_column_slice(y),
        }
    }
}

pub fn sectional(manifold: &ManifoldModel, p: &ChartPoint, plane: &PlaneSpec) -> Result<f64> {
    let dim = manifold.dim();
    if plane.x.len() != dim || plane.y.len() != dim {
        return Err(Error::Dimension(format!("plane vectors must have {dim} components")));
    }
    CurvatureBundle::at(manifold, p)?.sectional(plane)
}

/// Default slack for [`sec_upper_bound_check`].
pub const SEC_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SecBoundReport {
    pub bound: f64,
    pub tolerance: f64,
    /// Largest sampled sectional value; `None` when the manifold has no
    /// 2-planes (dimension one).
    pub max_sectional: Option<f64>,
    /// Index into the sample points where the maximum was attained.
    pub witness: Option<usize>,
    pub planes_checked: usize,
    pub pass: bool,
}

/// Samples random planes at each point and compares the largest sectional
/// value with `bound + tolerance`.
pub fn sec_upper_bound_check(
    manifold: &ManifoldModel,
    bound: f64,
    points: &[ChartPoint],
    planes_per_point: usize,
    seed: u64,
    tolerance: f64,
) -> Result<SecBoundReport> {
    if !bound.is_finite() {
        return Err(Error::Invalid("sectional bound must be finite".into()));
    }
    if planes_per_point == 0 {
        return Err(Error::Invalid("sampling budget must be positive".into()));
    }
    let dim = manifold.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_sec: Option<f64> = None;
    let mut witness = None;
    let mut checked = 0;
    for (idx, p) in points.iter().enumerate() {
        let bundle = CurvatureBundle::at(manifold, p)?;
        if dim < 2 {
            continue;
        }
        let mut done = 0;
        while done < planes_per_point {
            let x = random_vector(&mut rng, dim);
            let y = random_vector(&mut rng, dim);
            let Ok(k) = bundle.riemann.sectional(&bundle.metric, &x, &y) else {
                continue;
            };
            done += 1;
            if max_sec.is_none_or(|m| k > m) {
                max_sec = Some(k);
                witness = Some(idx);
            }
        }
        checked += done;
    }
    let pass = max_sec.is_none_or(|m| m <= bound + tolerance);
    Ok(SecBoundReport {
        bound,
        tolerance,
        max_sectional: max_sec,
        witness,
        planes_checked: checked,
        pass,
    })
}

pub(crate) fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Derivatives;

    fn random_points(m: &ManifoldModel, n: usize, radius: f64, seed: u64) -> Vec<ChartPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = random_vector(&mut rng, m.dim());
                ChartPoint::from_vector(0, v * (radius / (1.0 + m.dim() as f64).sqrt()))
            })
            .collect()
    }

    #[test]
    fn flat_torus_has_no_curvature() {
        let t = ManifoldModel::flat_torus(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 2.0])).unwrap();
        let b = CurvatureBundle::at(&t, &ChartPoint::new(0, &[0.2, 0.9])).unwrap();
        assert_eq!(b.christoffel.max_abs(), 0.0);
        assert_eq!(linalg::max_abs(b.riemann.as_slice().iter().copied()), 0.0);
        assert_eq!(b.ricci.amax(), 0.0);
    }

    #[test]
    fn sphere_center_christoffel_vanishes() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let g = christoffel(&s, &ChartPoint::new(0, &[0.0, 0.0])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn sphere_christoffel_matches_koszul_oracle() {
        // independent route: finite-difference metric derivatives fed through
        // the Koszul contraction written out longhand
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let p = ChartPoint::new(0, &[1.0, 0.0]);
        let gamma = christoffel(&s, &p).unwrap();
        let metric = |x: f64, y: f64| 4.0 / (1.0 + x * x + y * y).powi(2);
        let h = 1e-5;
        let (x, y) = (1.0, 0.0);
        let dfx = (metric(x + h, y) - metric(x - h, y)) / (2.0 * h);
        let dfy = (metric(x, y + h) - metric(x, y - h)) / (2.0 * h);
        let f = metric(x, y);
        let df = [dfx, dfy];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let oracle = 0.5 / f * (df[i] * d(j, k) + df[j] * d(i, k) - df[k] * d(i, j));
                    assert!((gamma.get(k, i, j) - oracle).abs() < 1e-8, "{k}{i}{j}");
                }
            }
        }
    }

    #[test]
    fn sphere_riemann_has_constant_curvature_form() {
        let r = 1.4;
        let s = ManifoldModel::round_sphere(3, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in random_points(&s, 10, 1.2, 11) {
            let b = CurvatureBundle::at(&s, &p).unwrap();
            let x = random_vector(&mut rng, 3);
            let y = random_vector(&mut rng, 3);
            let gxx = (&b.metric * &x).dot(&x);
            let gyy = (&b.metric * &y).dot(&y);
            let gxy = (&b.metric * &y).dot(&x);
            let expected = (gxx * gyy - gxy * gxy) / (r * r);
            let got = b.riemann.eval(&x, &y, &x, &y);
            assert!((got - expected).abs() < 1e-8 * expected.abs().max(1.0));
            assert!(b.riemann.symmetry_defect() < 1e-9);
        }
    }

    #[test]
    fn ricci_of_sphere_and_disk() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let d = ManifoldModel::hyperbolic_disk(2, 1.0).unwrap();
        for p in random_points(&s, 5, 0.8, 5) {
            let bs = CurvatureBundle::at(&s, &p).unwrap();
            assert!((&bs.ricci - &bs.metric).amax() < 1e-8 * bs.metric.amax());
            let bd = CurvatureBundle::at(&d, &p).unwrap();
            assert!((&bd.ricci + &bd.metric).amax() < 1e-8 * bd.metric.amax());
        }
    }

    #[test]
    fn sectional_examples() {
        let s = ManifoldModel::round_sphere(3, 2.0).unwrap();
        let p = ChartPoint::new(0, &[0.3, -0.5, 0.7]);
        let plane = PlaneSpec::new(&[1.0, 0.2, 0.0], &[0.1, 1.0, -0.4]);
        let k = sectional(&s, &p, &plane).unwrap();
        assert!((k - 0.25).abs() < 1e-8);
        let respanned = PlaneSpec {
            x: &plane.x + &plane.y,
            y: plane.y.clone(),
        };
        let k2 = sectional(&s, &p, &respanned).unwrap();
        assert!((k - k2).abs() < 1e-10);
        let degenerate = PlaneSpec::new(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert!(matches!(sectional(&s, &p, &degenerate), Err(Error::DegeneratePlane { .. })));
    }

    #[test]
    fn product_mixed_components_vanish() {
        let prod = ManifoldModel::product(
            ManifoldModel::standard_torus(1),
            ManifoldModel::round_sphere(2, 1.0).unwrap(),
        );
        let b = CurvatureBundle::at(&prod, &ChartPoint::new(0, &[0.4, 0.3, -0.6])).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let in_torus = [i, j, k, l].iter().filter(|&&x| x == 0).count();
                        if in_torus > 0 {
                            assert!(b.riemann.get(i, j, k, l).abs() < 1e-9);
                        }
                    }
                }
            }
        }
        let plane = PlaneSpec::new(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        assert!((b.sectional(&plane).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sec_bound_examples() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let pts = random_points(&s, 4, 1.0, 1);
        let rep = sec_upper_bound_check(&s, 1.0, &pts, 8, 0, SEC_BOUND_TOL).unwrap();
        assert!(rep.pass);
        assert!((rep.max_sectional.unwrap() - 1.0).abs() < 1e-8);
        let rep = sec_upper_bound_check(&s, 0.5, &pts, 8, 0, SEC_BOUND_TOL).unwrap();
        assert!(!rep.pass);
        let t = ManifoldModel::standard_torus(3);
        let rep = sec_upper_bound_check(&t, 0.0, &[ChartPoint::new(0, &[0.1, 0.2, 0.3])], 20, 0, 0.0).unwrap();
        assert!(rep.pass && rep.max_sectional == Some(0.0));
    }

    #[test]
    fn scaling_leaves_christoffel_and_divides_sectional() {
        let s = ManifoldModel::round_sphere(3, 1.0).unwrap();
        let c = 3.7;
        let sc = s.scaled(c);
        let p = ChartPoint::new(0, &[0.2, 0.4, -0.1]);
        let a = CurvatureBundle::at(&s, &p).unwrap();
        let b = CurvatureBundle::at(&sc, &p).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let (x, y) = (a.christoffel.get(k, i, j), b.christoffel.get(k, i, j));
                    assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300) + 1e-15);
                }
            }
        }
        let plane = PlaneSpec::new(&[1.0, 0.0, 0.3], &[0.0, 1.0, 0.0]);
        let ka = a.sectional(&plane).unwrap();
        let kb = b.sectional(&plane).unwrap();
        assert!((kb - ka / c).abs() < 1e-10 * ka.abs());
    }

    #[test]
    fn fd_curvature_close_to_analytic() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let fd = s.with_derivatives(Derivatives::FiniteDifference { first: 1e-5, second: 1e-4 });
        let p = ChartPoint::new(0, &[0.3, 0.2]);
        let a = CurvatureBundle::at(&s, &p).unwrap();
        let b = CurvatureBundle::at(&fd, &p).unwrap();
        assert!((&a.ricci - &b.ricci).amax() < 1e-5);
    }
}
