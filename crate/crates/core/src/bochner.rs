//! Terms of the Bochner identity for harmonic maps,
//! `½Δ|dφ|² = |∇dφ|² + Q(dφ)`, and the split `Q = Q₀ + Q₁` for a bound `K`:
//!
//! * `Q  = gⁱᵏgʲˡ h_ab R_ij φᵃₖφᵇₗ − gⁱᵏgʲˡ Rᴺ_abcd φᵃᵢφᵇⱼφᶜₖφᵈₗ`
//! * `Q₀ = gⁱᵏgʲˡ h_ab R_ij φᵃₖφᵇₗ − (m−1)K gⁱᵏgʲˡ h_ad h_bc φᵃᵢφᵇⱼφᶜₖφᵈₗ`
//! * `Q₁ = (m−1)K gⁱᵏgʲˡ h_ad h_bc φᵃᵢφᵇⱼφᶜₖφᵈₗ − gⁱᵏgʲˡ Rᴺ_abcd φᵃᵢφᵇⱼφᶜₖφᵈₗ`
//!
//! In a g-orthonormal frame with `Yᵢ = dφ(eᵢ)`, `c_ij = h(Yᵢ, Yⱼ)` and
//! `κ_ij` the sectional curvature of a plane containing `Yᵢ, Yⱼ`, `Q₁` has a
//! frame form and a sum-over-pairs form; both are exposed here.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::{RiemannTensor, PLANE_DEGENERACY};
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::ChartPoint;
use crate::map::{MapModel, MapPointData};

/// Default harmonicity tolerance, `sup |τ(φ)|_h`.
pub const HARMONIC_TOL: f64 = 1e-6;

/// The three contractions entering `Q`, `Q₀` and `Q₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTerms {
    /// `gⁱᵏgʲˡ R_ij (φ*h)_kl`
    pub ricci: f64,
    /// `gⁱᵏgʲˡ Rᴺ(φᵢ, φⱼ, φₖ, φₗ)`
    pub riemann: f64,
    /// `gⁱᵏgʲˡ (φ*h)_il (φ*h)_jk`
    pub quartic: f64,
    pub dim: usize,
}

impl QTerms {
    pub fn from_data(data: &MapPointData) -> Self {
        let g_inv = &data.source.metric_inv;
        let p = data.pullback();
        let m = g_inv.nrows();
        let pulled = data.target.riemann.pull_back(data.differential());
        let mut riemann = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        riemann += g_inv[(i, k)] * g_inv[(j, l)] * pulled.get(i, j, k, l);
                    }
                }
            }
        }
        let ricci = (g_inv * &data.source.ricci * g_inv).component_mul(&p).sum();
        let gp = g_inv * &p;
        let quartic = (&gp * &gp).trace();
        Self {
            ricci,
            riemann,
            quartic,
            dim: m,
        }
    }

    pub fn q(&self) -> f64 {
        self.ricci - self.riemann
    }

    pub fn q0(&self, k: f64) -> f64 {
        self.ricci - (self.dim as f64 - 1.0) * k * self.quartic
    }

    pub fn q1(&self, k: f64) -> f64 {
        (self.dim as f64 - 1.0) * k * self.quartic - self.riemann
    }
}

/// `Q(dφ)` at a point.
pub fn q_term(map: &MapModel, p: &ChartPoint) -> Result<f64> {
    Ok(QTerms::from_data(&MapPointData::at(map, p)?).q())
}

/// `(Q₀, Q₁)` for the bound `K`.
pub fn q_split(map: &MapModel, p: &ChartPoint, k: f64) -> Result<(f64, f64)> {
    let t = QTerms::from_data(&MapPointData::at(map, p)?);
    Ok((t.q0(k), t.q1(k)))
}

/// How the plane `Π_ij` containing `Yᵢ, Yⱼ` was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlaneRule {
    /// `Yᵢ, Yⱼ` independent; the plane is their span.
    Spanned,
    /// Dependent pair completed with target frame vector `basis`.
    Completed { basis: usize },
    /// Target of dimension one: no 2-planes exist.
    NoPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlaneChoice {
    pub i: usize,
    pub j: usize,
    pub rule: PlaneRule,
}

/// Frame data behind the frame form of `Q₁`.
#[derive(Debug, Clone)]
pub struct FrameData {
    /// g-orthonormal source frame, one vector per column.
    pub frame: DMatrix<f64>,
    /// `Yᵢ = dφ(eᵢ)` as columns.
    pub images: DMatrix<f64>,
    /// `c_ij = h(Yᵢ, Yⱼ)`.
    pub gram: DMatrix<f64>,
    /// `κ_ij`; zero where no plane exists.
    pub kappa: DMatrix<f64>,
    pub planes: Vec<PlaneChoice>,
}

impl FrameData {
    /// Builds `c` and `κ` from frame images, the target metric and the
    /// target curvature tensor (all in the same target coordinates).
    pub fn from_images(frame: DMatrix<f64>, images: DMatrix<f64>, h: &DMatrix<f64>, riemann: &RiemannTensor) -> Result<Self> {
        let (n, m) = images.shape();
        let gram = linalg::symmetrize(&(images.transpose() * h * &images));
        let target_frame = if n >= 2 { Some(linalg::orthonormal_frame(h)?) } else { None };
        let mut kappa = DMatrix::zeros(m, m);
        let mut planes = Vec::with_capacity(m * m);
        let cols: Vec<DVector<f64>> = (0..m).map(|i| images.column(i).into_owned()).collect();
        for i in 0..m {
            for j in i..m {
                let (value, rule) = match &target_frame {
                    None => (0.0, PlaneRule::NoPlane),
                    Some(f) => plane_curvature(&cols[i], &cols[j], h, riemann, f)?,
                };
                kappa[(i, j)] = value;
                kappa[(j, i)] = value;
                planes.push(PlaneChoice { i, j, rule });
            }
        }
        Ok(Self {
            frame,
            images,
            gram,
            kappa,
            planes,
        })
    }
}

fn plane_curvature(
    yi: &DVector<f64>,
    yj: &DVector<f64>,
    h: &DMatrix<f64>,
    riemann: &RiemannTensor,
    target_frame: &DMatrix<f64>,
) -> Result<(f64, PlaneRule)> {
    if let Ok(k) = riemann.sectional(h, yi, yj) {
        return Ok((k, PlaneRule::Spanned));
    }
    let norm = |v: &DVector<f64>| (h * v).dot(v);
    let u = if norm(yi) >= norm(yj) { yi } else { yj };
    let u = if norm(u) > 0.0 {
        u.clone()
    } else {
        target_frame.column(0).into_owned()
    };
    for b in 0..target_frame.ncols() {
        let f = target_frame.column(b).into_owned();
        if let Ok(k) = riemann.sectional(h, &u, &f) {
            return Ok((k, PlaneRule::Completed { basis: b }));
        }
    }
    Err(Error::DegeneratePlane {
        gram: 0.0,
        threshold: PLANE_DEGENERACY,
    })
}

/// `Q₁ = (m−1)K Σᵢⱼ c_ij² − Σᵢⱼ κ_ij (c_ii c_jj − c_ij²)`.
pub fn q1_frame_value(c: &DMatrix<f64>, kappa: &DMatrix<f64>, k: f64) -> f64 {
    let m = c.nrows();
    let mut quartic = 0.0;
    let mut curv = 0.0;
    for i in 0..m {
        for j in 0..m {
            quartic += c[(i, j)] * c[(i, j)];
            curv += kappa[(i, j)] * (c[(i, i)] * c[(j, j)] - c[(i, j)] * c[(i, j)]);
        }
    }
    (m as f64 - 1.0) * k * quartic - curv
}

/// Frame form of `Q₁` at a point, with the frame data used.
pub fn q1_frame_form(map: &MapModel, p: &ChartPoint, k: f64) -> Result<(f64, FrameData)> {
    let data = MapPointData::at(map, p)?;
    let frame = linalg::orthonormal_frame(&data.source.metric)?;
    q1_frame_form_with(&data, frame, k)
}

/// Frame form in a caller-chosen g-orthonormal frame.
pub fn q1_frame_form_with(data: &MapPointData, frame: DMatrix<f64>, k: f64) -> Result<(f64, FrameData)> {
    let images = data.differential() * &frame;
    let fd = FrameData::from_images(frame, images, &data.target.metric, &data.target.riemann)?;
    Ok((q1_frame_value(&fd.gram, &fd.kappa, k), fd))
}

/// One `(i, j)` summand of the pair-sum form:
/// `K(c_ii − c_jj)² + 2(K − κ_ij)c_ii c_jj + 2((m−1)K + κ_ij)c_ij²`.
#[inline]
pub fn q1_pair_term(cii: f64, cjj: f64, cij: f64, kij: f64, k: f64, m: usize) -> f64 {
    k * (cii - cjj).powi(2) + 2.0 * (k - kij) * cii * cjj + 2.0 * ((m as f64 - 1.0) * k + kij) * cij.powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumForm {
    pub value: f64,
    /// Summands for `i < j` in lexicographic order.
    pub terms: Vec<PairTerm>,
}

/// Pair-sum form of `Q₁` over `i < j`.
pub fn q1_sum_form(c: &DMatrix<f64>, kappa: &DMatrix<f64>, k: f64) -> SumForm {
    let m = c.nrows();
    let mut terms = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let value = q1_pair_term(c[(i, i)], c[(j, j)], c[(i, j)], kappa[(i, j)], k, m);
            terms.push(PairTerm { i, j, value });
        }
    }
    SumForm {
        value: terms.iter().map(|t| t.value).sum(),
        terms,
    }
}

/// A structured grid in one chart. Periodic grids wrap in every axis and
/// evaluate the Laplacian at every node; otherwise only interior nodes get
/// a value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub chart: usize,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: bool,
}

impl GridSpec {
    /// `n` nodes per axis over the unit periodic cell of a lattice chart.
    pub fn periodic_unit(dim: usize, n: usize) -> Self {
        Self {
            chart: 0,
            origin: vec![0.0; dim],
            spacing: vec![1.0 / n as f64; dim],
            counts: vec![n; dim],
            periodic: true,
        }
    }

    /// Box of `n` nodes per axis centred at `center` with the given spacing.
    pub fn centered(chart: usize, center: &[f64], spacing: f64, n: usize) -> Self {
        let half = (n as f64 - 1.0) / 2.0 * spacing;
        Self {
            chart,
            origin: center.iter().map(|c| c - half).collect(),
            spacing: vec![spacing; center.len()],
            counts: vec![n; center.len()],
            periodic: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.origin.len() != d || self.spacing.len() != d {
            return Err(Error::Dimension("grid origin/spacing/counts lengths differ".into()));
        }
        if self.counts.iter().any(|&c| c < 3) {
            return Err(Error::Resolution(format!("need at least 3 nodes per axis, got {:?}", self.counts)));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Resolution("grid spacing must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn point(&self, flat: usize) -> ChartPoint {
        let idx = self.multi_index(flat);
        let coords: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + i as f64 * self.spacing[k])
            .collect();
        ChartPoint::new(self.chart, &coords)
    }

    /// Flat indices of the nodes where the Laplacian is evaluated.
    pub fn output_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&f| {
                self.periodic
                    || self
                        .multi_index(f)
                        .iter()
                        .zip(&self.counts)
                        .all(|(&i, &c)| i > 0 && i + 1 < c)
            })
            .collect()
    }

    /// Neighbour of `flat` displaced by `offset` along each axis.
    pub(crate) fn neighbour(&self, flat: usize, offset: &[(usize, isize)]) -> usize {
        let mut idx = self.multi_index(flat);
        for &(k, s) in offset {
            let c = self.counts[k] as isize;
            let v = idx[k] as isize + s;
            idx[k] = if self.periodic { v.rem_euclid(c) as usize } else { v as usize };
        }
        self.flat_index(&idx)
    }
}

/// A scalar field sampled at grid nodes.
#[derive(Debug, Clone)]
pub struct GridField {
    pub points: Vec<ChartPoint>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn sup_abs(&self) -> f64 {
        linalg::max_abs(self.values.iter().copied())
    }
}

/// Laplace–Beltrami of `f` at node `flat`, `gⁱʲ∂ᵢ∂ⱼf − gⁱʲΓᵏᵢⱼ∂ₖf`, by
/// second-order central differences.
fn laplace_beltrami(grid: &GridSpec, field: &[f64], flat: usize, g_inv: &DMatrix<f64>, gamma: &crate::curvature::Christoffel) -> f64 {
    let m = grid.dim();
    let f0 = field[flat];
    let at = |offset: &[(usize, isize)]| field[grid.neighbour(flat, offset)];
    let mut grad = vec![0.0; m];
    for k in 0..m {
        grad[k] = (at(&[(k, 1)]) - at(&[(k, -1)])) / (2.0 * grid.spacing[k]);
    }
    let mut lap = 0.0;
    for i in 0..m {
        for j in 0..m {
            if g_inv[(i, j)] == 0.0 {
                continue;
            }
            let d2 = if i == j {
                (at(&[(i, 1)]) - 2.0 * f0 + at(&[(i, -1)])) / (grid.spacing[i] * grid.spacing[i])
            } else {
                (at(&[(i, 1), (j, 1)]) - at(&[(i, 1), (j, -1)]) - at(&[(i, -1), (j, 1)]) + at(&[(i, -1), (j, -1)]))
                    / (4.0 * grid.spacing[i] * grid.spacing[j])
            };
            let mut conn = 0.0;
            for k in 0..m {
                conn += gamma.get(k, i, j) * grad[k];
            }
            lap += g_inv[(i, j)] * (d2 - conn);
        }
    }
    lap
}

fn grid_data(map: &MapModel, grid: &GridSpec) -> Result<Vec<MapPointData>> {
    grid.validate()?;
    if grid.dim() != map.source().dim() {
        return Err(Error::Dimension("grid dimension differs from source dimension".into()));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|f| MapPointData::at(map, &grid.point(f)))
        .collect()
}

/// Laplacian of `|dφ|²` from pointwise data on every grid node.
fn laplacian_from_data(grid: &GridSpec, data: &[MapPointData]) -> Vec<(usize, f64)> {
    let energy: Vec<f64> = data.iter().map(|d| d.energy_density()).collect();
    grid.output_nodes()
        .into_iter()
        .map(|f| {
            let src = &data[f].source;
            (f, laplace_beltrami(grid, &energy, f, &src.metric_inv, &src.christoffel))
        })
        .collect()
}

/// `Δ|dφ|²` on the output nodes of a grid. The energy density is evaluated
/// on every node first, then differentiated.
pub fn laplacian_energy_density(map: &MapModel, grid: &GridSpec) -> Result<GridField> {
    let data = grid_data(map, grid)?;
    let (nodes, values): (Vec<usize>, Vec<f64>) = laplacian_from_data(grid, &data).into_iter().unzip();
    Ok(GridField {
        points: nodes.iter().map(|&f| grid.point(f)).collect(),
        values,
    })
}

/// Per-point terms of the Bochner identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BochnerReport {
    pub point: Vec<f64>,
    pub chart: usize,
    pub energy_density: f64,
    pub sff_norm_sq: f64,
    pub tension_norm: f64,
    pub q: f64,
    pub q0: f64,
    pub q1: f64,
    pub laplacian_energy: f64,
    /// `½Δ|dφ|² − |∇dφ|² − Q`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BochnerOptions {
    /// Bound used for the `Q₀/Q₁` split.
    pub k: f64,
    pub harmonic_tol: f64,
}

impl Default for BochnerOptions {
    fn default() -> Self {
        Self {
            k: 0.0,
            harmonic_tol: HARMONIC_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BochnerField {
    pub reports: Vec<BochnerReport>,
    pub sup_residual: f64,
    pub sup_tension: f64,
    /// Largest `|Q − (Q₀ + Q₁)|` relative to `max(|Q|, |Q₀|, |Q₁|)`.
    pub split_defect: f64,
}

/// Pointwise data for every output node, without the harmonicity check.
pub fn bochner_terms(map: &MapModel, grid: &GridSpec, k: f64) -> Result<BochnerField> {
    let data = grid_data(map, grid)?;
    Ok(bochner_from_data(grid, &data, k))
}

/// Bochner terms from pointwise data given on every node of `grid`, in
/// grid order.
pub fn bochner_from_data(grid: &GridSpec, data: &[MapPointData], k: f64) -> BochnerField {
    let reports: Vec<BochnerReport> = laplacian_from_data(grid, data)
        .into_par_iter()
        .map(|(f, lap_e)| {
            let d = &data[f];
            let sff = d.second_fundamental_form();
            let tau = crate::map::tension_from(&sff, &d.source.metric_inv);
            let tension_norm = (&d.target.metric * &tau).dot(&tau).max(0.0).sqrt();
            let terms = QTerms::from_data(d);
            let q = terms.q();
            BochnerReport {
                point: d.point.coords.iter().copied().collect(),
                chart: d.point.chart,
                energy_density: d.energy_density(),
                sff_norm_sq: sff.norm_sq,
                tension_norm,
                q,
                q0: terms.q0(k),
                q1: terms.q1(k),
                laplacian_energy: lap_e,
                residual: 0.5 * lap_e - sff.norm_sq - q,
            }
        })
        .collect();
    let sup_residual = linalg::max_abs(reports.iter().map(|r| r.residual));
    let sup_tension = linalg::max_abs(reports.iter().map(|r| r.tension_norm));
    let split_defect = reports
        .iter()
        .map(|r| {
            let scale = r.q.abs().max(r.q0.abs()).max(r.q1.abs());
            if scale == 0.0 {
                0.0
            } else {
                (r.q - (r.q0 + r.q1)).abs() / scale
            }
        })
        .fold(0.0, f64::max);
    BochnerField {
        reports,
        sup_residual,
        sup_tension,
        split_defect,
    }
}

impl BochnerField {
    /// Rejects the field when the map is not harmonic to `tol`.
    pub fn require_harmonic(self, tol: f64) -> Result<Self> {
        if self.sup_tension > tol {
            return Err(Error::NotHarmonic {
                sup_tau: self.sup_tension,
                tolerance: tol,
            });
        }
        Ok(self)
    }
}

/// Residual field of the Bochner identity. The identity only holds for
/// harmonic maps, so a grid with `sup |τ|_h` above the tolerance is
/// rejected with [`Error::NotHarmonic`].
pub fn bochner_residual(map: &MapModel, grid: &GridSpec, options: BochnerOptions) -> Result<BochnerField> {
    bochner_terms(map, grid, options.k)?.require_harmonic(options.harmonic_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldModel;

    fn torus(n: usize) -> ManifoldModel {
        ManifoldModel::standard_torus(n)
    }

    #[test]
    fn constant_map_q_terms_vanish() {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let map = MapModel::constant(s.clone(), s, ChartPoint::new(0, &[0.1, 0.2])).unwrap();
        let p = ChartPoint::new(0, &[0.5, -0.3]);
        assert_eq!(q_term(&map, &p).unwrap(), 0.0);
        assert_eq!(q_split(&map, &p, 3.0).unwrap(), (0.0, 0.0));
        let (v, fd) = q1_frame_form(&map, &p, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(fd.gram, DMatrix::zeros(2, 2));
    }

    #[test]
    fn flat_linear_split_is_add_subtract() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let map = MapModel::linear_torus(torus(2), torus(3), a.clone(), DVector::zeros(3)).unwrap();
        let p = ChartPoint::new(0, &[0.2, 0.3]);
        assert_eq!(q_term(&map, &p).unwrap(), 0.0);
        let (q0, q1) = q_split(&map, &p, 1.0).unwrap();
        let c = a.transpose() * &a;
        let sum_sq: f64 = c.iter().map(|v| v * v).sum();
        assert!((q0 + sum_sq).abs() < 1e-12 && (q1 - sum_sq).abs() < 1e-12);
    }

    #[test]
    fn equality_model_q_vanishes() {
        let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
        let map = MapModel::identity(unit.scaled(3.0), unit).unwrap();
        let p = ChartPoint::new(0, &[0.6, -0.2]);
        assert!(q_term(&map, &p).unwrap().abs() < 1e-8);
        let (q0, q1) = q_split(&map, &p, 1.0).unwrap();
        assert!(q0.abs() < 1e-8 && q1.abs() < 1e-8);
        let (v, _) = q1_frame_form(&map, &p, 1.0).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn sum_form_zero_on_conformal_constant_curvature() {
        let c = DMatrix::from_diagonal_element(4, 4, 0.7);
        let kappa = DMatrix::from_element(4, 4, 1.3);
        assert_eq!(q1_sum_form(&c, &kappa, 1.3).value, 0.0);
    }

    #[test]
    fn sum_form_with_nonpositive_kappa_and_zero_k() {
        let y = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.4, 0.0, 1.1, 0.3, 0.5, 0.0, 0.9]);
        let c = y.transpose() * &y;
        let kappa = DMatrix::from_row_slice(3, 3, &[0.0, -0.5, -1.0, -0.5, 0.0, -0.2, -1.0, -0.2, 0.0]);
        let sf = q1_sum_form(&c, &kappa, 0.0);
        let mut expected = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                expected -= 2.0 * kappa[(i, j)] * (c[(i, i)] * c[(j, j)] - c[(i, j)].powi(2));
            }
        }
        assert!((sf.value - expected).abs() < 1e-12);
        assert!(sf.value >= 0.0);
    }

    #[test]
    fn dependent_pair_completion_is_recorded() {
        let sphere = ManifoldModel::round_sphere(3, 1.0).unwrap();
        // rank one differential: both source directions map onto one vector
        let map = MapModel::custom(
            torus(2),
            sphere,
            "fold",
            std::sync::Arc::new(|p| Ok(ChartPoint::new(0, &[0.2 * (p.coords[0] + p.coords[1]), 0.0, 0.0]))),
            None,
        );
        let (v, fd) = q1_frame_form(&map, &ChartPoint::new(0, &[0.1, 0.1]), 1.0).unwrap();
        assert!(fd.planes.iter().all(|pc| matches!(pc.rule, PlaneRule::Completed { .. })));
        let (_, q1) = q_split(&map, &ChartPoint::new(0, &[0.1, 0.1]), 1.0).unwrap();
        assert!((v - q1).abs() < 1e-10 * q1.abs());
    }

    #[test]
    fn grid_too_coarse() {
        let map = MapModel::linear_torus(torus(2), torus(2), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let g = GridSpec::periodic_unit(2, 2);
        assert!(matches!(laplacian_energy_density(&map, &g), Err(Error::Resolution(_))));
    }

    #[test]
    fn linear_torus_laplacian_and_residual_vanish() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        let map = MapModel::linear_torus(torus(2), torus(2), a, DVector::zeros(2)).unwrap();
        let g = GridSpec::periodic_unit(2, 8);
        assert_eq!(laplacian_energy_density(&map, &g).unwrap().sup_abs(), 0.0);
        let f = bochner_residual(&map, &g, BochnerOptions::default()).unwrap();
        assert!(f.sup_residual <= 1e-12);
    }

    #[test]
    fn non_harmonic_input_is_rejected() {
        let map = MapModel::torus_sine(torus(2), torus(2), DMatrix::identity(2, 2), DVector::zeros(2), 0.1).unwrap();
        let err = bochner_residual(&map, &GridSpec::periodic_unit(2, 8), BochnerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotHarmonic { sup_tau, .. } if sup_tau > 1.0));
    }

    fn sphere_cross_chart(derivatives: crate::manifold::Derivatives) -> MapModel {
        let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
        MapModel::identity_into_chart(s.clone(), s, 1).unwrap().with_derivatives(derivatives)
    }

    fn equator_grid() -> GridSpec {
        GridSpec::centered(0, &[0.8, 0.5], 0.05, 5)
    }

    #[test]
    fn sphere_identity_residual_analytic() {
        let map = sphere_cross_chart(crate::manifold::Derivatives::Analytic);
        let f = bochner_residual(&map, &equator_grid(), BochnerOptions { k: 1.0, ..Default::default() }).unwrap();
        assert!(f.sup_residual <= 1e-7, "{}", f.sup_residual);
        assert!(f.split_defect <= 1e-12);
        assert!(f.reports.iter().all(|r| r.sff_norm_sq < 1e-14));
    }

    #[test]
    fn sphere_identity_residual_converges_at_second_order() {
        let steps = [4e-2, 2e-2, 1e-2, 5e-3];
        let residuals: Vec<f64> = steps
            .iter()
            .map(|&h| {
                let map = sphere_cross_chart(crate::manifold::Derivatives::FiniteDifference { first: h, second: h });
                bochner_terms(&map, &equator_grid(), 1.0).unwrap().sup_residual
            })
            .collect();
        eprintln!("{residuals:?}");
        for w in residuals.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{residuals:?}");
        }
    }
}
