//! Explicit Euler discretisation of the harmonic-map heat flow
//! `∂φ/∂t = τ(φ)` from a flat torus, on a periodic grid in lattice
//! coordinates.
//!
//! The discrete tension at a node is
//! `τᵃ = Σᵢⱼ Gⁱʲ Lᵢⱼφᵃ + Gⁱʲ Γᵃ_bc D⁰ᵢφᵇ D⁰ⱼφᶜ` where `L` is the
//! symmetrised `D⁻D⁺` stencil. For flat targets this is exactly the negative
//! gradient of the forward-difference energy, which makes the discrete
//! energy non-increasing under the step bound of [`stability_bound`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bochner::GridSpec;
use crate::curvature::{random_vector, CurvatureBundle};
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{ChartPoint, ManifoldKind, ManifoldModel};
use crate::map::{MapJet, MapModel, MapPointData};

/// Relative slack in the energy monotonicity check.
pub const ENERGY_MONOTONE_TOL: f64 = 1e-12;
/// Fraction of the explicit-Euler limit used by [`stability_bound`].
const STABILITY_FACTOR: f64 = 0.4;

/// Periodic grid over a flat-torus source and the target it maps into.
#[derive(Debug)]
pub struct FlowGrid {
    pub source: ManifoldModel,
    pub target: ManifoldModel,
    pub grid: GridSpec,
    g_inv: DMatrix<f64>,
    volume_weight: f64,
    flat_metric: Option<DMatrix<f64>>,
    wraps: bool,
    /// `plus[i][f]`, `minus[i][f]`: neighbours of node `f` along axis `i`.
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
    /// Offsets `(−eᵢ + eⱼ)` and `(+eᵢ − eⱼ)` for `i < j`, indexed by pair.
    minus_plus: Vec<Vec<usize>>,
    plus_minus: Vec<Vec<usize>>,
}

impl FlowGrid {
    pub fn new(source: ManifoldModel, target: ManifoldModel, counts: Vec<usize>) -> Result<Self> {
        if !matches!(source.kind(), ManifoldKind::FlatTorus { .. }) {
            return Err(Error::Invalid("heat flow needs a flat-torus source".into()));
        }
        if counts.len() != source.dim() {
            return Err(Error::Dimension(format!("{} grid axes for a {}-dimensional source", counts.len(), source.dim())));
        }
        if counts.iter().any(|&c| c < 3) {
            return Err(Error::Resolution(format!("need at least 3 nodes per axis, got {counts:?}")));
        }
        let m = source.dim();
        let grid = GridSpec {
            chart: 0,
            origin: vec![0.0; m],
            spacing: counts.iter().map(|&c| 1.0 / c as f64).collect(),
            counts,
            periodic: true,
        };
        let g = source.metric_at(&ChartPoint::from_vector(0, DVector::zeros(m)))?;
        let g_inv = linalg::spd_inverse(&g)?;
        let volume_weight = g.determinant().sqrt() / grid.len() as f64;
        let (flat_metric, wraps) = match target.kind() {
            ManifoldKind::FlatTorus { .. } => {
                let h = target.metric_at(&ChartPoint::from_vector(0, DVector::zeros(target.dim())))?;
                (Some(h), true)
            }
            _ => (None, false),
        };
        let table = |offset: &[(usize, isize)]| (0..grid.len()).map(|f| grid.neighbour(f, offset)).collect::<Vec<_>>();
        let plus = (0..m).map(|i| table(&[(i, 1)])).collect();
        let minus = (0..m).map(|i| table(&[(i, -1)])).collect();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let minus_plus = pairs.iter().map(|&(i, j)| table(&[(i, -1), (j, 1)])).collect();
        let plus_minus = pairs.iter().map(|&(i, j)| table(&[(i, 1), (j, -1)])).collect();
        Ok(Self {
            source,
            target,
            grid,
            g_inv,
            volume_weight,
            flat_metric,
            wraps,
            plus,
            minus,
            minus_plus,
            plus_minus,
        })
    }

    pub fn counts(&self) -> &[usize] {
        &self.grid.counts
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Source point of node `flat`.
    pub fn node(&self, flat: usize) -> ChartPoint {
        self.grid.point(flat)
    }

    /// Largest stable explicit step, `0.4 / Σᵢⱼ |Gⁱʲ| NᵢNⱼ`. For the unit
    /// square lattice this is `0.2·h²`.
    pub fn stability_bound(&self) -> f64 {
        let n = &self.grid.counts;
        let mut s = 0.0;
        for i in 0..n.len() {
            for j in 0..n.len() {
                s += self.g_inv[(i, j)].abs() * n[i] as f64 * n[j] as f64;
            }
        }
        STABILITY_FACTOR / s
    }

    fn neighbour(&self, flat: usize, offset: &[(usize, isize)]) -> usize {
        match offset {
            [(i, 1)] => self.plus[*i][flat],
            [(i, -1)] => self.minus[*i][flat],
            [(i, -1), (j, 1)] if i < j => self.minus_plus[self.pair_index(*i, *j)][flat],
            [(i, 1), (j, -1)] if i < j => self.plus_minus[self.pair_index(*i, *j)][flat],
            _ => self.grid.neighbour(flat, offset),
        }
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let m = self.grid.dim();
        i * (2 * m - i - 1) / 2 + (j - i - 1)
    }

    /// Coordinates of node `nb` in the chart of node `center`.
    fn local(&self, values: &[ChartPoint], center: usize, nb: usize) -> Result<DVector<f64>> {
        let (c, p) = (&values[center], &values[nb]);
        if self.wraps {
            let mut y = p.coords.clone();
            for k in 0..y.len() {
                y[k] -= (y[k] - c.coords[k]).round();
            }
            return Ok(y);
        }
        if p.chart == c.chart && self.target.periods(c.chart).is_none() {
            return Ok(p.coords.clone());
        }
        self.target.express_near(p, c)
    }

    fn local_at(&self, values: &[ChartPoint], center: usize, offset: &[(usize, isize)]) -> Result<DVector<f64>> {
        self.local(values, center, self.neighbour(center, offset))
    }

    fn target_metric(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        match &self.flat_metric {
            Some(h) => Ok(h.clone()),
            None => self.target.metric_at(p),
        }
    }
}

/// Node values of a discrete map at one time.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub grid: Arc<FlowGrid>,
    pub values: Vec<ChartPoint>,
    pub time: f64,
    pub step_count: usize,
}

impl FlowState {
    /// Samples a map at the grid nodes.
    pub fn sample(map: &MapModel, counts: Vec<usize>) -> Result<Self> {
        let grid = Arc::new(FlowGrid::new(map.source().clone(), map.target().clone(), counts)?);
        let values = (0..grid.len())
            .map(|f| Ok(map.target().normalize(&map.image(&grid.node(f))?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            values,
            time: 0.0,
            step_count: 0,
        })
    }

    /// Adds `ε Σᵢ (αᵢ sin 2πuⁱ + βᵢ cos 2πuⁱ)` to every target coordinate,
    /// with Gaussian coefficients drawn from `seed`.
    pub fn perturbed(mut self, amplitude: f64, seed: u64) -> Result<Self> {
        if amplitude == 0.0 {
            return Ok(self);
        }
        let m = self.grid.source.dim();
        let n = self.grid.target.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = random_vector(&mut rng, n * m) / (2.0 * m as f64).sqrt();
        let beta = random_vector(&mut rng, n * m) / (2.0 * m as f64).sqrt();
        let tau = std::f64::consts::TAU;
        for f in 0..self.values.len() {
            let u = self.grid.node(f).coords;
            let p = &mut self.values[f];
            for a in 0..n {
                let mut d = 0.0;
                for i in 0..m {
                    d += alpha[a * m + i] * (tau * u[i]).sin() + beta[a * m + i] * (tau * u[i]).cos();
                }
                p.coords[a] += amplitude * d;
            }
            *p = self.grid.target.normalize(p);
            if !self.grid.target.in_domain(p) {
                return Err(Error::FlowBlowUp {
                    step: 0,
                    reason: "perturbation left every target chart".into(),
                });
            }
        }
        Ok(self)
    }

    /// Discrete tension at every node.
    pub fn tension(&self) -> Result<Vec<DVector<f64>>> {
        (0..self.values.len())
            .into_par_iter()
            .map(|f| self.node_tension(f))
            .collect()
    }

    fn node_tension(&self, f: usize) -> Result<DVector<f64>> {
        if self.grid.wraps {
            return Ok(self.flat_node_tension(f));
        }
        let g = &self.grid;
        let m = g.source.dim();
        let h = &g.grid.spacing;
        let y = &self.values[f].coords;
        let mut tau = DVector::zeros(y.len());
        let mut plus = Vec::with_capacity(m);
        let mut minus = Vec::with_capacity(m);
        for i in 0..m {
            plus.push(g.local_at(&self.values, f, &[(i, 1)])?);
            minus.push(g.local_at(&self.values, f, &[(i, -1)])?);
        }
        for i in 0..m {
            let gii = g.g_inv[(i, i)];
            if gii != 0.0 {
                tau += (&plus[i] - y * 2.0 + &minus[i]) * (gii / (h[i] * h[i]));
            }
            for j in i + 1..m {
                let gij = g.g_inv[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                // D⁻ᵢD⁺ⱼ + D⁺ᵢD⁻ⱼ
                let mp = g.local_at(&self.values, f, &[(i, -1), (j, 1)])?;
                let pm = g.local_at(&self.values, f, &[(i, 1), (j, -1)])?;
                let mixed = (&plus[j] - y - &mp + &minus[i]) + (&plus[i] - &pm - y + &minus[j]);
                tau += mixed * (gij / (h[i] * h[j]));
            }
        }
        if g.flat_metric.is_none() && !g.target.is_flat() {
            let gamma = crate::curvature::christoffel(&g.target, &self.values[f])?;
            let d0: Vec<DVector<f64>> = (0..m).map(|i| (&plus[i] - &minus[i]) / (2.0 * h[i])).collect();
            for i in 0..m {
                for j in 0..m {
                    let gij = g.g_inv[(i, j)];
                    if gij != 0.0 {
                        tau += gamma.contract(&d0[i], &d0[j]) * gij;
                    }
                }
            }
        }
        Ok(tau)
    }

    /// Same stencil as the general path, unrolled for flat-torus targets
    /// where neighbours only need unwrapping by whole periods.
    fn flat_node_tension(&self, f: usize) -> DVector<f64> {
        let g = &self.grid;
        let m = g.source.dim();
        let h = &g.grid.spacing;
        let y = &self.values[f].coords;
        let n = y.len();
        let diff = |nb: usize, a: usize| {
            let d = self.values[nb].coords[a] - y[a];
            d - d.round()
        };
        let mut tau = DVector::zeros(n);
        for a in 0..n {
            let mut t = 0.0;
            let mut pair = 0;
            for i in 0..m {
                let (p, q) = (diff(g.plus[i][f], a), diff(g.minus[i][f], a));
                t += g.g_inv[(i, i)] * (p + q) / (h[i] * h[i]);
                for j in i + 1..m {
                    let gij = g.g_inv[(i, j)];
                    if gij != 0.0 {
                        let mixed = diff(g.plus[j][f], a) - diff(g.minus_plus[pair][f], a) + q + p - diff(g.plus_minus[pair][f], a)
                            + diff(g.minus[j][f], a);
                        t += gij * mixed / (h[i] * h[j]);
                    }
                    pair += 1;
                }
            }
            tau[a] = t;
        }
        tau
    }

    /// `Σ_nodes Gⁱʲ h_ab D⁺ᵢφᵃ D⁺ⱼφᵇ · √det G / #nodes`.
    pub fn energy(&self) -> Result<f64> {
        let g = &self.grid;
        let m = g.source.dim();
        if let (true, Some(hm)) = (g.wraps, &g.flat_metric) {
            let n = g.target.dim();
            let mut total = 0.0;
            let mut d = vec![0.0; m * n];
            for f in 0..self.values.len() {
                let y = &self.values[f].coords;
                for i in 0..m {
                    let nb = &self.values[g.plus[i][f]].coords;
                    for a in 0..n {
                        let v = nb[a] - y[a];
                        d[i * n + a] = (v - v.round()) * g.grid.counts[i] as f64;
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        let gij = g.g_inv[(i, j)];
                        if gij == 0.0 {
                            continue;
                        }
                        for a in 0..n {
                            for b in 0..n {
                                total += gij * hm[(a, b)] * d[i * n + a] * d[j * n + b];
                            }
                        }
                    }
                }
            }
            return Ok(total * g.volume_weight);
        }
        let parts: Vec<f64> = (0..self.values.len())
            .into_par_iter()
            .map(|f| {
                let y = &self.values[f].coords;
                let hm = g.target_metric(&self.values[f])?;
                let d: Vec<DVector<f64>> = (0..m)
                    .map(|i| Ok((g.local_at(&self.values, f, &[(i, 1)])? - y) * g.grid.counts[i] as f64))
                    .collect::<Result<_>>()?;
                let mut e = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        let gij = g.g_inv[(i, j)];
                        if gij != 0.0 {
                            e += gij * (&hm * &d[j]).dot(&d[i]);
                        }
                    }
                }
                Ok(e)
            })
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum::<f64>() * g.volume_weight)
    }

    fn sup_tension(&self, tau: &[DVector<f64>]) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for (p, t) in self.values.iter().zip(tau) {
            let norm_sq = match &self.grid.flat_metric {
                Some(h) => (h * t).dot(t),
                None => (self.grid.target.metric_at(p)? * t).dot(t),
            };
            sup = sup.max(norm_sq.max(0.0).sqrt());
        }
        Ok(sup)
    }

    fn advance(&self, tau: &[DVector<f64>], dt: f64) -> Result<Self> {
        let step = self.step_count + 1;
        let values = self
            .values
            .iter()
            .zip(tau)
            .map(|(p, t)| {
                let moved = ChartPoint::from_vector(p.chart, &p.coords + t * dt);
                if moved.coords.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Instability { step });
                }
                let moved = self.grid.target.normalize(&moved);
                if !self.grid.target.in_domain(&moved) {
                    return Err(Error::FlowBlowUp {
                        step,
                        reason: format!("node left every target chart at {:?}", moved.coords.as_slice()),
                    });
                }
                Ok(moved)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
            time: self.time + dt,
            step_count: step,
        })
    }

    /// Pointwise map data at every node, with the jet taken from central
    /// differences on the grid.
    pub fn node_data(&self) -> Result<Vec<MapPointData>> {
        (0..self.values.len())
            .into_par_iter()
            .map(|f| self.node_point_data(f))
            .collect()
    }

    fn node_point_data(&self, f: usize) -> Result<MapPointData> {
        let g = &self.grid;
        let m = g.source.dim();
        let h = &g.grid.spacing;
        let y = &self.values[f].coords;
        let n = y.len();
        let at = |off: &[(usize, isize)]| g.local_at(&self.values, f, off);
        let mut differential = DMatrix::zeros(n, m);
        let mut hessians = vec![DMatrix::zeros(m, m); n];
        for i in 0..m {
            let p = at(&[(i, 1)])?;
            let q = at(&[(i, -1)])?;
            differential.set_column(i, &((&p - &q) / (2.0 * h[i])));
            let d2 = (&p - y * 2.0 + &q) / (h[i] * h[i]);
            for a in 0..n {
                hessians[a][(i, i)] = d2[a];
            }
            for j in i + 1..m {
                let d2 = (at(&[(i, 1), (j, 1)])? - at(&[(i, 1), (j, -1)])? - at(&[(i, -1), (j, 1)])? + at(&[(i, -1), (j, -1)])?)
                    / (4.0 * h[i] * h[j]);
                for a in 0..n {
                    hessians[a][(i, j)] = d2[a];
                    hessians[a][(j, i)] = d2[a];
                }
            }
        }
        let point = g.node(f);
        Ok(MapPointData {
            source: CurvatureBundle::at(&g.source, &point)?,
            target: CurvatureBundle::at(&g.target, &self.values[f])?,
            point,
            jet: MapJet {
                image: self.values[f].clone(),
                differential,
                hessians,
            },
        })
    }

    /// Fits `x ↦ Ax + b` to a flat-torus-valued state; returns `b` and the
    /// largest coordinate deviation from the fit.
    pub fn affine_fit(&self, a: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
        if !self.grid.wraps {
            return Err(Error::Invalid("affine fit needs a flat-torus target".into()));
        }
        let n = self.grid.target.dim();
        let offset = |f: usize| -> DVector<f64> { &self.values[f].coords - a * &self.grid.node(f).coords };
        let z0 = offset(0);
        let lifted: Vec<DVector<f64>> = (0..self.values.len())
            .map(|f| {
                let mut d = offset(f) - &z0;
                d.iter_mut().for_each(|v| *v -= v.round());
                d
            })
            .collect();
        let mean = lifted.iter().fold(DVector::zeros(n), |acc, d| acc + d) / lifted.len() as f64;
        let dev = lifted
            .iter()
            .map(|d| (d - &mean).amax())
            .fold(0.0, f64::max);
        Ok((z0 + mean, dev))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub max_steps: usize,
    /// Stop once `sup |τ|_h` over the nodes drops to this value.
    pub tau_tol: f64,
    pub energy_monitor: bool,
    /// Seed for the initial perturbation.
    pub seed: u64,
}

impl FlowConfig {
    pub fn validate(&self, grid: &FlowGrid) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        let bound = grid.stability_bound();
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!("dt = {} exceeds the stability bound {bound}", self.dt)));
        }
        if !(self.tau_tol > 0.0) {
            return Err(Error::Invalid(format!("tau_tol must be positive, got {}", self.tau_tol)));
        }
        Ok(())
    }
}

/// One explicit Euler step.
pub fn flow_step(state: &FlowState, config: &FlowConfig) -> Result<FlowState> {
    config.validate(&state.grid)?;
    let tau = state.tension()?;
    state.advance(&tau, config.dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub sup_tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSummary {
    pub rows: Vec<TrajectoryRow>,
    pub converged: bool,
    pub steps: usize,
    pub final_sup_tau: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Steps where the energy rose by more than the relative slack.
    pub monotonicity_violations: usize,
    pub dt: f64,
}

impl FlowSummary {
    pub fn energy_monotone(&self) -> bool {
        self.monotonicity_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub summary: FlowSummary,
    pub state: FlowState,
}

/// Initial data for [`run_flow`].
#[derive(Debug, Clone)]
pub struct InitialData {
    pub map: MapModel,
    pub counts: Vec<usize>,
    /// Amplitude of the seeded trigonometric perturbation.
    pub perturbation: f64,
}

/// Samples the initial map, perturbs it and flows it.
pub fn run_flow(initial: &InitialData, config: &FlowConfig) -> Result<FlowRun> {
    let state = FlowState::sample(&initial.map, initial.counts.clone())?.perturbed(initial.perturbation, config.seed)?;
    run_flow_from(state, config)
}

/// Flows until `sup |τ|_h ≤ tau_tol` or `max_steps` is reached. Hitting the
/// step budget is reported through `converged`, not as an error.
pub fn run_flow_from(mut state: FlowState, config: &FlowConfig) -> Result<FlowRun> {
    config.validate(&state.grid)?;
    let mut rows = Vec::new();
    let mut violations = 0;
    let mut energy = state.energy()?;
    let initial_energy = energy;
    loop {
        let tau = state.tension()?;
        let sup_tau = state.sup_tension(&tau)?;
        rows.push(TrajectoryRow {
            step: state.step_count,
            time: state.time,
            energy,
            sup_tau,
        });
        let converged = sup_tau <= config.tau_tol;
        if converged || state.step_count >= config.max_steps {
            let summary = FlowSummary {
                rows,
                converged,
                steps: state.step_count,
                final_sup_tau: sup_tau,
                initial_energy,
                final_energy: energy,
                monotonicity_violations: violations,
                dt: config.dt,
            };
            return Ok(FlowRun { summary, state });
        }
        state = state.advance(&tau, config.dt)?;
        let next = state.energy()?;
        if config.energy_monitor && next > energy + ENERGY_MONOTONE_TOL * energy.abs() {
            violations += 1;
        }
        energy = next;
    }
}
