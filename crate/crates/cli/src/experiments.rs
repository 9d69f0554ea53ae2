//! One runner per experiment kind. Each fills an [`Outcome`] as it goes so
//! an engine failure still leaves a partial report behind.

use std::collections::BTreeMap;

use harmonic_core::bochner::{bochner_from_data, bochner_terms, GridSpec};
use harmonic_core::convergence::{convergence_table, ConvergenceTable};
use harmonic_core::curvature::{ricci, sec_upper_bound_check, CurvatureBundle};
use harmonic_core::flow::{run_flow_from, FlowConfig, FlowState, ENERGY_MONOTONE_TOL};
use harmonic_core::lemma::{run_campaign, CampaignConfig};
use harmonic_core::manifold::Derivatives;
use harmonic_core::map::MapKind;
use harmonic_core::prescription::{
    conservativity_residual, harmonic_einstein_residual, homothety_fit, prescribed_ricci_residual, shipped_fixtures, StructureSpec,
};
use harmonic_core::rigidity::{hypothesis_audit, rigidity_diagnostics, rigidity_from_state, RigidityOptions, Verdict, FLOW_VERDICT_TOL};
use harmonic_core::{ChartPoint, ManifoldModel};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{
    BochnerExperiment, CurvatureExperiment, ExperimentConfig, FlowExperiment, GridConfig, LemmaExperiment, MapKindName,
    PrescriptionExperiment, VerdictName,
};
use crate::plot::{thin, Plot, Scale, Series};
use crate::report::{cell, csv, number, Check};
use crate::{model, ConfigError};

/// Why an experiment stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Engine(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<harmonic_core::Error> for Failure {
    fn from(e: harmonic_core::Error) -> Self {
        Failure::Engine(e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: BTreeMap<String, Value>,
    /// `(file name, contents)` written next to the report.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }
}

/// Named tolerances after overrides and `--tol-scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    values: BTreeMap<String, f64>,
}

impl Tolerances {
    /// `scaled` entries accept overrides and `--tol-scale`; `fixed` entries
    /// are run parameters or engine constants echoed for completeness.
    pub fn new(scaled: &[(&str, f64)], fixed: &[(&str, f64)], overrides: &BTreeMap<String, f64>, scale: f64) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (name, v) in scaled {
            values.insert(name.to_string(), overrides.get(*name).copied().unwrap_or(*v) * scale);
        }
        for name in overrides.keys() {
            if !scaled.iter().any(|(n, _)| n == name) {
                let known: Vec<&str> = scaled.iter().map(|(n, _)| *n).collect();
                return Err(ConfigError(format!("tolerances.{name} is not a tolerance of this experiment (known: {})", known.join(", "))));
            }
        }
        for (name, v) in fixed {
            values.insert(name.to_string(), *v);
        }
        Ok(Self { values })
    }

    pub fn get(&self, name: &str) -> f64 {
        self.values[name]
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.values
    }
}

pub fn default_tolerances(config: &ExperimentConfig) -> (Vec<(&'static str, f64)>, Vec<(&'static str, f64)>) {
    match config.experiment {
        crate::config::ExperimentKind::Curvature => (
            vec![("sectional", 1e-8), ("ricci", 1e-8), ("symmetry", 1e-10), ("sec_bound", 1e-8)],
            vec![],
        ),
        crate::config::ExperimentKind::Bochner => (vec![("residual", 1e-7), ("harmonic", 1e-6), ("split", 1e-12)], vec![]),
        crate::config::ExperimentKind::LemmaCampaign => (
            vec![
                ("q0_nonnegative", 1e-12),
                ("q0_forms_agree", 1e-12),
                ("q1_nonnegative", 1e-10),
                ("q1_summands_nonnegative", 1e-10),
                ("q1_forms_agree", 1e-10),
                ("chain_nonpositive_kappa", 1e-10),
                ("chain_positive_kappa", 1e-10),
                ("rank_one_strict", 1e-10),
                ("equality_forcing", 1e-8),
                ("rank_dichotomy", 0.0),
            ],
            vec![],
        ),
        crate::config::ExperimentKind::Flow => {
            let tau = config.flow.as_ref().map_or(0.0, |f| f.tau_tol);
            (
                vec![("sff", 1e-6), ("bochner", 1e-6), ("verdict", FLOW_VERDICT_TOL), ("affine", 1e-6)],
                vec![("tau", tau), ("energy_monotone", ENERGY_MONOTONE_TOL)],
            )
        }
        crate::config::ExperimentKind::Prescription => (
            vec![
                ("harmonic_einstein", 1e-8),
                ("conservativity", 1e-8),
                ("equivalence", 1e-12),
                ("scale_invariance", 1e-10),
                ("homothety", 1e-8),
                ("audit", 1e-8),
                ("verdict", 1e-8),
            ],
            vec![],
        ),
    }
}

fn convergence_outputs(out: &mut Outcome, name: &str, title: &str, table: &ConvergenceTable, min_order: f64) {
    out.checks.push(Check::at_least(format!("{name}_min_order"), table.min_order, min_order));
    out.tables.insert(name.to_string(), serde_json::to_value(table).unwrap_or(Value::Null));
    out.file(&format!("{name}.csv"), table.to_csv());
    let plot = Plot {
        title,
        x_label: "h",
        y_label: "residual",
        x_scale: Scale::Log,
        y_scale: Scale::Log,
        series: vec![Series {
            label: "sup residual",
            points: table.rows.iter().map(|r| (r.h, r.residual)).collect(),
        }],
    };
    out.file(&format!("{name}.svg"), plot.to_svg());
}

fn coords(p: &ChartPoint) -> String {
    p.coords.iter().map(|c| cell(*c)).collect::<Vec<_>>().join(";")
}

pub fn curvature(c: &CurvatureExperiment, seed: u64, tol: &Tolerances, out: &mut Outcome) -> Result<(), Failure> {
    let m = model::manifold("curvature.manifold", &c.manifold)?;
    let dim = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(c.points);
    let mut attempts = 0;
    while points.len() < c.points {
        attempts += 1;
        if attempts > 1000 * c.points {
            return Err(Failure::Config(format!(
                "curvature.point_radius = {} leaves no room in chart 0 of this manifold",
                c.point_radius
            )));
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * c.point_radius).collect();
        if x.iter().map(|v| v * v).sum::<f64>() > c.point_radius * c.point_radius {
            continue;
        }
        let p = ChartPoint::new(0, &x);
        if m.in_domain(&p) {
            points.push(p);
        }
    }

    let kappa = m.constant_curvature().filter(|_| dim >= 2);
    let (mut sec_err, mut ric_err, mut sym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let b = CurvatureBundle::at(&m, p)?;
        let s = b.riemann.symmetry_defect();
        sym = sym.max(s);
        let (mut ps, mut pr) = (0.0f64, 0.0f64);
        if let Some(k) = kappa {
            pr = (&b.ricci - &b.metric * ((dim as f64 - 1.0) * k)).amax();
            let mut done = 0;
            while done < c.planes_per_point {
                let x = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let y = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                if let Ok(v) = b.riemann.sectional(&b.metric, &x, &y) {
                    ps = ps.max((v - k).abs());
                    done += 1;
                }
            }
        }
        sec_err = sec_err.max(ps);
        ric_err = ric_err.max(pr);
        rows.push(vec![p.chart.to_string(), coords(p), cell(ps), cell(pr), cell(s)]);
    }
    out.file(
        "curvature_points.csv",
        csv(&["chart", "coords", "sectional_error", "ricci_error", "symmetry_defect"], rows),
    );
    out.checks.push(Check::at_most("symmetry_defect", sym, tol.get("symmetry")));
    if let Some(k) = kappa {
        out.tables.insert("oracle".into(), json!({ "sectional": k, "ricci_factor": (dim as f64 - 1.0) * k }));
        out.checks.push(Check::at_most("sectional_error", sec_err, tol.get("sectional")));
        out.checks.push(Check::at_most("ricci_error", ric_err, tol.get("ricci")));
    }

    if !c.fd_steps.is_empty() {
        let probe = &points[..points.len().min(10)];
        let exact = probe.iter().map(|p| CurvatureBundle::at(&m, p)).collect::<harmonic_core::Result<Vec<_>>>()?;
        let mut series = Vec::new();
        for &h in &c.fd_steps {
            let fd = m.with_derivatives(Derivatives::finite_difference(h));
            let mut err: f64 = 0.0;
            for (p, e) in probe.iter().zip(&exact) {
                let b = CurvatureBundle::at(&fd, p)?;
                let r = b.riemann.as_slice().iter().zip(e.riemann.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                err = err.max(r).max((&b.ricci - &e.ricci).amax());
            }
            series.push((h, err));
        }
        if series.iter().all(|s| s.1 > 0.0) {
            let table = convergence_table(&series)?;
            convergence_outputs(out, "fd_convergence", "finite-difference curvature error", &table, c.min_order);
        } else {
            // exact differences (flat metrics): nothing to order, just agree
            let worst = series.iter().map(|s| s.1).fold(0.0, f64::max);
            out.checks.push(Check::at_most("fd_error", worst, tol.get("ricci")));
        }
    }

    if let Some(k) = c.sec_bound {
        let r = sec_upper_bound_check(&m, k, &points, c.planes_per_point, seed, tol.get("sec_bound"))?;
        out.checks.push(Check::at_most("sec_bound_excess", r.max_sectional.map_or(f64::NEG_INFINITY, |s| s - k), tol.get("sec_bound")));
        out.tables.insert("sec_bound".into(), serde_json::to_value(&r).unwrap_or(Value::Null));
    }
    Ok(())
}

fn grid_spec(field: &str, g: &GridConfig, dim: usize) -> Result<GridSpec, ConfigError> {
    match g {
        GridConfig::Periodic { n } => Ok(GridSpec::periodic_unit(dim, *n)),
        GridConfig::Centered { chart, center, spacing, n } => {
            if center.len() != dim {
                return Err(ConfigError(format!("{field}.center must have {dim} entries")));
            }
            Ok(GridSpec::centered(*chart, center, *spacing, *n))
        }
    }
}

pub fn bochner(c: &BochnerExperiment, tol: &Tolerances, out: &mut Outcome) -> Result<(), Failure> {
    let source = model::manifold("bochner.source", &c.source)?;
    let target = model::manifold("bochner.target", &c.target)?;
    let map = model::map("bochner.map", &c.map, source, target)?;
    let grid = grid_spec("bochner.grid", &c.grid, map.source().dim())?;
    if matches!(c.grid, GridConfig::Periodic { .. }) && map.source().periods(0).is_none() {
        return Err(Failure::Config("bochner.grid: periodic grids need a torus source".into()));
    }
    let field = bochner_terms(&map, &grid, c.k)?;
    let rows = field.reports.iter().map(|r| {
        let mut row = vec![r.chart.to_string(), r.point.iter().map(|v| cell(*v)).collect::<Vec<_>>().join(";")];
        row.extend(
            [r.energy_density, r.sff_norm_sq, r.tension_norm, r.q, r.q0, r.q1, r.laplacian_energy, r.residual]
                .iter()
                .map(|v| cell(*v)),
        );
        row
    });
    out.file(
        "bochner_nodes.csv",
        csv(
            &["chart", "coords", "energy_density", "sff_norm_sq", "tension_norm", "q", "q0", "q1", "laplacian_energy", "residual"],
            rows,
        ),
    );
    out.tables.insert(
        "bochner".into(),
        json!({
            "nodes": field.reports.len(),
            "k": c.k,
            "sup_residual": number(field.sup_residual),
            "sup_tension": number(field.sup_tension),
            "split_defect": number(field.split_defect),
        }),
    );
    let harmonic = Check::at_most("sup_tension", field.sup_tension, tol.get("harmonic"));
    let is_harmonic = harmonic.pass;
    out.checks.push(harmonic);
    out.checks.push(Check::at_most("split_defect", field.split_defect, tol.get("split")));
    if !is_harmonic {
        // the identity only holds for harmonic maps: report τ instead
        return Ok(());
    }
    out.checks.push(Check::at_most("sup_residual", field.sup_residual, tol.get("residual")));

    if !c.fd_steps.is_empty() {
        let mut series = Vec::new();
        for &h in &c.fd_steps {
            let fd = map.with_derivatives(Derivatives::finite_difference(h));
            series.push((h, bochner_terms(&fd, &grid, c.k)?.sup_residual));
        }
        let table = convergence_table(&series)?;
        convergence_outputs(out, "fd_convergence", "Bochner residual vs derivative step", &table, c.min_order);
    }
    Ok(())
}

pub fn lemma(c: &LemmaExperiment, seed: u64, tol: &Tolerances, out: &mut Outcome) -> Result<(), Failure> {
    let report = run_campaign(&CampaignConfig {
        m: c.m,
        n: c.n,
        ks: c.ks.clone(),
        samples: c.samples,
        seed,
    })?;
    let mut table = Vec::new();
    let mut rows = Vec::new();
    for check in &report.checks {
        let t = tol.get(&check.name);
        out.checks.push(Check::at_least(check.name.clone(), check.worst_margin, 0.0 - t));
        let mut entry = json!({
            "name": check.name,
            "engine_tolerance": check.tolerance,
            "evaluated": check.evaluated,
            "violations": check.violations,
            "worst_margin": number(check.worst_margin),
        });
        if check.violations > 0 {
            entry["witness"] = serde_json::to_value(&check.witness).unwrap_or(Value::Null);
        }
        table.push(entry);
        rows.push(vec![
            check.name.clone(),
            cell(t),
            check.evaluated.to_string(),
            check.violations.to_string(),
            cell(check.worst_margin),
        ]);
    }
    out.tables.insert("campaign".into(), Value::Array(table));
    out.tables.insert("total_violations".into(), json!(report.violations()));
    out.file("lemma_checks.csv", csv(&["check", "tolerance", "evaluated", "violations", "worst_margin"], rows));
    Ok(())
}

fn verdict_name(v: Verdict) -> VerdictName {
    match v {
        Verdict::ConstantMap => VerdictName::ConstantMap,
        Verdict::HomotheticImmersion => VerdictName::HomotheticImmersion,
        Verdict::TotallyGeodesic => VerdictName::TotallyGeodesic,
        Verdict::Indeterminate => VerdictName::Indeterminate,
    }
}

pub fn flow(c: &FlowExperiment, seed: u64, tol: &Tolerances, out: &mut Outcome) -> Result<(), Failure> {
    let target = model::manifold("flow.target", &c.target)?;
    let source = match &c.lattice {
        Some(rows) => model::lattice("flow.lattice", rows)?,
        None => {
            let dim = c.map.matrix.as_ref().and_then(|r| r.first()).map_or(target.dim(), Vec::len);
            ManifoldModel::standard_torus(dim)
        }
    };
    let dim = source.dim();
    let map = model::map("flow.map", &c.map, source, target)?;
    let counts = vec![c.resolution; dim];
    let state = FlowState::sample(&map, counts).map_err(|e| Failure::Config(format!("flow: {e}")))?;
    let bound = state.grid.stability_bound();
    let dt = match (c.dt, c.dt_fraction) {
        (Some(dt), _) => dt,
        (None, frac) => frac.unwrap_or(1.0) * bound,
    };
    if dt > bound * (1.0 + 1e-12) {
        return Err(Failure::Config(format!("flow.dt = {dt} exceeds the stability bound {bound}")));
    }
    let config = FlowConfig {
        dt,
        max_steps: c.max_steps,
        tau_tol: c.tau_tol,
        energy_monitor: c.energy_monitor,
        seed,
    };
    out.tables.insert("stepping".into(), json!({ "dt": dt, "stability_bound": bound, "nodes": state.grid.len() }));
    let state = state.perturbed(c.perturbation, seed)?;
    let run = run_flow_from(state, &config)?;
    let s = &run.summary;

    let last = s.rows.len().saturating_sub(1);
    let rows = s
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| i % c.trajectory_stride == 0 || *i == last)
        .map(|(_, r)| vec![r.step.to_string(), cell(r.time), cell(r.energy), cell(r.sup_tau)]);
    out.file("trajectory.csv", csv(&["step", "time", "energy", "sup_tau"], rows));
    let energy: Vec<(f64, f64)> = s.rows.iter().map(|r| (r.step as f64, r.energy)).collect();
    let tau: Vec<(f64, f64)> = s.rows.iter().map(|r| (r.step as f64, r.sup_tau)).collect();
    out.file(
        "energy.svg",
        Plot {
            title: "energy decay",
            x_label: "step",
            y_label: "E",
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            series: vec![Series { label: "energy", points: thin(&energy, 400) }],
        }
        .to_svg(),
    );
    out.file(
        "tension.svg",
        Plot {
            title: "tension decay",
            x_label: "step",
            y_label: "sup |tau|",
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
            series: vec![Series { label: "sup |tau|", points: thin(&tau, 400) }],
        }
        .to_svg(),
    );
    let snapshot = json!({
        "counts": run.state.grid.counts(),
        "time": run.state.time,
        "steps": run.state.step_count,
        "values": run.state.values.iter().map(|p| json!({ "chart": p.chart, "coords": p.coords.as_slice() })).collect::<Vec<_>>(),
    });
    out.file("final_state.json", serde_json::to_string(&snapshot).unwrap_or_default() + "\n");
    out.tables.insert(
        "flow".into(),
        json!({
            "converged": s.converged,
            "steps": s.steps,
            "final_sup_tau": number(s.final_sup_tau),
            "initial_energy": number(s.initial_energy),
            "final_energy": number(s.final_energy),
            "monotonicity_violations": s.monotonicity_violations,
            "dt": s.dt,
        }),
    );

    out.checks.push(Check::at_most("final_sup_tau", s.final_sup_tau, tol.get("tau")));
    if c.energy_monitor {
        out.checks.push(Check::equals("energy_monotonicity_violations", s.monotonicity_violations, 0));
    }
    let verdict = rigidity_from_state(
        &run.state,
        c.k,
        RigidityOptions {
            tolerance: tol.get("verdict"),
            planes_per_point: 2,
            seed,
        },
    )?;
    out.tables.insert("rigidity".into(), serde_json::to_value(verdict).unwrap_or(Value::Null));
    out.checks.push(Check::at_most("sff_sup", verdict.residuals.sff_sup, tol.get("sff")));
    if let Some(expected) = c.expect_verdict {
        out.checks.push(Check::equals("verdict", verdict_name(verdict.verdict), expected));
    }
    if map.target().is_flat() {
        let data = run.state.node_data()?;
        let field = bochner_from_data(&run.state.grid.grid, &data, c.k);
        out.checks.push(Check::at_most("bochner_residual", field.sup_residual, tol.get("bochner")));
        if matches!(c.map.kind, MapKindName::LinearTorus | MapKindName::TorusSine) {
            if let Some(rows) = &c.map.matrix {
                let a = model::matrix("flow.map.matrix", rows)?;
                let (_, dev) = run.state.affine_fit(&a)?;
                out.checks.push(Check::at_most("affine_deviation", dev, tol.get("affine")));
            }
        }
    }
    Ok(())
}

struct Structure {
    name: String,
    spec: StructureSpec,
    points: Vec<ChartPoint>,
    harmonic: bool,
    einstein: bool,
}

pub fn prescription(c: &PrescriptionExperiment, seed: u64, tol: &Tolerances, out: &mut Outcome) -> Result<(), Failure> {
    let mut structures = Vec::new();
    if c.shipped {
        for f in shipped_fixtures()? {
            structures.push(Structure {
                name: f.name.to_string(),
                spec: f.spec,
                points: f.points,
                harmonic: f.harmonic,
                einstein: true,
            });
        }
    }
    for (i, s) in c.structures.iter().enumerate() {
        let field = format!("prescription.structures[{i}]");
        let g = model::manifold(&format!("{field}.g"), &s.g)?;
        let h = model::manifold(&format!("{field}.h"), &s.h)?;
        let phi = model::map(&format!("{field}.map"), &s.map, g, h)?;
        let spec = StructureSpec::new(phi, s.alpha, s.lambda).map_err(|e| Failure::Config(format!("{field}: {e}")))?;
        structures.push(Structure {
            name: s.name.clone(),
            spec,
            points: model::points(&format!("{field}.points"), &s.points)?,
            harmonic: s.harmonic,
            einstein: s.einstein,
        });
    }

    let mut rows = Vec::new();
    for st in &structures {
        let name = &st.name;
        let spec = &st.spec;
        let he = harmonic_einstein_residual(spec, &st.points)?;
        let cons = conservativity_residual(spec, &st.points)?;
        let mut summary = json!({
            "alpha": spec.alpha,
            "lambda": spec.lambda,
            "points": st.points.len(),
            "harmonic_einstein": number(he.sup),
            "harmonic_einstein_worst_point": he.worst,
            "conservativity": number(cons.sup),
            "conservativity_worst_point": cons.worst,
        });
        for (i, p) in st.points.iter().enumerate() {
            rows.push(vec![name.clone(), i.to_string(), p.chart.to_string(), coords(p), cell(he.values[i]), cell(cons.values[i])]);
        }
        if st.einstein {
            out.checks.push(Check::at_most(format!("{name}.harmonic_einstein"), he.sup, tol.get("harmonic_einstein")));
        }
        if st.harmonic {
            out.checks.push(Check::at_most(format!("{name}.conservativity"), cons.sup, tol.get("conservativity")));
        }

        let (g, h) = (spec.g(), spec.h());
        let identity = *spec.phi.kind() == MapKind::Identity && g.dim() == h.dim();
        if identity && spec.lambda == 0.0 && spec.alpha > 0.0 {
            let pr = prescribed_ricci_residual(g, h, spec.alpha, &st.points)?;
            let gap = he.values.iter().zip(&pr.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            out.checks.push(Check::at_most(format!("{name}.equivalence"), gap, tol.get("equivalence")));
            let fit = homothety_fit(g, h, &st.points)?;
            summary["homothety"] = json!({ "mu": number(fit.mu), "residual": number(fit.residual) });
            if st.einstein {
                out.checks.push(Check::at_most(format!("{name}.homothety"), fit.residual, tol.get("homothety")));
            }
        }
        let mut scale_gap: f64 = 0.0;
        for &mu in &c.scale_factors {
            let scaled = g.scaled(mu);
            for p in &st.points {
                scale_gap = scale_gap.max((ricci(&scaled, p)? - ricci(g, p)?).amax());
            }
        }
        out.checks.push(Check::at_most(format!("{name}.ricci_scale_invariance"), scale_gap, tol.get("scale_invariance")));

        let m = g.dim();
        if st.harmonic && st.einstein && spec.alpha > 0.0 && spec.lambda == 0.0 && m >= 2 {
            let k = spec.alpha / (m as f64 - 1.0);
            let audit = hypothesis_audit(&spec.phi, k, &st.points, c.audit_planes, seed, tol.get("audit"))?;
            out.checks.push(Check::at_least(format!("{name}.audit_ricci"), audit.ricci_min_residual, -tol.get("audit")));
            out.checks.push(Check::at_most(
                format!("{name}.audit_sec"),
                audit.sec_residual.unwrap_or(f64::NEG_INFINITY),
                tol.get("audit"),
            ));
            let v = rigidity_diagnostics(
                &spec.phi,
                &st.points,
                k,
                RigidityOptions {
                    tolerance: tol.get("verdict"),
                    planes_per_point: 16,
                    seed,
                },
            )?;
            out.checks.push(Check::one_of(
                format!("{name}.verdict"),
                verdict_name(v.verdict),
                &[VerdictName::ConstantMap, VerdictName::HomotheticImmersion],
            ));
            if let Some(kg) = v.residuals.kg_check {
                out.checks.push(Check::at_most(format!("{name}.kg_check"), kg, tol.get("verdict")));
            }
            summary["audit"] = serde_json::to_value(&audit).unwrap_or(Value::Null);
            summary["rigidity"] = serde_json::to_value(v).unwrap_or(Value::Null);
        }
        out.tables.insert(format!("structure.{name}"), summary);
    }
    out.file(
        "prescription_points.csv",
        csv(&["structure", "point", "chart", "coords", "harmonic_einstein", "conservativity"], rows),
    );
    Ok(())
}
