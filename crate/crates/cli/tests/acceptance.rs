//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use harmonic_cli::config::ExperimentConfig;
use harmonic_cli::report::strip_timing;
use harmonic_cli::run_experiment;
use harmonic_core::bochner::{bochner_residual, bochner_terms, q1_frame_value, q1_sum_form, q_split, q_term, BochnerOptions, GridSpec};
use harmonic_core::convergence::convergence_table;
use harmonic_core::curvature::{ricci, CurvatureBundle};
use harmonic_core::lemma::{run_campaign, CampaignConfig};
use harmonic_core::manifold::Derivatives;
use harmonic_core::map::MapModel;
use harmonic_core::prescription::{
    conservativity_residual, harmonic_einstein_residual, perturbed_sphere, prescribed_ricci_residual, shipped_fixtures, sphere_points,
    StructureSpec,
};
use harmonic_core::rigidity::{hypothesis_audit, rigidity_diagnostics, RigidityOptions, Verdict};
use harmonic_core::{ChartPoint, ManifoldModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, budget_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s <= budget_s, format!("{s:.2}s/{budget_s}s"))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("shipped config loads")
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn algebraic_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut q112_exact) = (0.0f64, true);
    for _ in 0..10_000 {
        let m = rng.random_range(2..=6);
        let y = random_matrix(&mut rng, m + 1, m, 2.0);
        let c = y.transpose() * y;
        let raw = random_matrix(&mut rng, m, m, 3.0);
        let kappa = (&raw + raw.transpose()) * 0.5;
        let k = rng.random_range(-2.0..2.0);
        let sum = q1_sum_form(&c, &kappa, k);
        let frame = q1_frame_value(&c, &kappa, k);
        let scale = sum.value.abs().max(frame.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((sum.value - frame).abs() / scale);
        let (c11, c22, c12, k12) = (c[(0, 0)], c[(1, 1)], c[(0, 1)], kappa[(0, 1)]);
        let displayed = k * (c11 - c22).powi(2) + 2.0 * (k - k12) * c11 * c22 + 2.0 * ((m as f64 - 1.0) * k + k12) * c12.powi(2);
        let t = sum.terms[0];
        q112_exact &= (t.i, t.j) == (0, 1) && t.value == displayed;
    }
    let (fast, time) = within(start.elapsed(), 5.0);
    outcome(
        worst <= 1e-12 && q112_exact && fast,
        format!("max rel |sum − frame| = {worst:.2e} (≤ 1e-12), (1,2) summand exact: {q112_exact}, {time}"),
    )
}

fn builtin(kind: usize, dim: usize) -> ManifoldModel {
    match kind {
        0 => ManifoldModel::standard_torus(dim),
        1 => ManifoldModel::round_sphere(dim, 1.4).unwrap(),
        2 => ManifoldModel::hyperbolic_disk(dim, 1.2).unwrap(),
        _ => ManifoldModel::product(ManifoldModel::round_sphere(dim - 1, 1.0).unwrap(), ManifoldModel::hyperbolic_disk(1, 1.0).unwrap()),
    }
}

fn decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut kinds_seen = [[false; 4]; 2];
    for t in 0..1000 {
        let (sk, tk) = (t % 4, (t / 4) % 4);
        kinds_seen[0][sk] = true;
        kinds_seen[1][tk] = true;
        let m = rng.random_range(2..=3);
        let n = rng.random_range(2..=4);
        let c = DVector::from_fn(n, |_, _| rng.random_range(-0.2..0.2));
        let a = random_matrix(&mut rng, n, m, 0.4);
        let q = (0..n).map(|_| random_matrix(&mut rng, m, m, 0.2)).collect();
        let map = MapModel::quadratic(builtin(sk, m), builtin(tk, n), 0, c, a, q).unwrap();
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-0.4..0.4)).collect();
        let p = ChartPoint::new(0, &x);
        let k = rng.random_range(-2.0..2.0);
        let total = q_term(&map, &p).unwrap();
        let (q0, q1) = q_split(&map, &p, k).unwrap();
        let scale = total.abs().max(q0.abs()).max(q1.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((total - q0 - q1).abs() / scale);
    }
    let all = kinds_seen.iter().flatten().all(|b| *b);
    let (fast, time) = within(start.elapsed(), 30.0);
    outcome(
        worst <= 1e-12 && all && fast,
        format!("max rel |Q − Q0 − Q1| = {worst:.2e} (≤ 1e-12) over 1000 triples, all builtins: {all}, {time}"),
    )
}

fn campaigns() -> Outcome {
    let start = Instant::now();
    let report = run_campaign(&CampaignConfig {
        m: 3,
        n: 4,
        ks: vec![0.0, 0.5, 1.0],
        samples: 10_000,
        seed: 42,
    })
    .unwrap();
    let names = ["q0_nonnegative", "q1_nonnegative", "q1_summands_nonnegative", "rank_one_strict"];
    let mut parts = Vec::new();
    let mut ok = true;
    for name in names {
        let c = report.check(name).unwrap();
        ok &= c.violations == 0 && c.evaluated >= 10_000;
        parts.push(format!("{name}: {}/{} violations", c.violations, c.evaluated));
    }
    let (fast, time) = within(start.elapsed(), 60.0);
    outcome(
        ok && report.pass() && fast,
        format!("{}, all checks clean: {}, {time}", parts.join(", "), report.pass()),
    )
}

fn curvature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = 2 + i % 3;
        let r = [0.7, 1.0, 2.5][i % 3];
        let s = ManifoldModel::round_sphere(m, r).unwrap();
        let chart = i % 2;
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-r..r) / (m as f64).sqrt()).collect();
        let p = ChartPoint::new(chart, &x);
        let b = CurvatureBundle::at(&s, &p).unwrap();
        let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let sec = b.riemann.sectional(&b.metric, &u, &v).unwrap();
        worst = worst.max((sec - 1.0 / (r * r)).abs());
        worst = worst.max((&b.ricci - &b.metric * ((m as f64 - 1.0) / (r * r))).amax());
    }
    let s = ManifoldModel::round_sphere(3, 2.0).unwrap();
    let probes: Vec<ChartPoint> = (0..5).map(|_| ChartPoint::new(0, &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3])).collect();
    let exact: Vec<_> = probes.iter().map(|p| CurvatureBundle::at(&s, p).unwrap()).collect();
    let series: Vec<(f64, f64)> = [0.08, 0.04, 0.02, 0.01]
        .iter()
        .map(|&h| {
            let fd = s.with_derivatives(Derivatives::finite_difference(h));
            let err = probes
                .iter()
                .zip(&exact)
                .map(|(p, e)| {
                    let b = CurvatureBundle::at(&fd, p).unwrap();
                    let dr = b.riemann.as_slice().iter().zip(e.riemann.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    dr.max((&b.ricci - &e.ricci).amax())
                })
                .fold(0.0, f64::max);
            (h, err)
        })
        .collect();
    let table = convergence_table(&series).unwrap();
    outcome(
        worst <= 1e-8 && table.min_order >= 1.9,
        format!("max analytic error {worst:.2e} (≤ 1e-8) at 100 points, FD min order {:.3} (≥ 1.9)", table.min_order),
    )
}

fn bochner() -> Outcome {
    let t = ManifoldModel::flat_torus(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.2])).unwrap();
    let mut torus_worst = 0.0f64;
    for a in [[1.0, 0.0, 0.0, 1.0], [2.0, 1.0, -1.0, 1.0], [0.0, 3.0, 1.0, -2.0]] {
        let map = MapModel::linear_torus(t.clone(), ManifoldModel::standard_torus(2), DMatrix::from_row_slice(2, 2, &a), DVector::from_vec(vec![0.1, 0.7])).unwrap();
        let f = bochner_residual(&map, &GridSpec::periodic_unit(2, 10), BochnerOptions::default()).unwrap();
        torus_worst = torus_worst.max(f.sup_residual);
    }
    let s = ManifoldModel::round_sphere(2, 1.0).unwrap();
    let cross = MapModel::identity_into_chart(s.clone(), s, 1).unwrap();
    let grid = GridSpec::centered(0, &[0.8, 0.5], 0.05, 5);
    let options = BochnerOptions { k: 1.0, ..Default::default() };
    let analytic = bochner_residual(&cross, &grid, options).unwrap().sup_residual;
    let series: Vec<(f64, f64)> = [4e-2, 2e-2, 1e-2, 5e-3]
        .iter()
        .map(|&h| (h, bochner_terms(&cross.with_derivatives(Derivatives::finite_difference(h)), &grid, 1.0).unwrap().sup_residual))
        .collect();
    let table = convergence_table(&series).unwrap();
    outcome(
        torus_worst <= 1e-12 && analytic <= 1e-7 && table.min_order >= 1.9,
        format!(
            "linear torus {torus_worst:.2e} (≤ 1e-12), sphere identity {analytic:.2e} (≤ 1e-7), FD min order {:.3} (≥ 1.9)",
            table.min_order
        ),
    )
}

fn flow_fixture() -> Outcome {
    let cfg = load("flow_torus.toml");
    let start = Instant::now();
    let out = run_experiment(&cfg, cfg.seed.unwrap(), 1.0).unwrap();
    let (fast, time) = within(start.elapsed(), 120.0);
    let r = &out.report;
    let value = |name: &str| r.checks.iter().find(|c| c.name == name).map(|c| (c.value.clone(), c.pass));
    let tau = value("final_sup_tau").unwrap();
    let sff = value("sff_sup").unwrap();
    let verdict = value("verdict").unwrap();
    let csv = &out.files.iter().find(|(n, _)| n == "trajectory.csv").unwrap().1;
    let energies: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let rises = energies.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
    let sff_ok = sff.0.as_f64().is_some_and(|v| v <= 1e-6);
    outcome(
        tau.1 && sff_ok && verdict.1 && rises == 0 && r.error.is_none() && fast,
        format!(
            "64×64: sup|τ| {} (≤ 1e-8), sup|∇dφ| {} (≤ 1e-6), energy rises {rises}, verdict {}, {time}",
            tau.0, sff.0, verdict.0
        ),
    )
}

fn equality_model() -> Outcome {
    let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
    let map = MapModel::identity(unit.scaled(4.0), unit).unwrap();
    let pts = sphere_points();
    let audit = hypothesis_audit(&map, 1.0, &pts, 200, 7, 1e-8).unwrap();
    let v = rigidity_diagnostics(&map, &pts, 1.0, RigidityOptions::default()).unwrap();
    let mu = v.mu.unwrap_or(f64::NAN);
    let kg = v.residuals.kg_check.unwrap_or(f64::INFINITY);
    let sec_res = audit.sec_residual.unwrap_or(f64::INFINITY).abs();
    let ok = audit.pass
        && audit.ricci_min_residual.abs() <= 1e-8
        && sec_res <= 1e-8
        && v.verdict == Verdict::HomotheticImmersion
        && (mu - 0.25).abs() <= 1e-8
        && kg <= 1e-8;
    outcome(
        ok,
        format!(
            "audit pass {} (ricci {:.1e}, sec {:.1e}), verdict {:?}, mu {mu:.12}, |K_g − μK| {kg:.1e}",
            audit.pass, audit.ricci_min_residual, sec_res, v.verdict
        ),
    )
}

fn prescription() -> Outcome {
    let pts = sphere_points();
    let mut he_worst = 0.0f64;
    let mut eq_worst = 0.0f64;
    for m in [2usize, 3] {
        let unit = ManifoldModel::round_sphere(m, 1.0).unwrap();
        let pts_m: Vec<ChartPoint> = pts
            .iter()
            .map(|p| {
                let mut x: Vec<f64> = p.coords.iter().copied().collect();
                x.resize(m, 0.2);
                ChartPoint::new(p.chart, &x)
            })
            .collect();
        for c in [0.5, 1.0, 3.0] {
            let alpha = m as f64 - 1.0;
            let spec = StructureSpec::new(MapModel::identity(unit.scaled(c), unit.clone()).unwrap(), alpha, 0.0).unwrap();
            let he = harmonic_einstein_residual(&spec, &pts_m).unwrap();
            let pr = prescribed_ricci_residual(spec.g(), spec.h(), alpha, &pts_m).unwrap();
            he_worst = he_worst.max(he.sup);
            eq_worst = eq_worst.max(he.values.iter().zip(&pr.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    let mut cons_worst = 0.0f64;
    for f in shipped_fixtures().unwrap().into_iter().filter(|f| f.harmonic) {
        cons_worst = cons_worst.max(conservativity_residual(&f.spec, &f.points).unwrap().sup);
    }
    let unit = ManifoldModel::round_sphere(2, 1.0).unwrap();
    let mut scale_worst = 0.0f64;
    for g in [unit.scaled(2.0), perturbed_sphere(0.1).unwrap()] {
        let probe: Vec<ChartPoint> = pts.iter().filter(|p| p.chart == 0 && p.coords.norm() < 1.2).cloned().collect();
        let base = prescribed_ricci_residual(&g, &unit, 1.0, &probe).unwrap();
        for mu in [0.5, 2.0] {
            let scaled = g.scaled(mu);
            for p in &probe {
                scale_worst = scale_worst.max((ricci(&scaled, p).unwrap() - ricci(&g, p).unwrap()).amax());
            }
            if base.sup <= 1e-8 {
                let other = prescribed_ricci_residual(&scaled, &unit, 1.0, &probe).unwrap();
                scale_worst = scale_worst.max((other.sup - base.sup).abs());
            }
        }
    }
    outcome(
        he_worst <= 1e-8 && eq_worst <= 1e-12 && cons_worst <= 1e-8 && scale_worst <= 1e-10,
        format!(
            "harmonic-Einstein {he_worst:.1e} (≤ 1e-8), equivalence {eq_worst:.1e} (≤ 1e-12), conservativity {cons_worst:.1e} (≤ 1e-8), scale invariance {scale_worst:.1e} (≤ 1e-10)"
        ),
    )
}

fn reproducibility() -> Outcome {
    let mut lemma = load("lemma_campaign.toml");
    lemma.lemma.as_mut().unwrap().samples = 300;
    let runs = [
        ("lemma", lemma),
        ("prescription", load("prescription.toml")),
        ("bochner", load("bochner_sphere.toml")),
        ("curvature", load("curvature_sphere.toml")),
    ];
    let mut mismatches = Vec::new();
    for (name, cfg) in &runs {
        let seed = cfg.seed.unwrap_or(0);
        let a = run_experiment(cfg, seed, 1.0).unwrap();
        let b = run_experiment(cfg, seed, 1.0).unwrap();
        let same_report = strip_timing(&a.report.to_json()).unwrap() == strip_timing(&b.report.to_json()).unwrap();
        if !same_report || a.files != b.files {
            mismatches.push(*name);
        }
    }
    let (_, lemma_cfg) = &runs[0];
    let other = run_experiment(lemma_cfg, 43, 1.0).unwrap();
    let base = run_experiment(lemma_cfg, 42, 1.0).unwrap();
    let seed_matters = strip_timing(&other.report.to_json()).unwrap() != strip_timing(&base.report.to_json()).unwrap();
    outcome(
        mismatches.is_empty() && seed_matters,
        format!("byte-identical reports and artifacts across reruns for 4 experiments (mismatches: {mismatches:?}), seed changes output: {seed_matters}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("algebraic identity", algebraic_identity),
        ("decomposition", decomposition),
        ("sign-lemma campaigns", campaigns),
        ("curvature oracle", curvature_oracle),
        ("Bochner residual", bochner),
        ("flow fixture", flow_fixture),
        ("equality-model rigidity", equality_model),
        ("prescription suite", prescription),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {}: {} - {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
