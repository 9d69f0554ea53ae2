//! Experiment configuration files.
//!
//! One experiment per TOML file. Unknown keys are rejected everywhere so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Curvature,
    Bochner,
    LemmaCampaign,
    Flow,
    Prescription,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Curvature => "curvature",
            ExperimentKind::Bochner => "bochner",
            ExperimentKind::LemmaCampaign => "lemma-campaign",
            ExperimentKind::Flow => "flow",
            ExperimentKind::Prescription => "prescription",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory; `--out` wins.
    #[serde(default)]
    pub output: Option<String>,
    /// Overrides for named tolerances, before `--tol-scale`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub curvature: Option<CurvatureExperiment>,
    #[serde(default)]
    pub bochner: Option<BochnerExperiment>,
    #[serde(default)]
    pub lemma: Option<LemmaExperiment>,
    #[serde(default)]
    pub flow: Option<FlowExperiment>,
    #[serde(default)]
    pub prescription: Option<PrescriptionExperiment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKindName {
    FlatTorus,
    RoundSphere,
    HyperbolicDisk,
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: ManifoldKindName,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Sphere radius.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Hyperbolic disk scale.
    #[serde(default)]
    pub scale: Option<f64>,
    /// Torus lattice basis, one row per basis vector.
    #[serde(default)]
    pub lattice: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub factors: Option<Vec<ManifoldConfig>>,
    /// Constant factor on the metric.
    #[serde(default)]
    pub metric_scale: Option<f64>,
    /// Use central differences with this step instead of analytic jets.
    #[serde(default)]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKindName {
    Identity,
    IdentityIntoChart,
    Constant,
    LinearTorus,
    TorusSine,
    EquatorInclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub kind: MapKindName,
    /// Target chart for `identity-into-chart`, or chart of `point`.
    #[serde(default)]
    pub chart: Option<usize>,
    /// Linear part `A`, one row per target coordinate.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Image of a constant map.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    /// Radius for `equator-inclusion`.
    #[serde(default)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureExperiment {
    pub manifold: ManifoldConfig,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_one")]
    pub planes_per_point: usize,
    /// Points are drawn uniformly from this coordinate ball in chart 0.
    #[serde(default = "default_point_radius")]
    pub point_radius: f64,
    /// Finite-difference steps for the convergence sweep, decreasing.
    #[serde(default)]
    pub fd_steps: Vec<f64>,
    #[serde(default = "default_min_order")]
    pub min_order: f64,
    /// Optional `sec ≤ K` audit.
    #[serde(default)]
    pub sec_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum GridConfig {
    Periodic { n: usize },
    Centered { chart: usize, center: Vec<f64>, spacing: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BochnerExperiment {
    pub source: ManifoldConfig,
    pub target: ManifoldConfig,
    pub map: MapConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub fd_steps: Vec<f64>,
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaExperiment {
    pub m: usize,
    pub n: usize,
    pub ks: Vec<f64>,
    /// Samples per value of `K`.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictName {
    ConstantMap,
    HomotheticImmersion,
    TotallyGeodesic,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowExperiment {
    /// Source lattice rows; the standard square torus when absent.
    #[serde(default)]
    pub lattice: Option<Vec<Vec<f64>>>,
    pub target: ManifoldConfig,
    pub map: MapConfig,
    pub resolution: usize,
    /// Time step; defaults to `dt_fraction` times the stability bound.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub dt_fraction: Option<f64>,
    pub max_steps: usize,
    pub tau_tol: f64,
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default = "default_true")]
    pub energy_monitor: bool,
    /// Curvature bound for the rigidity criteria.
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub expect_verdict: Option<VerdictName>,
    /// Write every n-th trajectory row to the CSV (the last row always).
    #[serde(default = "default_one")]
    pub trajectory_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptionExperiment {
    /// Include the built-in harmonic-Einstein fixtures.
    #[serde(default)]
    pub shipped: bool,
    #[serde(default)]
    pub structures: Vec<StructureConfig>,
    #[serde(default = "default_scale_factors")]
    pub scale_factors: Vec<f64>,
    #[serde(default = "default_audit_planes")]
    pub audit_planes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub name: String,
    pub g: ManifoldConfig,
    pub h: ManifoldConfig,
    pub map: MapConfig,
    pub alpha: f64,
    #[serde(default)]
    pub lambda: f64,
    /// `sphere`, `torus`, or explicit points.
    pub points: PointsConfig,
    /// Whether `φ` is expected to be harmonic.
    #[serde(default = "default_true")]
    pub harmonic: bool,
    /// Whether the structure is expected to be harmonic-Einstein.
    #[serde(default = "default_true")]
    pub einstein: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsConfig {
    Preset(String),
    Explicit(Vec<PointConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    #[serde(default)]
    pub chart: usize,
    pub coords: Vec<f64>,
}

fn default_points() -> usize {
    100
}

fn default_one() -> usize {
    1
}

fn default_point_radius() -> f64 {
    0.5
}

fn default_min_order() -> f64 {
    1.9
}

fn default_true() -> bool {
    true
}

fn default_scale_factors() -> Vec<f64> {
    vec![0.5, 2.0]
}

fn default_audit_planes() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Field-level checks that need no engine.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sections = [
            (ExperimentKind::Curvature, "curvature", self.curvature.is_some()),
            (ExperimentKind::Bochner, "bochner", self.bochner.is_some()),
            (ExperimentKind::LemmaCampaign, "lemma", self.lemma.is_some()),
            (ExperimentKind::Flow, "flow", self.flow.is_some()),
            (ExperimentKind::Prescription, "prescription", self.prescription.is_some()),
        ];
        for (kind, section, present) in sections {
            if kind == self.experiment && !present {
                return Err(ConfigError(format!("experiment `{}` needs a [{section}] section", kind.name())));
            }
        }
        for (kind, section, present) in sections {
            if kind != self.experiment && present {
                return Err(ConfigError(format!(
                    "section [{section}] does not belong to experiment `{}`",
                    self.experiment.name()
                )));
            }
        }
        for (name, v) in &self.tolerances {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(ConfigError(format!("tolerances.{name} must be finite and non-negative, got {v}")));
            }
        }
        if let Some(c) = &self.curvature {
            positive("curvature.point_radius", c.point_radius)?;
            nonzero("curvature.points", c.points)?;
            nonzero("curvature.planes_per_point", c.planes_per_point)?;
            decreasing("curvature.fd_steps", &c.fd_steps)?;
        }
        if let Some(b) = &self.bochner {
            decreasing("bochner.fd_steps", &b.fd_steps)?;
            if let GridConfig::Centered { spacing, .. } = b.grid {
                positive("bochner.grid.spacing", spacing)?;
            }
        }
        if let Some(l) = &self.lemma {
            nonzero("lemma.samples", l.samples)?;
            if l.ks.is_empty() {
                return Err(ConfigError("lemma.ks must list at least one bound".into()));
            }
            for k in &l.ks {
                if !(*k >= 0.0) || !k.is_finite() {
                    return Err(ConfigError(format!("lemma.ks entries must be finite and non-negative, got {k}")));
                }
            }
        }
        if let Some(f) = &self.flow {
            if let Some(dt) = f.dt {
                positive("flow.dt", dt)?;
            }
            if let Some(frac) = f.dt_fraction {
                positive("flow.dt_fraction", frac)?;
                if frac > 1.0 {
                    return Err(ConfigError(format!("flow.dt_fraction must be at most 1, got {frac}")));
                }
            }
            if f.dt.is_some() && f.dt_fraction.is_some() {
                return Err(ConfigError("flow.dt and flow.dt_fraction are mutually exclusive".into()));
            }
            positive("flow.tau_tol", f.tau_tol)?;
            nonzero("flow.max_steps", f.max_steps)?;
            nonzero("flow.trajectory_stride", f.trajectory_stride)?;
            if f.resolution < 3 {
                return Err(ConfigError(format!("flow.resolution must be at least 3, got {}", f.resolution)));
            }
            if !(f.perturbation >= 0.0) {
                return Err(ConfigError(format!("flow.perturbation must be non-negative, got {}", f.perturbation)));
            }
        }
        if let Some(p) = &self.prescription {
            if !p.shipped && p.structures.is_empty() {
                return Err(ConfigError("prescription needs `shipped = true` or at least one structure".into()));
            }
            for s in &p.structures {
                if s.alpha == 0.0 || !s.alpha.is_finite() {
                    return Err(ConfigError(format!("prescription.structures.{}.alpha must be non-zero", s.name)));
                }
            }
            for mu in &p.scale_factors {
                positive("prescription.scale_factors", *mu)?;
            }
            nonzero("prescription.audit_planes", p.audit_planes)?;
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError(format!("{field} must be positive, got {v}")))
    }
}

fn nonzero(field: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(ConfigError(format!("{field} must be positive")))
    }
}

fn decreasing(field: &str, steps: &[f64]) -> Result<(), ConfigError> {
    for &h in steps {
        positive(field, h)?;
    }
    if !steps.is_empty() && steps.len() < 3 {
        return Err(ConfigError(format!("{field} needs at least 3 entries for an order estimate")));
    }
    if steps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ConfigError(format!("{field} must be strictly decreasing")));
    }
    Ok(())
}
