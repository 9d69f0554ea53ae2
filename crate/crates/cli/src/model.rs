//! Builds engine models from config blocks.

use harmonic_core::manifold::Derivatives;
use harmonic_core::map::MapModel;
use harmonic_core::{ChartPoint, ManifoldModel};
use nalgebra::{DMatrix, DVector};

use crate::config::{ManifoldConfig, ManifoldKindName, MapConfig, MapKindName, PointConfig, PointsConfig};
use crate::ConfigError;

fn engine(field: &str) -> impl Fn(harmonic_core::Error) -> ConfigError + '_ {
    move |e| ConfigError(format!("{field}: {e}"))
}

/// Rows of a config matrix as an `r×c` matrix.
pub fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(ConfigError(format!("{field} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Lattice rows are basis vectors; the engine stores them as columns.
pub fn lattice(field: &str, rows: &[Vec<f64>]) -> Result<ManifoldModel, ConfigError> {
    let b = matrix(field, rows)?.transpose();
    ManifoldModel::flat_torus(b).map_err(engine(field))
}

pub fn manifold(field: &str, cfg: &ManifoldConfig) -> Result<ManifoldModel, ConfigError> {
    let dim = |default: Option<usize>| {
        cfg.dim
            .or(default)
            .filter(|d| *d > 0)
            .ok_or_else(|| ConfigError(format!("{field}.dim must be a positive integer")))
    };
    let unexpected = |name: &str, present: bool| {
        if present {
            Err(ConfigError(format!("{field}.{name} does not apply to {:?}", cfg.kind)))
        } else {
            Ok(())
        }
    };
    let base = match cfg.kind {
        ManifoldKindName::FlatTorus => {
            unexpected("radius", cfg.radius.is_some())?;
            unexpected("scale", cfg.scale.is_some())?;
            unexpected("factors", cfg.factors.is_some())?;
            match &cfg.lattice {
                Some(rows) => {
                    let m = lattice(&format!("{field}.lattice"), rows)?;
                    if cfg.dim.is_some_and(|d| d != m.dim()) {
                        return Err(ConfigError(format!("{field}.dim disagrees with the lattice")));
                    }
                    m
                }
                None => ManifoldModel::standard_torus(dim(Some(2))?),
            }
        }
        ManifoldKindName::RoundSphere => {
            unexpected("lattice", cfg.lattice.is_some())?;
            unexpected("scale", cfg.scale.is_some())?;
            unexpected("factors", cfg.factors.is_some())?;
            ManifoldModel::round_sphere(dim(Some(2))?, cfg.radius.unwrap_or(1.0)).map_err(engine(field))?
        }
        ManifoldKindName::HyperbolicDisk => {
            unexpected("lattice", cfg.lattice.is_some())?;
            unexpected("radius", cfg.radius.is_some())?;
            unexpected("factors", cfg.factors.is_some())?;
            ManifoldModel::hyperbolic_disk(dim(Some(2))?, cfg.scale.unwrap_or(1.0)).map_err(engine(field))?
        }
        ManifoldKindName::Product => {
            unexpected("lattice", cfg.lattice.is_some())?;
            unexpected("radius", cfg.radius.is_some())?;
            unexpected("scale", cfg.scale.is_some())?;
            let factors = cfg.factors.as_deref().unwrap_or_default();
            if factors.len() != 2 {
                return Err(ConfigError(format!("{field}.factors must list exactly two manifolds")));
            }
            let a = manifold(&format!("{field}.factors[0]"), &factors[0])?;
            let b = manifold(&format!("{field}.factors[1]"), &factors[1])?;
            let m = ManifoldModel::product(a, b);
            if cfg.dim.is_some_and(|d| d != m.dim()) {
                return Err(ConfigError(format!("{field}.dim disagrees with the factors")));
            }
            m
        }
    };
    let mut out = base;
    if let Some(c) = cfg.metric_scale {
        if !(c > 0.0) || !c.is_finite() {
            return Err(ConfigError(format!("{field}.metric_scale must be positive, got {c}")));
        }
        out = out.scaled(c);
    }
    if let Some(h) = cfg.fd_step {
        if !(h > 0.0) || !h.is_finite() {
            return Err(ConfigError(format!("{field}.fd_step must be positive, got {h}")));
        }
        out = out.with_derivatives(Derivatives::finite_difference(h));
    }
    Ok(out)
}

pub fn map(field: &str, cfg: &MapConfig, source: ManifoldModel, target: ManifoldModel) -> Result<MapModel, ConfigError> {
    let (m, n) = (source.dim(), target.dim());
    let linear = |default_identity: bool| -> Result<(DMatrix<f64>, DVector<f64>), ConfigError> {
        let a = match &cfg.matrix {
            Some(rows) => matrix(&format!("{field}.matrix"), rows)?,
            None if default_identity && m == n => DMatrix::identity(n, m),
            None => return Err(ConfigError(format!("{field}.matrix is required"))),
        };
        if a.shape() != (n, m) {
            return Err(ConfigError(format!("{field}.matrix must be {n}×{m}, got {}×{}", a.nrows(), a.ncols())));
        }
        let b = match &cfg.offset {
            Some(v) if v.len() == n => DVector::from_column_slice(v),
            Some(v) => return Err(ConfigError(format!("{field}.offset must have {n} entries, got {}", v.len()))),
            None => DVector::zeros(n),
        };
        Ok((a, b))
    };
    let built = match cfg.kind {
        MapKindName::Identity => MapModel::identity(source, target),
        MapKindName::IdentityIntoChart => MapModel::identity_into_chart(source, target, cfg.chart.unwrap_or(0)),
        MapKindName::Constant => {
            let p = cfg
                .point
                .as_ref()
                .ok_or_else(|| ConfigError(format!("{field}.point is required for a constant map")))?;
            MapModel::constant(source, target, ChartPoint::new(cfg.chart.unwrap_or(0), p))
        }
        MapKindName::LinearTorus => {
            let (a, b) = linear(false)?;
            MapModel::linear_torus(source, target, a, b)
        }
        MapKindName::TorusSine => {
            let (a, b) = linear(true)?;
            MapModel::torus_sine(source, target, a, b, cfg.amplitude.unwrap_or(0.0))
        }
        MapKindName::EquatorInclusion => {
            let r = cfg.radius.unwrap_or(1.0);
            MapModel::equator_inclusion(r)
        }
    };
    built.map_err(engine(field))
}

pub fn points(field: &str, cfg: &PointsConfig) -> Result<Vec<ChartPoint>, ConfigError> {
    match cfg {
        PointsConfig::Preset(name) => match name.as_str() {
            "sphere" => Ok(harmonic_core::prescription::sphere_points()),
            "torus" => Ok(harmonic_core::prescription::torus_points()),
            other => Err(ConfigError(format!("{field}: unknown point preset `{other}` (expected sphere or torus)"))),
        },
        PointsConfig::Explicit(list) if list.is_empty() => Err(ConfigError(format!("{field} must not be empty"))),
        PointsConfig::Explicit(list) => Ok(list.iter().map(|PointConfig { chart, coords }| ChartPoint::new(*chart, coords)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ManifoldKindName) -> ManifoldConfig {
        ManifoldConfig {
            kind,
            dim: None,
            radius: None,
            scale: None,
            lattice: None,
            factors: None,
            metric_scale: None,
            fd_step: None,
        }
    }

    #[test]
    fn builds_each_kind() {
        let s = manifold("m", &ManifoldConfig { radius: Some(2.0), ..cfg(ManifoldKindName::RoundSphere) }).unwrap();
        assert_eq!(s.constant_curvature(), Some(0.25));
        let t = manifold("m", &ManifoldConfig { lattice: Some(vec![vec![1.0, 0.0], vec![0.5, 1.0]]), ..cfg(ManifoldKindName::FlatTorus) }).unwrap();
        assert!(t.is_flat());
        let p = manifold(
            "m",
            &ManifoldConfig {
                factors: Some(vec![cfg(ManifoldKindName::RoundSphere), cfg(ManifoldKindName::HyperbolicDisk)]),
                ..cfg(ManifoldKindName::Product)
            },
        )
        .unwrap();
        assert_eq!(p.dim(), 4);
    }

    #[test]
    fn rejects_misplaced_fields() {
        let err = manifold("target", &ManifoldConfig { radius: Some(1.0), ..cfg(ManifoldKindName::FlatTorus) }).unwrap_err();
        assert!(err.0.contains("target.radius"));
        let err = manifold("g", &ManifoldConfig { metric_scale: Some(-1.0), ..cfg(ManifoldKindName::RoundSphere) }).unwrap_err();
        assert!(err.0.contains("g.metric_scale"));
    }
}
