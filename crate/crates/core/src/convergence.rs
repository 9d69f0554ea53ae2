//! Observed convergence orders from `(h, residual)` series.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub residual: f64,
    /// `log(rᵢ₋₁/rᵢ) / log(hᵢ₋₁/hᵢ)`; absent on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub final_order: f64,
    pub min_order: f64,
}

pub fn convergence_table(series: &[(f64, f64)]) -> Result<ConvergenceTable> {
    if series.len() < 3 {
        return Err(Error::Invalid(format!("convergence table needs at least 3 entries, got {}", series.len())));
    }
    for w in series.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(Error::Invalid(format!("step sizes must strictly decrease, got {} then {}", w[0].0, w[1].0)));
        }
    }
    if let Some(&(h, r)) = series.iter().find(|(h, r)| !(*h > 0.0) || !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Invalid(format!("steps and residuals must be positive and finite, got ({h}, {r})")));
    }
    let mut rows = Vec::with_capacity(series.len());
    for (i, &(h, residual)) in series.iter().enumerate() {
        let order = (i > 0).then(|| {
            let (h0, r0) = series[i - 1];
            (r0 / residual).ln() / (h0 / h).ln()
        });
        rows.push(ConvergenceRow { h, residual, order });
    }
    let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
    Ok(ConvergenceTable {
        final_order: *orders.last().unwrap_or(&f64::NAN),
        min_order: orders.iter().copied().fold(f64::INFINITY, f64::min),
        rows,
    })
}

impl ConvergenceTable {
    /// CSV with columns `h,residual,observed_order` and a closing summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,residual,observed_order\n");
        for r in &self.rows {
            let order = r.order.map(|o| format!("{o:.6}")).unwrap_or_default();
            out.push_str(&format!("{:e},{:e},{}\n", r.h, r.residual, order));
        }
        out.push_str(&format!("summary,min_order={:.6},final_order={:.6}\n", self.min_order, self.final_order));
        out
    }
}
