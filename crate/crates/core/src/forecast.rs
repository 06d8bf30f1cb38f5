//! Sensing-value forecasting and percentile-based target pruning.
//!
//! Prediction for period `t` of an episode with `T` periods weights each
//! past observation by its episode-relative recency:
//! `V̂(t) = Σ_{t'=1..t} (T - t + t') · ω · V'(t')`, with one `ω` per
//! cell-slot fitted by one-dimensional least squares.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collective::TargetMatrix;
use crate::error::{invalid, Result};
use crate::matrix::{CountMatrix, ValueMatrix};

/// Fitted coefficients stay inside `(CLAMP, 1 - CLAMP)`.
pub const CLAMP: f64 = 1e-3;
/// Coefficient used where the regressor is identically zero.
pub const DEFAULT_OMEGA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    omega: ValueMatrix,
}

/// Recency weight of observation `t_prime` when predicting period `t`.
pub fn weight(t: usize, t_prime: usize, periods: usize) -> f64 {
    debug_assert!(t_prime >= 1 && t_prime <= t);
    (periods + t_prime - t) as f64
}

/// Weighted history sum at one entry; multiplying by `ω` gives the forecast.
fn regressor(history: &[ValueMatrix], periods: usize, cell: usize, slot: usize) -> f64 {
    let t = history.len();
    history
        .iter()
        .enumerate()
        .map(|(i, h)| weight(t, i + 1, periods) * h.get(cell, slot))
        .sum()
}

/// One training sample: observations for periods `1..=t` and the realized
/// field of period `t + 1`.
#[derive(Debug, Clone)]
pub struct FitSample<'a> {
    pub history: &'a [ValueMatrix],
    pub realized: &'a ValueMatrix,
}

impl Forecaster {
    pub fn uniform(cells: usize, slots: usize, omega: f64) -> Self {
        assert!(omega > 0.0 && omega < 1.0, "coefficient must lie in (0, 1)");
        Self {
            omega: ValueMatrix::filled(cells, slots, omega),
        }
    }

    pub fn from_coefficients(omega: ValueMatrix) -> Result<Self> {
        if omega.as_slice().iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return invalid("forecast coefficients must lie strictly inside (0, 1)");
        }
        Ok(Self { omega })
    }

    pub fn coefficients(&self) -> &ValueMatrix {
        &self.omega
    }

    /// Least-squares fit per cell-slot, clamped into `(CLAMP, 1 - CLAMP)`.
    pub fn fit(cells: usize, slots: usize, periods: usize, samples: &[FitSample<'_>]) -> Result<Self> {
        if samples.is_empty() {
            return invalid("forecast fit needs at least one training sample");
        }
        for s in samples {
            if s.history.is_empty() || s.history.len() > periods {
                return invalid(format!(
                    "training history of {} periods does not fit an episode of {periods}",
                    s.history.len()
                ));
            }
            if s.history.iter().chain([s.realized]).any(|m| m.cells() != cells || m.slots() != slots) {
                return invalid("training field dimensions disagree");
            }
        }
        let mut omega = ValueMatrix::zeros(cells, slots);
        for n in 0..cells {
            for s in 0..slots {
                let (mut xy, mut xx) = (0.0, 0.0);
                for sample in samples {
                    let x = regressor(sample.history, periods, n, s);
                    xy += x * sample.realized.get(n, s);
                    xx += x * x;
                }
                let w = if xx > 0.0 { xy / xx } else { DEFAULT_OMEGA };
                omega.set(n, s, w.clamp(CLAMP, 1.0 - CLAMP));
            }
        }
        Ok(Self { omega })
    }

    /// Forecast for period `history.len()` of an episode with `periods`
    /// periods. An empty history predicts zero everywhere.
    pub fn predict(&self, history: &[ValueMatrix], periods: usize) -> Result<ValueMatrix> {
        let (cells, slots) = (self.omega.cells(), self.omega.slots());
        if history.len() > periods {
            return invalid(format!("history of {} periods exceeds the episode length {periods}", history.len()));
        }
        if history.iter().any(|h| h.cells() != cells || h.slots() != slots) {
            return invalid("history dimensions disagree with the forecaster");
        }
        let mut out = ValueMatrix::zeros(cells, slots);
        for n in 0..cells {
            for s in 0..slots {
                out.set(n, s, self.omega.get(n, s) * regressor(history, periods, n, s));
            }
        }
        Ok(out)
    }
}

/// Percentile with linear interpolation between order statistics
/// (rank `q/100 * (len - 1)`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    assert!((0.0..=100.0).contains(&q));
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Threshold below which visited entries are pruned from the target.
pub fn threshold(predicted: &ValueMatrix, drones: usize) -> Result<f64> {
    let cells = predicted.cells();
    if drones > cells {
        return invalid(format!("{drones} drones exceed {cells} cells"));
    }
    let q = 100.0 * (1.0 - drones as f64 / cells as f64);
    Ok(percentile(predicted.as_slice(), q))
}

/// Switch off `r[n][s]` where the collected value is below the threshold and
/// the swarm sensed there. Entries are never switched back on.
pub fn update_target(
    target: &mut TargetMatrix,
    predicted: &ValueMatrix,
    collected: &ValueMatrix,
    global: &CountMatrix,
    drones: usize,
) -> Result<f64> {
    if !predicted.same_shape(collected) || !global.same_shape(target.matrix()) || !predicted.same_shape(global) {
        return invalid("target update inputs disagree in dimension");
    }
    let bar = threshold(predicted, drones)?;
    for (cell, slot, _) in global.indexed() {
        if collected.get(cell, slot) < bar && global.get(cell, slot) > 0 {
            target.clear(cell, slot);
        }
    }
    Ok(bar)
}

/// `period,cell,slot,predicted,collected,target` with 1-based indices.
pub fn write_snapshot_csv(
    out: impl Write,
    period: usize,
    predicted: &ValueMatrix,
    collected: &ValueMatrix,
    target: &TargetMatrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "cell", "slot", "predicted", "collected", "target"])?;
    for (n, s, _) in predicted.indexed() {
        w.write_record(&[
            period.to_string(),
            (n + 1).to_string(),
            (s + 1).to_string(),
            predicted.get(n, s).to_string(),
            collected.get(n, s).to_string(),
            target.get(n, s).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_snapshot_csv(
    path: impl AsRef<Path>,
    period: usize,
    predicted: &ValueMatrix,
    collected: &ValueMatrix,
    target: &TargetMatrix,
) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot_csv(f, period, predicted, collected, target)
}
