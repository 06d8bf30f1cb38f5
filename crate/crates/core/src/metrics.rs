//! Mission metrics: efficiency, accuracy, overall score, battery and
//! charging load, plus their CSV forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::ValueMatrix;

pub const DEFAULT_ACCURACY_CAP: f64 = 10.0;

/// Fraction of the required sensing value that was collected.
/// Nothing required counts as fully satisfied.
pub fn efficiency(collected: &ValueMatrix, required: &ValueMatrix) -> f64 {
    assert!(collected.same_shape(required), "field dimensions differ");
    let total = required.sum();
    if total <= 0.0 {
        log::debug!("efficiency of an all-zero requirement taken as 1");
        return 1.0;
    }
    (collected.sum() / total).clamp(0.0, 1.0)
}

/// `sqrt(N·S / Σ(v - V)²)`, capped; a perfect match returns the cap.
pub fn accuracy(collected: &ValueMatrix, required: &ValueMatrix, cap: f64) -> f64 {
    assert!(collected.same_shape(required), "field dimensions differ");
    let sse: f64 = collected
        .as_slice()
        .iter()
        .zip(required.as_slice())
        .map(|(v, r)| (v - r) * (v - r))
        .sum();
    if sse == 0.0 {
        return cap;
    }
    (collected.as_slice().len() as f64 / sse).sqrt().min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub efficiency: f64,
    pub accuracy: f64,
    pub energy: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            accuracy: 1.0,
            energy: 1.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if [self.efficiency, self.accuracy, self.energy].iter().any(|w| !(*w >= 0.0)) {
            return invalid("metric weights must be non-negative");
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            efficiency: self.efficiency * c,
            accuracy: self.accuracy * c,
            energy: self.energy * c,
        }
    }
}

pub fn overall(eff: f64, acc: f64, energy: f64, w: &Weights) -> f64 {
    w.efficiency * eff + w.accuracy * acc - w.energy * energy
}

/// Where a drone's period ended and what it spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    /// 0-based station index.
    pub station: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingReport {
    /// `load[m][t]` in joules.
    pub load: Vec<Vec<f64>>,
    /// `remaining[u][t]` as a battery fraction.
    pub remaining: Vec<Vec<f64>>,
}

/// `landings[t][u]` gives each drone's terminal station and plan energy.
pub fn charging_report(landings: &[Vec<Landing>], stations: usize, capacity: f64) -> Result<ChargingReport> {
    let periods = landings.len();
    let drones = landings.first().map_or(0, Vec::len);
    let mut load = vec![vec![0.0; periods]; stations];
    let mut remaining = vec![vec![0.0; periods]; drones];
    for (t, row) in landings.iter().enumerate() {
        if row.len() != drones {
            return invalid(format!("period {} lists {} drones, expected {drones}", t + 1, row.len()));
        }
        for (u, l) in row.iter().enumerate() {
            if l.station >= stations {
                return invalid(format!("drone {} lands at unknown station {}", u + 1, l.station + 1));
            }
            load[l.station][t] += l.energy * capacity;
            remaining[u][t] = (1.0 - l.energy).clamp(0.0, 1.0);
        }
    }
    Ok(ChargingReport { load, remaining })
}

/// Everything measured in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMetrics {
    /// 1-based period within the evaluated episode.
    pub period: usize,
    pub efficiency: f64,
    pub accuracy: f64,
    /// Per drone plan energy as a battery fraction.
    pub energy: Vec<f64>,
    pub reward: Vec<f64>,
    pub remaining_battery: Vec<f64>,
    /// Per station joules drawn.
    pub charging_load: Vec<f64>,
}

impl PeriodMetrics {
    pub fn compute(
        period: usize,
        collected: &ValueMatrix,
        required: &ValueMatrix,
        landings: &[Landing],
        stations: usize,
        capacity: f64,
        cap: f64,
        weights: &Weights,
    ) -> Result<Self> {
        let efficiency = efficiency(collected, required);
        let accuracy = accuracy(collected, required, cap);
        let report = charging_report(&[landings.to_vec()], stations, capacity)?;
        let energy: Vec<f64> = landings.iter().map(|l| l.energy).collect();
        Ok(Self {
            period,
            efficiency,
            accuracy,
            reward: energy.iter().map(|&e| overall(efficiency, accuracy, e, weights)).collect(),
            remaining_battery: report.remaining.iter().map(|r| r[0]).collect(),
            charging_load: report.load.iter().map(|l| l[0]).collect(),
            energy,
        })
    }

    pub fn mean_energy(&self) -> f64 {
        mean(&self.energy)
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.reward)
    }

    pub fn mean_remaining(&self) -> f64 {
        mean(&self.remaining_battery)
    }

    /// Swarm total of the per-drone overall score.
    pub fn overall_sum(&self) -> f64 {
        self.reward.iter().sum()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub const METRICS_HEADER: [&str; 9] = [
    "method",
    "seed",
    "period",
    "drone",
    "eff",
    "acc",
    "energy",
    "reward",
    "battery_remaining",
];
pub const STATION_HEADER: [&str; 5] = ["method", "seed", "period", "station", "load_joules"];

/// One row of the per-drone metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub seed: u64,
    pub period: usize,
    pub drone: usize,
    pub eff: f64,
    pub acc: f64,
    pub energy: f64,
    pub reward: f64,
    pub battery_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRow {
    pub method: String,
    pub seed: u64,
    pub period: usize,
    pub station: usize,
    pub load_joules: f64,
}

pub fn metrics_rows(method: &str, seed: u64, periods: &[PeriodMetrics]) -> Vec<MetricsRow> {
    periods
        .iter()
        .flat_map(|p| {
            (0..p.energy.len()).map(move |u| MetricsRow {
                method: method.to_string(),
                seed,
                period: p.period,
                drone: u + 1,
                eff: p.efficiency,
                acc: p.accuracy,
                energy: p.energy[u],
                reward: p.reward[u],
                battery_remaining: p.remaining_battery[u],
            })
        })
        .collect()
}

pub fn station_rows(method: &str, seed: u64, periods: &[PeriodMetrics]) -> Vec<StationRow> {
    periods
        .iter()
        .flat_map(|p| {
            p.charging_load.iter().enumerate().map(move |(m, &l)| StationRow {
                method: method.to_string(),
                seed,
                period: p.period,
                station: m + 1,
                load_joules: l,
            })
        })
        .collect()
}

/// Write headered rows, preceded by a `# config_hash=<hash>` line if given.
pub fn write_rows<R: Serialize>(mut out: impl Write, hash: Option<&str>, rows: &[R], header: &[&str]) -> Result<()> {
    if let Some(h) = hash {
        writeln!(out, "# config_hash={h}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A CSV table with its optional leading hash comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub hash: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(mut input: impl Read) -> Result<Table> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let hash = text
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash=").map(|h| h.trim().to_string()));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Table { hash, header, rows })
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                path: Default::default(),
                message: format!("missing column `{name}`"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: &[f64]) -> ValueMatrix {
        ValueMatrix::from_vec(2, 2, v.to_vec())
    }

    #[test]
    fn efficiency_examples() {
        let req = m(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(efficiency(&req, &req), 1.0);
        assert_eq!(efficiency(&ValueMatrix::zeros(2, 2), &req), 0.0);
        assert_eq!(efficiency(&m(&[1.0, 0.0, 0.0, 4.0]), &req), 0.5);
        assert_eq!(efficiency(&ValueMatrix::zeros(2, 2), &ValueMatrix::zeros(2, 2)), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let req = m(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(accuracy(&req, &req, 10.0), 10.0);
        // Σ(v - V)² = 4 over N·S = 4 entries.
        assert_eq!(accuracy(&m(&[0.0, 1.0, 2.0, 3.0]), &req, 10.0), 1.0);
        // Doubling every mismatch halves the accuracy.
        assert_eq!(accuracy(&m(&[-1.0, 0.0, 1.0, 2.0]), &req, 10.0), 0.5);
    }

    #[test]
    fn overall_examples() {
        let w = Weights::default();
        assert_eq!(overall(1.0, 2.0, 0.5, &w), 2.5);
        assert_eq!(overall(1.0, 2.0, 0.5, &w.scaled(0.0)), 0.0);
        assert_eq!(overall(1.0, 2.0, 0.5, &w.scaled(3.0)), 7.5);
    }

    #[test]
    fn charging_examples() {
        let landings = vec![vec![
            Landing { station: 1, energy: 0.7 },
            Landing { station: 1, energy: 0.2 },
        ]];
        let r = charging_report(&landings, 3, 1000.0).unwrap();
        assert_eq!(r.load, vec![vec![0.0], vec![900.0], vec![0.0]]);
        assert!((r.remaining[0][0] - 0.3).abs() < 1e-12);
        assert!(charging_report(&[vec![Landing { station: 3, energy: 0.1 }]], 3, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_with_hash() {
        let p = PeriodMetrics::compute(
            1,
            &m(&[1.0, 0.0, 0.0, 0.0]),
            &m(&[1.0, 1.0, 0.0, 0.0]),
            &[Landing { station: 0, energy: 0.25 }],
            2,
            100.0,
            10.0,
            &Weights::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_rows(&mut buf, Some("abc"), &metrics_rows("greedy", 7, &[p.clone()]), &METRICS_HEADER).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash=abc\nmethod,seed,period,drone,eff,acc,energy,reward,battery_remaining\n"));
        let t = read_table(buf.as_slice()).unwrap();
        assert_eq!(t.hash.as_deref(), Some("abc"));
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][0], "greedy");
        let mut buf = Vec::new();
        write_rows(&mut buf, None, &station_rows("greedy", 7, &[p]), &STATION_HEADER).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,seed,period,station,load_joules\ngreedy,7,1,1,25.0\ngreedy,7,1,2,0.0\n"
        );
    }

    #[test]
    fn std_oracle() {
        assert_eq!(sample_std(&[2.0, 2.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn efficiency_in_unit_interval(req in prop::collection::vec(0.0f64..10.0, 4), frac in prop::collection::vec(0.0f64..=1.0, 4)) {
            let r = m(&req);
            let c = m(&req.iter().zip(&frac).map(|(a, f)| a * f).collect::<Vec<_>>());
            let e = efficiency(&c, &r);
            prop_assert!((0.0..=1.0).contains(&e));
        }

        #[test]
        fn load_is_conserved(rows in prop::collection::vec(prop::collection::vec((0usize..4, 0.0f64..1.0), 3), 1..6)) {
            let landings: Vec<Vec<Landing>> = rows.iter()
                .map(|r| r.iter().map(|&(station, energy)| Landing { station, energy }).collect())
                .collect();
            let r = charging_report(&landings, 4, 159_840.0).unwrap();
            for (t, row) in landings.iter().enumerate() {
                let load: f64 = r.load.iter().map(|l| l[t]).sum();
                let drawn: f64 = row.iter().map(|l| l.energy * 159_840.0).sum();
                prop_assert!((load - drawn).abs() <= 1e-9 * drawn.max(1.0));
            }
        }
    }
}
