//! World model: grid geometry, time structure, charging stations, drone fleet
//! and the required-sensing-value tensor.
//!
//! Cells, stations, drones, periods and slots are 0-based inside the library.
//! File formats use 1-based indices.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::ValueMatrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStructure {
    /// Periods per episode (T).
    pub periods: usize,
    /// Timeslots per period (S).
    pub slots: usize,
    /// Seconds per timeslot.
    pub slot_duration: f64,
    /// Periods of traffic data available (training + held-out), `>= periods`.
    pub horizon: usize,
}

impl TimeStructure {
    pub fn new(periods: usize, slots: usize, slot_duration: f64, horizon: usize) -> Result<Self> {
        let t = Self {
            periods,
            slots,
            slot_duration,
            horizon,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 || self.slots == 0 {
            return invalid("periods and slots must be >= 1");
        }
        if !(self.slot_duration > 0.0) {
            return invalid("slot_duration must be positive");
        }
        if self.horizon < self.periods {
            return invalid(format!(
                "horizon ({}) shorter than an episode ({})",
                self.horizon, self.periods
            ));
        }
        Ok(())
    }

    pub fn mission_slots(&self) -> usize {
        self.periods * self.slots
    }

    pub fn period_seconds(&self) -> f64 {
        self.slots as f64 * self.slot_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub id: usize,
    pub coord: Coord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cell_size: f64,
    stations: Vec<Station>,
}

impl GridMap {
    pub fn new(rows: usize, cols: usize, cell_size: f64, stations: &[Coord]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("grid must have at least one row and column");
        }
        if !(cell_size > 0.0) {
            return invalid("cell_size must be positive");
        }
        if stations.is_empty() {
            return invalid("at least one charging station is required");
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in stations {
            if c.row >= rows || c.col >= cols {
                return invalid(format!(
                    "station at ({}, {}) outside {rows}x{cols} grid",
                    c.row + 1,
                    c.col + 1
                ));
            }
            if !seen.insert(*c) {
                return invalid(format!("two stations share cell ({}, {})", c.row + 1, c.col + 1));
            }
        }
        Ok(Self {
            rows,
            cols,
            cell_size,
            stations: stations
                .iter()
                .enumerate()
                .map(|(id, &coord)| Station { id, coord })
                .collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    /// Row-major cell index.
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(c.row < self.rows && c.col < self.cols);
        c.row * self.cols + c.col
    }

    pub fn coord(&self, cell: usize) -> Coord {
        debug_assert!(cell < self.cell_count());
        Coord::new(cell / self.cols, cell % self.cols)
    }

    pub fn contains(&self, cell: usize) -> bool {
        cell < self.cell_count()
    }

    pub fn station_cell(&self, station: usize) -> usize {
        self.index(self.stations[station].coord)
    }

    /// Station whose cell is `cell`, if any.
    pub fn station_at(&self, cell: usize) -> Option<usize> {
        self.stations
            .iter()
            .find(|s| self.index(s.coord) == cell)
            .map(|s| s.id)
    }

    /// Distance between cell centres in cell units.
    pub fn cell_units(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.coord(a), self.coord(b));
        let dr = pa.row as f64 - pb.row as f64;
        let dc = pa.col as f64 - pb.col as f64;
        (dr * dr + dc * dc).sqrt()
    }

    /// Euclidean distance in meters between the centres of two cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> Result<f64> {
        if !self.contains(a) || !self.contains(b) {
            return invalid(format!(
                "cell id out of range (a={}, b={}, N={})",
                a + 1,
                b + 1,
                self.cell_count()
            ));
        }
        Ok(self.cell_size * self.cell_units(a, b))
    }

    /// Nearest station to a cell; ties go to the lowest station id.
    pub fn nearest_station(&self, cell: usize) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for s in &self.stations {
            let d = self.cell_units(cell, self.index(s.coord));
            if d < best_d - 1e-12 {
                best = s.id;
                best_d = d;
            }
        }
        best
    }
}

/// Station layout spread uniformly over the grid: stations sit at the centres
/// of a near-square `gr x gc` partition with `gr * gc = m`. Four stations on
/// an 8x8 grid land on the quarter points (3,3), (3,7), (7,3), (7,7) in
/// 1-based coordinates.
pub fn uniform_stations(rows: usize, cols: usize, m: usize) -> Vec<Coord> {
    if m == 0 {
        return Vec::new();
    }
    let mut gr = (m as f64).sqrt().floor() as usize;
    while gr > 1 && m % gr != 0 {
        gr -= 1;
    }
    let gr = gr.max(1);
    let gc = m / gr;
    let (gr, gc) = if rows > cols { (gc, gr) } else { (gr, gc) };
    let mut out = Vec::with_capacity(m);
    for i in 0..gr {
        for j in 0..gc {
            let r = (((i as f64 + 0.5) * rows as f64 / gr as f64).floor() as usize).min(rows - 1);
            let c = (((j as f64 + 0.5) * cols as f64 / gc as f64).floor() as usize).min(cols - 1);
            out.push(Coord::new(r, c));
        }
    }
    out
}

/// Time-of-mission multiplier for a hotspot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalProfile {
    Flat,
    /// `1 + amplitude * sin(2π (t + s/S - phase) / cycle)`, time in periods.
    Periodic {
        cycle: f64,
        phase: f64,
        amplitude: f64,
    },
    /// Explicit per-period multipliers, repeated cyclically.
    PerPeriod { values: Vec<f64> },
}

impl TemporalProfile {
    pub fn factor(&self, period: usize, slot: usize, slots: usize) -> f64 {
        match self {
            TemporalProfile::Flat => 1.0,
            TemporalProfile::Periodic {
                cycle,
                phase,
                amplitude,
            } => {
                let x = period as f64 + slot as f64 / slots as f64 - phase;
                (1.0 + amplitude * (2.0 * PI * x / cycle).sin()).max(0.0)
            }
            TemporalProfile::PerPeriod { values } => {
                if values.is_empty() {
                    1.0
                } else {
                    values[period % values.len()].max(0.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    /// 0-based cell index of the centre.
    pub center: usize,
    pub peak: f64,
    /// Gaussian standard deviation in cell units; 0 puts all mass on the centre.
    pub spread: f64,
    #[serde(default = "flat")]
    pub profile: TemporalProfile,
}

fn flat() -> TemporalProfile {
    TemporalProfile::Flat
}

/// Required sensing values V[t][n][s] plus the values actually collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingField {
    periods: usize,
    cells: usize,
    slots: usize,
    required: Vec<f64>,
    collected: Vec<f64>,
}

impl SensingField {
    pub fn zeros(periods: usize, cells: usize, slots: usize) -> Self {
        let n = periods * cells * slots;
        Self {
            periods,
            cells,
            slots,
            required: vec![0.0; n],
            collected: vec![0.0; n],
        }
    }

    #[inline]
    fn offset(&self, t: usize, n: usize, s: usize) -> usize {
        debug_assert!(t < self.periods && n < self.cells && s < self.slots);
        (t * self.cells + n) * self.slots + s
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn required(&self, t: usize, n: usize, s: usize) -> f64 {
        self.required[self.offset(t, n, s)]
    }

    pub fn set_required(&mut self, t: usize, n: usize, s: usize, v: f64) -> Result<()> {
        if !(v >= 0.0) || !v.is_finite() {
            return invalid(format!("required value must be finite and >= 0, got {v}"));
        }
        let i = self.offset(t, n, s);
        self.required[i] = v;
        Ok(())
    }

    pub fn collected(&self, t: usize, n: usize, s: usize) -> f64 {
        self.collected[self.offset(t, n, s)]
    }

    /// The N×S slice of required values for period `t`.
    pub fn required_period(&self, t: usize) -> ValueMatrix {
        let start = self.offset(t, 0, 0);
        ValueMatrix::from_vec(
            self.cells,
            self.slots,
            self.required[start..start + self.cells * self.slots].to_vec(),
        )
    }

    /// Store collected values for period `t`, clamped to the requirement.
    pub fn record_collected(&mut self, t: usize, values: &ValueMatrix) {
        let start = self.offset(t, 0, 0);
        for (i, &v) in values.as_slice().iter().enumerate() {
            self.collected[start + i] = v.min(self.required[start + i]).max(0.0);
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.required.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn required_slice(&self) -> &[f64] {
        &self.required
    }

    /// A copy restricted to periods `range`.
    pub fn window(&self, start: usize, len: usize) -> SensingField {
        assert!(start + len <= self.periods);
        let per = self.cells * self.slots;
        Self {
            periods: len,
            cells: self.cells,
            slots: self.slots,
            required: self.required[start * per..(start + len) * per].to_vec(),
            collected: vec![0.0; len * per],
        }
    }
}

/// Sum of seeded Gaussian hotspots.
///
/// `noise` is the half-width of the uniform multiplicative peak perturbation
/// drawn per hotspot per period (0.1 gives ±10%; 0 disables it).
pub fn generate_synthetic_traffic(
    grid: &GridMap,
    time: &TimeStructure,
    hotspots: &[Hotspot],
    seed: u64,
    noise: f64,
) -> Result<SensingField> {
    time.validate()?;
    for h in hotspots {
        if !grid.contains(h.center) {
            return invalid(format!(
                "hotspot centre {} outside grid of {} cells",
                h.center + 1,
                grid.cell_count()
            ));
        }
        if !(h.peak >= 0.0) || !(h.spread >= 0.0) {
            return invalid("hotspot peak and spread must be >= 0");
        }
    }
    let n_cells = grid.cell_count();
    let mut field = SensingField::zeros(time.horizon, n_cells, time.slots);
    let mut rng = seed::rng(seed, seed::SCENARIO, &[]);
    for t in 0..time.horizon {
        for h in hotspots {
            let jitter = if noise > 0.0 {
                1.0 + rng.gen_range(-noise..=noise)
            } else {
                1.0
            };
            let peak = h.peak * jitter;
            for n in 0..n_cells {
                let d = grid.cell_units(h.center, n);
                let spatial = if h.spread == 0.0 {
                    if n == h.center {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-d * d / (2.0 * h.spread * h.spread)).exp()
                };
                if spatial == 0.0 {
                    continue;
                }
                for s in 0..time.slots {
                    let i = field.offset(t, n, s);
                    field.required[i] += peak * spatial * h.profile.factor(t, s, time.slots);
                }
            }
        }
    }
    Ok(field)
}

/// Read `period,cell,slot,value` rows (1-based indices) into a field with
/// `time.horizon` periods. Unlisted entries are zero.
pub fn import_traffic_csv(
    path: impl AsRef<Path>,
    grid: &GridMap,
    time: &TimeStructure,
) -> Result<SensingField> {
    let path = path.as_ref();
    let n_cells = grid.cell_count();
    let mut field = SensingField::zeros(time.horizon, n_cells, time.slots);
    let mut seen = vec![false; field.required.len()];
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)?;
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers()?.clone();
    let expected = ["period", "cell", "slot", "value"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(perr(1, format!("expected header `period,cell,slot,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 4 {
            return Err(perr(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let idx = |i: usize, name: &str, max: usize| -> Result<usize> {
            let raw = rec[i].trim();
            let v: usize = raw
                .parse()
                .map_err(|_| perr(line, format!("{name} `{raw}` is not a positive integer")))?;
            if v == 0 || v > max {
                return Err(perr(line, format!("{name} {v} out of range 1..={max}")));
            }
            Ok(v - 1)
        };
        let t = idx(0, "period", time.horizon)?;
        let n = idx(1, "cell", n_cells)?;
        let s = idx(2, "slot", time.slots)?;
        let raw = rec[3].trim();
        let value: f64 = raw
            .parse()
            .map_err(|_| perr(line, format!("value `{raw}` is not a number")))?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(perr(line, format!("value {value} must be finite and >= 0")));
        }
        let off = field.offset(t, n, s);
        if seen[off] {
            return Err(perr(
                line,
                format!("duplicate entry for period {}, cell {}, slot {}", t + 1, n + 1, s + 1),
            ));
        }
        seen[off] = true;
        field.required[off] = value;
    }
    Ok(field)
}

/// Write the required values as traffic CSV (non-zero entries only).
pub fn export_traffic_csv(path: impl AsRef<Path>, field: &SensingField) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    w.write_record(["period", "cell", "slot", "value"])?;
    for t in 0..field.periods {
        for n in 0..field.cells {
            for s in 0..field.slots {
                let v = field.required(t, n, s);
                if v != 0.0 {
                    w.write_record(&[
                        (t + 1).to_string(),
                        (n + 1).to_string(),
                        (s + 1).to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drone {
    pub id: usize,
    pub home_station: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneFleet {
    drones: Vec<Drone>,
}

impl DroneFleet {
    /// `count` drones with home stations assigned round-robin.
    pub fn round_robin(count: usize, grid: &GridMap) -> Result<Self> {
        if count == 0 {
            return invalid("fleet must contain at least one drone");
        }
        let m = grid.station_count();
        Ok(Self {
            drones: (0..count)
                .map(|id| Drone {
                    id,
                    home_station: id % m,
                })
                .collect(),
        })
    }

    pub fn new(homes: &[usize], grid: &GridMap) -> Result<Self> {
        if homes.is_empty() {
            return invalid("fleet must contain at least one drone");
        }
        if let Some(&h) = homes.iter().find(|&&h| h >= grid.station_count()) {
            return invalid(format!("home station {} does not exist", h + 1));
        }
        Ok(Self {
            drones: homes
                .iter()
                .enumerate()
                .map(|(id, &home_station)| Drone { id, home_station })
                .collect(),
        })
    }

    pub fn drones(&self) -> &[Drone] {
        &self.drones
    }

    pub fn len(&self) -> usize {
        self.drones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drones.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid8() -> GridMap {
        GridMap::new(8, 8, 200.0, &uniform_stations(8, 8, 4)).unwrap()
    }

    fn time(periods: usize, slots: usize) -> TimeStructure {
        TimeStructure::new(periods, slots, 60.0, periods).unwrap()
    }

    #[test]
    fn quarter_point_stations() {
        let s = uniform_stations(8, 8, 4);
        assert_eq!(
            s,
            vec![Coord::new(2, 2), Coord::new(2, 6), Coord::new(6, 2), Coord::new(6, 6)]
        );
        assert_eq!(uniform_stations(4, 4, 2), vec![Coord::new(2, 1), Coord::new(2, 3)]);
        assert_eq!(uniform_stations(8, 8, 1), vec![Coord::new(4, 4)]);
    }

    #[test]
    fn cell_distance_examples() {
        let g = grid8();
        assert_eq!(g.cell_distance(5, 5).unwrap(), 0.0);
        assert_eq!(g.cell_distance(0, 1).unwrap(), 200.0);
        let diag = g.cell_distance(0, 9).unwrap();
        assert!((diag - 282.842_712_474_619).abs() < 1e-9);
        assert!(g.cell_distance(0, 64).is_err());
    }

    #[test]
    fn station_validation() {
        assert!(GridMap::new(4, 4, 200.0, &[Coord::new(4, 0)]).is_err());
        assert!(GridMap::new(4, 4, 200.0, &[Coord::new(1, 1), Coord::new(1, 1)]).is_err());
        assert!(GridMap::new(4, 4, 200.0, &[]).is_err());
    }

    #[test]
    fn degenerate_hotspot_is_a_point_mass() {
        let g = grid8();
        let t = time(2, 3);
        let hs = [Hotspot {
            center: 27,
            peak: 5.0,
            spread: 0.0,
            profile: TemporalProfile::Flat,
        }];
        let f = generate_synthetic_traffic(&g, &t, &hs, 1, 0.0).unwrap();
        for tt in 0..2 {
            for n in 0..64 {
                for s in 0..3 {
                    let expect = if n == 27 { 5.0 } else { 0.0 };
                    assert_eq!(f.required(tt, n, s), expect);
                }
            }
        }
    }

    #[test]
    fn zero_hotspots_zero_field() {
        let f = generate_synthetic_traffic(&grid8(), &time(3, 4), &[], 9, 0.1).unwrap();
        assert_eq!(f.nonzero_count(), 0);
    }

    #[test]
    fn hotspot_outside_grid_rejected() {
        let hs = [Hotspot {
            center: 64,
            peak: 1.0,
            spread: 1.0,
            profile: TemporalProfile::Flat,
        }];
        assert!(matches!(
            generate_synthetic_traffic(&grid8(), &time(1, 1), &hs, 0, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn symmetric_hotspots_give_symmetric_field() {
        // Hotspots at (2,1) and (2,6) mirror each other under col -> 7 - col.
        let g = grid8();
        let t = time(2, 4);
        let hs = [
            Hotspot {
                center: g.index(Coord::new(2, 1)),
                peak: 10.0,
                spread: 1.5,
                profile: TemporalProfile::Flat,
            },
            Hotspot {
                center: g.index(Coord::new(2, 6)),
                peak: 10.0,
                spread: 1.5,
                profile: TemporalProfile::Flat,
            },
        ];
        let f = generate_synthetic_traffic(&g, &t, &hs, 3, 0.0).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let a = f.required(1, g.index(Coord::new(r, c)), 2);
                let b = f.required(1, g.index(Coord::new(r, 7 - c)), 2);
                assert!((a - b).abs() < 1e-12, "({r},{c}) {a} vs {b}");
            }
        }
        // Direct evaluation of the closed form at one cell.
        let n = g.index(Coord::new(4, 3));
        let d1 = (4.0f64 + 4.0).sqrt();
        let d2 = (4.0f64 + 9.0).sqrt();
        let expect = 10.0 * (-d1 * d1 / 4.5).exp() + 10.0 * (-d2 * d2 / 4.5).exp();
        assert!((f.required(0, n, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn noise_stays_within_ten_percent() {
        let g = grid8();
        let t = time(20, 1);
        let hs = [Hotspot {
            center: 0,
            peak: 100.0,
            spread: 0.0,
            profile: TemporalProfile::Flat,
        }];
        let f = generate_synthetic_traffic(&g, &t, &hs, 77, 0.1).unwrap();
        let vals: Vec<f64> = (0..20).map(|tt| f.required(tt, 0, 0)).collect();
        assert!(vals.iter().all(|v| (90.0..=110.0).contains(v)));
        assert!(vals.iter().any(|&v| v != 100.0));
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("traffic.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn csv_import_examples() {
        let g = grid8();
        let t = time(2, 4);
        let dir = tempfile::tempdir().unwrap();

        let f = import_traffic_csv(write(&dir, "period,cell,slot,value\n1,5,3,42.0\n"), &g, &t).unwrap();
        assert_eq!(f.nonzero_count(), 1);
        assert_eq!(f.required(0, 4, 2), 42.0);

        let f = import_traffic_csv(write(&dir, "period,cell,slot,value\n"), &g, &t).unwrap();
        assert_eq!(f.nonzero_count(), 0);

        let err = import_traffic_csv(write(&dir, "period,cell,slot,value\n1,65,1,1.0\n"), &g, &t)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let err = import_traffic_csv(
            write(&dir, "period,cell,slot,value\n1,1,1,1.0\n2,2,2,2\n1,1,1,3.0\n"),
            &g,
            &t,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

        let err = import_traffic_csv(write(&dir, "period,cell,slot,value\n1,1,1,-1\n"), &g, &t)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let err = import_traffic_csv(write(&dir, "period,cell,slot,value\n1,1,x,1\n"), &g, &t)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn csv_export_round_trips() {
        let g = grid8();
        let t = time(2, 3);
        let hs = [Hotspot {
            center: 10,
            peak: 3.0,
            spread: 1.0,
            profile: TemporalProfile::Periodic {
                cycle: 2.0,
                phase: 0.0,
                amplitude: 0.5,
            },
        }];
        let f = generate_synthetic_traffic(&g, &t, &hs, 5, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        export_traffic_csv(&p, &f).unwrap();
        let back = import_traffic_csv(&p, &g, &t).unwrap();
        assert_eq!(back.required_slice(), f.required_slice());
    }

    proptest! {
        #[test]
        fn index_round_trip(rows in 1usize..20, cols in 1usize..20) {
            let g = GridMap::new(rows, cols, 100.0, &[Coord::new(0, 0)]).unwrap();
            for n in 0..g.cell_count() {
                prop_assert_eq!(g.index(g.coord(n)), n);
            }
        }

        #[test]
        fn distance_is_a_metric(a in 0usize..64, b in 0usize..64, c in 0usize..64) {
            let g = grid8();
            let ab = g.cell_distance(a, b).unwrap();
            let ba = g.cell_distance(b, a).unwrap();
            let ac = g.cell_distance(a, c).unwrap();
            let cb = g.cell_distance(c, b).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn synthetic_field_is_reproducible(seed in any::<u64>()) {
            let g = grid8();
            let t = time(2, 3);
            let hs = [Hotspot { center: 9, peak: 4.0, spread: 1.2, profile: TemporalProfile::Flat }];
            let a = generate_synthetic_traffic(&g, &t, &hs, seed, 0.1).unwrap();
            let b = generate_synthetic_traffic(&g, &t, &hs, seed, 0.1).unwrap();
            prop_assert_eq!(a.required_slice(), b.required_slice());
        }
    }
}
