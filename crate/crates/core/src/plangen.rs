//! Per-drone, per-period generation of direction-grouped navigation and
//! sensing plans.
//!
//! A plan departs from the drone's current station, visits a few cells drawn
//! from a corridor along its direction, hovers there to sense, and lands at
//! the station nearest to the last visited cell. Travel between cells is
//! straight-line at cruise speed, rounded up to whole slots.

use std::io::Write;
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{invalid, Error, Result};
use crate::matrix::CountMatrix;
use crate::scenario::{GridMap, TimeStructure};
use crate::seed::Rng;

/// Period-level action: stay at the origin, or head in one of eight
/// compass directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Origin = 0,
    North = 1,
    East = 2,
    South = 3,
    West = 4,
    NorthEast = 5,
    SouthEast = 6,
    SouthWest = 7,
    NorthWest = 8,
}

pub const ACTION_COUNT: usize = 9;

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Origin,
        Action::North,
        Action::East,
        Action::South,
        Action::West,
        Action::NorthEast,
        Action::SouthEast,
        Action::SouthWest,
        Action::NorthWest,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Action> {
        Self::ALL.get(code).copied()
    }

    /// (Δrow, Δcol) with north pointing to row 0.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Origin => (0, 0),
            Action::North => (-1, 0),
            Action::East => (0, 1),
            Action::South => (1, 0),
            Action::West => (0, -1),
            Action::NorthEast => (-1, 1),
            Action::SouthEast => (1, 1),
            Action::SouthWest => (1, -1),
            Action::NorthWest => (-1, -1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Origin => "O",
            Action::North => "N",
            Action::East => "E",
            Action::South => "S",
            Action::West => "W",
            Action::NorthEast => "NE",
            Action::SouthEast => "SE",
            Action::SouthWest => "SW",
            Action::NorthWest => "NW",
        }
    }
}

/// How long a drone hovers over each visited cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoverRule {
    /// A fixed number of slots per visited cell.
    Slots { per_cell: usize },
    /// Hover as long as the period and an energy budget allow, split evenly
    /// over the visited cells (earlier cells take the remainder).
    FillPeriod { max_energy: f64 },
}

impl Default for HoverRule {
    fn default() -> Self {
        HoverRule::Slots { per_cell: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Number of cells visited per plan.
    pub mobility: usize,
    pub hover: HoverRule,
    /// Whether origin plans hover over the station cell (otherwise they stay
    /// landed with an empty occupancy).
    pub origin_hover: bool,
    pub max_attempts: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            mobility: 2,
            hover: HoverRule::default(),
            origin_hover: true,
            max_attempts: 100,
        }
    }
}

/// One (cell, slot) hover entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Visit {
    pub cell: usize,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Position within its group.
    pub index: usize,
    pub direction: Action,
    pub origin_station: usize,
    /// Candidate cells along the direction.
    pub search_range: Vec<usize>,
    /// Visited cells in route order.
    pub visited: Vec<usize>,
    /// Hover entries ordered by slot.
    pub visits: Vec<Visit>,
    pub fly_time: f64,
    pub hover_time: f64,
    pub energy: f64,
    pub terminal_station: usize,
    cells: usize,
    slots: usize,
}

impl Plan {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn occupancy(&self) -> CountMatrix {
        let mut m = CountMatrix::zeros(self.cells, self.slots);
        for v in &self.visits {
            m.set(v.cell, v.slot, 1);
        }
        m
    }

    pub fn add_to(&self, m: &mut CountMatrix) {
        for v in &self.visits {
            *m.get_mut(v.cell, v.slot) += 1;
        }
    }

    pub fn remove_from(&self, m: &mut CountMatrix) {
        for v in &self.visits {
            let x = m.get_mut(v.cell, v.slot);
            *x = x.checked_sub(1).expect("plan not part of aggregate");
        }
    }

    /// A bare plan with the given hover entries, for synthetic instances.
    pub fn from_visits(cells: usize, slots: usize, mut visits: Vec<Visit>, energy: f64) -> Plan {
        visits.sort_by_key(|v| (v.slot, v.cell));
        visits.dedup();
        Plan {
            index: 0,
            direction: Action::Origin,
            origin_station: 0,
            search_range: Vec::new(),
            visited: Vec::new(),
            visits,
            fly_time: 0.0,
            hover_time: 0.0,
            energy,
            terminal_station: 0,
            cells,
            slots,
        }
    }

    /// Check the structural invariants against a scenario.
    pub fn check(&self, time: &TimeStructure) -> Result<()> {
        let mut slots_used = vec![false; self.slots];
        for v in &self.visits {
            if v.cell >= self.cells || v.slot >= self.slots {
                return invalid("visit outside the cell x slot matrix");
            }
            if std::mem::replace(&mut slots_used[v.slot], true) {
                return invalid(format!("two hover cells in slot {}", v.slot + 1));
            }
        }
        if !self.search_range.is_empty() && self.visited.iter().any(|c| !self.search_range.contains(c)) {
            return invalid("visited cell outside search range");
        }
        if !(self.energy <= 1.0) {
            return invalid(format!("plan energy {} exceeds the battery", self.energy));
        }
        if self.fly_time + self.hover_time > time.period_seconds() + 1e-9 {
            return invalid("plan does not fit within one period");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGroup {
    pub direction: Action,
    pub plans: Vec<Plan>,
}

/// Everything plan generation needs to know about the world.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub grid: &'a GridMap,
    pub time: &'a TimeStructure,
    pub energy: &'a EnergyModel,
    pub config: &'a PlanConfig,
}

/// Half-width of the search corridor in cell units: a quarter of the distance
/// to the nearest other station, so the corridor is half that distance wide.
/// With a single station the half-width is one cell.
pub fn corridor_half_width(grid: &GridMap, origin_station: usize) -> f64 {
    let origin = grid.station_cell(origin_station);
    grid.stations()
        .iter()
        .filter(|s| s.id != origin_station)
        .map(|s| grid.cell_units(origin, grid.index(s.coord)))
        .min_by(f64::total_cmp)
        .map(|d| d / 4.0)
        .unwrap_or(1.0)
}

fn corridor(grid: &GridMap, origin: usize, direction: Action, half_width: f64) -> Vec<usize> {
    let (dr, dc) = direction.delta();
    let norm = ((dr * dr + dc * dc) as f64).sqrt();
    let (ur, uc) = (dr as f64 / norm, dc as f64 / norm);
    let o = grid.coord(origin);
    (0..grid.cell_count())
        .filter(|&n| {
            let p = grid.coord(n);
            let (pr, pc) = (p.row as f64 - o.row as f64, p.col as f64 - o.col as f64);
            let along = pr * ur + pc * uc;
            let across = (pr * uc - pc * ur).abs();
            along > 1e-9 && across <= half_width + 1e-9
        })
        .collect()
}

/// Cells strictly ahead of the origin station along `direction` whose centres
/// lie within the corridor half-width of the direction ray.
pub fn search_range(grid: &GridMap, origin_station: usize, direction: Action) -> Result<Vec<usize>> {
    if origin_station >= grid.station_count() {
        return invalid(format!("station {} does not exist", origin_station + 1));
    }
    if direction == Action::Origin {
        return invalid("origin action has no search range");
    }
    let origin = grid.station_cell(origin_station);
    Ok(corridor(grid, origin, direction, corridor_half_width(grid, origin_station)))
}

/// Corridor widened in half-cell steps until it holds at least `need` cells
/// (or stops growing).
fn search_range_at_least(grid: &GridMap, origin_station: usize, direction: Action, need: usize) -> Vec<usize> {
    let origin = grid.station_cell(origin_station);
    let mut hw = corridor_half_width(grid, origin_station);
    let mut k = corridor(grid, origin, direction, hw);
    let limit = (grid.rows() + grid.cols()) as f64;
    while k.len() < need && hw < limit {
        hw += 0.5;
        k = corridor(grid, origin, direction, hw);
    }
    k
}

/// Whole slots needed to fly between two cell centers.
pub fn travel_slots(ctx: &PlanContext, a: usize, b: usize) -> usize {
    let d = ctx.grid.cell_size() * ctx.grid.cell_units(a, b);
    if d == 0.0 {
        return 0;
    }
    let seconds = d / ctx.energy.ground_speed;
    (seconds / ctx.time.slot_duration - 1e-9).ceil().max(1.0) as usize
}

/// Length in meters of origin → cells → nearest station to the last cell.
fn route_length(grid: &GridMap, origin: usize, order: &[usize]) -> (f64, usize) {
    let mut d = 0.0;
    let mut at = origin;
    for &c in order {
        d += grid.cell_units(at, c);
        at = c;
    }
    let terminal = grid.nearest_station(at);
    d += grid.cell_units(at, grid.station_cell(terminal));
    (d * grid.cell_size(), terminal)
}

/// Shortest visiting order. Exhaustive for up to four cells (ties go to the
/// lexicographically smallest order); nearest-neighbour beyond that.
pub fn best_route(grid: &GridMap, origin: usize, cells: &[usize]) -> (Vec<usize>, f64, usize) {
    let mut sorted = cells.to_vec();
    sorted.sort_unstable();
    if sorted.len() <= 4 {
        let mut best: Option<(Vec<usize>, f64, usize)> = None;
        for perm in sorted.iter().copied().permutations(sorted.len()) {
            let (len, term) = route_length(grid, origin, &perm);
            if best.as_ref().map_or(true, |(_, b, _)| len < b - 1e-9) {
                best = Some((perm, len, term));
            }
        }
        return best.unwrap_or_else(|| {
            let (len, term) = route_length(grid, origin, &[]);
            (Vec::new(), len, term)
        });
    }
    let mut left = sorted;
    let mut order = Vec::with_capacity(left.len());
    let mut at = origin;
    while !left.is_empty() {
        let (i, _) = left
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, grid.cell_units(at, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        at = left.remove(i);
        order.push(at);
    }
    let (len, term) = route_length(grid, origin, &order);
    (order, len, term)
}

/// Lay a route out on the slot axis. `None` if it does not fit the period or
/// the battery.
fn schedule(
    ctx: &PlanContext,
    origin: usize,
    order: &[usize],
    terminal_station: usize,
    hover: HoverRule,
) -> Option<(Vec<Visit>, f64, f64, f64)> {
    let slots = ctx.time.slots;
    let dur = ctx.time.slot_duration;
    let terminal = ctx.grid.station_cell(terminal_station);
    let mut legs = Vec::with_capacity(order.len() + 1);
    let mut at = origin;
    for &c in order {
        legs.push(travel_slots(ctx, at, c));
        at = c;
    }
    let back = travel_slots(ctx, at, terminal);
    let travel: usize = legs.iter().sum::<usize>() + back;
    if order.is_empty() {
        return if travel <= slots {
            let tf = travel as f64 * dur;
            Some((Vec::new(), tf, 0.0, ctx.energy.energy(tf, 0.0)))
        } else {
            None
        };
    }
    let fly_time = travel as f64 * dur;
    let hover_per_cell: Vec<usize> = match hover {
        HoverRule::Slots { per_cell } => vec![per_cell.max(1); order.len()],
        HoverRule::FillPeriod { max_energy } => {
            let free = slots.checked_sub(travel)?;
            let budget = max_energy * ctx.energy.capacity - ctx.energy.forward_watts * fly_time;
            let by_energy = (budget / (ctx.energy.hover_watts * dur)).floor();
            let total = if by_energy < 0.0 { 0 } else { (by_energy as usize).min(free) };
            if total < order.len() {
                return None;
            }
            let base = total / order.len();
            let extra = total % order.len();
            (0..order.len()).map(|i| base + usize::from(i < extra)).collect()
        }
    };
    let mut visits = Vec::new();
    let mut cursor = 0;
    for ((&c, &leg), &h) in order.iter().zip(&legs).zip(&hover_per_cell) {
        cursor += leg;
        for s in cursor..cursor + h {
            visits.push(Visit { cell: c, slot: s });
        }
        cursor += h;
    }
    cursor += back;
    if cursor > slots {
        return None;
    }
    let hover_time = hover_per_cell.iter().sum::<usize>() as f64 * dur;
    let energy = ctx.energy.energy(fly_time, hover_time);
    if energy > 1.0 {
        return None;
    }
    Some((visits, fly_time, hover_time, energy))
}

fn assemble(
    ctx: &PlanContext,
    origin_station: usize,
    direction: Action,
    search_range: Vec<usize>,
    order: Vec<usize>,
    terminal_station: usize,
) -> Option<Plan> {
    let origin = ctx.grid.station_cell(origin_station);
    // Staying home is a single bookkeeping hover whatever the rule.
    let hover = if direction == Action::Origin || order == [origin] && terminal_station == origin_station {
        HoverRule::Slots { per_cell: 1 }
    } else {
        ctx.config.hover
    };
    let (visits, fly_time, hover_time, energy) = schedule(ctx, origin, &order, terminal_station, hover)?;
    Some(Plan {
        index: 0,
        direction,
        origin_station,
        search_range,
        visited: order,
        visits,
        fly_time,
        hover_time,
        energy,
        terminal_station,
        cells: ctx.grid.cell_count(),
        slots: ctx.time.slots,
    })
}

/// A plan over a fixed route with an explicit hover rule. `None` if it does
/// not fit the period or the battery.
pub fn route_plan(
    ctx: &PlanContext,
    origin_station: usize,
    direction: Action,
    order: Vec<usize>,
    terminal_station: usize,
    hover: HoverRule,
) -> Option<Plan> {
    let config = PlanConfig { hover, ..*ctx.config };
    let ctx = PlanContext { config: &config, ..*ctx };
    assemble(&ctx, origin_station, direction, Vec::new(), order, terminal_station)
}

/// The compass direction that best matches the move from `from` to `to`.
pub fn heading(grid: &GridMap, from: usize, to: usize) -> Action {
    let (a, b) = (grid.coord(from), grid.coord(to));
    let dr = (b.row as i64 - a.row as i64).signum();
    let dc = (b.col as i64 - a.col as i64).signum();
    Action::ALL
        .iter()
        .copied()
        .find(|act| act.delta() == (dr, dc))
        .unwrap_or(Action::Origin)
}

/// The stay-at-origin plan: hover over the station cell (unless disabled)
/// and land where it started.
pub fn origin_plan(ctx: &PlanContext, origin_station: usize, direction: Action) -> Result<Plan> {
    let origin = ctx.grid.station_cell(origin_station);
    let order = if ctx.config.origin_hover { vec![origin] } else { Vec::new() };
    assemble(ctx, origin_station, direction, Vec::new(), order, origin_station)
        .ok_or_else(|| Error::Generation("origin plan does not fit the period".into()))
}

/// One plan along `direction`: sample `mobility` distinct cells from the
/// corridor, visit them in the shortest order, land at the station nearest
/// the last cell. Infeasible samples are redrawn up to `max_attempts` times.
pub fn generate_plan(ctx: &PlanContext, origin_station: usize, direction: Action, rng: &mut Rng) -> Result<Plan> {
    if origin_station >= ctx.grid.station_count() {
        return invalid(format!("station {} does not exist", origin_station + 1));
    }
    if ctx.config.mobility == 0 {
        return invalid("mobility must be >= 1");
    }
    if direction == Action::Origin {
        return origin_plan(ctx, origin_station, direction);
    }
    let range = search_range_at_least(ctx.grid, origin_station, direction, ctx.config.mobility);
    if range.is_empty() {
        // Nothing ahead (station on the grid edge): degrade to staying put.
        return origin_plan(ctx, origin_station, direction);
    }
    let origin = ctx.grid.station_cell(origin_station);
    let take = ctx.config.mobility.min(range.len());
    for _ in 0..ctx.config.max_attempts.max(1) {
        let picked: Vec<usize> = range.choose_multiple(rng, take).copied().collect();
        let (order, _, terminal) = best_route(ctx.grid, origin, &picked);
        if let Some(plan) = assemble(ctx, origin_station, direction, range.clone(), order, terminal) {
            return Ok(plan);
        }
    }
    Err(Error::Generation(format!(
        "{} consecutive infeasible plans from station {} heading {}",
        ctx.config.max_attempts,
        origin_station + 1,
        direction.label()
    )))
}

/// Plans per direction: ⌊L/9⌋ each, remainder one apiece to directions 1..8.
pub fn group_sizes(total: usize) -> [usize; ACTION_COUNT] {
    let mut sizes = [total / ACTION_COUNT; ACTION_COUNT];
    for extra in 0..total % ACTION_COUNT {
        sizes[1 + extra] += 1;
    }
    sizes
}

pub fn generate_all(ctx: &PlanContext, origin_station: usize, total: usize, rng: &mut Rng) -> Result<Vec<PlanGroup>> {
    if total < ACTION_COUNT {
        return invalid(format!("need at least {ACTION_COUNT} plans, got {total}"));
    }
    let sizes = group_sizes(total);
    Action::ALL
        .iter()
        .zip(sizes)
        .map(|(&direction, size)| {
            let plans = (0..size)
                .map(|index| {
                    generate_plan(ctx, origin_station, direction, rng).map(|mut p| {
                        p.index = index;
                        p
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PlanGroup { direction, plans })
        })
        .collect()
}

/// Same route, landing at `station` instead. `None` if that no longer fits.
pub fn reterminate(ctx: &PlanContext, plan: &Plan, station: usize) -> Option<Plan> {
    let mut p = assemble(
        ctx,
        plan.origin_station,
        plan.direction,
        plan.search_range.clone(),
        plan.visited.clone(),
        station,
    )?;
    p.index = plan.index;
    Some(p)
}

/// Plan export: one `meta` row per plan followed by one `visit` row per
/// occupied (cell, slot). Indices are 1-based.
pub fn export_plans_csv(path: impl AsRef<Path>, drones: &[(usize, &[PlanGroup])]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_plans_csv(&mut out, drones)?;
    out.flush()?;
    Ok(())
}

pub fn write_plans_csv(out: impl Write, drones: &[(usize, &[PlanGroup])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kind", "drone", "plan", "direction", "visited", "terminal_station", "fly_time", "hover_time",
        "energy", "cell", "slot",
    ])?;
    for &(drone, groups) in drones {
        let mut id = 0;
        for g in groups {
            for p in &g.plans {
                id += 1;
                let visited = p.visited.iter().map(|c| (c + 1).to_string()).join(" ");
                w.write_record(&[
                    "meta".to_string(),
                    (drone + 1).to_string(),
                    id.to_string(),
                    p.direction.code().to_string(),
                    visited,
                    (p.terminal_station + 1).to_string(),
                    p.fly_time.to_string(),
                    p.hover_time.to_string(),
                    p.energy.to_string(),
                    String::new(),
                    String::new(),
                ])?;
                for v in &p.visits {
                    w.write_record(&[
                        "visit".to_string(),
                        (drone + 1).to_string(),
                        id.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        (v.cell + 1).to_string(),
                        (v.slot + 1).to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
