//! Comparison methods behind the [`Coordinator`] interface.
//!
//! * [`Greedy`]: every drone independently flies to the single cell with the
//!   best forecast value per unit of round-trip distance, hovers one slot and
//!   lands at the nearest station. No coordination.
//! * [`EposOnly`]: collective selection over the full plan set, with every
//!   plan re-terminated at a station drawn uniformly at random each period.
//! * [`Mappo`]: slot-level PPO; each drone picks hover or one of eight moves
//!   at every slot and returns to the nearest station at the end.

use rand::Rng as _;

use crate::collective;
use crate::error::{Error, Result};
use crate::matrix::{CountMatrix, ValueMatrix};
use crate::metrics;
use crate::plangen::{self, Action, HoverRule, Plan, PlanContext, Visit};
use crate::rl::{PolicyPair, PpoConfig, RoundStats, Transition};
use crate::seed;
use crate::sim::{Coordinator, Decision, Learners, Method, PeriodInput, PeriodResult, RewardBasis, World};

/// Highest-scoring single-cell plan for one drone, or the stay-at-origin
/// plan when no feasible cell has positive forecast value.
pub fn greedy_plan(ctx: &PlanContext, station: usize, forecast: &ValueMatrix) -> Result<Plan> {
    let grid = ctx.grid;
    let origin = grid.station_cell(station);
    let mut best: Option<(f64, Plan)> = None;
    for c in 0..grid.cell_count() {
        let terminal = grid.nearest_station(c);
        let Some(plan) = plangen::route_plan(
            ctx,
            station,
            plangen::heading(grid, origin, c),
            vec![c],
            terminal,
            HoverRule::Slots { per_cell: 1 },
        ) else {
            continue;
        };
        let value: f64 = plan.visits.iter().map(|v| forecast.get(v.cell, v.slot)).sum();
        let trip = grid.cell_size()
            * (grid.cell_units(origin, c) + grid.cell_units(c, grid.station_cell(terminal)) + 1.0);
        let score = value / trip;
        // Strict comparison keeps the lowest cell id on ties.
        if value > 0.0 && best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, plan));
        }
    }
    match best {
        Some((_, p)) => Ok(p),
        None => plangen::origin_plan(ctx, station, Action::Origin),
    }
}

#[derive(Debug, Default)]
pub struct Greedy;

impl Coordinator for Greedy {
    fn method(&self) -> Method {
        Method::Greedy
    }

    fn decide(&mut self, input: &PeriodInput<'_>) -> Result<Decision> {
        let w = input.world;
        let ctx = w.plan_context();
        let plans = w
            .execution
            .map(input.states, |s| greedy_plan(&ctx, s.station, input.forecast))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Decision {
            plans,
            ..Decision::default()
        })
    }
}

/// Candidate pool for one drone: every generated plan re-terminated at
/// `station`, infeasible ones dropped; the origin plan if none survive.
pub fn epos_pool(ctx: &PlanContext, origin: usize, station: usize, groups: &[plangen::PlanGroup]) -> Result<Vec<Plan>> {
    let mut pool: Vec<Plan> = groups
        .iter()
        .flat_map(|g| &g.plans)
        .filter_map(|p| plangen::reterminate(ctx, p, station))
        .collect();
    if pool.is_empty() {
        pool.push(plangen::origin_plan(ctx, origin, Action::Origin)?);
    }
    for (i, p) in pool.iter_mut().enumerate() {
        p.index = i;
    }
    Ok(pool)
}

#[derive(Debug, Default)]
pub struct EposOnly;

impl EposOnly {
    /// Landing stations for one period, uniform over all stations.
    pub fn draw_stations(world: &World, episode: u64, t: usize) -> Vec<usize> {
        (0..world.drones())
            .map(|u| {
                let mut rng = seed::rng(world.seed, seed::STATIONS, &[episode, t as u64, u as u64]);
                rng.gen_range(0..world.grid.station_count())
            })
            .collect()
    }
}

impl Coordinator for EposOnly {
    fn method(&self) -> Method {
        Method::Epos
    }

    fn decide(&mut self, input: &PeriodInput<'_>) -> Result<Decision> {
        let w = input.world;
        let ctx = w.plan_context();
        let stations: Vec<usize> = input.states.iter().map(|s| s.station).collect();
        let groups = w.plan_groups(input.episode, input.t, &stations)?;
        let landing = Self::draw_stations(w, input.episode, input.t);
        let pools: Vec<Vec<Plan>> = (0..stations.len())
            .map(|u| epos_pool(&ctx, stations[u], landing[u], &groups[u]))
            .collect::<Result<_>>()?;
        let candidates: Vec<&[Plan]> = pools.iter().map(Vec::as_slice).collect();
        let outcome = collective::run_collective_selection(&w.tree(&stations), &candidates, input.target, w.collective)?;
        let plans = outcome
            .selected
            .iter()
            .zip(&pools)
            .map(|(s, pool)| pool[s.expect("every drone is in the tree")].clone())
            .collect();
        Ok(Decision {
            plans,
            trace: outcome.trace,
            messages: outcome.messages,
            violations: 0,
        })
    }
}

/// Hover plus the eight compass moves.
pub const MAPPO_ACTIONS: usize = plangen::ACTION_COUNT;

/// Observation layout: current cell one-hot (N), battery left (1), slot
/// one-hot (S), airborne drones per cell excluding self (N).
pub fn mappo_obs_dim(cells: usize, slots: usize) -> usize {
    2 * cells + 1 + slots
}

fn mappo_obs(cells: usize, slots: usize, cell: usize, battery: f64, slot: usize, others: &[u32]) -> Vec<(usize, f64)> {
    let mut x = vec![(cell, 1.0)];
    if battery != 0.0 {
        x.push((cells, battery));
    }
    x.push((cells + 1 + slot, 1.0));
    let base = cells + 1 + slots;
    x.extend(
        others
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (base + i, f64::from(c))),
    );
    x
}

/// One slot-level decision, kept until the period's rewards are known.
#[derive(Debug, Clone)]
pub struct SlotStep {
    pub obs: Vec<(usize, f64)>,
    pub action: usize,
    pub slot: usize,
    /// Battery fraction spent in this slot.
    pub energy: f64,
}

/// A period flown slot by slot.
#[derive(Debug, Clone)]
pub struct Flight {
    pub plans: Vec<Plan>,
    /// Decisions per drone, in slot order.
    pub steps: Vec<Vec<SlotStep>>,
    pub violations: usize,
}

/// Fly one period with `choose(drone, observation) -> action`.
pub fn fly_period(
    ctx: &PlanContext,
    stations: &[usize],
    mut choose: impl FnMut(usize, &[(usize, f64)]) -> Result<usize>,
) -> Result<Flight> {
    let grid = ctx.grid;
    let (cells, slots, dur) = (grid.cell_count(), ctx.time.slots, ctx.time.slot_duration);
    let em = ctx.energy;
    let n = stations.len();
    let mut cell: Vec<usize> = stations.iter().map(|&m| grid.station_cell(m)).collect();
    let mut airborne = vec![true; n];
    let mut fly = vec![0usize; n];
    let mut hover = vec![0usize; n];
    let mut visits: Vec<Vec<Visit>> = vec![Vec::new(); n];
    let mut visited: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut steps: Vec<Vec<SlotStep>> = vec![Vec::new(); n];
    let mut ret_slots: Vec<usize> = vec![0; n];
    let mut violations = 0;
    let used = |f: usize, h: usize| em.energy(f as f64 * dur, h as f64 * dur);
    let back = |c: usize| plangen::travel_slots(ctx, c, grid.station_cell(grid.nearest_station(c)));

    for s in 0..slots {
        let mut counts = vec![0u32; cells];
        for u in (0..n).filter(|&u| airborne[u]) {
            counts[cell[u]] += 1;
        }
        let snapshot = cell.clone();
        for u in 0..n {
            if !airborne[u] {
                continue;
            }
            let here = snapshot[u];
            // Not enough time left for one more action and the way home.
            if s + 1 + back(here) > slots {
                airborne[u] = false;
                ret_slots[u] = back(here);
                continue;
            }
            let mut others = counts.clone();
            others[here] -= 1;
            let battery = (1.0 - used(fly[u], hover[u])).clamp(0.0, 1.0);
            let obs = mappo_obs(cells, slots, here, battery, s, &others);
            let action = choose(u, &obs)?;
            let act = Action::from_code(action)
                .ok_or_else(|| Error::InvalidInput(format!("action {action} out of range")))?;
            let target = step(grid, here, act);
            let (next, moved) = if target != here && s + 1 + back(target) <= slots {
                (target, true)
            } else {
                (here, false)
            };
            let (f2, h2) = if moved { (fly[u] + 1, hover[u]) } else { (fly[u], hover[u] + 1) };
            if used(f2 + back(next), h2) > 1.0 {
                airborne[u] = false;
                ret_slots[u] = back(here);
                violations += 1;
                continue;
            }
            let spent = used(f2, h2) - used(fly[u], hover[u]);
            (fly[u], hover[u]) = (f2, h2);
            if !moved {
                visits[u].push(Visit { cell: here, slot: s });
                if visited[u].last() != Some(&here) {
                    visited[u].push(here);
                }
            }
            cell[u] = next;
            steps[u].push(SlotStep {
                obs,
                action,
                slot: s,
                energy: spent,
            });
        }
    }
    let mut plans = Vec::with_capacity(n);
    for u in 0..n {
        if airborne[u] {
            ret_slots[u] = back(cell[u]);
        }
        let total_fly = fly[u] + ret_slots[u];
        let fly_time = total_fly as f64 * dur;
        let hover_time = hover[u] as f64 * dur;
        let mut p = Plan::from_visits(cells, slots, std::mem::take(&mut visits[u]), em.energy(fly_time, hover_time));
        p.origin_station = stations[u];
        p.terminal_station = grid.nearest_station(cell[u]);
        p.direction = plangen::heading(grid, grid.station_cell(stations[u]), cell[u]);
        p.visited = std::mem::take(&mut visited[u]);
        p.fly_time = fly_time;
        p.hover_time = hover_time;
        plans.push(p);
    }
    Ok(Flight {
        plans,
        steps,
        violations,
    })
}

/// Adjacent cell in `act`'s direction, clamped to the grid.
fn step(grid: &crate::scenario::GridMap, cell: usize, act: Action) -> usize {
    let c = grid.coord(cell);
    let (dr, dc) = act.delta();
    let r = (c.row as i64 + dr).clamp(0, grid.rows() as i64 - 1) as usize;
    let k = (c.col as i64 + dc).clamp(0, grid.cols() as i64 - 1) as usize;
    grid.index(crate::scenario::Coord::new(r, k))
}

fn column(m: &ValueMatrix, s: usize) -> ValueMatrix {
    ValueMatrix::from_vec(m.cells(), 1, (0..m.cells()).map(|n| m.get(n, s)).collect())
}

/// Slot-level reward: efficiency and accuracy over slot `s`'s column, minus
/// the battery fraction spent in that slot.
pub fn slot_reward(collected: &ValueMatrix, basis: &ValueMatrix, s: usize, energy: f64, cap: f64, w: &metrics::Weights) -> f64 {
    let (v, r) = (column(collected, s), column(basis, s));
    metrics::overall(metrics::efficiency(&v, &r), metrics::accuracy(&v, &r, cap), energy, w)
}

pub struct Mappo {
    pub learners: Learners,
    steps: Vec<Vec<SlotStep>>,
}

impl Mappo {
    pub fn new(world: &World, cfg: PpoConfig) -> Self {
        let dim = mappo_obs_dim(world.grid.cell_count(), world.time.slots);
        Self {
            learners: Learners::new(cfg, dim, MAPPO_ACTIONS, world.drones(), world.seed, world.execution),
            steps: Vec::new(),
        }
    }

    pub fn from_learners(learners: Learners) -> Self {
        Self {
            learners,
            steps: Vec::new(),
        }
    }
}

impl Coordinator for Mappo {
    fn method(&self) -> Method {
        Method::Mappo
    }

    fn decide(&mut self, input: &PeriodInput<'_>) -> Result<Decision> {
        let w = input.world;
        let stations: Vec<usize> = input.states.iter().map(|s| s.station).collect();
        let mut rngs: Vec<_> = (0..stations.len())
            .map(|u| seed::rng(w.seed, seed::ACTIONS, &[input.episode, input.t as u64, u as u64]))
            .collect();
        let agents = &self.learners.agents;
        let flight = fly_period(&w.plan_context(), &stations, |u, obs| {
            agents[u].act(obs, input.explore, &mut rngs[u])
        })?;
        self.steps = flight.steps;
        Ok(Decision {
            plans: flight.plans,
            trace: Vec::new(),
            messages: 0,
            violations: flight.violations,
        })
    }

    fn observe(&mut self, input: &PeriodInput<'_>, result: &PeriodResult<'_>) -> Result<()> {
        if !self.learners.learning {
            return Ok(());
        }
        let basis = match input.world.reward_basis {
            RewardBasis::Realized => result.required,
            RewardBasis::Forecast => result.predicted,
        };
        for (u, steps) in std::mem::take(&mut self.steps).into_iter().enumerate() {
            let k = steps.len();
            for i in 0..k {
                let st = &steps[i];
                let reward = slot_reward(result.collected, basis, st.slot, st.energy, result.accuracy_cap, result.weights);
                let next = (i + 1 < k).then(|| steps[i + 1].obs.clone());
                self.learners.buffers[u].push(Transition {
                    obs: st.obs.clone(),
                    action: st.action,
                    reward,
                    next,
                });
            }
        }
        Ok(())
    }

    fn end_episode(&mut self, episode: u64) -> Result<Option<RoundStats>> {
        if !self.learners.learning {
            return Ok(None);
        }
        self.learners.update(episode).map(Some)
    }

    fn set_learning(&mut self, on: bool) {
        self.learners.learning = on;
    }

    fn policies(&self) -> Option<&[PolicyPair]> {
        Some(&self.learners.agents)
    }
}

/// Aggregate of everyone's plans.
pub fn occupancy(plans: &[Plan]) -> CountMatrix {
    let mut g = CountMatrix::zeros(plans[0].cells(), plans[0].slots());
    for p in plans {
        p.add_to(&mut g);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::{rmse, TargetMatrix, Tree};
    use crate::energy::{DroneSpec, EnergyModel};
    use crate::plangen::PlanConfig;
    use crate::scenario::{uniform_stations, GridMap, TimeStructure};

    struct Fixture {
        grid: GridMap,
        time: TimeStructure,
        energy: EnergyModel,
        config: PlanConfig,
    }

    impl Fixture {
        fn new(rows: usize, stations: usize, slots: usize) -> Self {
            Self {
                grid: GridMap::new(rows, rows, 200.0, &uniform_stations(rows, rows, stations)).unwrap(),
                time: TimeStructure::new(4, slots, 1800.0 / slots as f64, 4).unwrap(),
                energy: EnergyModel::new(&DroneSpec::phantom4_pro()).unwrap(),
                config: PlanConfig::default(),
            }
        }

        fn ctx(&self) -> PlanContext<'_> {
            PlanContext {
                grid: &self.grid,
                time: &self.time,
                energy: &self.energy,
                config: &self.config,
            }
        }
    }

    #[test]
    fn greedy_picks_the_only_valuable_cell() {
        let f = Fixture::new(4, 2, 10);
        let mut v = ValueMatrix::zeros(16, 10);
        for s in 0..10 {
            v.set(13, s, 5.0);
        }
        let p = greedy_plan(&f.ctx(), 0, &v).unwrap();
        assert_eq!(p.visited, vec![13]);
        assert_eq!(p.visits.len(), 1);
        assert_eq!(p.terminal_station, f.grid.nearest_station(13));
        p.check(&f.time).unwrap();
    }

    #[test]
    fn greedy_duplicates_without_coordination() {
        let f = Fixture::new(4, 2, 10);
        let mut v = ValueMatrix::zeros(16, 10);
        for s in 0..10 {
            v.set(5, s, 3.0);
        }
        let a = greedy_plan(&f.ctx(), 0, &v).unwrap();
        let b = greedy_plan(&f.ctx(), 0, &v).unwrap();
        assert_eq!(a.visited, b.visited);
        assert_eq!(a.visited, vec![5]);
    }

    #[test]
    fn greedy_ties_go_to_the_lowest_cell() {
        // Station at (2,1) = cell 9; cells 8 and 10 are mirror images.
        let f = Fixture::new(4, 2, 10);
        let mut v = ValueMatrix::zeros(16, 10);
        for s in 0..10 {
            v.set(8, s, 1.0);
            v.set(10, s, 1.0);
        }
        let station = f.grid.station_at(9).unwrap();
        let p = greedy_plan(&f.ctx(), station, &v).unwrap();
        assert_eq!(p.visited, vec![8]);
    }

    #[test]
    fn greedy_without_value_stays_home() {
        let f = Fixture::new(4, 2, 10);
        let p = greedy_plan(&f.ctx(), 1, &ValueMatrix::zeros(16, 10)).unwrap();
        assert_eq!(p.direction, Action::Origin);
        assert_eq!(p.terminal_station, 1);
    }

    #[test]
    fn mappo_all_hover_fills_the_start_column() {
        let f = Fixture::new(4, 2, 10);
        let flight = fly_period(&f.ctx(), &[0, 1], |_, _| Ok(0)).unwrap();
        for (u, p) in flight.plans.iter().enumerate() {
            let home = f.grid.station_cell(u);
            assert_eq!(p.visits.len(), 10);
            assert!(p.visits.iter().all(|v| v.cell == home));
            assert_eq!(flight.steps[u].len(), 10, "one transition per slot");
            assert_eq!(p.terminal_station, u);
            p.check(&f.time).unwrap();
        }
        assert_eq!(flight.violations, 0);
    }

    #[test]
    fn mappo_off_grid_move_clamps_in_place() {
        // 2x2 grid, one station at (0,0): north and west both leave the grid.
        let grid = GridMap::new(2, 2, 200.0, &[crate::scenario::Coord::new(0, 0)]).unwrap();
        let f = Fixture {
            grid,
            ..Fixture::new(4, 2, 10)
        };
        for act in [Action::North, Action::West, Action::NorthWest] {
            let flight = fly_period(&f.ctx(), &[0], |_, _| Ok(act.code())).unwrap();
            assert_eq!(flight.plans[0].visits.len(), 10);
            assert!(flight.plans[0].visits.iter().all(|v| v.cell == 0));
        }
    }

    #[test]
    fn mappo_returns_to_the_nearest_station_in_time() {
        let f = Fixture::new(4, 2, 10);
        // Always head south-east.
        let flight = fly_period(&f.ctx(), &[0], |_, _| Ok(Action::SouthEast.code())).unwrap();
        let p = &flight.plans[0];
        p.check(&f.time).unwrap();
        let used = ((p.fly_time + p.hover_time) / f.time.slot_duration).round() as usize;
        assert!(used <= 10);
    }

    #[test]
    fn mappo_battery_exhaustion_is_a_violation() {
        // Long slots: hovering the whole period would overdraw the battery.
        let mut f = Fixture::new(4, 2, 10);
        f.time = TimeStructure::new(4, 10, 600.0, 4).unwrap();
        let flight = fly_period(&f.ctx(), &[0], |_, _| Ok(0)).unwrap();
        assert_eq!(flight.violations, 1);
        let p = &flight.plans[0];
        assert!(p.energy <= 1.0);
        assert!(p.visits.len() < 10);
    }

    #[test]
    fn epos_pool_lands_at_the_drawn_station() {
        let f = Fixture::new(8, 4, 30);
        let mut rng = seed::rng(1, seed::PLANS, &[0]);
        let groups = plangen::generate_all(&f.ctx(), 0, 64, &mut rng).unwrap();
        let pool = epos_pool(&f.ctx(), 0, 3, &groups).unwrap();
        assert!(!pool.is_empty());
        assert!(pool.iter().all(|p| p.terminal_station == 3 && p.energy <= 1.0));
    }

    #[test]
    fn epos_beats_random_selection() {
        let f = Fixture::new(4, 2, 10);
        let mut wins = 0;
        for inst in 0..20u64 {
            let mut rng = seed::rng(inst, seed::PLANS, &[]);
            let stations = [0usize, 1, 0, 1];
            let pools: Vec<Vec<Plan>> = stations
                .iter()
                .map(|&m| {
                    let groups = plangen::generate_all(&f.ctx(), m, 18, &mut rng).unwrap();
                    epos_pool(&f.ctx(), m, rng.gen_range(0..2), &groups).unwrap()
                })
                .collect();
            let cands: Vec<&[Plan]> = pools.iter().map(Vec::as_slice).collect();
            let target = TargetMatrix::ones(16, 10);
            let cfg = collective::CollectiveConfig {
                beta: 0.0,
                ..Default::default()
            };
            let tree = Tree::from_level_order(vec![0, 1, 2, 3]);
            let out = collective::run_collective_selection(&tree, &cands, &target, cfg).unwrap();
            let random: Vec<Plan> = pools.iter().map(|p| p[rng.gen_range(0..p.len())].clone()).collect();
            if out.cost <= rmse(&occupancy(&random), &target) + 1e-12 {
                wins += 1;
            }
        }
        assert_eq!(wins, 20);
    }
}
