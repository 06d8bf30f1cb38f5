//! Period-by-period mission simulation shared by every coordination method.
//!
//! A coordinator sees the drones' local states, the previous period's plans
//! and a forecast of the current field; it never sees the realized field
//! before its plans are executed. After execution the environment computes
//! the collected values, metrics and rewards, refreshes the forecast and
//! prunes the target, then hands the outcome back so learning methods can
//! store transitions.

use serde::{Deserialize, Serialize};

use crate::collective::{self, CollectiveConfig, IterationRecord, TargetMatrix, Tree};
use crate::energy::EnergyModel;
use crate::error::{invalid, Error, Result};
use crate::forecast::{self, FitSample, Forecaster};
use crate::matrix::{CountMatrix, ValueMatrix};
use crate::metrics::{self, Landing, PeriodMetrics, Weights};
use crate::par::Execution;
use crate::plangen::{self, Plan, PlanConfig, PlanContext, PlanGroup};
use crate::rl::{Buffer, EpisodeLog, PolicyPair, PpoConfig, RoundStats, Transition};
use crate::scenario::{DroneFleet, GridMap, SensingField, TimeStructure};
use crate::seed;

/// Episode id used for evaluation streams, distinct from any training episode.
pub const EVAL_EPISODE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "do-rl")]
    DoRl,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "epos")]
    Epos,
    #[serde(rename = "mappo")]
    Mappo,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DoRl, Method::Greedy, Method::Epos, Method::Mappo];

    pub fn name(self) -> &'static str {
        match self {
            Method::DoRl => "do-rl",
            Method::Greedy => "greedy",
            Method::Epos => "epos",
            Method::Mappo => "mappo",
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, Method::DoRl | Method::Mappo)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected do-rl, greedy, epos or mappo)")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which field the reward's efficiency and accuracy terms compare against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBasis {
    /// The realized field, revealed after execution.
    #[default]
    Realized,
    /// The forecast refreshed from the values just collected.
    Forecast,
}

/// Everything fixed for the duration of a run.
#[derive(Debug, Clone)]
pub struct World {
    pub grid: GridMap,
    pub time: TimeStructure,
    /// Required values over the whole data horizon.
    pub field: SensingField,
    pub fleet: DroneFleet,
    pub energy: EnergyModel,
    pub plan: PlanConfig,
    pub plans_per_drone: usize,
    pub collective: CollectiveConfig,
    pub weights: Weights,
    pub accuracy_cap: f64,
    pub reward_basis: RewardBasis,
    pub forecaster: Forecaster,
    /// Mean training-split field, the forecast before anything is observed.
    pub prior: ValueMatrix,
    /// Periods `0..train_periods` feed training; evaluation uses the last
    /// `time.periods` periods of the horizon.
    pub train_periods: usize,
    pub seed: u64,
    pub execution: Execution,
}

/// Fraction of the horizon used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

impl World {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: GridMap,
        time: TimeStructure,
        field: SensingField,
        fleet: DroneFleet,
        energy: EnergyModel,
        plan: PlanConfig,
        plans_per_drone: usize,
        collective: CollectiveConfig,
        weights: Weights,
        accuracy_cap: f64,
        reward_basis: RewardBasis,
        seed: u64,
        execution: Execution,
    ) -> Result<Self> {
        let periods = time.periods;
        if field.periods() < periods || field.cells() != grid.cell_count() || field.slots() != time.slots {
            return invalid("field dimensions do not match the grid and time structure");
        }
        if fleet.len() > grid.cell_count() {
            return invalid("more drones than cells");
        }
        let train_periods = ((field.periods() as f64 * TRAIN_FRACTION).floor() as usize).clamp(periods, field.periods());
        let (forecaster, prior) = fit_forecast(&field, train_periods, periods)?;
        Ok(Self {
            grid,
            time,
            field,
            fleet,
            energy,
            plan,
            plans_per_drone,
            collective,
            weights,
            accuracy_cap,
            reward_basis,
            forecaster,
            prior,
            train_periods,
            seed,
            execution,
        })
    }

    pub fn plan_context(&self) -> PlanContext<'_> {
        PlanContext {
            grid: &self.grid,
            time: &self.time,
            energy: &self.energy,
            config: &self.plan,
        }
    }

    pub fn drones(&self) -> usize {
        self.fleet.len()
    }

    /// First period of the held-out evaluation episode.
    pub fn eval_start(&self) -> usize {
        self.field.periods() - self.time.periods
    }

    /// Number of distinct training window starts.
    pub fn train_windows(&self) -> usize {
        self.train_periods.saturating_sub(self.time.periods) + 1
    }

    /// Each drone's full plan set for one period.
    pub fn plan_groups(&self, episode: u64, t: usize, stations: &[usize]) -> Result<Vec<Vec<PlanGroup>>> {
        let ctx = self.plan_context();
        self.execution
            .map_range(stations.len(), |u| {
                let mut rng = seed::rng(self.seed, seed::PLANS, &[episode, t as u64, u as u64]);
                plangen::generate_all(&ctx, stations[u], self.plans_per_drone, &mut rng)
            })
            .into_iter()
            .collect()
    }

    /// Tree over the drones, placed by their current stations.
    pub fn tree(&self, stations: &[usize]) -> Tree {
        let ids: Vec<usize> = (0..stations.len()).collect();
        let pos: Vec<_> = stations.iter().map(|&m| self.grid.stations()[m].coord).collect();
        Tree::build(&ids, &pos)
    }
}

/// Fit the forecaster on the training periods: every window start and every
/// in-episode period `t < T` gives one (history, next field) sample. The
/// prior is the training-split mean field.
fn fit_forecast(field: &SensingField, train_periods: usize, periods: usize) -> Result<(Forecaster, ValueMatrix)> {
    let (cells, slots) = (field.cells(), field.slots());
    let fields: Vec<ValueMatrix> = (0..train_periods.min(field.periods())).map(|t| field.required_period(t)).collect();
    let mut prior = ValueMatrix::zeros(cells, slots);
    for f in &fields {
        for (p, v) in prior.as_mut_slice().iter_mut().zip(f.as_slice()) {
            *p += v / fields.len() as f64;
        }
    }
    let mut samples = Vec::new();
    for start in 0..=fields.len().saturating_sub(periods) {
        for t in 1..periods {
            if start + t < fields.len() {
                samples.push(FitSample {
                    history: &fields[start..start + t],
                    realized: &fields[start + t],
                });
            }
        }
    }
    let forecaster = if samples.is_empty() {
        Forecaster::uniform(cells, slots, forecast::DEFAULT_OMEGA)
    } else {
        Forecaster::fit(cells, slots, periods, &samples)?
    };
    Ok((forecaster, prior))
}

/// A drone's local state at the start of a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    /// 0-based station the drone takes off from.
    pub station: usize,
    /// Battery left when the previous period ended (1 at the start).
    pub battery: f64,
}

/// What a coordinator may look at when planning period `t`.
pub struct PeriodInput<'a> {
    pub world: &'a World,
    pub episode: u64,
    /// 1-based period within the episode.
    pub t: usize,
    pub states: &'a [DroneState],
    pub last_plans: &'a [Option<Plan>],
    pub last_global: &'a CountMatrix,
    /// Best current estimate of this period's field.
    pub forecast: &'a ValueMatrix,
    pub target: &'a TargetMatrix,
    pub explore: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Decision {
    pub plans: Vec<Plan>,
    /// Collective-selection trace, if one ran.
    pub trace: Vec<IterationRecord>,
    pub messages: usize,
    /// Battery-exhaustion returns forced during the period.
    pub violations: usize,
}

/// What happened in one period.
pub struct PeriodResult<'a> {
    pub t: usize,
    pub last: bool,
    pub plans: &'a [Plan],
    pub global: &'a CountMatrix,
    pub required: &'a ValueMatrix,
    pub collected: &'a ValueMatrix,
    pub predicted: &'a ValueMatrix,
    pub rewards: &'a [f64],
    pub next_states: &'a [DroneState],
    pub accuracy_cap: f64,
    pub weights: &'a Weights,
}

pub trait Coordinator: Send {
    fn method(&self) -> Method;

    fn decide(&mut self, input: &PeriodInput<'_>) -> Result<Decision>;

    /// Called after each executed period.
    fn observe(&mut self, _input: &PeriodInput<'_>, _result: &PeriodResult<'_>) -> Result<()> {
        Ok(())
    }

    /// Called after each training episode; learning methods update here.
    fn end_episode(&mut self, _episode: u64) -> Result<Option<RoundStats>> {
        Ok(None)
    }

    /// Switch transition storage on or off.
    fn set_learning(&mut self, _on: bool) {}

    /// Learned parameters, for checkpoints.
    fn policies(&self) -> Option<&[PolicyPair]> {
        None
    }
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOutcome {
    pub metrics: Vec<PeriodMetrics>,
    /// Reward fed to learning, per period per drone.
    pub rewards: Vec<Vec<f64>>,
    pub traces: Vec<Vec<IterationRecord>>,
    pub plans: Vec<Vec<Plan>>,
    pub landings: Vec<Vec<Landing>>,
    pub targets: Vec<TargetMatrix>,
    pub messages: usize,
    pub violations: usize,
}

impl EpisodeOutcome {
    pub fn mean_reward(&self) -> f64 {
        let all: Vec<f64> = self.rewards.iter().flatten().copied().collect();
        metrics::mean(&all)
    }
}

/// Collected values: the full requirement wherever at least one drone hovers.
pub fn collect(global: &CountMatrix, required: &ValueMatrix) -> ValueMatrix {
    let mut out = ValueMatrix::zeros(required.cells(), required.slots());
    for (o, (&p, &r)) in out.as_mut_slice().iter_mut().zip(global.as_slice().iter().zip(required.as_slice())) {
        *o = if p > 0 { r } else { 0.0 };
    }
    out
}

/// Simulate `time.periods` periods starting at field period `start`.
pub fn run_episode(
    world: &World,
    coord: &mut dyn Coordinator,
    episode: u64,
    start: usize,
    explore: bool,
) -> Result<EpisodeOutcome> {
    let periods = world.time.periods;
    if start + periods > world.field.periods() {
        return invalid(format!("episode window {start}+{periods} exceeds the data horizon"));
    }
    let (cells, slots) = (world.grid.cell_count(), world.time.slots);
    let u = world.drones();
    let mut states: Vec<DroneState> = world
        .fleet
        .drones()
        .iter()
        .map(|d| DroneState {
            station: d.home_station,
            battery: 1.0,
        })
        .collect();
    let mut last_plans: Vec<Option<Plan>> = vec![None; u];
    let mut last_global = CountMatrix::zeros(cells, slots);
    let mut target = TargetMatrix::ones(cells, slots);
    let mut history: Vec<ValueMatrix> = Vec::with_capacity(periods);
    let mut forecast = world.prior.clone();
    let mut out = EpisodeOutcome::default();

    for t in 1..=periods {
        let input = PeriodInput {
            world,
            episode,
            t,
            states: &states,
            last_plans: &last_plans,
            last_global: &last_global,
            forecast: &forecast,
            target: &target,
            explore,
        };
        let decision = coord.decide(&input)?;
        if decision.plans.len() != u {
            return Err(Error::InvalidInput(format!(
                "{} returned {} plans for {u} drones",
                coord.method(),
                decision.plans.len()
            )));
        }
        for (k, p) in decision.plans.iter().enumerate() {
            p.check(&world.time)
                .map_err(|e| Error::InvalidInput(format!("{} plan for drone {}: {e}", coord.method(), k + 1)))?;
        }
        let mut global = CountMatrix::zeros(cells, slots);
        for p in &decision.plans {
            p.add_to(&mut global);
        }
        let required = world.field.required_period(start + t - 1);
        let collected = collect(&global, &required);
        history.push(collected.clone());
        let predicted = world.forecaster.predict(&history, periods)?;

        let landings: Vec<Landing> = decision
            .plans
            .iter()
            .map(|p| Landing {
                station: p.terminal_station,
                energy: p.energy,
            })
            .collect();
        let m = PeriodMetrics::compute(
            t,
            &collected,
            &required,
            &landings,
            world.grid.station_count(),
            world.energy.capacity,
            world.accuracy_cap,
            &world.weights,
        )?;
        let rewards = match world.reward_basis {
            RewardBasis::Realized => m.reward.clone(),
            RewardBasis::Forecast => {
                let eff = metrics::efficiency(&collected, &predicted);
                let acc = metrics::accuracy(&collected, &predicted, world.accuracy_cap);
                landings
                    .iter()
                    .map(|l| metrics::overall(eff, acc, l.energy, &world.weights))
                    .collect()
            }
        };
        let next_states: Vec<DroneState> = decision
            .plans
            .iter()
            .map(|p| DroneState {
                station: p.terminal_station,
                battery: (1.0 - p.energy).clamp(0.0, 1.0),
            })
            .collect();

        let result = PeriodResult {
            t,
            last: t == periods,
            plans: &decision.plans,
            global: &global,
            required: &required,
            collected: &collected,
            predicted: &predicted,
            rewards: &rewards,
            next_states: &next_states,
            accuracy_cap: world.accuracy_cap,
            weights: &world.weights,
        };
        coord.observe(&input, &result)?;
        forecast::update_target(&mut target, &predicted, &collected, &global, u)?;

        out.metrics.push(m);
        out.rewards.push(rewards);
        out.traces.push(decision.trace);
        out.landings.push(landings);
        out.targets.push(target.clone());
        out.messages += decision.messages;
        out.violations += decision.violations;
        last_plans = decision.plans.iter().cloned().map(Some).collect();
        out.plans.push(decision.plans);
        last_global = global;
        forecast = predicted;
        states = next_states;
    }
    Ok(out)
}

/// Train over `episodes` episodes on randomly placed training windows.
pub fn train(world: &World, coord: &mut dyn Coordinator, episodes: usize) -> Result<Vec<EpisodeLog>> {
    use rand::Rng as _;
    if episodes == 0 {
        return invalid("training needs at least one episode");
    }
    coord.set_learning(true);
    let mut log = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = seed::rng(world.seed, seed::WINDOWS, &[e as u64]);
        let start = rng.gen_range(0..world.train_windows());
        let outcome = run_episode(world, coord, e as u64, start, true)?;
        let stats = coord.end_episode(e as u64)?.unwrap_or_default();
        log.push(EpisodeLog {
            episode: e + 1,
            mean_reward: outcome.mean_reward(),
            critic_loss: stats.critic_loss,
            actor_objective: stats.actor_objective,
            clip_fraction: stats.clip_fraction,
        });
    }
    coord.set_learning(false);
    Ok(log)
}

/// Greedy (non-exploring) episode over the held-out periods.
pub fn evaluate(world: &World, coord: &mut dyn Coordinator) -> Result<EpisodeOutcome> {
    coord.set_learning(false);
    run_episode(world, coord, EVAL_EPISODE, world.eval_start(), false)
}

/// Per-agent actor/critic pairs, replay buffers and the transitions of the
/// period in flight.
pub struct Learners {
    pub cfg: PpoConfig,
    pub agents: Vec<PolicyPair>,
    pub buffers: Vec<Buffer>,
    pub learning: bool,
    seed: u64,
    execution: Execution,
}

impl Learners {
    pub fn new(cfg: PpoConfig, obs_dim: usize, actions: usize, drones: usize, seed: u64, execution: Execution) -> Self {
        let agents = (0..drones)
            .map(|u| PolicyPair::new(obs_dim, actions, &cfg, &mut seed::rng(seed, seed::NETWORK_INIT, &[u as u64])))
            .collect();
        Self {
            buffers: (0..drones).map(|_| Buffer::new(cfg.buffer_capacity)).collect(),
            cfg,
            agents,
            learning: true,
            seed,
            execution,
        }
    }

    pub fn with_agents(cfg: PpoConfig, agents: Vec<PolicyPair>, seed: u64, execution: Execution) -> Self {
        Self {
            buffers: (0..agents.len()).map(|_| Buffer::new(cfg.buffer_capacity)).collect(),
            cfg,
            agents,
            learning: false,
            seed,
            execution,
        }
    }

    /// One update round per agent; statistics averaged over agents.
    pub fn update(&mut self, episode: u64) -> Result<RoundStats> {
        let (cfg, master) = (self.cfg, self.seed);
        let buffers = &self.buffers;
        let mut work: Vec<(&mut PolicyPair, Option<Result<RoundStats>>)> =
            self.agents.iter_mut().map(|a| (a, None)).collect();
        self.execution.for_each_mut(&mut work, |u, (agent, out)| {
            let mut rng = seed::rng(master, seed::SAMPLING, &[episode, u as u64]);
            *out = Some(agent.update_round(&buffers[u], &cfg, &mut rng));
        });
        let n = work.len() as f64;
        let mut total = RoundStats::default();
        for (_, r) in work {
            let s = r.expect("every agent updated")?;
            total.critic_loss += s.critic_loss / n;
            total.actor_objective += s.actor_objective / n;
            total.clip_fraction += s.clip_fraction / n;
        }
        Ok(total)
    }
}

/// Observation layout: station one-hot (M), battery (1), own previous plan
/// (N·S), others' previous aggregate (N·S).
pub fn observation(
    stations: usize,
    cells: usize,
    slots: usize,
    state: &DroneState,
    own: Option<&Plan>,
    others: &CountMatrix,
) -> Vec<(usize, f64)> {
    let ns = cells * slots;
    let mut x = vec![(state.station, 1.0)];
    if state.battery != 0.0 {
        x.push((stations, state.battery));
    }
    let own_base = stations + 1;
    if let Some(p) = own {
        x.extend(p.visits.iter().map(|v| (own_base + v.cell * slots + v.slot, 1.0)));
    }
    let others_base = own_base + ns;
    x.extend(
        others
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (others_base + i, f64::from(c))),
    );
    x
}

pub fn observation_dim(stations: usize, cells: usize, slots: usize) -> usize {
    stations + 1 + 2 * cells * slots
}

fn others_of(global: &CountMatrix, own: Option<&Plan>) -> CountMatrix {
    let mut others = global.clone();
    if let Some(p) = own {
        p.remove_from(&mut others);
    }
    others
}

/// Direction choice by PPO, plan choice by collective selection.
pub struct DoRl {
    pub learners: Learners,
    pending: Vec<(Vec<(usize, f64)>, usize)>,
}

impl DoRl {
    pub fn new(world: &World, cfg: PpoConfig) -> Self {
        let dim = observation_dim(world.grid.station_count(), world.grid.cell_count(), world.time.slots);
        Self {
            learners: Learners::new(cfg, dim, plangen::ACTION_COUNT, world.drones(), world.seed, world.execution),
            pending: Vec::new(),
        }
    }

    pub fn from_learners(learners: Learners) -> Self {
        Self {
            learners,
            pending: Vec::new(),
        }
    }

    fn obs(world: &World, state: &DroneState, own: Option<&Plan>, global: &CountMatrix) -> Vec<(usize, f64)> {
        observation(
            world.grid.station_count(),
            world.grid.cell_count(),
            world.time.slots,
            state,
            own,
            &others_of(global, own),
        )
    }
}

impl Coordinator for DoRl {
    fn method(&self) -> Method {
        Method::DoRl
    }

    fn decide(&mut self, input: &PeriodInput<'_>) -> Result<Decision> {
        let w = input.world;
        let mut actions = Vec::with_capacity(input.states.len());
        let mut pending = Vec::with_capacity(input.states.len());
        for (u, state) in input.states.iter().enumerate() {
            let own = input.last_plans[u].as_ref();
            let obs = Self::obs(w, state, own, input.last_global);
            let mut rng = seed::rng(w.seed, seed::ACTIONS, &[input.episode, input.t as u64, u as u64]);
            let a = self.learners.agents[u].act(&obs, input.explore, &mut rng)?;
            actions.push(a);
            pending.push((obs, a));
        }
        self.pending = pending;
        let stations: Vec<usize> = input.states.iter().map(|s| s.station).collect();
        let groups = w.plan_groups(input.episode, input.t, &stations)?;
        let candidates: Vec<&[Plan]> = groups.iter().zip(&actions).map(|(g, &a)| g[a].plans.as_slice()).collect();
        let tree = w.tree(&stations);
        let outcome = collective::run_collective_selection(&tree, &candidates, input.target, w.collective)?;
        let plans = outcome
            .selected
            .iter()
            .zip(&candidates)
            .map(|(s, c)| c[s.expect("every drone is in the tree")].clone())
            .collect();
        Ok(Decision {
            plans,
            trace: outcome.trace,
            messages: outcome.messages,
            violations: 0,
        })
    }

    fn observe(&mut self, input: &PeriodInput<'_>, result: &PeriodResult<'_>) -> Result<()> {
        if !self.learners.learning {
            return Ok(());
        }
        let pending = std::mem::take(&mut self.pending);
        for (u, (obs, action)) in pending.into_iter().enumerate() {
            let next = (!result.last)
                .then(|| Self::obs(input.world, &result.next_states[u], Some(&result.plans[u]), result.global));
            self.learners.buffers[u].push(Transition {
                obs,
                action,
                reward: result.rewards[u],
                next,
            });
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{build_world, coordinator, ExperimentConfig};

    fn tiny(periods: usize, drones: usize) -> World {
        let mut cfg = ExperimentConfig::desk();
        cfg.scenario.periods = periods;
        cfg.fleet.drones = drones;
        cfg.rl.ppo.hidden = 8;
        build_world(&cfg, 3).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("ppo".parse::<Method>(), Err(Error::Config(_))));
        assert!(Method::DoRl.learns() && Method::Mappo.learns());
        assert!(!Method::Greedy.learns() && !Method::Epos.learns());
    }

    #[test]
    fn collect_takes_the_requirement_where_visited() {
        let mut g = CountMatrix::zeros(2, 2);
        g.set(0, 1, 2);
        g.set(1, 0, 1);
        let req = ValueMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(collect(&g, &req).as_slice(), &[0.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn observation_layout() {
        let (m, n, s) = (2, 3, 2);
        let own = Plan::from_visits(n, s, vec![plangen::Visit { cell: 1, slot: 1 }], 0.1);
        let mut others = CountMatrix::zeros(n, s);
        others.set(2, 0, 3);
        let state = DroneState { station: 1, battery: 0.4 };
        let x = observation(m, n, s, &state, Some(&own), &others);
        assert_eq!(x, vec![(1, 1.0), (2, 0.4), (3 + 3, 1.0), (3 + 6 + 4, 3.0)]);
        assert!(x.iter().all(|(i, _)| *i < observation_dim(m, n, s)));
        assert_eq!(observation_dim(m, n, s), m + 1 + 2 * n * s);
    }

    #[test]
    fn one_period_one_drone_one_transition() {
        let world = tiny(1, 1);
        let mut c = DoRl::new(&world, PpoConfig { hidden: 8, ..PpoConfig::default() });
        let log = train(&world, &mut c, 1).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].episode, 1);
        assert_eq!(c.learners.buffers[0].len(), 1);
        assert!(c.learners.buffers[0].get(0).next.is_none());
        assert!(!c.learners.learning);
    }

    #[test]
    fn transitions_chain_within_an_episode() {
        let world = tiny(4, 2);
        let mut c = DoRl::new(&world, PpoConfig { hidden: 8, ..PpoConfig::default() });
        train(&world, &mut c, 2).unwrap();
        for b in &c.learners.buffers {
            assert_eq!(b.len(), 8);
            let ends = (0..b.len()).filter(|&i| b.get(i).next.is_none()).count();
            assert_eq!(ends, 2);
        }
    }

    #[test]
    fn episodes_are_deterministic_and_plans_valid() {
        let world = tiny(4, 4);
        for m in Method::ALL {
            let run = || {
                let mut c = coordinator(&world, m, PpoConfig { hidden: 8, ..PpoConfig::default() });
                if m.learns() {
                    train(&world, c.as_mut(), 2).unwrap();
                }
                evaluate(&world, c.as_mut()).unwrap()
            };
            let (a, b) = (run(), run());
            assert_eq!(a.metrics, b.metrics, "{m}");
            assert_eq!(a.plans, b.plans, "{m}");
            assert_eq!(a.metrics.len(), 4);
            for p in a.plans.iter().flatten() {
                p.check(&world.time).unwrap();
            }
        }
    }

    #[test]
    fn window_past_the_horizon_is_rejected() {
        let world = tiny(4, 1);
        let start = world.field.periods() - 3;
        assert!(run_episode(&world, &mut crate::baselines::Greedy, 0, start, false).is_err());
    }

    #[test]
    fn evaluation_uses_the_held_out_tail() {
        let world = tiny(4, 1);
        assert_eq!(world.eval_start() + world.time.periods, world.field.periods());
        assert!(world.train_periods < world.field.periods());
        assert!(world.train_windows() >= 1);
    }
}
