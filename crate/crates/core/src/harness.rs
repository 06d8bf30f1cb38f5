//! Experiment configuration, orchestration and result export.
//!
//! A run writes to `<output>/<config-hash>/<seed>/<method>/`:
//! `metrics.csv`, `stations.csv`, `traces/period_<t>.csv`, and for learning
//! methods `training.csv` and `checkpoint.json`. The config hash covers
//! everything that shapes results except the method and seed lists, so
//! runs of different methods on the same scenario share a hash and can be
//! compared directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{EposOnly, Greedy, Mappo};
use crate::collective::{self, CollectiveConfig};
use crate::energy::{DroneSpec, EnergyModel};
use crate::error::{Error, Result};
use crate::metrics::{self, Weights, DEFAULT_ACCURACY_CAP, METRICS_HEADER, STATION_HEADER};
use crate::par::Execution;
use crate::plangen::{HoverRule, PlanConfig};
use crate::rl::{self, Checkpoint, EpisodeLog, PpoConfig};
use crate::scenario::{self, Coord, DroneFleet, GridMap, Hotspot, TemporalProfile, TimeStructure};
use crate::sim::{self, Coordinator, DoRl, EpisodeOutcome, Learners, Method, RewardBasis, World};

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotspotConfig {
    /// 1-based cell index of the centre.
    pub cell: usize,
    pub peak: f64,
    #[serde(default)]
    pub spread: f64,
    #[serde(default = "flat")]
    pub profile: TemporalProfile,
}

fn flat() -> TemporalProfile {
    TemporalProfile::Flat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficConfig {
    Synthetic {
        hotspots: Vec<HotspotConfig>,
        /// Half-width of the per-period multiplicative peak noise.
        #[serde(default = "default_noise")]
        noise: f64,
    },
    /// `period,cell,slot,value` rows with 1-based indices.
    Csv { path: PathBuf },
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rows: usize,
    pub cols: usize,
    /// Meters.
    pub cell_size: f64,
    /// 1-based `[row, col]` station cells; uniform placement when absent.
    pub stations: Option<Vec<[usize; 2]>>,
    pub station_count: usize,
    pub periods: usize,
    pub slots: usize,
    /// Seconds.
    pub slot_duration: f64,
    /// Periods of traffic data (training plus held-out).
    pub horizon: usize,
    pub traffic: TrafficConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DroneChoice {
    Preset(String),
    Spec(DroneSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub drones: usize,
    /// 1-based home station per drone; round-robin when absent.
    pub homes: Option<Vec<usize>>,
    pub drone: DroneChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlansConfig {
    /// Plans per drone per period (L).
    pub count: usize,
    /// Cells visited per plan (J).
    pub mobility: usize,
    pub hover: HoverRule,
    pub origin_hover: bool,
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectiveSection {
    pub beta: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlSection {
    pub episodes: usize,
    #[serde(flatten)]
    pub ppo: PpoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub weights: Weights,
    pub accuracy_cap: f64,
    pub reward_basis: RewardBasis,
}

/// One swept key (dotted path into the config) and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub execution: Execution,
    pub scenario: ScenarioConfig,
    pub fleet: FleetConfig,
    pub plans: PlansConfig,
    pub collective: CollectiveSection,
    pub rl: RlSection,
    pub metrics: MetricsSection,
    pub sweep: Option<Sweep>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ExperimentConfig::basic().scenario
    }
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            drones: 16,
            homes: None,
            drone: DroneChoice::Preset("phantom4-pro".into()),
        }
    }
}

impl Default for PlansConfig {
    fn default() -> Self {
        Self {
            count: 64,
            mobility: 2,
            hover: HoverRule::FillPeriod { max_energy: 0.75 },
            origin_hover: true,
            max_attempts: 100,
        }
    }
}

impl Default for CollectiveSection {
    fn default() -> Self {
        Self {
            beta: 0.5,
            iterations: 40,
        }
    }
}

impl Default for RlSection {
    fn default() -> Self {
        Self {
            episodes: 5000,
            ppo: PpoConfig::default(),
        }
    }
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            accuracy_cap: DEFAULT_ACCURACY_CAP,
            reward_basis: RewardBasis::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::basic()
    }
}

impl ExperimentConfig {
    /// 8×8 cells of 200 m, four stations, 16 drones, T = 8 periods of 30
    /// one-minute slots, 64 plans visiting two cells, 5000 episodes.
    pub fn basic() -> Self {
        let hotspot = |cell, peak, phase| HotspotConfig {
            cell,
            peak,
            spread: 1.2,
            profile: TemporalProfile::Periodic {
                cycle: 8.0,
                phase,
                amplitude: 0.6,
            },
        };
        Self {
            methods: vec![Method::DoRl],
            seeds: vec![42],
            output: PathBuf::from("out"),
            execution: Execution::default(),
            scenario: ScenarioConfig {
                rows: 8,
                cols: 8,
                cell_size: 200.0,
                stations: None,
                station_count: 4,
                periods: 8,
                slots: 30,
                slot_duration: 60.0,
                horizon: 40,
                traffic: TrafficConfig::Synthetic {
                    hotspots: vec![
                        hotspot(19, 40.0, 0.0),
                        hotspot(46, 30.0, 2.0),
                        hotspot(30, 25.0, 4.0),
                        hotspot(52, 20.0, 6.0),
                    ],
                    noise: 0.1,
                },
            },
            fleet: FleetConfig::default(),
            plans: PlansConfig::default(),
            collective: CollectiveSection::default(),
            rl: RlSection::default(),
            metrics: MetricsSection::default(),
            sweep: None,
        }
    }

    /// 4×4 cells, two stations, four drones, T = 4 periods of 10 slots,
    /// two hotspots, 300 training episodes.
    pub fn desk() -> Self {
        let mut c = Self::basic();
        c.scenario = ScenarioConfig {
            rows: 4,
            cols: 4,
            cell_size: 200.0,
            stations: None,
            station_count: 2,
            periods: 4,
            slots: 10,
            slot_duration: 180.0,
            horizon: 20,
            traffic: TrafficConfig::Synthetic {
                hotspots: vec![
                    HotspotConfig {
                        cell: 6,
                        peak: 1.2,
                        spread: 0.5,
                        profile: TemporalProfile::Periodic {
                            cycle: 4.0,
                            phase: 0.0,
                            amplitude: 0.5,
                        },
                    },
                    HotspotConfig {
                        cell: 16,
                        peak: 0.9,
                        spread: 0.5,
                        profile: TemporalProfile::Periodic {
                            cycle: 4.0,
                            phase: 2.0,
                            amplitude: 0.5,
                        },
                    },
                ],
                noise: 0.1,
            },
        };
        c.fleet.drones = 4;
        c.rl.episodes = 300;
        // A short on-policy buffer and normalised advantages keep the small
        // swarm from locking into a direction before the critic has settled.
        c.rl.ppo.buffer_capacity = 64;
        c.rl.ppo.normalize_advantages = true;
        c.rl.ppo.actor_lr = 1e-3;
        c.rl.ppo.critic_lr = 3e-4;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "basic" => Ok(Self::basic()),
            "desk" => Ok(Self::desk()),
            _ => Err(config_err(format!("unknown preset `{name}` (expected basic or desk)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // Relative traffic paths are relative to the config file.
        if let TrafficConfig::Csv { path: p } = &mut cfg.scenario.traffic {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let positive = [
            ("scenario.rows", s.rows),
            ("scenario.cols", s.cols),
            ("scenario.periods", s.periods),
            ("scenario.slots", s.slots),
            ("scenario.horizon", s.horizon),
            ("fleet.drones", self.fleet.drones),
            ("plans.mobility", self.plans.mobility),
            ("plans.max_attempts", self.plans.max_attempts),
            ("collective.iterations", self.collective.iterations),
            ("rl.episodes", self.rl.episodes),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config_err(format!("{k} must be >= 1")));
        }
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(config_err("methods and seeds must be non-empty"));
        }
        if s.horizon < s.periods {
            return Err(config_err("scenario.horizon must be >= scenario.periods"));
        }
        if !(s.cell_size > 0.0) || !(s.slot_duration > 0.0) {
            return Err(config_err("scenario.cell_size and scenario.slot_duration must be positive"));
        }
        if self.plans.count < crate::plangen::ACTION_COUNT {
            return Err(config_err(format!(
                "plans.count must be >= {}",
                crate::plangen::ACTION_COUNT
            )));
        }
        if self.fleet.drones > s.rows * s.cols {
            return Err(config_err("fleet.drones exceeds the number of cells"));
        }
        if !(0.0..=1.0).contains(&self.collective.beta) {
            return Err(config_err("collective.beta must lie in [0, 1]"));
        }
        if !(self.metrics.accuracy_cap > 0.0) {
            return Err(config_err("metrics.accuracy_cap must be positive"));
        }
        self.metrics.weights.validate().map_err(|e| config_err(e.to_string()))?;
        self.rl.ppo.validate().map_err(|e| config_err(e.to_string()))?;
        if let HoverRule::FillPeriod { max_energy } = self.plans.hover {
            if !(max_energy > 0.0 && max_energy <= 1.0) {
                return Err(config_err("plans.hover.max_energy must lie in (0, 1]"));
            }
        }
        if let TrafficConfig::Csv { path } = &s.traffic {
            if !path.is_file() {
                return Err(config_err(format!("traffic file {} does not exist", path.display())));
            }
        }
        self.stations()?;
        self.drone_spec()?;
        Ok(())
    }

    /// 0-based station coordinates.
    pub fn stations(&self) -> Result<Vec<Coord>> {
        let s = &self.scenario;
        match &s.stations {
            Some(list) => list
                .iter()
                .map(|&[r, c]| {
                    if r == 0 || c == 0 || r > s.rows || c > s.cols {
                        Err(config_err(format!("station ({r}, {c}) outside the grid")))
                    } else {
                        Ok(Coord::new(r - 1, c - 1))
                    }
                })
                .collect(),
            None => {
                if s.station_count == 0 || s.station_count > s.rows * s.cols {
                    return Err(config_err("scenario.station_count must be in 1..=cells"));
                }
                Ok(scenario::uniform_stations(s.rows, s.cols, s.station_count))
            }
        }
    }

    pub fn drone_spec(&self) -> Result<DroneSpec> {
        let spec = match &self.fleet.drone {
            DroneChoice::Preset(name) => {
                DroneSpec::by_name(name).ok_or_else(|| config_err(format!("unknown drone preset `{name}`")))?
            }
            DroneChoice::Spec(spec) => *spec,
        };
        spec.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(spec)
    }

    /// Hex digest of everything that shapes results except the method list,
    /// seeds, output location, execution mode and sweep description.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.methods.clear();
        c.seeds.clear();
        c.output = PathBuf::new();
        c.sweep = None;
        c.execution = Execution::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// One config per sweep point (just `self` without a sweep).
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        if sweep.values.is_empty() {
            return Err(config_err("sweep.values must be non-empty"));
        }
        let mut base = self.clone();
        base.sweep = None;
        let value = toml::Value::try_from(&base).map_err(|e| config_err(e.to_string()))?;
        sweep
            .values
            .iter()
            .map(|v| {
                let mut point = value.clone();
                set_path(&mut point, &sweep.key, v.clone())?;
                let cfg: ExperimentConfig = point
                    .try_into()
                    .map_err(|e| config_err(format!("sweep {} = {v}: {e}", sweep.key)))?;
                Ok(cfg)
            })
            .collect()
    }
}

fn set_path(root: &mut toml::Value, key: &str, v: toml::Value) -> Result<()> {
    let mut at = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = at
            .as_table_mut()
            .ok_or_else(|| config_err(format!("sweep key `{key}` does not name a config field")))?;
        if i + 1 == parts.len() {
            if !table.contains_key(*part) {
                return Err(config_err(format!("sweep key `{key}` does not name a config field")));
            }
            table.insert(part.to_string(), v);
            return Ok(());
        }
        at = table
            .get_mut(*part)
            .ok_or_else(|| config_err(format!("sweep key `{key}` does not name a config field")))?;
    }
    Ok(())
}

/// Grid, time structure and required field for one seed.
pub fn build_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<(GridMap, TimeStructure, scenario::SensingField)> {
    let s = &cfg.scenario;
    let grid = GridMap::new(s.rows, s.cols, s.cell_size, &cfg.stations()?)?;
    let time = TimeStructure::new(s.periods, s.slots, s.slot_duration, s.horizon)?;
    let field = match &s.traffic {
        TrafficConfig::Synthetic { hotspots, noise } => {
            let hs = hotspots
                .iter()
                .map(|h| {
                    if h.cell == 0 || h.cell > grid.cell_count() {
                        return Err(config_err(format!("hotspot cell {} outside the grid", h.cell)));
                    }
                    Ok(Hotspot {
                        center: h.cell - 1,
                        peak: h.peak,
                        spread: h.spread,
                        profile: h.profile.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            scenario::generate_synthetic_traffic(&grid, &time, &hs, seed, *noise)?
        }
        TrafficConfig::Csv { path } => scenario::import_traffic_csv(path, &grid, &time)?,
    };
    Ok((grid, time, field))
}

pub fn build_world(cfg: &ExperimentConfig, seed: u64) -> Result<World> {
    cfg.validate()?;
    let (grid, time, field) = build_scenario(cfg, seed)?;
    let fleet = match &cfg.fleet.homes {
        Some(h) => {
            if h.len() != cfg.fleet.drones || h.contains(&0) {
                return Err(config_err("fleet.homes needs one 1-based station per drone"));
            }
            DroneFleet::new(&h.iter().map(|x| x - 1).collect::<Vec<_>>(), &grid)?
        }
        None => DroneFleet::round_robin(cfg.fleet.drones, &grid)?,
    };
    let energy = EnergyModel::new(&cfg.drone_spec()?)?;
    let plan = PlanConfig {
        mobility: cfg.plans.mobility,
        hover: cfg.plans.hover,
        origin_hover: cfg.plans.origin_hover,
        max_attempts: cfg.plans.max_attempts,
    };
    let collective = CollectiveConfig {
        beta: cfg.collective.beta,
        iterations: cfg.collective.iterations,
        execution: cfg.execution,
    };
    World::new(
        grid,
        time,
        field,
        fleet,
        energy,
        plan,
        cfg.plans.count,
        collective,
        cfg.metrics.weights,
        cfg.metrics.accuracy_cap,
        cfg.metrics.reward_basis,
        seed,
        cfg.execution,
    )
}

pub fn coordinator(world: &World, method: Method, ppo: PpoConfig) -> Box<dyn Coordinator> {
    match method {
        Method::DoRl => Box::new(DoRl::new(world, ppo)),
        Method::Greedy => Box::new(Greedy),
        Method::Epos => Box::new(EposOnly),
        Method::Mappo => Box::new(Mappo::new(world, ppo)),
    }
}

/// A learning coordinator with restored parameters.
pub fn restore(world: &World, method: Method, ppo: PpoConfig, ckpt: &Checkpoint) -> Result<Box<dyn Coordinator>> {
    if ckpt.method != method.name() {
        return Err(Error::InvalidInput(format!(
            "checkpoint holds {} policies, not {method}",
            ckpt.method
        )));
    }
    let agents = ckpt.restore(&ppo)?;
    if agents.len() != world.drones() {
        return Err(Error::InvalidInput(format!(
            "checkpoint has {} agents for {} drones",
            agents.len(),
            world.drones()
        )));
    }
    let learners = Learners::with_agents(ppo, agents, world.seed, world.execution);
    Ok(match method {
        Method::DoRl => Box::new(DoRl::from_learners(learners)),
        Method::Mappo => Box::new(Mappo::from_learners(learners)),
        _ => coordinator(world, method, ppo),
    })
}

pub fn run_dir(cfg: &ExperimentConfig, seed: u64, method: Method) -> PathBuf {
    cfg.output.join(cfg.hash()).join(seed.to_string()).join(method.name())
}

/// Everything produced for one (seed, method).
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub dir: PathBuf,
    pub training: Vec<EpisodeLog>,
    pub evaluation: EpisodeOutcome,
}

impl RunResult {
    /// Swarm total of the per-drone per-period overall score.
    pub fn overall(&self) -> f64 {
        self.evaluation.metrics.iter().map(|m| m.overall_sum()).sum()
    }

    pub fn mean_energy(&self) -> f64 {
        let e: Vec<f64> = self.evaluation.metrics.iter().flat_map(|m| m.energy.clone()).collect();
        metrics::mean(&e)
    }
}

fn write_csv<R: Serialize>(path: &Path, hash: &str, rows: &[R], header: &[&str]) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    metrics::write_rows(f, Some(hash), rows, header)
}

/// Train a learning method and save its log and checkpoint.
pub fn train_method(cfg: &ExperimentConfig, world: &World, method: Method, dir: &Path) -> Result<(Box<dyn Coordinator>, Vec<EpisodeLog>)> {
    fs::create_dir_all(dir)?;
    let mut coord = coordinator(world, method, cfg.rl.ppo);
    if !method.learns() {
        return Ok((coord, Vec::new()));
    }
    let hash = cfg.hash();
    let log = sim::train(world, coord.as_mut(), cfg.rl.episodes)?;
    let f = std::io::BufWriter::new(fs::File::create(dir.join("training.csv"))?);
    rl::write_training_csv(f, Some(&hash), &log)?;
    if let Some(p) = coord.policies() {
        Checkpoint::capture(&hash, method.name(), p).save(dir.join("checkpoint.json"))?;
    }
    Ok((coord, log))
}

/// Evaluate on the held-out periods and write the metric tables and traces.
pub fn evaluate_method(cfg: &ExperimentConfig, world: &World, coord: &mut dyn Coordinator, dir: &Path) -> Result<EpisodeOutcome> {
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let method = coord.method();
    let out = sim::evaluate(world, coord)?;
    write_csv(
        &dir.join("metrics.csv"),
        &hash,
        &metrics::metrics_rows(method.name(), world.seed, &out.metrics),
        &METRICS_HEADER,
    )?;
    write_csv(
        &dir.join("stations.csv"),
        &hash,
        &metrics::station_rows(method.name(), world.seed, &out.metrics),
        &STATION_HEADER,
    )?;
    if out.traces.iter().any(|t| !t.is_empty()) {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces)?;
        for (t, trace) in out.traces.iter().enumerate() {
            collective::export_trace_csv(traces.join(format!("period_{}.csv", t + 1)), trace)?;
        }
    }
    Ok(out)
}

/// Train (if needed) and evaluate one method on one seed.
pub fn run_one(cfg: &ExperimentConfig, seed: u64, method: Method) -> Result<RunResult> {
    let world = build_world(cfg, seed)?;
    let dir = run_dir(cfg, seed, method);
    let (mut coord, training) = train_method(cfg, &world, method, &dir)?;
    let evaluation = evaluate_method(cfg, &world, coord.as_mut(), &dir)?;
    Ok(RunResult {
        method,
        seed,
        dir,
        training,
        evaluation,
    })
}

/// Every sweep point × seed × method. Seeds run concurrently when the
/// execution mode allows; each run is independent and deterministic.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let mut results = Vec::new();
    for point in cfg.expand()? {
        point.validate()?;
        let root = point.output.join(point.hash());
        fs::create_dir_all(&root)?;
        fs::write(root.join("config.toml"), point.to_toml()?)?;
        let jobs: Vec<(u64, Method)> = point
            .seeds
            .iter()
            .flat_map(|&s| point.methods.iter().map(move |&m| (s, m)))
            .collect();
        let runs = point.execution.map(&jobs, |&(s, m)| run_one(&point, s, m));
        for r in runs {
            results.push(r?);
        }
    }
    Ok(results)
}

pub const COMPARE_METRICS: [&str; 6] = ["eff", "acc", "energy", "reward", "battery_remaining", "overall"];

/// Per (config hash, method): mean and sample std over seeds of each metric.
/// Per-seed values are means over periods and drones, except `overall`,
/// which sums the reward over drones and periods.
pub fn compare(dirs: &[PathBuf], force: bool) -> Result<String> {
    let mut files = Vec::new();
    for d in dirs {
        collect_metrics(d, &mut files)?;
    }
    if files.len() < 2 {
        return Err(Error::InvalidInput("compare needs at least two completed runs".into()));
    }
    // (hash, method) -> seed -> metric -> values
    type PerSeed = BTreeMap<u64, BTreeMap<&'static str, Vec<f64>>>;
    let mut groups: BTreeMap<(String, String), PerSeed> = BTreeMap::new();
    let mut hashes = std::collections::BTreeSet::new();
    for path in &files {
        let table = metrics::read_table(fs::File::open(path)?).map_err(|e| match e {
            Error::Schema { message, .. } => Error::Schema {
                path: path.clone(),
                message,
            },
            other => other,
        })?;
        let schema = |name: &str| {
            table.column(name).map_err(|_| Error::Schema {
                path: path.clone(),
                message: format!("missing column `{name}`"),
            })
        };
        let cols: Vec<usize> = METRICS_HEADER.iter().map(|h| schema(h)).collect::<Result<_>>()?;
        let hash = table.hash.clone().unwrap_or_default();
        hashes.insert(hash.clone());
        for row in &table.rows {
            let get = |i: usize| row[cols[i]].as_str();
            let num = |i: usize| -> Result<f64> {
                get(i).parse().map_err(|_| Error::Schema {
                    path: path.clone(),
                    message: format!("column `{}` holds non-numeric `{}`", METRICS_HEADER[i], get(i)),
                })
            };
            let seed: u64 = num(1)? as u64;
            let entry = groups
                .entry((hash.clone(), get(0).to_string()))
                .or_default()
                .entry(seed)
                .or_default();
            for (k, i) in [("eff", 4), ("acc", 5), ("energy", 6), ("reward", 7), ("battery_remaining", 8)] {
                entry.entry(k).or_default().push(num(i)?);
            }
        }
    }
    if hashes.len() > 1 && !force {
        return Err(Error::InvalidInput(format!(
            "runs come from different configs ({}); pass --force to join them",
            hashes.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["config_hash".to_string(), "method".into(), "seeds".into()];
        for m in COMPARE_METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header)?;
        for ((hash, method), seeds) in &groups {
            let mut rec = vec![hash.clone(), method.clone(), seeds.len().to_string()];
            for m in COMPARE_METRICS {
                let per_seed: Vec<f64> = seeds
                    .values()
                    .map(|v| match m {
                        "overall" => v["reward"].iter().sum(),
                        _ => metrics::mean(&v[m]),
                    })
                    .collect();
                rec.push(metrics::mean(&per_seed).to_string());
                rec.push(metrics::sample_std(&per_seed).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv is utf-8"))
}

fn collect_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_metrics(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Digest of a generated scenario's required field.
pub fn scenario_hash(field: &scenario::SensingField) -> String {
    let mut h = Sha256::new();
    for v in field.required_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}
