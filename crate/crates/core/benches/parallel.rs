use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use swarmsense::collective::{run_collective_selection, CollectiveConfig, TargetMatrix};
use swarmsense::harness::{build_world, ExperimentConfig};
use swarmsense::par::Execution;
use swarmsense::plangen::Plan;
use swarmsense::rl::PpoConfig;
use swarmsense::sim::{self, DoRl, Method};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn world(execution: Execution) -> sim::World {
    let mut cfg = ExperimentConfig::basic();
    cfg.execution = execution;
    build_world(&cfg, 1).unwrap()
}

fn plan_generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("plan_generation");
    for (name, mode) in MODES {
        let w = world(mode);
        let homes: Vec<usize> = w.fleet.drones().iter().map(|d| d.home_station).collect();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(w.plan_groups(0, 1, &homes).unwrap()))
        });
    }
    g.finish();
}

fn collective_selection(c: &mut Criterion) {
    let mut g = c.benchmark_group("collective_selection");
    for (name, mode) in MODES {
        let w = world(mode);
        let homes: Vec<usize> = w.fleet.drones().iter().map(|d| d.home_station).collect();
        let groups = w.plan_groups(0, 1, &homes).unwrap();
        let pools: Vec<Vec<Plan>> = groups.iter().map(|gs| gs.iter().flat_map(|g| g.plans.clone()).collect()).collect();
        let cands: Vec<&[Plan]> = pools.iter().map(Vec::as_slice).collect();
        let target = TargetMatrix::ones(w.grid.cell_count(), w.time.slots);
        let tree = w.tree(&homes);
        let cfg = CollectiveConfig {
            beta: 0.5,
            iterations: 10,
            execution: mode,
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_collective_selection(&tree, &cands, &target, cfg).unwrap()))
        });
    }
    g.finish();
}

fn training_episode(c: &mut Criterion) {
    let mut g = c.benchmark_group("training_episode");
    g.sample_size(10);
    for (name, mode) in MODES {
        let w = world(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut coord = DoRl::new(&w, PpoConfig::default());
                black_box(sim::train(&w, &mut coord, 1).unwrap())
            })
        });
    }
    g.finish();
}

fn seeds(c: &mut Criterion) {
    let mut g = c.benchmark_group("greedy_seeds");
    g.sample_size(10);
    for (name, mode) in MODES {
        let mut cfg = ExperimentConfig::desk();
        cfg.execution = mode;
        cfg.methods = vec![Method::Greedy];
        cfg.seeds = (0..8).collect();
        let dir = tempfile::tempdir().unwrap();
        cfg.output = dir.path().to_path_buf();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(swarmsense::harness::run_experiment(&cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, plan_generation, collective_selection, training_episode, seeds);
criterion_main!(benches);
