//! Multi-agent PPO: one actor and one critic per agent, trained from a
//! replay buffer with the one-step advantage
//! `Â = r + γ·Q'(o', a') - Q(o, a)` and the clipped surrogate objective.
//!
//! The critic scores an observation together with a one-hot action. `a'` is
//! the current actor's argmax at `o'`; terminal transitions have no
//! bootstrap term. `Q'` and `π_old` are hard copies refreshed once per
//! update round.

pub mod nn;

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::Rng;
use nn::{argmax, softmax, Adam, Mlp, Sparse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip: f64,
    /// Units per hidden layer.
    pub hidden: usize,
    pub hidden_layers: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Minibatch size.
    pub batch: usize,
    /// Minibatches drawn per update round.
    pub epochs: usize,
    pub buffer_capacity: usize,
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            clip: 0.2,
            hidden: 64,
            hidden_layers: 3,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            batch: 64,
            epochs: 4,
            buffer_capacity: 4096,
            max_grad_norm: Some(1.0),
            normalize_advantages: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return invalid("gamma must lie in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return invalid("clip must lie in (0, 1)");
        }
        if self.hidden == 0 || self.batch == 0 || self.epochs == 0 || self.buffer_capacity == 0 {
            return invalid("network width, batch, epochs and buffer capacity must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return invalid("learning rates must be positive");
        }
        Ok(())
    }

    fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat(self.hidden).take(self.hidden_layers));
        s.push(output);
        s
    }
}

/// One stored step of one agent. `next = None` marks the episode end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<(usize, f64)>,
    pub action: usize,
    pub reward: f64,
    pub next: Option<Vec<(usize, f64)>>,
}

/// FIFO replay buffer.
#[derive(Debug, Clone, Default)]
pub struct Buffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl Buffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.entries[i]
    }

    /// Up to `h` distinct indices, uniformly without replacement.
    pub fn sample(&self, h: usize, rng: &mut Rng) -> Vec<usize> {
        rand::seq::index::sample(rng, self.entries.len(), h.min(self.entries.len())).into_vec()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorStats {
    pub objective: f64,
    pub clip_fraction: f64,
    /// Samples dropped because `π_old` assigned them zero probability.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub clip_fraction: f64,
}

/// Actor, critic, their frozen copies and optimizer state for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    obs_dim: usize,
    actions: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_old: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl PolicyPair {
    pub fn new(obs_dim: usize, actions: usize, cfg: &PpoConfig, rng: &mut Rng) -> Self {
        let actor = Mlp::new(&cfg.layer_sizes(obs_dim, actions), rng);
        let critic = Mlp::new(&cfg.layer_sizes(obs_dim + actions, 1), rng);
        Self::from_networks(actor, critic, cfg)
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &PpoConfig) -> Self {
        let obs_dim = actor.input_dim();
        let actions = actor.output_dim();
        assert_eq!(critic.input_dim(), obs_dim + actions, "critic takes observation + action one-hot");
        assert_eq!(critic.output_dim(), 1);
        Self {
            obs_dim,
            actions,
            actor_opt: Adam::new(actor.params().len(), cfg.actor_lr, cfg.max_grad_norm),
            critic_opt: Adam::new(critic.params().len(), cfg.critic_lr, cfg.max_grad_norm),
            actor_old: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn check(&self, obs: &Sparse) -> Result<()> {
        match obs.iter().find(|(i, _)| *i >= self.obs_dim) {
            Some((i, _)) => invalid(format!("observation index {i} outside dimension {}", self.obs_dim)),
            None => Ok(()),
        }
    }

    pub fn probabilities(&self, obs: &Sparse) -> Vec<f64> {
        softmax(&self.actor.forward(obs))
    }

    /// Sample from the policy when exploring, otherwise take the argmax
    /// (lowest action code among ties).
    pub fn act(&self, obs: &Sparse, explore: bool, rng: &mut Rng) -> Result<usize> {
        self.check(obs)?;
        let logits = self.actor.forward(obs);
        if !explore {
            return Ok(argmax(&logits));
        }
        Ok(sample_categorical(&softmax(&logits), rng))
    }

    fn critic_input(&self, obs: &Sparse, action: usize) -> Vec<(usize, f64)> {
        let mut x = obs.to_vec();
        x.push((self.obs_dim + action, 1.0));
        x
    }

    pub fn q(&self, net: &Mlp, obs: &Sparse, action: usize) -> f64 {
        net.forward(&self.critic_input(obs, action))[0]
    }

    /// Bootstrap value `Q'(o', argmax π(o'))`, zero at episode end.
    fn bootstrap(&self, t: &Transition) -> f64 {
        match &t.next {
            Some(next) => {
                let a = argmax(&self.actor.forward(next));
                self.q(&self.critic_target, next, a)
            }
            None => 0.0,
        }
    }

    pub fn advantage(&self, t: &Transition, gamma: f64) -> f64 {
        t.reward + gamma * self.bootstrap(t) - self.q(&self.critic, &t.obs, t.action)
    }

    /// Mean squared advantage and its gradient in the critic parameters
    /// (bootstrap held fixed).
    pub fn critic_loss_grad(&self, batch: &[&Transition], gamma: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.critic.params().len()];
        let mut loss = 0.0;
        let h = batch.len() as f64;
        for t in batch {
            let cache = self.critic.forward_cached(&self.critic_input(&t.obs, t.action));
            let adv = t.reward + gamma * self.bootstrap(t) - cache.output()[0];
            loss += adv * adv / h;
            self.critic.backward(&cache, &[-2.0 * adv / h], &mut grad);
        }
        (loss, grad)
    }

    /// One optimizer step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        if batch.is_empty() {
            return invalid("critic update needs at least one transition");
        }
        let (loss, grad) = self.critic_loss_grad(batch, gamma);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            return Err(Error::Numerical(format!(
                "critic loss {loss} is not finite (batch rewards {rewards:?})"
            )));
        }
        self.critic_opt.step(self.critic.params_mut(), &grad);
        Ok(loss)
    }

    /// Clipped surrogate objective and its gradient in the actor parameters.
    pub fn actor_objective_grad(
        &self,
        batch: &[&Transition],
        advantages: &[f64],
        clip: f64,
    ) -> (ActorStats, Vec<f64>) {
        assert_eq!(batch.len(), advantages.len());
        let mut grad = vec![0.0; self.actor.params().len()];
        let mut stats = ActorStats::default();
        let mut used = 0usize;
        let mut clipped = 0usize;
        let h = batch.len() as f64;
        for (t, &adv) in batch.iter().zip(advantages) {
            let old = softmax(&self.actor_old.forward(&t.obs))[t.action];
            let cache = self.actor.forward_cached(&t.obs);
            let p = softmax(cache.output());
            let ratio = p[t.action] / old;
            if !ratio.is_finite() {
                stats.skipped += 1;
                continue;
            }
            used += 1;
            let bounded = ratio.clamp(1.0 - clip, 1.0 + clip);
            stats.objective += (ratio * adv).min(bounded * adv) / h;
            let saturated = (adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
            if saturated {
                clipped += 1;
                continue;
            }
            // d ratio / d logits = ratio · (onehot(a) - p).
            let g: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| adv * ratio * (f64::from(u8::from(k == t.action)) - pk) / h)
                .collect();
            self.actor.backward(&cache, &g, &mut grad);
        }
        if stats.skipped > 0 {
            log::warn!("{} samples skipped: old policy probability underflow", stats.skipped);
        }
        stats.clip_fraction = if used == 0 { 0.0 } else { clipped as f64 / used as f64 };
        (stats, grad)
    }

    /// One ascent step on the clipped objective.
    pub fn actor_update(&mut self, batch: &[&Transition], advantages: &[f64], clip: f64) -> Result<ActorStats> {
        let (stats, mut grad) = self.actor_objective_grad(batch, advantages, clip);
        if !stats.objective.is_finite() {
            return Err(Error::Numerical(format!("actor objective {} is not finite", stats.objective)));
        }
        grad.iter_mut().for_each(|g| *g = -*g);
        self.actor_opt.step(self.actor.params_mut(), &grad);
        Ok(stats)
    }

    /// Copy the live networks into `π_old` and `Q'`.
    pub fn refresh(&mut self) {
        self.actor_old = self.actor.clone();
        self.critic_target = self.critic.clone();
    }

    /// Critic step then actor step on each of `epochs` minibatches, then a
    /// single refresh of the frozen copies.
    pub fn update_round(&mut self, buffer: &Buffer, cfg: &PpoConfig, rng: &mut Rng) -> Result<RoundStats> {
        let mut stats = RoundStats::default();
        if buffer.is_empty() {
            return Ok(stats);
        }
        for _ in 0..cfg.epochs {
            let idx = buffer.sample(cfg.batch, rng);
            let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
            stats.critic_loss += self.critic_update(&batch, cfg.gamma)? / cfg.epochs as f64;
            let mut adv: Vec<f64> = batch.iter().map(|t| self.advantage(t, cfg.gamma)).collect();
            if cfg.normalize_advantages && adv.len() > 1 {
                let m = crate::metrics::mean(&adv);
                let s = crate::metrics::sample_std(&adv).max(1e-8);
                adv.iter_mut().for_each(|a| *a = (*a - m) / s);
            }
            let a = self.actor_update(&batch, &adv, cfg.clip)?;
            stats.actor_objective += a.objective / cfg.epochs as f64;
            stats.clip_fraction += a.clip_fraction / cfg.epochs as f64;
        }
        self.refresh();
        Ok(stats)
    }
}

pub fn sample_categorical(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Saved parameters of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub method: String,
    pub agents: Vec<SavedAgent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedAgent {
    pub actor_sizes: Vec<usize>,
    pub actor: Vec<f64>,
    pub critic_sizes: Vec<usize>,
    pub critic: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn capture(config_hash: &str, method: &str, agents: &[PolicyPair]) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            method: method.to_string(),
            agents: agents
                .iter()
                .map(|p| SavedAgent {
                    actor_sizes: p.actor.sizes().to_vec(),
                    actor: p.actor.params().to_vec(),
                    critic_sizes: p.critic.sizes().to_vec(),
                    critic: p.critic.params().to_vec(),
                })
                .collect(),
        }
    }

    pub fn restore(&self, cfg: &PpoConfig) -> Result<Vec<PolicyPair>> {
        if self.version != CHECKPOINT_VERSION {
            return invalid(format!("unsupported checkpoint version {}", self.version));
        }
        self.agents
            .iter()
            .map(|a| {
                let actor = Mlp::from_params(&a.actor_sizes, a.actor.clone());
                let critic = Mlp::from_params(&a.critic_sizes, a.critic.clone());
                match (actor, critic) {
                    (Some(actor), Some(critic)) if critic.input_dim() == actor.input_dim() + actor.output_dim() => {
                        Ok(PolicyPair::from_networks(actor, critic, cfg))
                    }
                    _ => invalid("checkpoint parameter counts do not match their layer sizes"),
                }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub clip_fraction: f64,
}

pub const TRAINING_HEADER: [&str; 5] = ["episode", "mean_reward", "critic_loss", "actor_objective", "clip_fraction"];

pub fn write_training_csv(out: impl Write, hash: Option<&str>, log: &[EpisodeLog]) -> Result<()> {
    crate::metrics::write_rows(out, hash, log, &TRAINING_HEADER)
}
