//! Tree-structured iterative collective learning for plan selection.
//!
//! Agents form a balanced binary tree. Each iteration has a bottom-up pass,
//! where every agent (leaves first) re-selects its plan against its best
//! estimate of everyone else's choices and forwards its subtree aggregate to
//! its parent, and a top-down pass, where the root's total is broadcast so
//! every agent holds the same global aggregate.
//!
//! Estimate used by an agent during the bottom-up pass:
//! `global(prev) - subtree(prev) + children(new)`, i.e. the previous
//! choices of agents outside its subtree plus the fresh choices below it.
//!
//! A parent may veto a child's proposed subtree change (the whole subtree
//! then keeps its previous selections), and the joint selection is kept only
//! if the root-level cost does not rise. Together these make the cost
//! non-increasing across iterations.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CellSlotMatrix, CountMatrix};
use crate::par::Execution;
use crate::plangen::Plan;
use crate::scenario::Coord;

/// Binary target: 1 where the swarm should have one drone sensing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMatrix(CellSlotMatrix<u8>);

impl TargetMatrix {
    pub fn ones(cells: usize, slots: usize) -> Self {
        Self(CellSlotMatrix::filled(cells, slots, 1))
    }

    pub fn from_bits(cells: usize, slots: usize, bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "target entries must be 0 or 1");
        Self(CellSlotMatrix::from_vec(cells, slots, bits))
    }

    pub fn get(&self, cell: usize, slot: usize) -> u8 {
        self.0.get(cell, slot)
    }

    pub fn clear(&mut self, cell: usize, slot: usize) {
        self.0.set(cell, slot, 0);
    }

    pub fn cells(&self) -> usize {
        self.0.cells()
    }

    pub fn slots(&self) -> usize {
        self.0.slots()
    }

    pub fn matrix(&self) -> &CellSlotMatrix<u8> {
        &self.0
    }

    pub fn active(&self) -> usize {
        self.0.as_slice().iter().filter(|&&b| b == 1).count()
    }
}

/// Root-mean-square mismatch between an aggregate and the target.
pub fn rmse(aggregate: &CountMatrix, target: &TargetMatrix) -> f64 {
    assert!(aggregate.same_shape(target.matrix()));
    let sse: f64 = aggregate
        .as_slice()
        .iter()
        .zip(target.matrix().as_slice())
        .map(|(&p, &r)| {
            let d = p as f64 - r as f64;
            d * d
        })
        .sum();
    (sse / aggregate.as_slice().len() as f64).sqrt()
}

/// `(1-β) * RMSE(own + others, target) + β * E(own)`.
pub fn local_cost(own: &Plan, others: &CountMatrix, target: &TargetMatrix, beta: f64) -> f64 {
    Mismatch::new(others, target).cost(own, beta)
}

/// Sum of squared errors of a fixed aggregate, so candidate plans can be
/// scored by their few occupied entries only.
struct Mismatch<'a> {
    others: &'a CountMatrix,
    target: &'a TargetMatrix,
    base: f64,
    len: f64,
}

impl<'a> Mismatch<'a> {
    fn new(others: &'a CountMatrix, target: &'a TargetMatrix) -> Self {
        assert!(others.same_shape(target.matrix()), "aggregate and target dimensions differ");
        let base = others
            .as_slice()
            .iter()
            .zip(target.matrix().as_slice())
            .map(|(&p, &r)| {
                let d = p as f64 - r as f64;
                d * d
            })
            .sum();
        Self {
            others,
            target,
            base,
            len: others.as_slice().len() as f64,
        }
    }

    fn sse(&self, own: &Plan) -> f64 {
        let mut sse = self.base;
        for v in &own.visits {
            let d = self.others.get(v.cell, v.slot) as f64 - self.target.get(v.cell, v.slot) as f64;
            sse += 2.0 * d + 1.0;
        }
        sse.max(0.0)
    }

    fn cost(&self, own: &Plan, beta: f64) -> f64 {
        (1.0 - beta) * (self.sse(own) / self.len).sqrt() + beta * own.energy
    }
}

/// Balanced binary tree stored in level order: the node at position `i` has
/// children `2i+1` and `2i+2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    order: Vec<usize>,
}

impl Tree {
    /// Agents sorted by distance to the swarm centroid (ties by id) and laid
    /// out level by level, so the most central agent is the root.
    pub fn build(agents: &[usize], positions: &[Coord]) -> Tree {
        assert_eq!(agents.len(), positions.len());
        let n = agents.len().max(1) as f64;
        let cr = positions.iter().map(|p| p.row as f64).sum::<f64>() / n;
        let cc = positions.iter().map(|p| p.col as f64).sum::<f64>() / n;
        let mut keyed: Vec<(f64, usize)> = agents
            .iter()
            .zip(positions)
            .map(|(&a, p)| {
                let (dr, dc) = (p.row as f64 - cr, p.col as f64 - cc);
                ((dr * dr + dc * dc).sqrt(), a)
            })
            .collect();
        keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        Tree {
            order: keyed.into_iter().map(|(_, a)| a).collect(),
        }
    }

    pub fn from_level_order(order: Vec<usize>) -> Tree {
        Tree { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn agents(&self) -> &[usize] {
        &self.order
    }

    pub fn agent_at(&self, pos: usize) -> usize {
        self.order[pos]
    }

    pub fn position_of(&self, agent: usize) -> Option<usize> {
        self.order.iter().position(|&a| a == agent)
    }

    pub fn root(&self) -> Option<usize> {
        self.order.first().copied()
    }

    pub fn parent(&self, pos: usize) -> Option<usize> {
        (pos > 0).then(|| (pos - 1) / 2)
    }

    pub fn children(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        [2 * pos + 1, 2 * pos + 2].into_iter().filter(|&c| c < self.order.len())
    }

    /// `pos` and all its descendants.
    pub fn subtree_positions(&self, pos: usize) -> Vec<usize> {
        let mut out = vec![pos];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.children(out[i]));
            i += 1;
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.order.len().saturating_sub(1)
    }

    /// Depth of the deepest node (root = 0).
    pub fn depth(&self) -> usize {
        if self.order.is_empty() {
            0
        } else {
            (usize::BITS - 1 - self.order.len().leading_zeros()) as usize
        }
    }

    /// Positions grouped by level, root level first.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut width = 1;
        while start < self.order.len() {
            let end = (start + width).min(self.order.len());
            out.push((start..end).collect());
            start = end;
            width *= 2;
        }
        out
    }
}

/// Remove a failed agent: the deepest, rightmost leaf takes its place.
pub fn inject_failure(tree: &Tree, agent: usize) -> Result<Tree> {
    let pos = tree
        .position_of(agent)
        .ok_or_else(|| Error::InvalidInput(format!("agent {agent} is not in the tree")))?;
    if tree.len() == 1 {
        return Err(Error::EmptyTree);
    }
    let mut order = tree.order.clone();
    let last = order.pop().expect("non-empty");
    if pos < order.len() {
        order[pos] = last;
    }
    Ok(Tree { order })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub direction: Direction,
    pub aggregate: CountMatrix,
    /// Summed plan energy behind `aggregate`.
    pub energy: f64,
}

/// Point-to-point delivery between tree nodes.
pub trait Transport: Send + Sync {
    fn send(&mut self, msg: Message);
    /// Drain every message addressed to `to`, in arrival order.
    fn receive(&mut self, to: usize) -> Vec<Message>;
    fn sent(&self) -> usize;
}

/// In-process mailbox keyed by agent id.
#[derive(Debug, Default)]
pub struct Mailbox {
    inbox: std::collections::BTreeMap<usize, Vec<Message>>,
    sent: usize,
}

impl Transport for Mailbox {
    fn send(&mut self, msg: Message) {
        self.sent += 1;
        self.inbox.entry(msg.to).or_default().push(msg);
    }

    fn receive(&mut self, to: usize) -> Vec<Message> {
        self.inbox.remove(&to).unwrap_or_default()
    }

    fn sent(&self) -> usize {
        self.sent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectiveConfig {
    pub beta: f64,
    pub iterations: usize,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for CollectiveConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            iterations: 40,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub global_rmse: f64,
    pub global_energy: f64,
    pub accepted: bool,
}

/// What one agent sees after a top-down pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateView {
    pub others: CountMatrix,
    pub global: CountMatrix,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Selected plan index per agent id (`None` for agents not in the tree).
    pub selected: Vec<Option<usize>>,
    pub global: CountMatrix,
    pub trace: Vec<IterationRecord>,
    pub messages: usize,
    pub cost: f64,
}

/// State of an ongoing collective selection.
pub struct CollectiveRun<'a, T: Transport = Mailbox> {
    tree: Tree,
    candidates: &'a [&'a [Plan]],
    target: &'a TargetMatrix,
    config: CollectiveConfig,
    transport: T,
    selected: Vec<Option<usize>>,
    /// Subtree aggregate and summed plan energy per tree position.
    subtree: Vec<(CountMatrix, f64)>,
    global: CountMatrix,
    energy: f64,
    cost: f64,
    iteration: usize,
    trace: Vec<IterationRecord>,
}

/// A node's decision for one bottom-up step.
struct Decision {
    plan: usize,
    /// Per child (in `Tree::children` order): keep the child's new subtree?
    approve: Vec<bool>,
    aggregate: CountMatrix,
    energy: f64,
}

impl<'a> CollectiveRun<'a, Mailbox> {
    pub fn new(
        tree: Tree,
        candidates: &'a [&'a [Plan]],
        target: &'a TargetMatrix,
        config: CollectiveConfig,
    ) -> Result<Self> {
        Self::with_transport(tree, candidates, target, config, Mailbox::default())
    }
}

impl<'a, T: Transport> CollectiveRun<'a, T> {
    pub fn with_transport(
        tree: Tree,
        candidates: &'a [&'a [Plan]],
        target: &'a TargetMatrix,
        config: CollectiveConfig,
        transport: T,
    ) -> Result<Self> {
        if tree.is_empty() {
            return Err(Error::EmptyTree);
        }
        for &a in tree.agents() {
            match candidates.get(a) {
                None => return Err(Error::InvalidInput(format!("no candidates for agent {a}"))),
                Some(c) if c.is_empty() => {
                    return Err(Error::InvalidInput(format!("agent {a} has no candidate plans")))
                }
                Some(c) => {
                    if c.iter().any(|p| p.cells() != target.cells() || p.slots() != target.slots()) {
                        return Err(Error::InvalidInput(format!(
                            "agent {a} has plans whose dimensions differ from the target"
                        )));
                    }
                }
            }
        }
        let zero = CountMatrix::zeros(target.cells(), target.slots());
        Ok(Self {
            subtree: vec![(zero.clone(), 0.0); tree.len()],
            tree,
            candidates,
            target,
            config,
            transport,
            selected: vec![None; candidates.len()],
            global: zero,
            energy: 0.0,
            cost: f64::INFINITY,
            iteration: 0,
            trace: Vec::new(),
        })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn global(&self) -> &CountMatrix {
        &self.global
    }

    pub fn messages(&self) -> usize {
        self.transport.sent()
    }

    fn plan(&self, agent: usize, idx: usize) -> &Plan {
        &self.candidates[agent][idx]
    }

    fn combined(&self, rmse: f64, energy: f64) -> f64 {
        (1.0 - self.config.beta) * rmse + self.config.beta * energy / self.tree.len() as f64
    }

    /// Choose which children's changes to keep and this node's own plan.
    ///
    /// Each combination of approved children is tried with two own-plan
    /// options: the local-cost argmin and the previous selection. The pair
    /// with the lowest swarm-wide cost wins, so keeping everything as it was
    /// is always on the table and the root can never make things worse.
    fn decide(&self, pos: usize, fresh: bool, incoming: &[(CountMatrix, f64)]) -> Decision {
        let agent = self.tree.agent_at(pos);
        let children: Vec<usize> = self.tree.children(pos).collect();
        let mut base = self.global.clone();
        base.sub_assign(&self.subtree[pos].0);
        let base_energy = self.energy - self.subtree[pos].1;
        let previous = self.selected[agent];

        let masks: Vec<u32> = if fresh {
            vec![(1 << children.len()) - 1]
        } else {
            (0..1u32 << children.len()).rev().collect()
        };
        let mut best: Option<(f64, Decision)> = None;
        for mask in masks {
            let mut others = base.clone();
            let mut energy = base_energy;
            let approve: Vec<bool> = (0..children.len()).map(|k| mask & (1 << k) != 0).collect();
            for (k, &c) in children.iter().enumerate() {
                let (agg, e) = if approve[k] { &incoming[k] } else { &self.subtree[c] };
                others.add_assign(agg);
                energy += e;
            }
            let m = Mismatch::new(&others, self.target);
            let mut pick = 0;
            let mut pick_cost = f64::INFINITY;
            for (idx, plan) in self.candidates[agent].iter().enumerate() {
                let c = m.cost(plan, self.config.beta);
                if c < pick_cost {
                    pick = idx;
                    pick_cost = c;
                }
            }
            let options = std::iter::once(pick).chain(previous.filter(|&p| p != pick));
            for own in options {
                let plan = self.plan(agent, own);
                let cost = self.combined((m.sse(plan) / m.len).sqrt(), energy + plan.energy);
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    let mut aggregate = CountMatrix::zeros(self.target.cells(), self.target.slots());
                    for (k, &c) in children.iter().enumerate() {
                        aggregate.add_assign(if approve[k] { &incoming[k].0 } else { &self.subtree[c].0 });
                    }
                    plan.add_to(&mut aggregate);
                    let sub_energy = energy - base_energy + plan.energy;
                    best = Some((
                        cost,
                        Decision {
                            plan: own,
                            approve: approve.clone(),
                            aggregate,
                            energy: sub_energy,
                        },
                    ));
                }
            }
        }
        best.expect("at least one candidate").1
    }

    /// One bottom-up + top-down iteration.
    pub fn iterate(&mut self) {
        self.iteration += 1;
        let n = self.tree.len();
        let fresh = self.tree.agents().iter().any(|&a| self.selected[a].is_none());
        let mut new_subtree: Vec<Option<(CountMatrix, f64)>> = vec![None; n];
        let mut new_sel = self.selected.clone();

        for level in self.tree.levels().into_iter().rev() {
            // Children's subtree proposals arrive through the transport, in
            // child order.
            let incoming: Vec<Vec<(CountMatrix, f64)>> = level
                .iter()
                .map(|&pos| {
                    let mut msgs = self.transport.receive(self.tree.agent_at(pos));
                    let children: Vec<usize> = self.tree.children(pos).collect();
                    debug_assert_eq!(msgs.len(), children.len());
                    msgs.sort_by_key(|m| self.tree.position_of(m.from));
                    msgs.into_iter().map(|m| (m.aggregate, m.energy)).collect()
                })
                .collect();
            let this = &*self;
            let decisions: Vec<Decision> = self
                .config
                .execution
                .map_range(level.len(), |i| this.decide(level[i], fresh, &incoming[i]));
            for (&pos, d) in level.iter().zip(decisions) {
                let agent = self.tree.agent_at(pos);
                for (c, ok) in self.tree.children(pos).zip(&d.approve) {
                    if !ok {
                        for q in self.tree.subtree_positions(c) {
                            let a = self.tree.agent_at(q);
                            new_sel[a] = self.selected[a];
                            new_subtree[q] = Some(self.subtree[q].clone());
                        }
                    }
                }
                new_sel[agent] = Some(d.plan);
                if let Some(parent) = self.tree.parent(pos) {
                    self.transport.send(Message {
                        from: agent,
                        to: self.tree.agent_at(parent),
                        direction: Direction::Up,
                        aggregate: d.aggregate.clone(),
                        energy: d.energy,
                    });
                }
                new_subtree[pos] = Some((d.aggregate, d.energy));
            }
        }

        let new_subtree: Vec<(CountMatrix, f64)> = new_subtree.into_iter().map(|m| m.expect("visited")).collect();
        let (new_global, new_energy) = new_subtree[0].clone();
        let cost = self.combined(rmse(&new_global, self.target), new_energy);
        let accepted = cost <= self.cost;
        if accepted {
            self.selected = new_sel;
            self.subtree = new_subtree;
            self.global = new_global;
            self.energy = new_energy;
            self.cost = cost;
        }

        // Top-down broadcast of the kept global aggregate.
        for pos in 0..n {
            let agent = self.tree.agent_at(pos);
            let (received, energy) = if pos == 0 {
                (self.global.clone(), self.energy)
            } else {
                let mut msgs = self.transport.receive(agent);
                debug_assert_eq!(msgs.len(), 1);
                let m = msgs.pop().expect("parent broadcast");
                (m.aggregate, m.energy)
            };
            for child in self.tree.children(pos).collect::<Vec<_>>() {
                self.transport.send(Message {
                    from: agent,
                    to: self.tree.agent_at(child),
                    direction: Direction::Down,
                    aggregate: received.clone(),
                    energy,
                });
            }
        }

        self.trace.push(IterationRecord {
            iteration: self.iteration,
            global_rmse: rmse(&self.global, self.target),
            global_energy: self.energy,
            accepted,
        });
    }

    pub fn run(&mut self, iterations: usize) {
        for _ in 0..iterations {
            self.iterate();
        }
    }

    /// Drop a failed agent, repair the tree and rebuild the aggregates from
    /// the surviving selections.
    pub fn remove_agent(&mut self, agent: usize) -> Result<()> {
        self.tree = inject_failure(&self.tree, agent)?;
        self.selected[agent] = None;
        let n = self.tree.len();
        let zero = CountMatrix::zeros(self.target.cells(), self.target.slots());
        let mut subtree = vec![(zero, 0.0); n];
        for pos in (0..n).rev() {
            let a = self.tree.agent_at(pos);
            let (mut sum, mut energy) = (CountMatrix::zeros(self.target.cells(), self.target.slots()), 0.0);
            for c in self.tree.children(pos) {
                sum.add_assign(&subtree[c].0);
                energy += subtree[c].1;
            }
            if let Some(i) = self.selected[a] {
                let p = self.plan(a, i);
                p.add_to(&mut sum);
                energy += p.energy;
            }
            subtree[pos] = (sum, energy);
        }
        self.global = subtree[0].0.clone();
        self.energy = subtree[0].1;
        self.subtree = subtree;
        self.cost = if self.iteration == 0 {
            f64::INFINITY
        } else {
            self.combined(rmse(&self.global, self.target), self.energy)
        };
        Ok(())
    }

    pub fn view(&self, agent: usize) -> Option<AggregateView> {
        let idx = self.selected.get(agent).copied().flatten()?;
        let mut others = self.global.clone();
        self.plan(agent, idx).remove_from(&mut others);
        Some(AggregateView {
            others,
            global: self.global.clone(),
        })
    }

    pub fn outcome(&self) -> Outcome {
        Outcome {
            selected: self.selected.clone(),
            global: self.global.clone(),
            trace: self.trace.clone(),
            messages: self.transport.sent(),
            cost: self.cost,
        }
    }
}

/// Run `config.iterations` iterations from scratch.
pub fn run_collective_selection(
    tree: &Tree,
    candidates: &[&[Plan]],
    target: &TargetMatrix,
    config: CollectiveConfig,
) -> Result<Outcome> {
    if config.iterations == 0 {
        return Err(Error::InvalidInput("collective selection needs >= 1 iteration".into()));
    }
    let mut run = CollectiveRun::new(tree.clone(), candidates, target, config)?;
    run.run(config.iterations);
    Ok(run.outcome())
}

/// `iteration,global_rmse,global_energy`
pub fn write_trace_csv(out: impl Write, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "global_rmse", "global_energy"])?;
    for r in trace {
        w.write_record(&[r.iteration.to_string(), r.global_rmse.to_string(), r.global_energy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_trace_csv(path: impl AsRef<Path>, trace: &[IterationRecord]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace_csv(f, trace)
}
