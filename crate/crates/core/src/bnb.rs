//! Best-bound-first branch and bound over vertex contractions.
//!
//! Each node is a contracted graph plus the constant its fixings contribute.
//! Upper bounds come from a certified oracle, lower bounds from rounding and
//! from exact enumeration of small nodes. A node is kept only while
//! `LB + gap_unit <= ub`, where `gap_unit` is 1 for integer weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{expand_assignment, Assignment, FixingStep, GraphError, WeightedGraph};
use crate::linalg::LinalgError;
use crate::rng::StreamRng;
use crate::rounding::{factor_from_sdp, gw_round, Factors, RoundingConfig};
use crate::scalar::Real;
use crate::sdp::{pdhg_solve, PdhgParams, SdpError, SdpModel};
use crate::surrogate::{ModelError, Prediction, SurrogateModel};

/// Largest node solved by enumeration.
pub const MAX_LEAF_SIZE: usize = 20;
/// Pruning margin for non-integral weights.
pub const FRACTIONAL_GAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bound oracle failed: {0}")]
    Sdp(#[from] SdpError),
    #[error("surrogate failed: {0}")]
    Model(#[from] ModelError),
    #[error("factorization failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Vanilla,
    Hybrid,
    Neural,
}

impl std::fmt::Display for OracleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OracleKind::Vanilla => "vanilla",
            OracleKind::Hybrid => "hybrid",
            OracleKind::Neural => "neural",
        })
    }
}

impl std::str::FromStr for OracleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(OracleKind::Vanilla),
            "hybrid" => Ok(OracleKind::Hybrid),
            "neural" => Ok(OracleKind::Neural),
            _ => Err(format!(
                "unknown oracle `{s}` (expected vanilla, hybrid or neural)"
            )),
        }
    }
}

/// Batched certified bounds with primal factors, e.g. a loaded network.
pub trait Surrogate: Send + Sync {
    fn predict(&self, graphs: &[WeightedGraph]) -> Result<Vec<Prediction>, ModelError>;
}

impl<T: Real> Surrogate for SurrogateModel<T> {
    fn predict(&self, graphs: &[WeightedGraph]) -> Result<Vec<Prediction>, ModelError> {
        SurrogateModel::predict(self, graphs)
    }
}

#[derive(Clone)]
pub struct SolverConfig {
    pub oracle: OracleKind,
    pub top_k: usize,
    pub rounding: RoundingConfig,
    pub pdhg: PdhgParams<f64>,
    pub model: Option<Arc<dyn Surrogate>>,
    pub leaf_size: usize,
    /// Disables rounding; only leaves and `injected_lb` raise the lower bound.
    pub heuristic_free: bool,
    pub injected_lb: Option<f64>,
    pub time_limit: Option<Duration>,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            oracle: OracleKind::Vanilla,
            top_k: 1,
            rounding: RoundingConfig::default(),
            pdhg: PdhgParams::default(),
            model: None,
            leaf_size: 3,
            heuristic_free: false,
            injected_lb: None,
            time_limit: None,
            trace: false,
        }
    }
}

impl std::fmt::Debug for SolverConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverConfig")
            .field("oracle", &self.oracle)
            .field("top_k", &self.top_k)
            .field("rounding", &self.rounding)
            .field("pdhg", &self.pdhg)
            .field("model", &self.model.as_ref().map(|_| "<surrogate>"))
            .field("leaf_size", &self.leaf_size)
            .field("heuristic_free", &self.heuristic_free)
            .field("injected_lb", &self.injected_lb)
            .field("time_limit", &self.time_limit)
            .field("trace", &self.trace)
            .finish()
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), BnbError> {
        if self.top_k == 0 {
            return Err(BnbError::Config("top_k must be at least 1".into()));
        }
        if self.leaf_size == 0 || self.leaf_size > MAX_LEAF_SIZE {
            return Err(BnbError::Config(format!(
                "leaf_size must be in 1..={MAX_LEAF_SIZE}"
            )));
        }
        if self.oracle != OracleKind::Vanilla && self.model.is_none() {
            return Err(BnbError::Config(format!(
                "the {} oracle needs a surrogate model",
                self.oracle
            )));
        }
        if self.rounding.samples == 0 || self.rounding.root_samples == 0 {
            return Err(BnbError::Config(
                "rounding needs at least one sample".into(),
            ));
        }
        if let Some(lb) = self.injected_lb {
            if !lb.is_finite() {
                return Err(BnbError::Config(
                    "injected lower bound must be finite".into(),
                ));
            }
        }
        self.pdhg.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BnbNode {
    pub sub: WeightedGraph,
    /// Cut contribution of the fixings so far.
    pub offset: f64,
    pub fixings: Vec<FixingStep>,
    /// Certified bound on the best cut in this subtree, once evaluated.
    pub ub: Option<f64>,
    pub depth: usize,
    factors: Option<Factors>,
}

impl BnbNode {
    pub fn root(g: &WeightedGraph) -> Self {
        Self {
            sub: g.clone(),
            offset: 0.0,
            fixings: Vec::new(),
            ub: None,
            depth: 0,
            factors: None,
        }
    }
}

/// What happened to a node once it was looked at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    /// Bound survived; node entered the queue.
    Queued,
    /// Bound fell below `LB + gap_unit`.
    Pruned,
    /// Pruned on the surrogate bound alone; the SDP solve was skipped.
    PrunedBySurrogate,
    /// Solved exactly by enumeration.
    Leaf,
    /// Popped after the lower bound had overtaken its bound.
    Stale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub depth: usize,
    pub ub: f64,
    pub outcome: NodeOutcome,
    pub fixings: Vec<FixingStep>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Best cut found, on the original vertex set.
    pub best_x: Assignment,
    pub best_value: f64,
    /// `max(best_value, injected_lb)`; pruning was relative to this value.
    pub lower_bound: f64,
    pub root_bound: f64,
    pub nodes_evaluated: usize,
    pub nodes_pruned_by_gnn: usize,
    pub nodes_pruned_total: usize,
    pub pdhg_calls: usize,
    pub surrogate_calls: usize,
    pub wall_time: Duration,
    /// The search finished: no cut exceeds `lower_bound` by `gap_unit` or more.
    pub optimal: bool,
    pub trace: Vec<TraceEntry>,
}

/// `j != 0` minimizing `|o_0 . o_j|`, smallest index on ties.
pub fn most_fractional(factors: &Factors) -> usize {
    assert!(factors.rows() >= 2, "need a second vertex to branch on");
    let mut best = 1;
    let mut best_val = f64::INFINITY;
    for j in 1..factors.rows() {
        let v = factors.correlation(0, j).abs();
        if v < best_val {
            best_val = v;
            best = j;
        }
    }
    best
}

/// Children for `x_j = x_0` and `x_j = -x_0`, in that order.
pub fn branch(node: &BnbNode, j: usize) -> Result<(BnbNode, BnbNode), GraphError> {
    let child = |sign: i8| -> Result<BnbNode, GraphError> {
        let step = FixingStep::new(0, j, sign);
        let (sub, off) = node.sub.contract(step)?;
        let mut fixings = node.fixings.clone();
        fixings.push(step);
        Ok(BnbNode {
            sub,
            offset: node.offset + off,
            fixings,
            ub: None,
            depth: node.depth + 1,
            factors: None,
        })
    };
    Ok((child(1)?, child(-1)?))
}

/// Exact maximum cut of a small graph with vertex 0 on the `+1` side.
pub fn enumerate_max_cut(g: &WeightedGraph) -> (f64, Assignment) {
    let n = g.n();
    assert!(n <= MAX_LEAF_SIZE + 1, "enumeration is for small graphs");
    if n == 0 {
        return (0.0, Assignment::all_plus(0));
    }
    let mut best = (f64::NEG_INFINITY, Assignment::all_plus(n));
    for mask in 0..1u64 << (n - 1) {
        let x = Assignment::from_mask(n, mask << 1);
        let v = g.cut_value(&x);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

#[derive(Debug)]
struct Queued {
    ub: f64,
    seq: u64,
    node: BnbNode,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    /// Larger bound first, then deeper, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub
            .total_cmp(&other.ub)
            .then(self.node.depth.cmp(&other.node.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

enum Evaluation {
    Leaf {
        value: f64,
        x: Assignment,
    },
    Bounded {
        ub: f64,
        factors: Factors,
        rounded: Option<Assignment>,
    },
    PrunedBySurrogate {
        ub: f64,
    },
}

/// Incremental solver; `step` processes one batch so callers can inspect
/// the bounds between batches.
pub struct Solver<'a> {
    g: &'a WeightedGraph,
    cfg: &'a SolverConfig,
    gap_unit: f64,
    queue: BinaryHeap<Queued>,
    best_x: Assignment,
    best_value: f64,
    lb: f64,
    root_bound: f64,
    seq: u64,
    serial: u64,
    started: Instant,
    root_done: bool,
    finished: bool,
    timed_out: bool,
    nodes_evaluated: usize,
    nodes_pruned_by_gnn: usize,
    nodes_pruned_total: usize,
    pdhg_calls: usize,
    surrogate_calls: usize,
    trace: Vec<TraceEntry>,
}

impl<'a> Solver<'a> {
    pub fn new(g: &'a WeightedGraph, cfg: &'a SolverConfig) -> Result<Self, BnbError> {
        cfg.validate()?;
        let best_x = Assignment::all_plus(g.n());
        let best_value = g.cut_value(&best_x);
        Ok(Self {
            g,
            cfg,
            gap_unit: if g.weights_integral() {
                1.0
            } else {
                FRACTIONAL_GAP
            },
            queue: BinaryHeap::new(),
            lb: best_value.max(cfg.injected_lb.unwrap_or(f64::NEG_INFINITY)),
            best_x,
            best_value,
            root_bound: f64::INFINITY,
            seq: 0,
            serial: 0,
            started: Instant::now(),
            root_done: false,
            finished: false,
            timed_out: false,
            nodes_evaluated: 0,
            nodes_pruned_by_gnn: 0,
            nodes_pruned_total: 0,
            pdhg_calls: 0,
            surrogate_calls: 0,
            trace: Vec::new(),
        })
    }

    pub fn gap_unit(&self) -> f64 {
        self.gap_unit
    }

    pub fn lower_bound(&self) -> f64 {
        self.lb
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }

    /// Largest bound among open nodes; `None` once the queue is empty.
    pub fn open_upper_bound(&self) -> Option<f64> {
        self.queue.peek().map(|q| q.ub)
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Runs one batch. Returns `false` once the search is over.
    pub fn step(&mut self) -> Result<bool, BnbError> {
        if self.finished {
            return Ok(false);
        }
        if let Some(limit) = self.cfg.time_limit {
            if self.started.elapsed() >= limit {
                self.timed_out = true;
                self.finished = true;
                return Ok(false);
            }
        }
        if !self.root_done {
            self.root_done = true;
            let root = BnbNode::root(self.g);
            let (evals, nodes) = self.evaluate(vec![root], true)?;
            if let Some(ub) = nodes[0].ub {
                self.root_bound = ub;
            }
            self.absorb(nodes, evals);
        } else {
            let mut popped = Vec::with_capacity(self.cfg.top_k);
            while popped.len() < self.cfg.top_k {
                let Some(q) = self.queue.pop() else { break };
                if !self.keeps(q.ub) {
                    // The queue is ordered by bound, so everything left is stale too.
                    self.record(&q.node, q.ub, NodeOutcome::Stale);
                    self.nodes_pruned_total += 1;
                    while let Some(rest) = self.queue.pop() {
                        self.record(&rest.node, rest.ub, NodeOutcome::Stale);
                        self.nodes_pruned_total += 1;
                    }
                    break;
                }
                popped.push(q.node);
            }
            let mut children = Vec::with_capacity(2 * popped.len());
            for node in &popped {
                let factors = node.factors.as_ref().expect("queued nodes carry factors");
                let (a, b) = branch(node, most_fractional(factors))?;
                children.push(a);
                children.push(b);
            }
            if !children.is_empty() {
                let (evals, nodes) = self.evaluate(children, false)?;
                self.absorb(nodes, evals);
            }
        }
        if self.queue.is_empty() {
            self.finished = true;
        }
        Ok(!self.finished)
    }

    pub fn into_result(self) -> SolveResult {
        SolveResult {
            best_x: self.best_x,
            best_value: self.best_value,
            lower_bound: self.lb,
            root_bound: self.root_bound,
            nodes_evaluated: self.nodes_evaluated,
            nodes_pruned_by_gnn: self.nodes_pruned_by_gnn,
            nodes_pruned_total: self.nodes_pruned_total,
            pdhg_calls: self.pdhg_calls,
            surrogate_calls: self.surrogate_calls,
            wall_time: self.started.elapsed(),
            optimal: self.finished && !self.timed_out,
            trace: self.trace,
        }
    }

    fn keeps(&self, ub: f64) -> bool {
        self.lb + self.gap_unit <= ub
    }

    fn record(&mut self, node: &BnbNode, ub: f64, outcome: NodeOutcome) {
        if self.cfg.trace {
            self.trace.push(TraceEntry {
                depth: node.depth,
                ub,
                outcome,
                fixings: node.fixings.clone(),
            });
        }
    }

    /// Bounds every node in the batch (in parallel) and rounds the survivors.
    fn evaluate(
        &mut self,
        mut nodes: Vec<BnbNode>,
        is_root: bool,
    ) -> Result<(Vec<Evaluation>, Vec<BnbNode>), BnbError> {
        let cfg = self.cfg;
        let lb = self.lb;
        let gap = self.gap_unit;
        let leaf_size = cfg.leaf_size;
        let is_leaf = |n: &BnbNode| n.sub.n() <= leaf_size;
        let inner: Vec<usize> = (0..nodes.len()).filter(|&i| !is_leaf(&nodes[i])).collect();

        // Surrogate pass for the neural and hybrid oracles.
        let mut surrogate: Vec<Option<Prediction>> = (0..nodes.len()).map(|_| None).collect();
        if cfg.oracle != OracleKind::Vanilla && !inner.is_empty() {
            let model = cfg.model.as_ref().expect("validated");
            let subs: Vec<WeightedGraph> = inner.iter().map(|&i| nodes[i].sub.clone()).collect();
            let preds = model.predict(&subs)?;
            self.surrogate_calls += subs.len();
            for (&i, p) in inner.iter().zip(preds) {
                surrogate[i] = Some(p);
            }
        }

        // Which inner nodes still need the SDP solve.
        let needs_sdp: Vec<bool> = (0..nodes.len())
            .map(|i| match cfg.oracle {
                OracleKind::Vanilla => !is_leaf(&nodes[i]),
                OracleKind::Neural => false,
                OracleKind::Hybrid => surrogate[i]
                    .as_ref()
                    .is_some_and(|p| lb + gap <= p.bound.ub_cut + nodes[i].offset),
            })
            .collect();
        self.pdhg_calls += needs_sdp.iter().filter(|&&b| b).count();

        let samples = if is_root {
            cfg.rounding.root_samples
        } else {
            cfg.rounding.samples
        };
        let base = self.serial;
        self.serial += nodes.len() as u64;
        let evals: Vec<Evaluation> = nodes
            .par_iter()
            .zip(surrogate.into_par_iter())
            .zip(needs_sdp.par_iter())
            .enumerate()
            .map(
                |(k, ((node, pred), &sdp))| -> Result<Evaluation, BnbError> {
                    if is_leaf(node) {
                        let (value, x) = enumerate_max_cut(&node.sub);
                        return Ok(Evaluation::Leaf { value, x });
                    }
                    let (ub, factors) = if sdp {
                        let model = SdpModel::new(node.sub.laplacian())?;
                        let sol = pdhg_solve(&model, &cfg.pdhg)?;
                        (sol.certified.ub_cut, factor_from_sdp(&sol.x)?)
                    } else {
                        let p = pred.expect("surrogate ran for inner nodes");
                        if cfg.oracle == OracleKind::Hybrid {
                            return Ok(Evaluation::PrunedBySurrogate { ub: p.bound.ub_cut });
                        }
                        (p.bound.ub_cut, p.factors)
                    };
                    let rounded = (!cfg.heuristic_free).then(|| {
                        let seed =
                            StreamRng::derived(cfg.rounding.rng_seed, base + k as u64).next_u64();
                        gw_round(
                            &factors,
                            &node.sub,
                            samples,
                            seed,
                            cfg.rounding.local_search,
                        )
                    });
                    Ok(Evaluation::Bounded {
                        ub,
                        factors,
                        rounded,
                    })
                },
            )
            .collect::<Result<_, _>>()?;

        for (node, e) in nodes.iter_mut().zip(&evals) {
            node.ub = Some(match e {
                Evaluation::Leaf { value, .. } => value + node.offset,
                Evaluation::Bounded { ub, .. } | Evaluation::PrunedBySurrogate { ub } => {
                    ub + node.offset
                }
            });
        }
        self.nodes_evaluated += nodes.len();
        Ok((evals, nodes))
    }

    /// Applies a batch in child order: incumbents first, then pruning and pushes.
    fn absorb(&mut self, nodes: Vec<BnbNode>, evals: Vec<Evaluation>) {
        for (node, e) in nodes.iter().zip(&evals) {
            let x = match e {
                Evaluation::Leaf { x, .. } => x,
                Evaluation::Bounded {
                    rounded: Some(x), ..
                } => x,
                _ => continue,
            };
            self.offer(expand_assignment(x, &node.fixings));
        }
        for (mut node, e) in nodes.into_iter().zip(evals) {
            let ub = node.ub.expect("evaluated");
            match e {
                Evaluation::Leaf { .. } => self.record(&node, ub, NodeOutcome::Leaf),
                Evaluation::PrunedBySurrogate { .. } => {
                    self.nodes_pruned_by_gnn += 1;
                    self.nodes_pruned_total += 1;
                    self.record(&node, ub, NodeOutcome::PrunedBySurrogate);
                }
                Evaluation::Bounded { factors, .. } => {
                    if self.keeps(ub) {
                        self.record(&node, ub, NodeOutcome::Queued);
                        node.factors = Some(factors);
                        self.seq += 1;
                        self.queue.push(Queued {
                            ub,
                            seq: self.seq,
                            node,
                        });
                    } else {
                        if self.cfg.oracle == OracleKind::Neural {
                            self.nodes_pruned_by_gnn += 1;
                        }
                        self.nodes_pruned_total += 1;
                        self.record(&node, ub, NodeOutcome::Pruned);
                    }
                }
            }
        }
    }

    fn offer(&mut self, x: Assignment) {
        let v = self.g.cut_value(&x);
        if v > self.best_value {
            self.best_value = v;
            self.best_x = x;
            self.lb = self.lb.max(v);
        }
    }
}

/// Runs the search to completion (or the time limit).
pub fn solve(g: &WeightedGraph, cfg: &SolverConfig) -> Result<SolveResult, BnbError> {
    let mut s = Solver::new(g, cfg)?;
    while s.step()? {}
    Ok(s.into_result())
}
