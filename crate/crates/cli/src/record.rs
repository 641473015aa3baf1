//! Machine-readable run records.

use std::path::Path;

use anyhow::{Context, Result};
use certcut::bnb::TraceEntry;
use certcut::{OracleKind, SolveResult, SolverConfig, WeightedGraph};
use serde::Serialize;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub schema: u32,
    pub command: String,
    /// Arguments after the program name; rerunning them reproduces the record.
    pub args: Vec<String>,
    pub version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<InstanceRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub relax: Vec<RelaxRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bench: Vec<BenchRow>,
}

#[derive(Debug, Serialize)]
pub struct InstanceRecord {
    pub path: String,
    pub n: usize,
    pub edges: usize,
    pub oracle: OracleKind,
    pub top_k: usize,
    pub heuristic_free: bool,
    pub injected_lb: Option<f64>,
    pub best_value: f64,
    pub lower_bound: f64,
    pub root_bound: f64,
    pub best_x: Vec<i8>,
    pub nodes_evaluated: usize,
    pub nodes_pruned_by_gnn: usize,
    pub nodes_pruned_total: usize,
    pub pdhg_calls: usize,
    pub surrogate_calls: usize,
    pub wall_time: f64,
    pub optimal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

impl InstanceRecord {
    pub fn new(path: &Path, g: &WeightedGraph, cfg: &SolverConfig, r: &SolveResult) -> Self {
        Self {
            path: path.display().to_string(),
            n: g.n(),
            edges: g.edge_count(),
            oracle: cfg.oracle,
            top_k: cfg.top_k,
            heuristic_free: cfg.heuristic_free,
            injected_lb: cfg.injected_lb,
            best_value: r.best_value,
            lower_bound: r.lower_bound,
            root_bound: r.root_bound,
            best_x: r.best_x.as_slice().to_vec(),
            nodes_evaluated: r.nodes_evaluated,
            nodes_pruned_by_gnn: r.nodes_pruned_by_gnn,
            nodes_pruned_total: r.nodes_pruned_total,
            pdhg_calls: r.pdhg_calls,
            surrogate_calls: r.surrogate_calls,
            wall_time: r.wall_time.as_secs_f64(),
            optimal: r.optimal,
            trace: cfg.trace.then(|| r.trace.clone()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub instances: usize,
    pub mean_nodes: f64,
    pub mean_time: f64,
    pub mean_pruned_by_gnn: f64,
    pub mean_pruned_total: f64,
    pub all_optimal: bool,
}

impl Aggregate {
    fn of(recs: &[InstanceRecord]) -> Option<Self> {
        if recs.is_empty() {
            return None;
        }
        let k = recs.len() as f64;
        let mean = |f: fn(&InstanceRecord) -> f64| recs.iter().map(f).sum::<f64>() / k;
        Some(Self {
            instances: recs.len(),
            mean_nodes: mean(|r| r.nodes_evaluated as f64),
            mean_time: mean(|r| r.wall_time),
            mean_pruned_by_gnn: mean(|r| r.nodes_pruned_by_gnn as f64),
            mean_pruned_total: mean(|r| r.nodes_pruned_total as f64),
            all_optimal: recs.iter().all(|r| r.optimal),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RelaxRecord {
    pub path: String,
    pub n: usize,
    pub sdp_bound: Option<f64>,
    pub surrogate_bound: Option<f64>,
    /// `|surrogate - sdp| / |sdp| * 100`.
    pub gap_percent: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub oracle: OracleKind,
    pub top_k: usize,
    pub mean_nodes: f64,
    pub mean_time: f64,
    /// Mean vanilla time (same top-K, else the first vanilla row) over this row's.
    pub speedup: Option<f64>,
    pub all_optimal: bool,
}

impl BenchRow {
    pub fn from_records(oracle: OracleKind, top_k: usize, recs: &[InstanceRecord]) -> Self {
        let agg = Aggregate::of(recs).expect("bench runs at least one instance");
        Self { oracle, top_k, mean_nodes: agg.mean_nodes, mean_time: agg.mean_time, speedup: None, all_optimal: agg.all_optimal }
    }

    pub fn fill_speedups(rows: &mut [BenchRow]) {
        let base = |k: usize| {
            rows.iter()
                .find(|r| r.oracle == OracleKind::Vanilla && r.top_k == k)
                .or_else(|| rows.iter().find(|r| r.oracle == OracleKind::Vanilla))
                .map(|r| r.mean_time)
        };
        let speeds: Vec<Option<f64>> = rows.iter().map(|r| base(r.top_k).map(|b| b / r.mean_time.max(1e-12))).collect();
        for (r, s) in rows.iter_mut().zip(speeds) {
            r.speedup = s;
        }
    }
}

impl RunRecord {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self {
            schema: SCHEMA,
            command: command.to_string(),
            args,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            instances: Vec::new(),
            aggregate: None,
            relax: Vec::new(),
            bench: Vec::new(),
        }
    }

    pub fn with_instances(mut self, instances: Vec<InstanceRecord>) -> Self {
        self.aggregate = Aggregate::of(&instances);
        self.instances = instances;
        self
    }

    pub fn with_relax(mut self, rows: Vec<RelaxRecord>) -> Self {
        self.relax = rows;
        self
    }

    pub fn with_bench(mut self, rows: Vec<BenchRow>) -> Self {
        self.bench = rows;
        self
    }

    pub fn write(&self, out: Option<&Path>) -> Result<()> {
        let Some(path) = out else { return Ok(()) };
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
