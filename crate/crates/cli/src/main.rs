//! `certcut`: solve, relax, generate and bench Max-Cut instances.

mod record;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use certcut::graph::{generate_er, random_trajectory_subgraphs};
use certcut::rng::StreamRng;
use certcut::sdp::{pdhg_solve, SdpModel};
use certcut::surrogate::SurrogateModel;
use certcut::{parse_instance, solve, Model, ModelSpec, NormKind, OracleKind, SolverConfig, Variant, WeightFamily, WeightedGraph};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use record::{BenchRow, InstanceRecord, RelaxRecord, RunRecord};

#[derive(Parser, Debug)]
#[command(name = "certcut", version, about = "Exact Max-Cut with certified SDP and learned bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve instances to proven optimality.
    Solve(RunArgs),
    /// Report certified root bounds.
    Relax(RunArgs),
    /// Write random instances, trajectory subgraphs or a random weight container.
    Generate(GenArgs),
    /// Sweep oracles and top-K values over a directory of instances.
    Bench(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Instance files (a single directory for `bench`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Bounding oracle; `bench` and `relax` accept it more than once.
    #[arg(long, value_parser = parse_oracle, default_value = "vanilla")]
    oracle: Vec<OracleKind>,
    /// Weight container for the neural and hybrid oracles.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Nodes popped per batch; `bench` accepts it more than once.
    #[arg(long, default_value = "1")]
    top_k: Vec<usize>,
    /// Rounding hyperplanes per interior node.
    #[arg(long, default_value_t = 20)]
    gw_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds per instance.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Disable rounding (heuristic-free mode).
    #[arg(long)]
    no_gw: bool,
    /// Initial lower bound, e.g. a known optimum.
    #[arg(long)]
    lb: Option<f64>,
    /// PDHG relative gap tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol_gap: f64,
    /// Run record destination (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the per-node trace in the run record.
    #[arg(long)]
    trace: bool,
    /// Instances solved in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug, Clone)]
struct GenArgs {
    /// `g05`, `pm1s`, `w<lo>_<hi>`, or `model` for a random weight container.
    family: String,
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Edge probability (defaults to the family's usual density).
    #[arg(long)]
    p: Option<f64>,
    /// Instances, or trajectories with `--trajectories`.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (output file for `model`).
    #[arg(long)]
    out: PathBuf,
    /// Seed instance whose random branching trajectories are written out.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Smallest subgraph recorded along a trajectory.
    #[arg(long, default_value_t = 3)]
    min_free: usize,
    #[arg(long, default_value = "dense")]
    variant: String,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    #[arg(long, default_value = "layer")]
    norm: String,
    /// Hidden width inside each MLP.
    #[arg(long, default_value_t = 32)]
    width: usize,
}

/// Bad invocation, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_oracle(s: &str) -> Result<OracleKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, argv),
        Command::Relax(a) => cmd_relax(&a, argv),
        Command::Generate(a) => cmd_generate(&a),
        Command::Bench(a) => cmd_bench(&a, argv),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn read_instance(path: &Path) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(a: &RunArgs, needed: bool) -> Result<Option<Arc<Model>>> {
    match (&a.weights, needed) {
        (Some(p), _) => {
            let m = Model::load(p).with_context(|| format!("loading weights {}", p.display()))?;
            Ok(Some(Arc::new(m)))
        }
        (None, true) => Err(usage("the neural and hybrid oracles need --weights")),
        (None, false) => Ok(None),
    }
}

fn solver_config(a: &RunArgs, oracle: OracleKind, top_k: usize, model: Option<&Arc<Model>>) -> Result<SolverConfig> {
    let mut cfg = SolverConfig { oracle, top_k, heuristic_free: a.no_gw, injected_lb: a.lb, trace: a.trace, ..Default::default() };
    cfg.rounding.samples = a.gw_samples;
    cfg.rounding.root_samples = cfg.rounding.root_samples.max(a.gw_samples);
    cfg.rounding.rng_seed = a.seed;
    cfg.pdhg.tol_gap = a.tol_gap;
    if let Some(t) = a.time_limit {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(usage("--time-limit must be a non-negative number of seconds"));
        }
        cfg.time_limit = Some(Duration::from_secs_f64(t));
    }
    if oracle != OracleKind::Vanilla {
        cfg.model = model.map(|m| Arc::clone(m) as Arc<dyn certcut::Surrogate>);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn solve_all(paths: &[PathBuf], cfg: &SolverConfig, jobs: usize) -> Result<Vec<InstanceRecord>> {
    let graphs = paths.iter().map(|p| read_instance(p)).collect::<Result<Vec<_>>>()?;
    let work = |(p, g): (&PathBuf, &WeightedGraph)| -> Result<InstanceRecord> {
        let r = solve(g, cfg).with_context(|| format!("solving {}", p.display()))?;
        Ok(InstanceRecord::new(p, g, cfg, &r))
    };
    // Node batches inside a solve share the same pool; results do not depend on it.
    pool(jobs)?.install(|| paths.par_iter().zip(&graphs).map(work).collect())
}

fn single<T: Copy + std::fmt::Display>(v: &[T], flag: &str) -> Result<T> {
    match v {
        [x] => Ok(*x),
        _ => Err(usage(format!("{flag} takes a single value for this command"))),
    }
}

fn cmd_solve(a: &RunArgs, argv: Vec<String>) -> Result<bool> {
    let oracle = single(&a.oracle, "--oracle")?;
    let top_k = single(&a.top_k, "--top-k")?;
    let model = load_model(a, oracle != OracleKind::Vanilla)?;
    let cfg = solver_config(a, oracle, top_k, model.as_ref())?;
    let instances = solve_all(&a.inputs, &cfg, a.jobs)?;
    for r in &instances {
        println!(
            "{}\tvalue {}\tnodes {}\tpruned {} (gnn {})\ttime {:.3}s{}",
            r.path,
            r.best_value,
            r.nodes_evaluated,
            r.nodes_pruned_total,
            r.nodes_pruned_by_gnn,
            r.wall_time,
            if r.optimal { "" } else { "\t(time limit)" }
        );
    }
    let all_optimal = instances.iter().all(|r| r.optimal);
    let rec = RunRecord::new("solve", argv, a.seed).with_instances(instances);
    rec.write(a.out.as_deref())?;
    Ok(all_optimal)
}

/// `|obj - obj_star| / |obj_star| * 100`.
fn relative_gap_percent(obj: f64, obj_star: f64) -> f64 {
    if obj == obj_star {
        0.0
    } else {
        ((obj - obj_star) / obj_star).abs() * 100.0
    }
}

fn cmd_relax(a: &RunArgs, argv: Vec<String>) -> Result<bool> {
    let mut oracles = a.oracle.clone();
    oracles.dedup();
    let needs_model = oracles.iter().any(|&o| o != OracleKind::Vanilla);
    let model = load_model(a, needs_model)?;
    let pdhg = certcut::Pdhg { tol_gap: a.tol_gap, ..Default::default() };
    pdhg.validate().map_err(|e| usage(e.to_string()))?;
    let mut rows = Vec::new();
    for path in &a.inputs {
        let g = read_instance(path)?;
        let mut sdp_bound = None;
        let mut sur_bound = None;
        for &o in &oracles {
            match o {
                OracleKind::Vanilla => {
                    let sol = pdhg_solve(&SdpModel::new(g.laplacian())?, &pdhg)?;
                    sdp_bound = Some(sol.certified.ub_cut);
                }
                OracleKind::Neural | OracleKind::Hybrid => {
                    let m = model.as_ref().expect("checked above");
                    sur_bound = Some(m.predict(std::slice::from_ref(&g))?[0].bound.ub_cut);
                }
            }
        }
        let gap = match (sur_bound, sdp_bound) {
            (Some(s), Some(p)) => Some(relative_gap_percent(s, p)),
            _ => None,
        };
        let mut line = format!("{}", path.display());
        if let Some(b) = sdp_bound {
            line += &format!("\tsdp {b:.4}");
        }
        if let Some(b) = sur_bound {
            line += &format!("\tsurrogate {b:.4}");
        }
        if let Some(gp) = gap {
            line += &format!("\tgap {gp:.4}%");
        }
        println!("{line}");
        rows.push(RelaxRecord { path: path.display().to_string(), n: g.n(), sdp_bound, surrogate_bound: sur_bound, gap_percent: gap });
    }
    RunRecord::new("relax", argv, a.seed).with_relax(rows).write(a.out.as_deref())?;
    Ok(true)
}

fn cmd_bench(a: &RunArgs, argv: Vec<String>) -> Result<bool> {
    let dir = match a.inputs.as_slice() {
        [d] if d.is_dir() => d,
        _ => return Err(usage("bench takes a single instance directory")),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!("no instances in {}", dir.display())));
    }
    let needs_model = a.oracle.iter().any(|&o| o != OracleKind::Vanilla);
    let model = load_model(a, needs_model)?;
    let mut rows = Vec::new();
    let mut all_optimal = true;
    let mut instances = Vec::new();
    for &oracle in &a.oracle {
        for &k in &a.top_k {
            let cfg = solver_config(a, oracle, k, model.as_ref())?;
            let recs = solve_all(&paths, &cfg, a.jobs)?;
            all_optimal &= recs.iter().all(|r| r.optimal);
            rows.push(BenchRow::from_records(oracle, k, &recs));
            instances.extend(recs);
        }
    }
    BenchRow::fill_speedups(&mut rows);
    println!("oracle\ttop_k\tmean_nodes\tmean_time_s\tspeedup\toptimal");
    for r in &rows {
        let speed = r.speedup.map_or("-".to_string(), |s| format!("{s:.2}x"));
        println!("{}\t{}\t{:.1}\t{:.3}\t{}\t{}", r.oracle, r.top_k, r.mean_nodes, r.mean_time, speed, r.all_optimal);
    }
    RunRecord::new("bench", argv, a.seed).with_instances(instances).with_bench(rows).write(a.out.as_deref())?;
    Ok(all_optimal)
}

fn cmd_generate(a: &GenArgs) -> Result<bool> {
    if a.family == "model" {
        let spec = ModelSpec {
            variant: a.variant.parse::<Variant>().map_err(|e| usage(e.to_string()))?,
            layers: a.layers,
            hidden: a.hidden,
            rank: a.rank,
            norm: a.norm.parse::<NormKind>().map_err(|e| usage(e.to_string()))?,
        };
        if spec.layers == 0 || spec.hidden == 0 || spec.rank == 0 || a.width == 0 {
            return Err(usage("--layers, --hidden, --rank and --width must be positive"));
        }
        SurrogateModel::<f32>::random(spec, a.width, a.seed)
            .save(&a.out)
            .with_context(|| format!("writing {}", a.out.display()))?;
        println!("{}", a.out.display());
        return Ok(true);
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if let Some(seed_path) = &a.trajectories {
        let g = read_instance(seed_path)?;
        let subs = random_trajectory_subgraphs(&g, a.min_free, a.count, a.seed).map_err(|e| usage(e.to_string()))?;
        let per = g.n() - a.min_free;
        for (k, s) in subs.iter().enumerate() {
            let name = format!("traj_{:03}_{:03}.mc", k / per, k % per);
            fs::write(a.out.join(name), s.to_instance_string())?;
        }
        println!("wrote {} subgraphs to {}", subs.len(), a.out.display());
        return Ok(true);
    }
    let family: WeightFamily = a.family.parse().map_err(|e: certcut::graph::GraphError| usage(e.to_string()))?;
    let p = a.p.unwrap_or_else(|| family.default_density());
    for k in 0..a.count {
        let seed = StreamRng::derived(a.seed, k as u64).next_u64();
        let g = generate_er(a.n, p, family, seed).map_err(|e| usage(e.to_string()))?;
        let name = format!("{family}_n{}_s{}_{k:04}.mc", a.n, a.seed);
        fs::write(a.out.join(name), g.to_instance_string())?;
    }
    println!("wrote {} instances to {}", a.count, a.out.display());
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_formula() {
        assert_eq!(relative_gap_percent(2.25, 2.25), 0.0);
        assert!((relative_gap_percent(2.5, 2.0) - 25.0).abs() < 1e-12);
        assert!((relative_gap_percent(1.5, 2.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn bad_generate_inputs_are_usage_errors() {
        let dir = std::env::temp_dir();
        let mut a = GenArgs {
            family: "zz".into(),
            n: 5,
            p: None,
            count: 1,
            seed: 0,
            out: dir,
            trajectories: None,
            min_free: 3,
            variant: "dense".into(),
            layers: 1,
            hidden: 2,
            rank: 1,
            norm: "none".into(),
            width: 2,
        };
        assert!(cmd_generate(&a).unwrap_err().downcast_ref::<Usage>().is_some());
        a.family = "model".into();
        a.norm = "batch".into();
        assert!(cmd_generate(&a).unwrap_err().downcast_ref::<Usage>().is_some());
    }
}
