use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_certcut"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn triangle(dir: &Path) -> PathBuf {
    write(dir, "tri.mc", "3 3\n1 2 1\n1 3 1\n2 3 1\n")
}

/// Record with wall-clock fields removed.
fn timeless(path: &Path) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.retain(|k, _| k != "wall_time" && k != "mean_time" && k != "speedup");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    strip(&mut v);
    v
}

fn small_instances(dir: &Path, count: usize) -> PathBuf {
    let out = dir.join("inst");
    let o = run(&["generate", "w-5_5", "--n", "9", "--count", &count.to_string(), "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success());
    out
}

fn random_weights(dir: &Path) -> PathBuf {
    let p = dir.join("m.w");
    let o = run(&["generate", "model", "--layers", "2", "--hidden", "6", "--rank", "3", "--width", "8", "--seed", "3", "--out", s(&p)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn solve_triangle() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--oracle", "vanilla", s(&triangle(d.path()))]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("value 2\t"), "{}", stdout(&o));
}

#[test]
fn neural_matches_vanilla() {
    let d = tempfile::tempdir().unwrap();
    let inst = small_instances(d.path(), 3);
    let w = random_weights(d.path());
    let mut files: Vec<_> = fs::read_dir(&inst).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in &files {
        let a = d.path().join("a.json");
        let b = d.path().join("b.json");
        assert!(run(&["solve", s(f), "--out", s(&a)]).status.success());
        let o = run(&["solve", "--oracle", "neural", "--weights", s(&w), "--top-k", "32", s(f), "--out", s(&b)]);
        assert!(o.status.success());
        let va = timeless(&a)["instances"][0]["best_value"].clone();
        let vb = timeless(&b)["instances"][0]["best_value"].clone();
        assert_eq!(va, vb);
    }
}

#[test]
fn heuristic_free_run_records_counters() {
    let d = tempfile::tempdir().unwrap();
    let inst = small_instances(d.path(), 1);
    let f = fs::read_dir(&inst).unwrap().next().unwrap().unwrap().path();
    let out = d.path().join("r.json");
    let o = run(&["solve", "--no-gw", "--lb", "2", "--trace", s(&f), "--out", s(&out)]);
    assert!(o.status.success());
    let rec = timeless(&out);
    assert_eq!(rec["schema"], 1);
    let inst = &rec["instances"][0];
    assert_eq!(inst["heuristic_free"], true);
    assert!(inst["nodes_pruned_total"].as_u64().unwrap() > 0);
    assert!(inst["nodes_pruned_by_gnn"].as_u64().is_some());
    assert!(!inst["trace"].as_array().unwrap().is_empty());
}

#[test]
fn relax_values() {
    let d = tempfile::tempdir().unwrap();
    let k2 = write(d.path(), "k2.mc", "2 1\n1 2 1\n");
    let o = run(&["relax", "--oracle", "vanilla", s(&k2)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("sdp 1.0000"), "{}", stdout(&o));

    let out = d.path().join("r.json");
    let o = run(&["relax", s(&triangle(d.path())), "--out", s(&out)]);
    assert!(o.status.success());
    let b = timeless(&out)["relax"][0]["sdp_bound"].as_f64().unwrap();
    assert!((b - 2.25).abs() < 1e-3, "{b}");
}

#[test]
fn relax_reports_gap_between_oracles() {
    let d = tempfile::tempdir().unwrap();
    let w = random_weights(d.path());
    let inst = small_instances(d.path(), 1);
    let f = fs::read_dir(&inst).unwrap().next().unwrap().unwrap().path();
    let out = d.path().join("r.json");
    let o = run(&["relax", "--oracle", "vanilla", "--oracle", "neural", "--weights", s(&w), s(&f), "--out", s(&out)]);
    assert!(o.status.success());
    let row = &timeless(&out)["relax"][0];
    let (sdp, sur) = (row["sdp_bound"].as_f64().unwrap(), row["surrogate_bound"].as_f64().unwrap());
    // The surrogate bound is a feasible dual value, so never below the SDP optimum.
    assert!(sur >= sdp - 1e-3 * (1.0 + sdp.abs()));
    let gap = row["gap_percent"].as_f64().unwrap();
    assert!((gap - ((sur - sdp) / sdp).abs() * 100.0).abs() < 1e-9);
}

#[test]
fn generate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for out in [&a, &b] {
        assert!(run(&["generate", "g05", "--n", "60", "--count", "10", "--seed", "1", "--out", s(out)]).status.success());
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
}

#[test]
fn generate_pm1s_weights() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("p");
    assert!(run(&["generate", "pm1s", "--n", "40", "--count", "2", "--out", s(&out)]).status.success());
    for e in fs::read_dir(&out).unwrap() {
        let text = fs::read_to_string(e.unwrap().path()).unwrap();
        for line in text.lines().skip(1) {
            let w = line.split_whitespace().nth(2).unwrap();
            assert!(w == "1" || w == "-1", "{w}");
        }
    }
}

#[test]
fn generate_trajectories() {
    let d = tempfile::tempdir().unwrap();
    let seed_dir = d.path().join("seed");
    assert!(run(&["generate", "g05", "--n", "30", "--out", s(&seed_dir)]).status.success());
    let seed = fs::read_dir(&seed_dir).unwrap().next().unwrap().unwrap().path();
    let out = d.path().join("traj");
    let o = run(&["generate", "g05", "--trajectories", s(&seed), "--count", "20", "--min-free", "3", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&out).unwrap().count(), 20 * 27);
}

#[test]
fn bench_table_and_reproducibility() {
    let d = tempfile::tempdir().unwrap();
    let inst = small_instances(d.path(), 3);
    let w = random_weights(d.path());
    let a = d.path().join("a.json");
    let b = d.path().join("b.json");
    for out in [&a, &a, &b] {
        let o = run(&["bench", s(&inst), "--oracle", "vanilla", "--oracle", "hybrid", "--weights", s(&w), "--seed", "5", "--out", s(out)]);
        assert!(o.status.success());
        let rows: Vec<_> = stdout(&o).lines().skip(1).map(String::from).collect();
        assert_eq!(rows.len(), 2, "{}", stdout(&o));
        assert!(rows[0].starts_with("vanilla") && rows[1].starts_with("hybrid"));
    }
    let (ra, rb) = (timeless(&a), timeless(&b));
    assert_eq!(ra["instances"], rb["instances"]);
    assert_eq!(ra["bench"], rb["bench"]);
}

#[test]
fn usage_errors() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["bench", s(&empty)]).status.code(), Some(2));
    let tri = triangle(d.path());
    assert_eq!(run(&["solve", "--oracle", "neural", s(&tri)]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--top-k", "0", s(&tri)]).status.code(), Some(2));
    let o = run(&["solve", s(&d.path().join("missing.mc"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.mc"));
}

#[test]
fn time_limit_sets_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let inst = small_instances(d.path(), 1);
    let f = fs::read_dir(&inst).unwrap().next().unwrap().unwrap().path();
    let o = run(&["solve", "--time-limit", "0", s(&f)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("time limit"));
}
