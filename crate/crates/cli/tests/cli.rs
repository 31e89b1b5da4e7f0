use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ugv-plan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["gen-scenario", "--out", s(&path)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn depot_only_solve_has_no_motion_energy() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "3"]);
    let result = dir.path().join("r.json");
    let out = run(&["solve", "--scenario", s(&scenario), "--depot-only", "--out", s(&result)]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&result);
    assert_eq!(doc["energy_motion"], 0.0);
    assert_eq!(doc["method"], "no_move");
    assert_eq!(doc["tour"]["order"], serde_json::json!([0]));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("no_move: xi="));
}

#[test]
fn repeated_solves_write_identical_files() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "4", "--noise-dbm", "-60"]);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&["solve", "--scenario", s(&scenario), "--seed", "11", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let doc = json(&a);
    assert_eq!(doc["trace"].as_array().unwrap().len(), 50);
    assert!(doc["allocation"]["time"].is_array());
}

#[test]
fn infeasible_solve_exits_two_and_records_inf() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "5"]);
    let result = dir.path().join("r.json");
    let out = run(&["solve", "--scenario", s(&scenario), "--visit-all", "--speed", "0.01", "--out", s(&result)]);
    assert_eq!(out.status.code(), Some(2));
    let doc = json(&result);
    assert_eq!(doc["xi"], "inf");
    assert_eq!(doc["feasible"], false);
    assert!(doc["infeasibility"].as_str().unwrap().contains("no time"));
}

#[test]
fn bad_files_exit_one_with_a_diagnostic() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "6", "--vertices", "3", "--users", "2"]);
    let text = fs::read_to_string(&scenario).unwrap();

    let broken = dir.path().join("broken.json");
    fs::write(&broken, text.replace("\"horizon\": 50.0", "\"horizon\": [50]")).unwrap();
    let out = run(&["solve", "--scenario", s(&broken)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.horizon"), "{err}");

    let old = dir.path().join("old.json");
    fs::write(&old, text.replace("\"schema_version\": 1", "\"schema_version\": 0")).unwrap();
    let out = run(&["solve", "--scenario", s(&old)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));

    let out = run(&["solve", "--scenario", s(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["solve", "--scenario", s(&scenario), "--L", "0"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["solve", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_has_one_non_increasing_row_per_iteration() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "7", "--noise-dbm", "-60"]);
    let trace = dir.path().join("trace.csv");
    let out = run(&["trace", "--scenario", s(&scenario), "--L", "3", "--iters", "50", "--out", s(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["iteration", "xi"]);
    let xi: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(xi.len(), 50);
    assert!(xi.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn path_dump_edges_form_one_closed_walk() {
    let dir = TempDir::new().unwrap();
    let scenario = gen(&dir, "s.json", &["--seed", "8", "--noise-dbm", "-60"]);
    let path = dir.path().join("path.csv");
    assert_eq!(run(&["path-dump", "--scenario", s(&scenario), "--out", s(&path)]).status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let records: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(records.iter().filter(|r| &r[0] == "vertex").count(), 15);
    assert_eq!(records.iter().filter(|r| &r[0] == "user").count(), 10);
    let edges: Vec<(usize, usize)> = records
        .iter()
        .filter(|r| &r[0] == "edge")
        .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect();
    assert!(!edges.is_empty(), "high noise should make the vehicle move");
    assert_eq!(edges[0].0, 0);
    assert_eq!(edges.last().unwrap().1, 0);
    assert!(edges.windows(2).all(|w| w[0].1 == w[1].0));
    let selected = records.iter().filter(|r| &r[0] == "vertex" && &r[8] == "1").count();
    assert_eq!(selected, edges.len());

    let depot = dir.path().join("depot.csv");
    assert_eq!(run(&["path-dump", "--scenario", s(&scenario), "--depot-only", "--out", s(&depot)]).status.code(), Some(0));
    let text = fs::read_to_string(&depot).unwrap();
    assert!(!text.lines().any(|l| l.starts_with("edge")));
}

#[test]
fn fit_beta_prints_a_factor_below_one() {
    let out = run(&["fit-beta"]);
    assert!(out.status.success());
    let beta: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(beta > 0.0 && beta < 1.0, "{beta}");
}

fn sweep(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["sweep", "--out", s(dir), "--noise-grid", "-120,-90,-60"];
    if !extra.contains(&"--runs") {
        args.extend_from_slice(&["--runs", "4"]);
    }
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn sweep_from_spec_file_with_exhaustive_oracle() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"schema_version": 1, "runs": 2, "master_seed": 9,
            "scenario": {"num_vertices": 6, "num_users": 3},
            "solver": {"iterations": 40}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["sweep", "--spec", s(&spec), "--out", s(&out_dir), "--exhaustive", "--noise-grid", "-100,-60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 4);
    let resolved = json(&out_dir.join("spec.json"));
    assert_eq!(resolved["noise_grid_dbm"], serde_json::json!([-100.0, -60.0]));
    assert_eq!(resolved["scenario"]["num_vertices"], 6);

    let mut rdr = csv::Reader::from_path(out_dir.join("rows.csv")).unwrap();
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    for run in ["0", "1"] {
        for noise in ["-100", "-60"] {
            let xi = |m: &str| -> f64 {
                recs.iter().find(|r| &r[0] == run && &r[3] == noise && &r[5] == m).unwrap()[6].parse().unwrap()
            };
            assert!(xi("exhaustive") <= xi("sls"));
            assert!(xi("sls") <= xi("no_move"));
        }
    }

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 1, "runs": 0}"#).unwrap();
    assert_eq!(run(&["sweep", "--spec", s(&bad), "--out", s(&out_dir)]).status.code(), Some(1));
}

#[test]
fn sweep_rows_revalidate_and_aggregates_recompute() {
    let dir = TempDir::new().unwrap();
    assert!(sweep(dir.path(), &["--seed", "21"]).status.success());

    let mut rdr = csv::Reader::from_path(dir.path().join("rows.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 4 * 3 * 3);
    let f = |r: &csv::StringRecord, name: &str| -> f64 { r[col(name)].parse().unwrap() };
    for r in &recs {
        assert_eq!(&r[col("error")], "");
        if &r[col("feasible")] == "true" {
            let xi = f(r, "xi");
            let parts = f(r, "energy_motion") + f(r, "energy_comm");
            assert!((xi - parts).abs() <= 1e-9 * xi.abs(), "{xi} vs {parts}");
            assert!(f(r, "qos_residual") <= 1e-6);
            assert_eq!(&r[col("certified")], "true");
        } else {
            assert_eq!(&r[col("xi")], "inf");
        }
    }

    // Independent re-aggregation must reproduce the aggregate file exactly.
    let mut expected = String::from(
        "noise_dbm,method,runs,feasible_runs,mean_xi,mean_energy_motion,mean_energy_comm,mean_visited\n",
    );
    for noise in ["-120", "-90", "-60"] {
        for method in ["sls", "no_move", "visit_all"] {
            let cell: Vec<&csv::StringRecord> =
                recs.iter().filter(|r| &r[col("noise_dbm")] == noise && &r[col("method")] == method).collect();
            let n = cell.len() as f64;
            let mean = |name: &str| cell.iter().map(|r| f(r, name)).sum::<f64>() / n;
            let feasible = cell.iter().filter(|r| &r[col("feasible")] == "true").count();
            expected.push_str(&format!(
                "{noise},{method},{},{feasible},{},{},{},{}\n",
                cell.len(),
                mean("xi"),
                mean("energy_motion"),
                mean("energy_comm"),
                mean("visited")
            ));
        }
    }
    assert_eq!(fs::read_to_string(dir.path().join("aggregate.csv")).unwrap(), expected);

    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 1 + recs.len());
}

#[test]
fn sweep_is_byte_identical_across_repeats_and_seed_sensitive() {
    let dirs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    assert!(sweep(dirs[0].path(), &["--seed", "5"]).status.success());
    assert!(sweep(dirs[1].path(), &["--seed", "5"]).status.success());
    assert!(sweep(dirs[2].path(), &["--seed", "6"]).status.success());
    for f in ["rows.csv", "aggregate.csv", "spec.json"] {
        assert_eq!(fs::read(dirs[0].path().join(f)).unwrap(), fs::read(dirs[1].path().join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(dirs[0].path().join("rows.csv")).unwrap(), fs::read(dirs[2].path().join("rows.csv")).unwrap());
}

#[test]
fn low_noise_sweep_matches_no_move() {
    let dir = TempDir::new().unwrap();
    let out = run(&["sweep", "--out", s(dir.path()), "--runs", "1", "--noise-grid", "-120"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 3);
    let xi = |m: &str| -> f64 { recs.iter().find(|r| &r[1] == m).unwrap()[4].parse().unwrap() };
    assert!((xi("sls") - xi("no_move")).abs() <= 0.01 * xi("no_move"));
}

#[test]
fn high_noise_visits_at_least_as_many_vertices_on_average() {
    let dir = TempDir::new().unwrap();
    assert!(sweep(dir.path(), &["--seed", "2", "--runs", "8"]).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let visited = |noise: &str| -> f64 {
        recs.iter().find(|r| &r[0] == noise && &r[1] == "sls").unwrap()[7].parse().unwrap()
    };
    assert!(visited("-60") >= visited("-120"));
}
