use std::path::Path;
use std::process::{Command, Output};

fn ddcc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddcc"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn schedules_rows_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddcc(dir.path(), &["schedules", "--alpha", "0.1", "--methods", "cor1,thm1:3,thm1:5", "--n-grid", "10:1e8:50log"]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("schedules.csv"));
    assert_eq!(header, ["method", "N", "kappa", "phi", "nu", "feasible", "kappa_sqrt_phi"]);
    for m in ["cor1", "thm1:3", "thm1:5"] {
        assert_eq!(rows.iter().filter(|r| r[0] == m).count(), 50);
    }
    // absent values stay empty
    assert!(rows.iter().all(|r| r[4].is_empty()));
    // cor1 envelope over the emitted thm1 columns
    let column = |m: &str| -> Vec<Option<f64>> {
        rows.iter().filter(|r| r[0] == m).map(|r| r[6].parse().ok().filter(|_| r[5] == "true")).collect()
    };
    let (c, t3, t5) = (column("cor1"), column("thm1:3"), column("thm1:5"));
    for i in 0..50 {
        let best = [t3[i], t5[i]].into_iter().flatten().fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            assert!(c[i].unwrap() <= 1.05 * best);
        }
    }
}

#[test]
fn single_method_flag_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddcc(dir.path(), &["schedules", "--method", "prop2", "--p", "2", "--n-grid", "10:1000:5"]);
    assert!(out.status.success());
    let (_, rows) = read_csv(&dir.path().join("schedules.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[0] == "prop2:2" && r[2].is_empty()));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["schedules", "--alpha", "1.5"][..],
        &["schedules", "--n-grid", "10:5:3"],
        &["schedules", "--methods", "thm9"],
        &["constants", "--alpha-grid", "0:1"],
        &["bench", "--methods", "magic"],
        &["frobnicate"],
    ] {
        let out = ddcc(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn constants_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ddcc(dir.path(), &["constants", "--alpha-grid", "0.01:0.99:99"]).status.success());
    let (header, rows) = read_csv(&dir.path().join("constants.csv"));
    assert_eq!(header, ["alpha", "general", "independent", "gaussian"]);
    assert_eq!(rows.len(), 99);
    let half = rows.iter().find(|r| r[0] == "0.5").unwrap();
    assert_eq!(half[1], "1");
    assert!(half[3].parse::<f64>().unwrap().abs() < 1e-12);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() <= r[1].parse::<f64>().unwrap());
    }
    assert!(ddcc(dir.path(), &["constants", "--alpha-grid", "0.005:0.995:100"]).status.success());
    assert_eq!(read_csv(&dir.path().join("constants.csv")).1.len(), 100);
}

#[test]
fn bench_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "5", "bench", "--methods", "plugin,cor1", "--n-grid", "50,100", "--trials", "4", "--test-size", "5000", "--omit-timing"];
    assert!(ddcc(dir.path(), &args).status.success());
    let first = std::fs::read(dir.path().join("trials.csv")).unwrap();
    assert!(ddcc(dir.path(), &args).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("trials.csv")).unwrap());
    let (header, rows) = read_csv(&dir.path().join("trials.csv"));
    assert_eq!(header.join(","), "method,N,trial,seed,status,reward,violation,time_ms,x1,x2,x3,x4");
    assert_eq!(rows.len(), 16);
    let (agg_header, agg) = read_csv(&dir.path().join("aggregate.csv"));
    assert_eq!(agg_header.join(","), "method,N,avg_reward,max_violation,feasible_fraction");
    assert_eq!(agg.len(), 4);
}

#[test]
fn literal_mode_changes_the_violation_event() {
    let dir = tempfile::tempdir().unwrap();
    let run = |mode: &str| {
        let args = ["--mode", mode, "bench", "--methods", "oracle", "--n-grid", "50", "--trials", "1", "--test-size", "5000"];
        assert!(ddcc(dir.path(), &args).status.success());
        read_csv(&dir.path().join("aggregate.csv")).1[0].clone()
    };
    let loss = run("loss-beta");
    let literal = run("literal-paper");
    assert_ne!(loss[2], literal[2]);
    assert_ne!(loss[3], literal[3]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3, "bench": {"methods": ["oracle"], "n_grid": [60], "trials_per_n": 2, "test_size": 1000},
            "sequential": {"steps": 3, "samples_per_step": 20}}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert!(ddcc(dir.path(), &["--config", c, "bench", "--trials", "3"]).status.success());
    let (_, rows) = read_csv(&dir.path().join("trials.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[0] == "oracle" && r[1] == "60"));
    assert!(ddcc(dir.path(), &["--config", c, "sequential"]).status.success());
    let (header, rows) = read_csv(&dir.path().join("sequential.csv"));
    assert_eq!(header[..4], ["step", "count", "time_ms", "status"]);
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["20", "40", "60"]);

    std::fs::write(&cfg, r#"{"sead": 3}"#).unwrap();
    assert_eq!(ddcc(dir.path(), &["--config", c, "bench"]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"betting": {"alpha": 2.0}}"#).unwrap();
    assert_eq!(ddcc(dir.path(), &["--config", c, "bench"]).status.code(), Some(2));
}

#[test]
fn solve_from_sample_file() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let mut text = String::from("r1,r2\n");
    for i in 0..400 {
        let u = (i as f64 * 0.618_033_988_7).fract();
        let v = (i as f64 * 0.414_213_562_3).fract();
        text.push_str(&format!("{},{}\n", 0.05 + 0.2 * (u - 0.5), 0.08 + 0.4 * (v - 0.5)));
    }
    std::fs::write(&samples, text).unwrap();
    let support = dir.path().join("support.json");
    std::fs::write(&support, r#"{"box": {"lower": [-0.05, -0.12], "upper": [0.15, 0.28]}}"#).unwrap();
    // loss beyond 0.02 with probability at most 0.1: Pr(−rᵀx − 0.02 ≤ 0) ≥ 0.9
    let s = samples.to_str().unwrap();
    let sup = support.to_str().unwrap();
    for method in ["plugin", "cor1", "thm1:3", "cor2", "cor3", "best_of_both"] {
        let out = ddcc(
            dir.path(),
            &["solve", "--samples", s, "--support", sup, "--alpha", "0.1", "--offset", "-0.02", "--method", method,
              "--objective", "-0.05,-0.08", "--budget", "1", "--dump"],
        );
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let sol: serde_json::Value =
            serde_json::from_reader(std::fs::File::open(dir.path().join("solution.json")).unwrap()).unwrap();
        assert_eq!(sol["status"], "optimal", "{method}");
        assert_eq!(sol["samples"], 400);
        assert!(sol["constraint_value"].as_f64().unwrap() <= 1e-6);
        assert!(dir.path().join("blocks.json").exists() && dir.path().join("program.json").exists());
    }
    let out = ddcc(dir.path(), &["solve", "--samples", s, "--method", "cor1", "--objective", "1,1"]);
    assert_eq!(out.status.code(), Some(2), "cor1 without a support set");
    let out = ddcc(dir.path(), &["solve", "--samples", s, "--method", "plugin", "--objective", "1"]);
    assert_eq!(out.status.code(), Some(2), "objective length mismatch");
}
