use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn feqj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feqj"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

/// (hash line, header line, data rows)
fn csv(path: &Path) -> (String, String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let hash = lines.next().unwrap().to_string();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (hash, header, rows)
}

#[test]
fn population_preset_writes_three_frequency_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = feqj(&["--preset", "fig2", "--tau", "20", "--steps", "2000", "--snapshots", "11", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("falling back"));

    let (hash, header, rows) = csv(&dir.path().join("population.csv"));
    assert_eq!(header, "t,pop_0.9,pop_1.0,pop_1.1");
    let meta = run_json(dir.path());
    assert_eq!(hash, format!("# config_hash={}", meta["config_hash"].as_str().unwrap()));
    assert_eq!(meta["status"], "ok");
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[10][0], 20.0);
    // thermal start at β = 1: p₁ = e⁻¹ / (1 + e⁻¹)
    let p1 = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
    for v in &rows[0][1..] {
        assert!((v - p1).abs() < 1e-12);
    }
}

#[test]
fn trace_distance_experiment_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = feqj(&[
        "--experiment", "trace-distance", "--N", "10,40", "--omega-d", "1.0", "--tau", "5", "--beta", "1",
        "--steps", "500", "--repetitions", "2", "--snapshots", "6", "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, header, rows) = csv(&dir.path().join("tracedist.csv"));
    assert_eq!(header, "N,T_max,T_max_stderr");
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![10.0, 40.0]);
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[1] <= 1.0));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &str, threads: &str| {
        feqj(&[
            "--preset", "fig45", "--tau", "6", "--steps", "600", "--trajectories", "300", "--tau-points", "4",
            "--omega-d", "0.9,1.1", "--beta", "0.5", "--seed", "11", "--log-trajectories", "--threads", threads,
            "--out", out,
        ])
    };
    assert!(args(a.path().to_str().unwrap(), "1").status.success());
    assert!(args(b.path().to_str().unwrap(), "3").status.success());
    for f in ["wd0.9/moments.csv", "wd1.1/moments.csv", "wd0.9/trajectories.jsonl", "wd1.1/trajectories.jsonl"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let (_, header, rows) = csv(&a.path().join("wd0.9/moments.csv"));
    assert_eq!(
        header,
        "tau,W1_tmp_prop,W1_tmp_mc,W1_tmp_mc_err,W1_poa,W2_tmp_prop,W2_tmp_mc,W2_tmp_mc_err,W2_poa,diag_eq20"
    );
    assert_eq!(rows.len(), 4);
    assert_eq!(run_json(a.path())["config_hash"], run_json(b.path())["config_hash"]);
}

#[test]
fn trajectory_log_has_one_record_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = feqj(&[
        "--experiment", "single", "--tau", "4", "--omega-d", "1.0", "--beta", "1", "--steps", "400",
        "--trajectories", "50", "--log-trajectories", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let meta = run_json(dir.path());
    assert_eq!(lines[0]["config_hash"], meta["config_hash"]);
    assert_eq!(lines.len(), 51);
    for (i, r) in lines[1..].iter().enumerate() {
        assert_eq!(r["index"], i);
        assert_eq!(r["seed"], 2024);
        for key in ["initial", "events", "final", "work"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }
    let single = &meta["results"]["single"][0];
    assert!(single["tmp_sampled"]["moments"].as_array().unwrap().len() == 2);
}

#[test]
fn config_errors_exit_with_a_message() {
    let o = feqj(&[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("drive.tau") && err.contains("experiment"), "{err}");

    let o = feqj(&["--preset", "fig2", "--lambda0", "-0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("drive.lambda0"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, "experiment = \"single\"\n[drive]\ntau = 1.0\nfrequency = 2.0\n").unwrap();
    let o = feqj(&["--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frequency"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(
        &path,
        "experiment = \"single\"\nbeta = 2.0\n[drive]\ntau = 3.0\nomega_d = [1.0]\n[integrator]\nn_steps = 300\n[trajectories]\ncount = 0\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = feqj(&["--config", path.to_str().unwrap(), "--beta", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = run_json(&out);
    assert_eq!(meta["config"]["beta"], 0.5);
    assert_eq!(meta["config"]["drive"]["tau"], 3.0);
    assert!(meta["results"]["single"][0].get("tmp_sampled").is_none());
}

#[test]
fn invariant_trip_exits_nonzero_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    // coupling far too strong for ten RK4 steps: populations go negative
    let o = feqj(&[
        "--experiment", "population", "--tau", "100", "--steps", "10", "--coupling-sq", "5", "--beta", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = run_json(dir.path());
    assert_eq!(meta["status"], "invariant-violated");
    assert!(meta["error"].as_str().is_some());
}
