//! Experiment orchestration and artifact writing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use feqj::analysis::{max_trace_distance_vs_n, moments_vs_tau_logged, population_trace};
use feqj::dynamics::InvariantReport;
use feqj::feqj::{EnsembleSpec, TrajectoryEngine, TrajectoryRecord};
use feqj::work::{propagate_work, sampled_moments};
use serde_json::{json, Value};

use crate::config::{Experiment, SimConfig};

pub struct RunOptions {
    pub out: PathBuf,
    /// Worker count; `None` uses the hardware parallelism.
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum Status {
    Ok,
    /// An invariant left its tolerance, either aborting the integrator or
    /// showing up in the final report.
    InvariantViolated(Option<anyhow::Error>),
    Failed(anyhow::Error),
}

fn is_invariant_abort(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<feqj::Error>(),
        Some(feqj::Error::NegativeEigenvalue { .. } | feqj::Error::IntegratorBlowUp { .. })
    )
}

/// Shortest text that round-trips is not fixed-width; artifacts use 17
/// significant digits throughout.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    out: BufWriter<fs::File>,
}

impl Csv {
    pub fn create(path: &Path, hash: &str, header: &[String]) -> Result<Self> {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# config_hash={hash}")?;
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

struct Job<'a> {
    cfg: &'a SimConfig,
    hash: String,
    out: &'a Path,
    outputs: Vec<String>,
    report: InvariantReport,
    timings: serde_json::Map<String, Value>,
    results: serde_json::Map<String, Value>,
}

impl Job<'_> {
    /// Output directory for one drive frequency: the run directory itself when
    /// only one frequency is configured, `wd<ω>/` otherwise.
    fn dir_for(&self, omega: f64) -> Result<PathBuf> {
        let dir = if self.cfg.drive.omega_d.len() == 1 {
            self.out.to_path_buf()
        } else {
            self.out.join(format!("wd{omega:?}"))
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn track(&mut self, path: &Path) {
        let rel = path.strip_prefix(self.out).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    fn write_records(&mut self, dir: &Path, records: &[TrajectoryRecord<f64>]) -> Result<()> {
        let path = dir.join("trajectories.jsonl");
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "{}", json!({ "config_hash": self.hash }))?;
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
        self.track(&path);
        Ok(())
    }

    fn population(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let ws = &cfg.drive.omega_d;
        let (series, report) =
            population_trace(&cfg.scenario(ws[0])?, cfg.integrator(), ws, cfg.trajectories.snapshots)?;
        self.report.merge(&report);
        let path = self.out.join("population.csv");
        let mut header = vec!["t".to_string()];
        header.extend(series.columns.iter().map(|c| c.name.clone()));
        let mut csv = Csv::create(&path, &self.hash, &header)?;
        for (i, t) in series.x.iter().enumerate() {
            let mut row = vec![fmt(*t)];
            row.extend(series.columns.iter().map(|c| fmt(c.values[i])));
            csv.row(&row)?;
        }
        csv.finish()?;
        self.track(&path);
        Ok(())
    }

    fn trace_distance(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let t = &cfg.trajectories;
        let mut slopes = Vec::new();
        for &w in &cfg.drive.omega_d {
            let study = max_trace_distance_vs_n(
                &cfg.scenario(w)?,
                cfg.integrator(),
                cfg.feqj(),
                &t.counts,
                t.repetitions,
                t.snapshots,
            )?;
            self.report.merge(&study.report);
            let path = self.dir_for(w)?.join("tracedist.csv");
            let header = ["N", "T_max", "T_max_stderr"].map(String::from);
            let mut csv = Csv::create(&path, &self.hash, &header)?;
            for (i, n) in study.counts.iter().enumerate() {
                csv.row(&[n.to_string(), fmt(study.mean[i]), fmt(study.stderr[i])])?;
            }
            csv.finish()?;
            self.track(&path);
            slopes.push(json!({ "omega_d": w, "loglog_slope": study.slope }));
        }
        self.results.insert("trace_distance".into(), Value::Array(slopes));
        Ok(())
    }

    fn moments(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let t = &cfg.trajectories;
        for &w in &cfg.drive.omega_d {
            let (sweep, records) = moments_vs_tau_logged(
                &cfg.scenario(w)?,
                cfg.integrator(),
                cfg.feqj(),
                t.count,
                t.tau_points,
                t.log,
            )?;
            self.report.merge(&sweep.report);
            let dir = self.dir_for(w)?;
            let path = dir.join("moments.csv");
            let header = [
                "tau",
                "W1_tmp_prop",
                "W1_tmp_mc",
                "W1_tmp_mc_err",
                "W1_poa",
                "W2_tmp_prop",
                "W2_tmp_mc",
                "W2_tmp_mc_err",
                "W2_poa",
                "diag_eq20",
            ]
            .map(String::from);
            let mut csv = Csv::create(&path, &self.hash, &header)?;
            for r in &sweep.rows {
                let mc = |n: usize| r.tmp_sampled.as_ref().and_then(|m| m.moment(n)).unwrap_or(f64::NAN);
                let se = |n: usize| r.tmp_sampled.as_ref().and_then(|m| m.std_error(n)).unwrap_or(f64::NAN);
                csv.row(&[
                    fmt(r.tau),
                    fmt(r.tmp_propagated.first()),
                    fmt(mc(1)),
                    fmt(se(1)),
                    fmt(r.poa.first()),
                    fmt(r.tmp_propagated.second()),
                    fmt(mc(2)),
                    fmt(se(2)),
                    fmt(r.poa.second()),
                    fmt(r.diagnostic),
                ])?;
            }
            csv.finish()?;
            self.track(&path);
            if t.log {
                self.write_records(&dir, &records)?;
            }
        }
        Ok(())
    }

    fn single(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let t = &cfg.trajectories;
        let n = cfg.n_steps;
        let mut out = Vec::new();
        for &w in &cfg.drive.omega_d {
            let sc = cfg.scenario(w)?;
            let sweep = propagate_work(&sc, cfg.integrator(), 2, &[n])?;
            self.report.merge(&sweep.report);
            let p = &sweep.points[0];
            let mut entry = json!({
                "omega_d": w,
                "tau": p.tau,
                "excited_population": p.excited_population,
                "tmp_propagated": p.tmp.moments,
                "poa": p.poa.moments,
                "diagnostic": p.diagnostic,
                "boundary": p.boundary,
            });
            if t.count >= 2 {
                let engine = TrajectoryEngine::new(sc, cfg.feqj())?;
                let res = engine.run_ensemble(&EnsembleSpec {
                    n_trajectories: t.count,
                    measurements: vec![n],
                    keep_records: t.log,
                    ..Default::default()
                })?;
                let m = sampled_moments(&res.works[0], 2)?;
                entry["tmp_sampled"] = json!({ "moments": m.moments, "std_errors": m.std_errors });
                if t.log {
                    let dir = self.dir_for(w)?;
                    self.write_records(&dir, &res.records)?;
                }
            }
            out.push(entry);
        }
        self.results.insert("single".into(), Value::Array(out));
        Ok(())
    }

    fn execute(&mut self) -> Result<()> {
        let start = Instant::now();
        let name = match self.cfg.experiment {
            Experiment::Population => {
                self.population()?;
                "population"
            }
            Experiment::TraceDistance => {
                self.trace_distance()?;
                "trace-distance"
            }
            Experiment::Moments => {
                self.moments()?;
                "moments"
            }
            Experiment::Single => {
                self.single()?;
                "single"
            }
        };
        self.timings.insert(name.into(), json!(start.elapsed().as_secs_f64()));
        Ok(())
    }
}

/// Runs the configured experiment and writes `run.json` in every case,
/// including failures.
pub fn run(cfg: &SimConfig, opts: &RunOptions) -> Result<Status> {
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building worker pool")?;
    let start = Instant::now();
    let mut ctx = Job {
        cfg,
        hash: cfg.hash(),
        out: &opts.out,
        outputs: Vec::new(),
        report: InvariantReport::new(),
        timings: serde_json::Map::new(),
        results: serde_json::Map::new(),
    };
    let outcome = pool.install(|| ctx.execute());
    ctx.timings.insert("total".into(), json!(start.elapsed().as_secs_f64()));

    let tol = cfg.integrator().tolerances;
    let status = match outcome {
        Err(e) if is_invariant_abort(&e) => Status::InvariantViolated(Some(e)),
        Err(e) => Status::Failed(e),
        Ok(()) if !ctx.report.within(&tol) => Status::InvariantViolated(None),
        Ok(()) => Status::Ok,
    };
    let (label, error) = match &status {
        Status::Ok => ("ok", Value::Null),
        Status::InvariantViolated(e) => ("invariant-violated", json!(e.as_ref().map(|e| format!("{e:#}")))),
        Status::Failed(e) => ("failed", json!(format!("{e:#}"))),
    };
    let meta = json!({
        "config_hash": ctx.hash,
        "config": cfg,
        "versions": { "feqj": feqj::VERSION, "feqj-cli": env!("CARGO_PKG_VERSION") },
        "threads": pool.current_num_threads(),
        "status": label,
        "error": error,
        "timing_seconds": ctx.timings,
        "invariants": ctx.report,
        "tolerances": tol,
        "outputs": ctx.outputs,
        "results": ctx.results,
    });
    let path = opts.out.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(status)
}
