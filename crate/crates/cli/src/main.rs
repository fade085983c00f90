use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use feqj_cli::config::{self, DriveKind, Experiment, Preset};
use feqj_cli::run::{run, RunOptions, Status};
use toml::{Table, Value};

/// Driven qubit with a monitored finite calorimeter: master equation and
/// quantum-jump trajectories, work moments, comparisons.
#[derive(Parser, Debug)]
#[command(version, allow_negative_numbers = true)]
struct Cli {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Drive frequencies in units of ω0, comma separated.
    #[arg(long, value_delimiter = ',')]
    omega_d: Option<Vec<f64>>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Trajectories for moment sweeps and single runs.
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = ["microstate", "microcanonical"])]
    resolution: Option<String>,
    #[arg(long, value_enum)]
    drive: Option<DriveKind>,
    #[arg(long, value_parser = ["rk4", "euler"])]
    method: Option<String>,
    /// Between-jump propagator for trajectories.
    #[arg(long, value_parser = ["exponential", "euler"])]
    no_jump: Option<String>,
    /// Ensemble sizes for the trace-distance study, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Snapshot times for population and trace-distance runs.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Durations in a moment sweep, including τ = 0.
    #[arg(long)]
    tau_points: Option<usize>,
    #[arg(long)]
    n_modes: Option<usize>,
    #[arg(long)]
    cap: Option<u32>,
    #[arg(long)]
    coupling_sq: Option<f64>,
    /// Write trajectories.jsonl (moments and single experiments).
    #[arg(long)]
    log_trajectories: bool,
}

fn name<E: clap::ValueEnum>(e: E) -> String {
    e.to_possible_value().expect("no skipped variants").get_name().to_string()
}

impl Cli {
    fn flags(&self) -> Table {
        let mut t = Table::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                config::set(&mut t, k, v);
            }
        };
        let list_f = |v: &Option<Vec<f64>>| v.as_ref().map(|v| Value::from(v.clone()));
        let list_u = |v: &Option<Vec<usize>>| {
            v.as_ref().map(|v| Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect()))
        };
        let int = |v: Option<usize>| v.map(|x| Value::Integer(x as i64));
        put("experiment", self.experiment.map(|e| name(e).into()));
        put("drive.omega_d", list_f(&self.omega_d));
        put("drive.lambda0", self.lambda0.map(Into::into));
        put("drive.tau", self.tau.map(Into::into));
        put("drive.kind", self.drive.map(|d| name(d).into()));
        put("beta", self.beta.map(Into::into));
        put("resolution", self.resolution.clone().map(Into::into));
        put("integrator.n_steps", int(self.steps));
        put("integrator.method", self.method.clone().map(Into::into));
        put("trajectories.count", int(self.trajectories));
        put("trajectories.master_seed", self.seed.map(|s| Value::Integer(s as i64)));
        put("trajectories.no_jump", self.no_jump.clone().map(Into::into));
        put("trajectories.counts", list_u(&self.n_list));
        put("trajectories.repetitions", int(self.repetitions));
        put("trajectories.snapshots", int(self.snapshots));
        put("trajectories.tau_points", int(self.tau_points));
        put("trajectories.log", self.log_trajectories.then_some(Value::Boolean(true)));
        put("calorimeter.n_modes", int(self.n_modes));
        put("calorimeter.cap", self.cap.map(|c| Value::Integer(c.into())));
        put("calorimeter.coupling_sq", self.coupling_sq.map(Into::into));
        t
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let file = match cli.config.as_deref().map(config::read_file).transpose() {
        Ok(f) => f,
        Err(e) => {
            log::error!("{e:#}");
            return ExitCode::from(2);
        }
    };
    let cfg = match config::resolve(cli.preset, file, cli.flags()) {
        Ok((cfg, warnings)) => {
            for w in warnings {
                log::warn!("{w}");
            }
            cfg
        }
        Err(e) => {
            log::error!("{e:#}");
            return ExitCode::from(2);
        }
    };
    log::info!("config hash {}", cfg.hash());
    let opts = RunOptions {
        out: cli.out,
        threads: cli.threads,
    };
    match run(&cfg, &opts) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::InvariantViolated(e)) => {
            match e {
                Some(e) => log::error!("invariant monitor tripped: {e:#}"),
                None => log::error!("invariant monitor exceeded its tolerance; see run.json"),
            }
            ExitCode::from(3)
        }
        Ok(Status::Failed(e)) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
