//! Layered configuration: preset, then config file, then flags (flags win).
//! Layers are TOML tables merged key by key and deserialized once, strictly.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use feqj::dynamics::{IntegratorConfig, Method, Scenario};
use feqj::feqj::{FeqjConfig, NoJumpScheme};
use feqj::model::{CalorimeterModel, DriveProtocol, Mode, Resolution, SectorSpace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// τ used by presets when none is given.
pub const PRESET_TAU: f64 = 100.0;
/// β fallback when none is given.
pub const FALLBACK_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Excited-state population against time, one column per drive frequency.
    Population,
    /// Maximum trace distance between trajectory ensemble and master equation against N.
    TraceDistance,
    /// Work moments against protocol duration.
    Moments,
    /// One protocol, final moments only (reported in run.json).
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Sin,
    Rwa,
    Const,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Population traces.
    Fig2,
    /// Trace distance against N.
    Fig3,
    /// First and second work moments against τ.
    Fig45,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalorimeterConfig {
    pub n_modes: usize,
    pub cap: u32,
    pub coupling_sq: f64,
    /// Mode energies; all equal to ω0 when absent.
    pub energies: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub kind: DriveKind,
    pub lambda0: f64,
    pub omega_d: Vec<f64>,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// N for moment sweeps and single runs.
    pub count: usize,
    pub master_seed: u64,
    pub no_jump: NoJumpScheme,
    /// Ensemble sizes for the trace-distance study.
    pub counts: Vec<usize>,
    pub repetitions: usize,
    pub snapshots: usize,
    pub tau_points: usize,
    pub log: bool,
}

/// Fully resolved and validated run configuration. Its JSON form is what the
/// config hash covers; output directory and thread count are left out since
/// they do not change any number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub beta: f64,
    pub resolution: Resolution,
    pub calorimeter: CalorimeterConfig,
    pub drive: DriveConfig,
    pub n_steps: usize,
    pub method: Method,
    pub trajectories: TrajectoryConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    beta: Option<f64>,
    resolution: Option<Resolution>,
    #[serde(default)]
    calorimeter: RawCalorimeter,
    #[serde(default)]
    drive: RawDrive,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    trajectories: RawTrajectories,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalorimeter {
    n_modes: Option<usize>,
    cap: Option<u32>,
    coupling_sq: Option<f64>,
    energies: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    kind: Option<DriveKind>,
    lambda0: Option<f64>,
    omega_d: Option<Vec<f64>>,
    tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    n_steps: Option<usize>,
    method: Option<Method>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectories {
    count: Option<usize>,
    master_seed: Option<u64>,
    no_jump: Option<NoJumpScheme>,
    counts: Option<Vec<usize>>,
    repetitions: Option<usize>,
    snapshots: Option<usize>,
    tau_points: Option<usize>,
    log: Option<bool>,
}

/// Sets `dotted.key` in a nested table, creating intermediate tables.
pub fn set(table: &mut Table, key: &str, value: impl Into<Value>) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("intermediate key is a table");
    }
    t.insert(last.to_string(), value.into());
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn has(table: &Table, key: &str) -> bool {
    let mut t = table;
    let mut parts = key.split('.').peekable();
    while let Some(p) = parts.next() {
        match t.get(p) {
            Some(Value::Table(inner)) if parts.peek().is_some() => t = inner,
            Some(_) if parts.peek().is_none() => return true,
            _ => return false,
        }
    }
    false
}

pub fn preset_table(preset: Preset) -> Table {
    let mut t = Table::new();
    set(&mut t, "drive.tau", PRESET_TAU);
    let experiment = match preset {
        Preset::Fig2 => "population",
        Preset::Fig3 => "trace-distance",
        Preset::Fig45 => "moments",
    };
    set(&mut t, "experiment", experiment);
    t
}

pub fn read_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Merges the layers and validates. Returns the config and the warnings to log.
pub fn resolve(preset: Option<Preset>, file: Option<Table>, flags: Table) -> Result<(SimConfig, Vec<String>)> {
    let mut user = file.unwrap_or_default();
    merge(&mut user, flags);
    let mut warnings = Vec::new();
    let mut layered = preset.map(preset_table).unwrap_or_default();
    if preset.is_some() && !has(&user, "drive.tau") {
        warnings.push(format!("no protocol duration given; preset falls back to τω0 = {PRESET_TAU}"));
    }
    merge(&mut layered, user);
    let raw: RawConfig = Value::Table(layered).try_into().context("invalid configuration")?;
    let cfg = validate(raw, &mut warnings)?;
    Ok((cfg, warnings))
}

fn validate(raw: RawConfig, warnings: &mut Vec<String>) -> Result<SimConfig> {
    let mut missing = Vec::new();
    if raw.drive.tau.is_none() {
        missing.push("drive.tau");
    }
    if raw.experiment.is_none() {
        missing.push("experiment");
    }
    if !missing.is_empty() {
        bail!("missing required fields: {}", missing.join(", "));
    }
    let beta = raw.beta.unwrap_or_else(|| {
        warnings.push(format!("no inverse temperature given; falling back to βħω0 = {FALLBACK_BETA}"));
        FALLBACK_BETA
    });
    let tau = raw.drive.tau.unwrap_or_default();
    let kind = raw.drive.kind.unwrap_or(DriveKind::Sin);
    let mut omega_d = raw.drive.omega_d.unwrap_or_else(|| vec![0.9, 1.0, 1.1]);
    if kind != DriveKind::Sin && omega_d != [1.0] {
        warnings.push(format!("drive.omega_d has no effect on a {kind:?} drive; running once"));
        omega_d = vec![1.0];
    }
    let cfg = SimConfig {
        experiment: raw.experiment.unwrap_or(Experiment::Single),
        beta,
        resolution: raw.resolution.unwrap_or(Resolution::Microcanonical),
        calorimeter: CalorimeterConfig {
            n_modes: raw.calorimeter.n_modes.unwrap_or(10),
            cap: raw.calorimeter.cap.unwrap_or(1),
            coupling_sq: raw.calorimeter.coupling_sq.unwrap_or(1e-3),
            energies: raw.calorimeter.energies,
        },
        drive: DriveConfig {
            kind,
            lambda0: raw.drive.lambda0.unwrap_or(0.05),
            omega_d,
            tau,
        },
        n_steps: raw.integrator.n_steps.unwrap_or(100_000),
        method: raw.integrator.method.unwrap_or(Method::Rk4),
        trajectories: TrajectoryConfig {
            count: raw.trajectories.count.unwrap_or(10_000),
            master_seed: raw.trajectories.master_seed.unwrap_or(2024),
            no_jump: raw.trajectories.no_jump.unwrap_or(NoJumpScheme::Exponential),
            counts: raw.trajectories.counts.unwrap_or_else(|| vec![100, 1_000, 10_000]),
            repetitions: raw.trajectories.repetitions.unwrap_or(5),
            snapshots: raw.trajectories.snapshots.unwrap_or(feqj::analysis::DEFAULT_SNAPSHOTS),
            tau_points: raw.trajectories.tau_points.unwrap_or(11),
            log: raw.trajectories.log.unwrap_or(false),
        },
    };
    cfg.check()?;
    Ok(cfg)
}

impl SimConfig {
    fn check(&self) -> Result<()> {
        let d = &self.drive;
        let c = &self.calorimeter;
        let t = &self.trajectories;
        if !(d.tau > 0.0 && d.tau.is_finite()) {
            bail!("drive.tau must be positive and finite (got {})", d.tau);
        }
        if !(d.lambda0 >= 0.0 && d.lambda0.is_finite()) {
            bail!("drive.lambda0 must be non-negative and finite (got {})", d.lambda0);
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            bail!("beta must be non-negative and finite (got {})", self.beta);
        }
        if d.omega_d.is_empty() {
            bail!("drive.omega_d needs at least one frequency");
        }
        for (i, w) in d.omega_d.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                bail!("drive.omega_d entries must be positive and finite (got {w})");
            }
            if d.omega_d[..i].contains(w) {
                bail!("drive.omega_d lists {w} twice");
            }
        }
        if c.n_modes == 0 {
            bail!("calorimeter.n_modes must be at least 1");
        }
        if c.cap == 0 {
            bail!("calorimeter.cap must be at least 1");
        }
        if !(c.coupling_sq >= 0.0 && c.coupling_sq.is_finite()) {
            bail!("calorimeter.coupling_sq must be non-negative and finite (got {})", c.coupling_sq);
        }
        if let Some(e) = &c.energies {
            if e.len() != c.n_modes {
                bail!("calorimeter.energies has {} entries, n_modes is {}", e.len(), c.n_modes);
            }
        }
        if self.n_steps == 0 {
            bail!("integrator.n_steps must be at least 1");
        }
        if t.count == 1 {
            bail!("trajectories.count must be 0 or at least 2 (standard errors need two samples)");
        }
        if t.counts.is_empty() || t.counts.contains(&0) || t.counts.windows(2).any(|w| w[1] <= w[0]) {
            bail!("trajectories.counts must be positive and strictly increasing (got {:?})", t.counts);
        }
        if t.repetitions == 0 {
            bail!("trajectories.repetitions must be at least 1");
        }
        if t.snapshots < 2 || t.tau_points < 2 {
            bail!("trajectories.snapshots and trajectories.tau_points must be at least 2");
        }
        // builds the model once so that physics-level errors surface here
        self.scenario(d.omega_d[0]).context("invalid calorimeter")?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn drive(&self, omega_d: f64) -> DriveProtocol<f64> {
        let d = &self.drive;
        match d.kind {
            DriveKind::Sin => DriveProtocol::sinusoidal(d.lambda0, omega_d, d.tau),
            DriveKind::Rwa => DriveProtocol::rwa_resonant(d.lambda0, d.tau),
            DriveKind::Const => DriveProtocol::constant(d.lambda0, d.tau),
        }
    }

    pub fn scenario(&self, omega_d: f64) -> feqj::Result<Scenario<f64>> {
        let c = &self.calorimeter;
        let modes = (0..c.n_modes)
            .map(|k| Mode {
                cap: c.cap,
                energy: c.energies.as_ref().map_or(1.0, |e| e[k]),
                coupling_sq: c.coupling_sq,
            })
            .collect();
        let model = CalorimeterModel::new(modes, self.resolution)?;
        Scenario::new(SectorSpace::new(model)?, self.drive(omega_d), self.beta)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.method,
            ..IntegratorConfig::rk4(self.n_steps)
        }
    }

    pub fn feqj(&self) -> FeqjConfig {
        FeqjConfig {
            scheme: self.trajectories.no_jump,
            ..FeqjConfig::new(self.n_steps, self.trajectories.master_seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, Value)]) -> Table {
        let mut t = Table::new();
        for (k, v) in pairs {
            set(&mut t, k, v.clone());
        }
        t
    }

    #[test]
    fn empty_config_lists_missing_fields() {
        let err = resolve(None, None, Table::new()).unwrap_err().to_string();
        assert!(err.contains("drive.tau") && err.contains("experiment"), "{err}");
    }

    #[test]
    fn negative_amplitude_is_rejected_by_name() {
        let f = flags(&[("drive.lambda0", (-0.1).into())]);
        let err = resolve(Some(Preset::Fig2), None, f).unwrap_err().to_string();
        assert!(err.contains("drive.lambda0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file: Table = toml::from_str("experiment = \"single\"\n[drive]\ntau = 1.0\nomega = 2.0\n").unwrap();
        let err = format!("{:#}", resolve(None, Some(file), Table::new()).unwrap_err());
        assert!(err.contains("omega"), "{err}");
    }

    #[test]
    fn preset_matches_benchmark_and_warns() {
        let (cfg, warnings) = resolve(Some(Preset::Fig2), None, Table::new()).unwrap();
        assert_eq!(cfg.experiment, Experiment::Population);
        assert_eq!(cfg.drive.omega_d, vec![0.9, 1.0, 1.1]);
        assert_eq!((cfg.drive.lambda0, cfg.drive.tau, cfg.beta), (0.05, 100.0, 1.0));
        assert_eq!((cfg.calorimeter.n_modes, cfg.calorimeter.cap), (10, 1));
        assert_eq!(cfg.calorimeter.coupling_sq, 1e-3);
        assert_eq!(cfg.resolution, Resolution::Microcanonical);
        assert_eq!(warnings.len(), 2, "{warnings:?}");
    }

    #[test]
    fn flags_override_file_override_preset() {
        let file: Table = toml::from_str("beta = 2.0\n[drive]\ntau = 30.0\nlambda0 = 0.02\n").unwrap();
        let f = flags(&[("drive.lambda0", 0.03.into())]);
        let (cfg, warnings) = resolve(Some(Preset::Fig45), Some(file), f).unwrap();
        assert_eq!(cfg.experiment, Experiment::Moments);
        assert_eq!((cfg.drive.tau, cfg.drive.lambda0, cfg.beta), (30.0, 0.03, 2.0));
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn degenerate_energies_required_for_microcanonical() {
        let file: Table =
            toml::from_str("experiment = \"single\"\n[drive]\ntau = 1.0\n[calorimeter]\nn_modes = 2\nenergies = [1.0, 1.2]\n")
                .unwrap();
        assert!(resolve(None, Some(file.clone()), Table::new()).is_err());
        let f = flags(&[("resolution", "microstate".into())]);
        assert!(resolve(None, Some(file), f).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let (a, _) = resolve(Some(Preset::Fig2), None, Table::new()).unwrap();
        let (b, _) = resolve(Some(Preset::Fig2), None, flags(&[("beta", 1.0.into())])).unwrap();
        let (c, _) = resolve(Some(Preset::Fig2), None, flags(&[("beta", 1.5.into())])).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
