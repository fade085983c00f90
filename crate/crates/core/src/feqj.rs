//! Finite-environment quantum-jump trajectories.
//!
//! Each trajectory carries a pure qubit state and a calorimeter sector. Per
//! time step a single uniform draw decides between the no-jump evolution and
//! one of the jump channels; a jump applies `a` or `a†` to the qubit and
//! moves the calorimeter by one quantum. Trajectory `i` draws from its own
//! ChaCha stream `(master_seed, i)`, so results do not depend on how
//! trajectories are scheduled across threads.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{thermal_state, ConditionedState, Scenario};
use crate::error::{Error, Result};
use crate::matrix::{Ket2, Mat2};
use crate::model::{qubit_hamiltonian, Channel, Direction, DriveProtocol, SectorSpace};
use crate::scalar::Real;

/// Largest jump probability accepted in a single step.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

/// Propagator tables larger than this many 2×2 entries are not cached.
const PROPAGATOR_CACHE_LIMIT: usize = 1 << 23;

const BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoJumpScheme {
    /// `ψ ← (1 − i H_eff(t) δt) ψ`, renormalized.
    Euler,
    /// `ψ ← exp(−i H_eff(t + δt/2) δt) ψ`, renormalized.
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeqjConfig {
    pub n_steps: usize,
    pub scheme: NoJumpScheme,
    pub master_seed: u64,
}

impl FeqjConfig {
    pub fn new(n_steps: usize, master_seed: u64) -> Self {
        Self {
            n_steps,
            scheme: NoJumpScheme::Exponential,
            master_seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState<T> {
    pub qubit: Ket2<T>,
    pub sector: usize,
    pub time: T,
}

/// A jump at time `t`. `mode` is `None` in microcanonical resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent<T> {
    pub t: T,
    pub dir: Direction,
    pub mode: Option<usize>,
}

impl<T: Real> JumpEvent<T> {
    pub fn channel(&self) -> Channel {
        Channel {
            direction: self.dir,
            mode: self.mode,
        }
    }

    /// Energy delivered to the calorimeter, in units of `ħω0`.
    pub fn heat(&self) -> T {
        match self.dir {
            Direction::Down => T::one(),
            Direction::Up => -T::one(),
        }
    }
}

/// Outcome of a projective energy measurement: qubit level and sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub qubit: usize,
    pub sector: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord<T> {
    pub seed: u64,
    pub index: u64,
    pub initial: Outcome,
    pub events: Vec<JumpEvent<T>>,
    #[serde(rename = "final")]
    pub final_outcome: Outcome,
    pub work: T,
}

impl<T: Real> TrajectoryRecord<T> {
    /// `ω0 (f − i) + Σ heat`; equals the recorded work whenever mode
    /// energies are resonant with the qubit.
    pub fn bookkeeping_work(&self) -> T {
        let dq = T::from_count(self.final_outcome.qubit) - T::from_count(self.initial.qubit);
        dq + self.events.iter().map(JumpEvent::heat).sum::<T>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelProbability<T> {
    pub channel: Channel,
    pub probability: T,
    pub target: usize,
}

/// `δp_m = δt Γ_m(sector) ⟨ψ|A_m†A_m|ψ⟩` for every open channel.
pub fn jump_probabilities<T: Real>(
    space: &SectorSpace<T>,
    state: &TrajectoryState<T>,
    dt: T,
) -> Result<Vec<ChannelProbability<T>>> {
    let p0 = state.qubit.population(0);
    let p1 = state.qubit.population(1);
    let out: Vec<_> = space
        .sector(state.sector)
        .exits
        .iter()
        .map(|e| {
            let weight = match e.channel.direction {
                Direction::Up => p0,
                Direction::Down => p1,
            };
            ChannelProbability {
                channel: e.channel,
                probability: dt * e.rate * weight,
                target: e.target,
            }
        })
        .collect();
    let total: T = out.iter().map(|c| c.probability).sum();
    if total.as_f64() > MAX_STEP_PROBABILITY {
        return Err(Error::StepTooCoarse {
            dp: total.as_f64(),
            t: state.time.as_f64(),
        });
    }
    Ok(out)
}

/// `H_eff = H_q(t) − (i/2)(Γ↑ a a† + Γ↓ a†a)` for one sector.
fn effective_hamiltonian<T: Real>(drive: &DriveProtocol<T>, up: T, down: T, t: T) -> Mat2<T> {
    let mut h = qubit_hamiltonian(drive, t);
    let half = T::lit(0.5);
    h.m[0][0] = h.m[0][0] - Complex::new(T::zero(), up * half);
    h.m[1][1] = h.m[1][1] - Complex::new(T::zero(), down * half);
    h
}

fn no_jump_operator<T: Real>(
    drive: &DriveProtocol<T>,
    up: T,
    down: T,
    t: T,
    dt: T,
    scheme: NoJumpScheme,
) -> Mat2<T> {
    let minus_i_dt = Complex::new(T::zero(), -dt);
    match scheme {
        NoJumpScheme::Euler => {
            Mat2::identity() + effective_hamiltonian(drive, up, down, t).scale_c(minus_i_dt)
        }
        NoJumpScheme::Exponential => {
            let mid = t + dt * T::lit(0.5);
            effective_hamiltonian(drive, up, down, mid)
                .scale_c(minus_i_dt)
                .exp()
        }
    }
}

/// Conditional no-jump evolution over `[t, t + δt]`; the sector is unchanged.
pub fn no_jump_step<T: Real>(
    space: &SectorSpace<T>,
    drive: &DriveProtocol<T>,
    state: &TrajectoryState<T>,
    dt: T,
    scheme: NoJumpScheme,
) -> Result<TrajectoryState<T>> {
    let s = space.sector(state.sector);
    let u = no_jump_operator(drive, s.up_rate, s.down_rate, state.time, dt, scheme);
    let time = state.time + dt;
    let qubit = u
        .apply(&state.qubit)
        .normalized()
        .ok_or(Error::VanishingNorm { t: time.as_f64() })?;
    Ok(TrajectoryState {
        qubit,
        sector: state.sector,
        time,
    })
}

/// Applies the jump: the qubit collapses onto `|0⟩` (down) or `|1⟩` (up) and
/// the calorimeter moves to the target sector.
pub fn commit_jump<T: Real>(
    space: &SectorSpace<T>,
    state: &TrajectoryState<T>,
    channel: Channel,
) -> Result<TrajectoryState<T>> {
    let target = space.jump_target(state.sector, channel).ok_or_else(|| {
        Error::ForbiddenJump(format!("{channel:?} has zero rate in sector {}", state.sector))
    })?;
    let (source_level, dest_level) = match channel.direction {
        Direction::Down => (1, 0),
        Direction::Up => (0, 1),
    };
    if state.qubit.population(source_level) == T::zero() {
        return Err(Error::ForbiddenJump(format!(
            "{channel:?} has zero probability: qubit has no weight in |{source_level}⟩"
        )));
    }
    Ok(TrajectoryState {
        qubit: Ket2::basis(dest_level),
        sector: target,
        time: state.time,
    })
}

/// `(1/N) Σ |ψ⟩⟨ψ|` placed in each trajectory's sector.
pub fn ensemble_average<T: Real>(
    states: &[TrajectoryState<T>],
    n_sectors: usize,
) -> Result<ConditionedState<T>> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let mut out = ConditionedState::zeros(n_sectors);
    out.time = states[0].time;
    for s in states {
        if s.sector >= n_sectors {
            return Err(Error::BasisMismatch {
                left: s.sector + 1,
                right: n_sectors,
            });
        }
        out.blocks[s.sector] += Mat2::projector(&s.qubit);
    }
    let inv = T::one() / T::from_count(states.len());
    for b in &mut out.blocks {
        *b = b.scale(inv);
    }
    Ok(out)
}

/// What one trajectory reports back.
#[derive(Clone, Debug)]
pub struct TrajectoryOutput<T> {
    pub record: TrajectoryRecord<T>,
    /// `(sector, ψ)` at every requested snapshot step.
    pub snapshots: Vec<(usize, Ket2<T>)>,
    /// Work measured at every requested checkpoint step.
    pub works: Vec<T>,
}

/// Shared, immutable setup for sampling many trajectories of one scenario.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine<T> {
    scenario: Scenario<T>,
    config: FeqjConfig,
    dt: T,
    /// Cumulative thermal distribution over `(sector, qubit)`, sector-major.
    initial_cdf: Vec<f64>,
    /// Sector → index into the distinct `(Γ↑, Γ↓)` classes.
    rate_class: Vec<usize>,
    classes: Vec<(T, T)>,
    /// `propagators[class * n_steps + step]` when cached; class-major so a
    /// trajectory reads contiguous memory between jumps.
    propagators: Option<Arc<Vec<Mat2<T>>>>,
}

impl<T: Real> TrajectoryEngine<T> {
    pub fn new(scenario: Scenario<T>, config: FeqjConfig) -> Result<Self> {
        if config.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        let space = &scenario.space;
        let dt = scenario.total_time() / T::from_count(config.n_steps);
        let thermal = thermal_state(scenario.beta, space)?;
        let mut acc = 0.0;
        let mut initial_cdf = Vec::with_capacity(2 * space.len());
        for b in &thermal.blocks {
            for level in 0..2 {
                acc += b.m[level][level].re.as_f64();
                initial_cdf.push(acc);
            }
        }
        for c in &mut initial_cdf {
            *c /= acc;
        }

        let mut classes: Vec<(T, T)> = Vec::new();
        let rate_class = space
            .sectors()
            .iter()
            .map(|s| {
                let key = (s.up_rate, s.down_rate);
                match classes.iter().position(|&c| c == key) {
                    Some(i) => i,
                    None => {
                        classes.push(key);
                        classes.len() - 1
                    }
                }
            })
            .collect();

        let mut engine = Self {
            scenario,
            config,
            dt,
            initial_cdf,
            rate_class,
            classes,
            propagators: None,
        };
        if engine.classes.len().saturating_mul(config.n_steps) <= PROPAGATOR_CACHE_LIMIT {
            engine.propagators = Some(Arc::new(engine.build_propagators()));
        }
        Ok(engine)
    }

    fn build_propagators(&self) -> Vec<Mat2<T>> {
        let n = self.config.n_steps;
        let mut table = Vec::with_capacity(n * self.classes.len());
        for &(up, down) in &self.classes {
            for j in 0..n {
                table.push(no_jump_operator(
                    &self.scenario.drive,
                    up,
                    down,
                    self.step_time(j),
                    self.dt,
                    self.config.scheme,
                ));
            }
        }
        table
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn config(&self) -> &FeqjConfig {
        &self.config
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    #[inline]
    fn step_time(&self, j: usize) -> T {
        if j >= self.config.n_steps {
            self.scenario.total_time()
        } else {
            self.dt * T::from_count(j)
        }
    }

    #[inline]
    fn propagator(&self, j: usize, sector: usize) -> Mat2<T> {
        let class = self.rate_class[sector];
        match &self.propagators {
            Some(table) => table[class * self.config.n_steps + j],
            None => {
                let (up, down) = self.classes[class];
                no_jump_operator(
                    &self.scenario.drive,
                    up,
                    down,
                    self.step_time(j),
                    self.dt,
                    self.config.scheme,
                )
            }
        }
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.master_seed);
        rng.set_stream(index);
        rng
    }

    fn sample_initial(&self, u: f64) -> Outcome {
        let k = self
            .initial_cdf
            .partition_point(|&c| c <= u)
            .min(self.initial_cdf.len() - 1);
        Outcome {
            qubit: k % 2,
            sector: k / 2,
        }
    }

    /// Runs trajectory `index`, recording the state at every step listed in
    /// `snapshots` and a projective energy measurement (without collapse) at
    /// every step listed in `measurements`. Both lists must be sorted; the
    /// final step is always measured for the record.
    pub fn run(
        &self,
        index: u64,
        snapshots: &[usize],
        measurements: &[usize],
        keep_events: bool,
    ) -> Result<TrajectoryOutput<T>> {
        let space = &*self.scenario.space;
        let n = self.config.n_steps;
        let mut rng = self.rng(index);
        let initial = self.sample_initial(rng.random::<f64>());
        let e0 = space.sector(initial.sector).energy;

        let mut psi = Ket2::basis(initial.qubit);
        let mut sector = initial.sector;
        let mut events = Vec::new();
        let mut snaps = Vec::with_capacity(snapshots.len());
        let mut works = Vec::with_capacity(measurements.len());
        let mut next_snap = snapshots.iter().peekable();
        let mut next_meas = measurements.iter().peekable();

        // ψ is kept unnormalized between jumps; all probabilities are
        // compared against its squared norm instead.
        let measure = |rng: &mut ChaCha8Rng, psi: &Ket2<T>, sector: usize| -> (usize, T) {
            let p1 = (psi.population(1) / psi.norm_sqr()).as_f64();
            let f = usize::from(rng.random::<f64>() < p1);
            let w = T::from_count(f) - T::from_count(initial.qubit) + space.sector(sector).energy - e0;
            (f, w)
        };
        let renorm_below = T::lit(1e-64);
        let mut final_draw = None;

        for j in 0..=n {
            while next_snap.peek().is_some_and(|&&s| s == j) {
                let unit = psi.normalized().ok_or(Error::VanishingNorm {
                    t: self.step_time(j).as_f64(),
                })?;
                snaps.push((sector, unit));
                next_snap.next();
            }
            while next_meas.peek().is_some_and(|&&s| s == j) {
                let outcome = measure(&mut rng, &psi, sector);
                works.push(outcome.1);
                if j == n {
                    final_draw = Some(outcome);
                }
                next_meas.next();
            }
            if j == n {
                break;
            }
            let u = T::lit(rng.random::<f64>());
            let s = space.sector(sector);
            let n2 = psi.norm_sqr();
            let jump_weight =
                self.dt * (s.up_rate * psi.population(0) + s.down_rate * psi.population(1));
            if jump_weight > T::lit(MAX_STEP_PROBABILITY) * n2 {
                return Err(Error::StepTooCoarse {
                    dp: (jump_weight / n2).as_f64(),
                    t: self.step_time(j).as_f64(),
                });
            }
            if u * n2 < n2 - jump_weight {
                psi = self.propagator(j, sector).apply(&psi);
                let m2 = psi.norm_sqr();
                if !(m2 > renorm_below) || !m2.is_finite() {
                    psi = psi.normalized().ok_or(Error::VanishingNorm {
                        t: self.step_time(j + 1).as_f64(),
                    })?;
                }
                continue;
            }
            // walk the channels in order over the jump part of [0, ‖ψ‖²)
            let mut x = u * n2 - (n2 - jump_weight);
            let mut chosen = None;
            for e in &s.exits {
                let w = match e.channel.direction {
                    Direction::Up => psi.population(0),
                    Direction::Down => psi.population(1),
                };
                let p = self.dt * e.rate * w;
                if !(p > T::zero()) {
                    continue;
                }
                chosen = Some(e);
                if x < p {
                    break;
                }
                x -= p;
            }
            // round-off can leave x just past the last open channel
            let Some(e) = chosen else {
                return Err(Error::ForbiddenJump("no open channel".into()));
            };
            psi = match e.channel.direction {
                Direction::Down => Ket2::basis(0),
                Direction::Up => Ket2::basis(1),
            };
            sector = e.target;
            if keep_events {
                events.push(JumpEvent {
                    t: self.step_time(j),
                    dir: e.channel.direction,
                    mode: e.channel.mode,
                });
            }
        }

        // a checkpoint at the last step doubles as the final measurement
        let (f, work) = match final_draw {
            Some(o) => o,
            None => measure(&mut rng, &psi, sector),
        };
        Ok(TrajectoryOutput {
            record: TrajectoryRecord {
                seed: self.config.master_seed,
                index,
                initial,
                events,
                final_outcome: Outcome { qubit: f, sector },
                work,
            },
            snapshots: snaps,
            works,
        })
    }

    pub fn run_trajectory(&self, index: u64) -> Result<TrajectoryRecord<T>> {
        Ok(self.run(index, &[], &[], true)?.record)
    }

    /// Samples trajectories `0..spec.n_trajectories` in parallel and reduces
    /// them in index order.
    pub fn run_ensemble(&self, spec: &EnsembleSpec) -> Result<EnsembleResult<T>> {
        let n_sectors = self.scenario.space.len();
        let n_snap = spec.snapshots.len();
        let mut sums = vec![vec![Mat2::<T>::zero(); n_sectors]; n_snap];
        let mut prefix = spec.prefix_counts.clone();
        prefix.sort_unstable();
        prefix.dedup();
        prefix.retain(|&p| p > 0 && p <= spec.n_trajectories);
        let mut prefix_iter = prefix.iter().peekable();
        let mut averages = Vec::new();
        let mut works = vec![Vec::with_capacity(spec.n_trajectories); spec.measurements.len()];
        let mut records = Vec::new();

        let times: Vec<T> = spec.snapshots.iter().map(|&j| self.step_time(j)).collect();
        let mut done = 0usize;
        while done < spec.n_trajectories {
            let end = (done + BATCH).min(spec.n_trajectories);
            let batch: Vec<TrajectoryOutput<T>> = (done..end)
                .into_par_iter()
                .map(|i| self.run(i as u64, &spec.snapshots, &spec.measurements, spec.keep_records))
                .collect::<Result<_>>()?;
            for out in batch {
                for (k, &(sector, psi)) in out.snapshots.iter().enumerate() {
                    sums[k][sector] += Mat2::projector(&psi);
                }
                for (k, &w) in out.works.iter().enumerate() {
                    works[k].push(w);
                }
                if spec.keep_records {
                    records.push(out.record);
                }
                done += 1;
                if prefix_iter.peek().is_some_and(|&&p| p == done) {
                    let inv = T::one() / T::from_count(done);
                    let states = sums
                        .iter()
                        .zip(&times)
                        .map(|(blocks, &t)| ConditionedState {
                            blocks: blocks.iter().map(|b| b.scale(inv)).collect(),
                            time: t,
                        })
                        .collect();
                    averages.push((done, states));
                    prefix_iter.next();
                }
            }
        }
        Ok(EnsembleResult {
            averages,
            works,
            records,
        })
    }
}

/// What to collect from an ensemble run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnsembleSpec {
    pub n_trajectories: usize,
    /// Step indices at which ensemble-averaged blocks are formed.
    pub snapshots: Vec<usize>,
    /// Step indices at which every trajectory's work is measured.
    pub measurements: Vec<usize>,
    /// Ensemble sizes `N` (prefixes of the index range) to report averages for.
    pub prefix_counts: Vec<usize>,
    pub keep_records: bool,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult<T> {
    /// `(N, averaged state at every snapshot)` for every requested prefix.
    pub averages: Vec<(usize, Vec<ConditionedState<T>>)>,
    /// `works[checkpoint][trajectory]`.
    pub works: Vec<Vec<T>>,
    pub records: Vec<TrajectoryRecord<T>>,
}

/// Builds an engine and samples trajectory `index`.
pub fn run_trajectory<T: Real>(
    scenario: &Scenario<T>,
    config: FeqjConfig,
    index: u64,
) -> Result<TrajectoryRecord<T>> {
    TrajectoryEngine::new(scenario.clone(), config)?.run_trajectory(index)
}
