//! Comparisons between trajectory ensembles and the master equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    excited_population, snapshot_indices, solve, ConditionedState, IntegratorConfig,
    InvariantReport, Scenario,
};
use crate::error::{Error, Result};
use crate::feqj::{EnsembleSpec, FeqjConfig, TrajectoryEngine, TrajectoryRecord};
use crate::scalar::Real;
use crate::work::{propagate_work, sampled_moments, WorkMoments};

/// Default number of equidistant snapshot times per run.
pub const DEFAULT_SNAPSHOTS: usize = 200;

/// `½ Σ_s Σ |eig(A_s − B_s)|`, using closed-form 2×2 eigenvalues.
pub fn trace_distance<T: Real>(a: &ConditionedState<T>, b: &ConditionedState<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::BasisMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let sum: T = a
        .blocks
        .iter()
        .zip(&b.blocks)
        .map(|(x, y)| {
            let [l0, l1] = (*x - *y).hermitian_part().hermitian_eigenvalues();
            l0.abs() + l1.abs()
        })
        .sum();
    Ok(sum * T::lit(0.5))
}

/// Largest trace distance over a pair of equally long snapshot series.
pub fn max_trace_distance<T: Real>(
    series: &[ConditionedState<T>],
    reference: &[ConditionedState<T>],
) -> Result<T> {
    if series.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: series.len(),
        });
    }
    series
        .iter()
        .zip(reference)
        .try_fold(T::zero(), |m, (a, b)| Ok(m.max(trace_distance(a, b)?)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    Time,
    TrajectoryCount,
    Tau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column<T> {
    pub name: String,
    pub values: Vec<T>,
    pub errors: Option<Vec<T>>,
}

/// Named columns over a strictly increasing abscissa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeries<T> {
    pub abscissa: Abscissa,
    pub x: Vec<T>,
    pub columns: Vec<Column<T>>,
}

impl<T: Real> ComparisonSeries<T> {
    pub fn new(abscissa: Abscissa, x: Vec<T>) -> Result<Self> {
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "abscissa must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            abscissa,
            x,
            columns: Vec::new(),
        })
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<T>, errors: Option<Vec<T>>) -> Result<()> {
        let n = self.x.len();
        if values.len() != n || errors.as_ref().is_some_and(|e| e.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        self.columns.push(Column {
            name: name.into(),
            values,
            errors,
        });
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column<T>> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need ≥ 2 paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > T::zero())) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let n = T::from_count(x.len());
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxy: T = lx.iter().zip(&ly).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let sxx: T = lx.iter().map(|a| (*a - mx) * (*a - mx)).sum();
    Ok(sxy / sxx)
}

/// Max-over-time trace distance between trajectory ensembles and the master
/// equation, for several ensemble sizes and independent master seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDistanceStudy<T> {
    pub counts: Vec<usize>,
    /// `per_seed[r][k]`: seed `master_seed + r`, ensemble size `counts[k]`.
    pub per_seed: Vec<Vec<T>>,
    pub mean: Vec<T>,
    pub stderr: Vec<T>,
    /// Log-log slope of `mean` against `counts`.
    pub slope: Option<T>,
    pub report: InvariantReport,
}

impl<T: Real> TraceDistanceStudy<T> {
    pub fn series(&self) -> Result<ComparisonSeries<T>> {
        let mut s = ComparisonSeries::new(
            Abscissa::TrajectoryCount,
            self.counts.iter().map(|&n| T::from_count(n)).collect(),
        )?;
        s.push("T_max", self.mean.clone(), Some(self.stderr.clone()))?;
        Ok(s)
    }
}

/// For every seed `master_seed + r`, `r < repetitions`, samples
/// `max(counts)` trajectories once and evaluates each smaller count on a
/// prefix of the same run.
pub fn max_trace_distance_vs_n<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    feqj: FeqjConfig,
    counts: &[usize],
    repetitions: usize,
    snapshot_count: usize,
) -> Result<TraceDistanceStudy<T>> {
    let mut counts = counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    if counts.is_empty() || counts[0] == 0 || repetitions == 0 {
        return Err(Error::InvalidArgument(
            "need positive trajectory counts and ≥ 1 repetition".into(),
        ));
    }
    let snaps = snapshot_indices(config.n_steps, snapshot_count);
    let traj_snaps = rescale_steps(&snaps, config.n_steps, feqj.n_steps)?;
    let (reference, report) = solve(scenario, config, &snaps)?;
    let spec = EnsembleSpec {
        n_trajectories: *counts.last().expect("non-empty"),
        snapshots: traj_snaps,
        measurements: vec![],
        prefix_counts: counts.clone(),
        keep_records: false,
    };
    let mut per_seed = Vec::with_capacity(repetitions);
    for r in 0..repetitions {
        let cfg = FeqjConfig {
            master_seed: feqj.master_seed.wrapping_add(r as u64),
            ..feqj
        };
        let engine = TrajectoryEngine::new(scenario.clone(), cfg)?;
        let result = engine.run_ensemble(&spec)?;
        let row = result
            .averages
            .iter()
            .map(|(_, states)| max_trace_distance(states, &reference))
            .collect::<Result<Vec<T>>>()?;
        per_seed.push(row);
    }
    let reps = T::from_count(repetitions);
    let mut mean = Vec::with_capacity(counts.len());
    let mut stderr = Vec::with_capacity(counts.len());
    for k in 0..counts.len() {
        let m = per_seed.iter().map(|r| r[k]).sum::<T>() / reps;
        let se = if repetitions > 1 {
            let ss: T = per_seed.iter().map(|r| (r[k] - m) * (r[k] - m)).sum();
            (ss / (reps - T::one()) / reps).sqrt()
        } else {
            T::zero()
        };
        mean.push(m);
        stderr.push(se);
    }
    let slope = if counts.len() >= 2 {
        let x: Vec<T> = counts.iter().map(|&n| T::from_count(n)).collect();
        loglog_slope(&x, &mean).ok()
    } else {
        None
    };
    Ok(TraceDistanceStudy {
        counts,
        per_seed,
        mean,
        stderr,
        slope,
        report,
    })
}

/// Maps step indices on a grid of `from` steps onto a grid of `to` steps
/// over the same window; every index must land exactly on the new grid.
pub fn rescale_steps(steps: &[usize], from: usize, to: usize) -> Result<Vec<usize>> {
    steps
        .iter()
        .map(|&j| {
            let num = j as u128 * to as u128;
            if !num.is_multiple_of(from as u128) {
                Err(Error::InvalidArgument(format!(
                    "step {j} of {from} does not fall on the {to}-step trajectory grid"
                )))
            } else {
                Ok((num / from as u128) as usize)
            }
        })
        .collect()
}

/// Excited-state population from the master equation on `snapshot_count`
/// equidistant times, one column per drive frequency in `frequencies`
/// (named `pop_<ω>`).
pub fn population_trace<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    frequencies: &[T],
    snapshot_count: usize,
) -> Result<(ComparisonSeries<T>, InvariantReport)> {
    let snaps = snapshot_indices(config.n_steps, snapshot_count);
    let times: Vec<T> = snaps
        .iter()
        .map(|&j| config.grid_time(scenario.total_time(), j))
        .collect();
    let runs: Vec<(Vec<T>, InvariantReport)> = frequencies
        .par_iter()
        .map(|&w| {
            let mut drive = scenario.drive.clone();
            drive.frequency = w;
            let (states, report) = solve(&scenario.with_drive(drive), config, &snaps)?;
            Ok((states.iter().map(excited_population).collect(), report))
        })
        .collect::<Result<_>>()?;
    let mut series = ComparisonSeries::new(Abscissa::Time, times)?;
    let mut report = InvariantReport::new();
    for (w, (pops, r)) in frequencies.iter().zip(runs) {
        series.push(format!("pop_{w:?}"), pops, None)?;
        report.merge(&r);
    }
    Ok((series, report))
}

/// One row of a moments-vs-τ sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow<T> {
    pub tau: T,
    pub tmp_propagated: WorkMoments<T>,
    pub tmp_sampled: Option<WorkMoments<T>>,
    pub poa: WorkMoments<T>,
    pub diagnostic: T,
    pub boundary: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSweep<T> {
    pub rows: Vec<MomentRow<T>>,
    pub report: InvariantReport,
}

impl<T: Real> MomentSweep<T> {
    pub fn series(&self) -> Result<ComparisonSeries<T>> {
        let mut s = ComparisonSeries::new(Abscissa::Tau, self.rows.iter().map(|r| r.tau).collect())?;
        let col = |f: &dyn Fn(&MomentRow<T>) -> T| self.rows.iter().map(f).collect::<Vec<T>>();
        let nan = T::nan();
        let mc = |r: &MomentRow<T>, n: usize| r.tmp_sampled.as_ref().and_then(|m| m.moment(n)).unwrap_or(nan);
        let mc_err = |r: &MomentRow<T>, n: usize| r.tmp_sampled.as_ref().and_then(|m| m.std_error(n)).unwrap_or(nan);
        s.push("W1_tmp_prop", col(&|r| r.tmp_propagated.first()), None)?;
        s.push("W1_tmp_mc", col(&|r| mc(r, 1)), Some(col(&|r| mc_err(r, 1))))?;
        s.push("W1_poa", col(&|r| r.poa.first()), None)?;
        s.push("W2_tmp_prop", col(&|r| r.tmp_propagated.second()), None)?;
        s.push("W2_tmp_mc", col(&|r| mc(r, 2)), Some(col(&|r| mc_err(r, 2))))?;
        s.push("W2_poa", col(&|r| r.poa.second()), None)?;
        s.push("diagnostic", col(&|r| r.diagnostic), None)?;
        Ok(s)
    }
}

/// Work moments on `tau_count` equidistant durations in `[0, τ]`, all from a
/// single master-equation pass and a single trajectory ensemble. Truncating
/// the drive at `τ_k` leaves the dynamics on `[0, τ_k]` unchanged, so the
/// prefix of one long run answers every shorter protocol. With
/// `n_trajectories < 2` no sampled moments are produced.
pub fn moments_vs_tau<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    feqj: FeqjConfig,
    n_trajectories: usize,
    tau_count: usize,
) -> Result<MomentSweep<T>> {
    moments_vs_tau_logged(scenario, config, feqj, n_trajectories, tau_count, false).map(|(s, _)| s)
}

/// [`moments_vs_tau`] that also hands back the trajectory records when
/// `keep_records` is set.
pub fn moments_vs_tau_logged<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    feqj: FeqjConfig,
    n_trajectories: usize,
    tau_count: usize,
    keep_records: bool,
) -> Result<(MomentSweep<T>, Vec<TrajectoryRecord<T>>)> {
    let steps = snapshot_indices(config.n_steps, tau_count.max(2));
    let sweep = propagate_work(scenario, config, 2, &steps)?;
    let mut records = Vec::new();
    let sampled = if n_trajectories >= 2 {
        let engine = TrajectoryEngine::new(scenario.clone(), feqj)?;
        let spec = EnsembleSpec {
            n_trajectories,
            measurements: rescale_steps(&steps, config.n_steps, feqj.n_steps)?,
            keep_records,
            ..Default::default()
        };
        let result = engine.run_ensemble(&spec)?;
        records = result.records;
        Some(
            result
                .works
                .iter()
                .map(|w| sampled_moments(w, 2))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let rows = sweep
        .points
        .into_iter()
        .enumerate()
        .map(|(k, p)| MomentRow {
            tau: p.tau,
            tmp_propagated: p.tmp,
            tmp_sampled: sampled.as_ref().map(|s| s[k].clone()),
            poa: p.poa,
            diagnostic: p.diagnostic,
            boundary: p.boundary,
        })
        .collect();
    Ok((
        MomentSweep {
            rows,
            report: sweep.report,
        },
        records,
    ))
}
