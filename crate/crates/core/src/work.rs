//! Work statistics under the master equation.
//!
//! Two definitions are compared: the two-measurement protocol (TMP), with
//! projective energy measurements of `H0 + Hc` at `0` and `τ`, and the
//! power-operator approach (POA), which integrates correlation functions of
//! `P(t) = ∂_t H_q(t)`.
//!
//! TMP moments are propagated through the Heisenberg-type expansion
//! `⟨Wⁿ⟩ = Σ_m C(n,m) Tr{Hⁿ⁻ᵐ V(τ,0)[(−H)ᵐ ρ0]}` with every `(−H)ᵐ ρ0`
//! carried forward as its own block state. The POA second moment uses an
//! auxiliary matrix `ρ_P` with `dρ_P/dt = L[ρ_P] + P ρ`, which turns the
//! double time integral into a single pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ConditionedState, Integrator, IntegratorConfig, InvariantReport, Method, Rk4, Scenario,
};
use crate::error::{Error, Result};
use crate::feqj::TrajectoryRecord;
use crate::matrix::Mat2;
use crate::model::{power_operator, qubit_hamiltonian, SectorSpace};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkMethod {
    TmpPropagated,
    TmpTrajectories,
    PowerOperator,
}

/// `moments[n − 1] = ⟨Wⁿ⟩` in units of `ħω0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkMoments<T> {
    pub method: WorkMethod,
    pub moments: Vec<T>,
    /// Monte Carlo standard errors, same layout as `moments`.
    pub std_errors: Option<Vec<T>>,
}

impl<T: Real> WorkMoments<T> {
    /// `⟨Wⁿ⟩`; `n = 0` gives 1.
    pub fn moment(&self, n: usize) -> Option<T> {
        if n == 0 {
            Some(T::one())
        } else {
            self.moments.get(n - 1).copied()
        }
    }

    pub fn std_error(&self, n: usize) -> Option<T> {
        self.std_errors.as_ref()?.get(n.checked_sub(1)?).copied()
    }

    pub fn first(&self) -> T {
        self.moments.first().copied().unwrap_or_else(T::zero)
    }

    pub fn second(&self) -> T {
        self.moments.get(1).copied().unwrap_or_else(T::zero)
    }

    /// `⟨W²⟩ − ⟨W⟩²`.
    pub fn variance(&self) -> T {
        self.second() - self.first() * self.first()
    }
}

/// Everything the single-pass propagation reports at one `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkPoint<T> {
    pub step: usize,
    pub tau: T,
    pub tmp: WorkMoments<T>,
    pub poa: WorkMoments<T>,
    /// `−Σ_s [Γ↓(s) + Γ↑(s)] ∫₀^τ Re{λ(t) ⟨0|σ(s,t)|1⟩} dt`.
    pub diagnostic: T,
    /// `∫₀^τ Tr{H_{q+c}(t) L[ρ(t)]} dt`, integrated directly.
    pub generator_integral: T,
    /// `Tr{H_q(τ) ρ(τ)} − Tr{H_q(0) ρ(0)}` restricted to the drive term:
    /// the drive-inclusive TMP mean minus the undriven-basis one.
    pub boundary: T,
    pub excited_population: T,
}

impl<T: Real> WorkPoint<T> {
    /// `⟨W_tmp⟩ − ⟨W_p⟩` with the final measurement in the drive-inclusive
    /// basis; equals `diagnostic` identically.
    pub fn drive_inclusive_difference(&self) -> T {
        self.tmp.first() + self.boundary - self.poa.first()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkSweep<T> {
    pub points: Vec<WorkPoint<T>>,
    pub report: InvariantReport,
}

/// `(H0 + Hc − c)` on the diagonal of each sector block.
fn shifted_energies<T: Real>(space: &SectorSpace<T>, shift: T) -> Vec<[T; 2]> {
    space
        .sectors()
        .iter()
        .map(|s| [s.energy - shift, s.energy + T::one() - shift])
        .collect()
}

fn mean_energy<T: Real>(space: &SectorSpace<T>, rho: &ConditionedState<T>) -> T {
    space
        .sectors()
        .iter()
        .zip(&rho.blocks)
        .map(|(s, b)| s.energy * b.trace().re + b.m[1][1].re)
        .sum()
}

/// `Tr{Hᵏ X}` for block-diagonal `H` given by `energies`.
fn energy_trace<T: Real>(energies: &[[T; 2]], blocks: &[Mat2<T>], k: usize) -> T {
    energies
        .iter()
        .zip(blocks)
        .map(|(e, b)| e[0].powi(k as i32) * b.m[0][0].re + e[1].powi(k as i32) * b.m[1][1].re)
        .sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn check_checkpoints(checkpoints: &[usize], n_steps: usize) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    if checkpoints.last().is_some_and(|&j| j > n_steps) {
        return Err(Error::InvalidArgument(format!(
            "checkpoint beyond the last step {n_steps}"
        )));
    }
    Ok(())
}

/// Layout of the augmented state vector.
struct Layout {
    sectors: usize,
    n_max: usize,
}

impl Layout {
    fn rho(&self) -> std::ops::Range<usize> {
        0..self.sectors
    }
    fn rho_p(&self) -> std::ops::Range<usize> {
        self.sectors..2 * self.sectors
    }
    fn chi(&self, m: usize) -> std::ops::Range<usize> {
        let start = (1 + m) * self.sectors;
        start..start + self.sectors
    }
    fn acc(&self) -> usize {
        (2 + self.n_max) * self.sectors
    }
    fn len(&self) -> usize {
        self.acc() + 1
    }
}

/// Single-pass propagation of `ρ`, `ρ_P`, `(−H)ᵐ ρ0` for `m ≤ n_max`, and the
/// running POA and diagnostic integrals. Reports at every step index in
/// `checkpoints` (strictly increasing, each `≤ n_steps`).
pub fn propagate_work<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    n_max: usize,
    checkpoints: &[usize],
) -> Result<WorkSweep<T>> {
    config.validate()?;
    check_checkpoints(checkpoints, config.n_steps)?;
    let space = scenario.space.clone();
    let eq = scenario.master_equation();
    let drive = &scenario.drive;
    let rho0 = scenario.initial_state()?;
    let s = space.len();
    let layout = Layout { sectors: s, n_max };
    let shift = mean_energy(&space, &rho0);
    let energies = shifted_energies(&space, shift);
    let raw_energies: Vec<T> = space.sectors().iter().map(|x| x.energy).collect();
    let rates: Vec<T> = space
        .sectors()
        .iter()
        .map(|x| x.up_rate + x.down_rate)
        .collect();

    let mut y = vec![Mat2::zero(); layout.len()];
    y[layout.rho()].copy_from_slice(&rho0.blocks);
    for m in 1..=n_max {
        for (k, b) in y[layout.chi(m)].iter_mut().enumerate() {
            let e = energies[k];
            let r = &rho0.blocks[k];
            *b = Mat2::diag(
                (-e[0]).powi(m as i32) * r.m[0][0].re,
                (-e[1]).powi(m as i32) * r.m[1][1].re,
            );
        }
    }

    let deriv = |t: T, y: &[Mat2<T>], dy: &mut [Mat2<T>]| {
        let p = power_operator(drive, t);
        let h = qubit_hamiltonian(drive, t);
        let lambda = drive.lambda(t);
        eq.liouvillian_into(t, &y[layout.rho()], &mut dy[layout.rho()]);
        eq.liouvillian_into(t, &y[layout.rho_p()], &mut dy[layout.rho_p()]);
        for m in 1..=n_max {
            eq.liouvillian_into(t, &y[layout.chi(m)], &mut dy[layout.chi(m)]);
        }
        let (mut w1, mut w2, mut diag, mut gen) = (T::zero(), T::zero(), T::zero(), T::zero());
        for k in 0..s {
            let rho = y[k];
            let rho_p = y[s + k];
            let l = dy[k];
            dy[s + k] += p * rho;
            w1 += (p * rho).trace().re;
            w2 += (p * rho_p).trace().re;
            diag -= rates[k] * (lambda * rho.m[0][1]).re;
            gen += (h * l).trace().re + raw_energies[k] * l.trace().re;
        }
        let acc = &mut dy[layout.acc()];
        *acc = Mat2::diag(w1, gen);
        acc.m[0][1] = (w2 + w2).into();
        acc.m[1][0] = diag.into();
    };

    let mut rk = Rk4::new(layout.len());
    let mut report = InvariantReport::new();
    let mut monitor = ConditionedState::zeros(s);
    let trace0 = rho0.total_trace();
    let total = scenario.total_time();
    let lambda0_rho = boundary_term(drive.lambda(T::zero()), &rho0.blocks);
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();

    let emit = |j: usize, y: &[Mat2<T>]| -> WorkPoint<T> {
        let tau = config.grid_time(total, j);
        let rho = &y[layout.rho()];
        let acc = y[layout.acc()];
        let tmp = (1..=n_max)
            .map(|n| {
                (0..=n)
                    .map(|m| {
                        let x = if m == 0 { rho } else { &y[layout.chi(m)] };
                        T::lit(binomial(n, m)) * energy_trace(&energies, x, n - m)
                    })
                    .sum()
            })
            .collect();
        WorkPoint {
            step: j,
            tau,
            tmp: WorkMoments {
                method: WorkMethod::TmpPropagated,
                moments: tmp,
                std_errors: None,
            },
            poa: WorkMoments {
                method: WorkMethod::PowerOperator,
                moments: vec![acc.m[0][0].re, acc.m[0][1].re],
                std_errors: None,
            },
            diagnostic: acc.m[1][0].re,
            generator_integral: acc.m[1][1].re,
            boundary: boundary_term(drive.lambda(tau), rho) - lambda0_rho,
            excited_population: rho.iter().map(|b| b.m[1][1].re).sum(),
        }
    };

    while next.peek().is_some_and(|&&j| j == 0) {
        points.push(emit(0, &y));
        next.next();
    }
    for j in 1..=config.n_steps {
        let t = config.grid_time(total, j - 1);
        let h = config.grid_time(total, j) - t;
        match config.method {
            Method::Rk4 => rk.step(&deriv, t, h, &mut y),
            Method::Euler => rk.euler_step(&deriv, t, h, &mut y),
        }
        monitor.blocks.copy_from_slice(&y[layout.rho()]);
        monitor.time = config.grid_time(total, j);
        report.record(&mut monitor, trace0, &config.tolerances)?;
        y[layout.rho()].copy_from_slice(&monitor.blocks);
        for m in 1..=n_max {
            for b in &mut y[layout.chi(m)] {
                *b = b.hermitian_part();
            }
        }
        if !y[layout.acc()].is_finite() || !y[layout.rho_p()].iter().all(Mat2::is_finite) {
            return Err(Error::IntegratorBlowUp { t: monitor.time.as_f64() });
        }
        while next.peek().is_some_and(|&&k| k == j) {
            points.push(emit(j, &y));
            next.next();
        }
    }
    Ok(WorkSweep { points, report })
}

/// `Tr{(λ a† + λ* a) ρ} = 2 Re{λ Σ_s ⟨0|σ(s)|1⟩}`.
fn boundary_term<T: Real>(lambda: num_complex::Complex<T>, blocks: &[Mat2<T>]) -> T {
    let two = T::lit(2.0);
    blocks.iter().map(|b| two * (lambda * b.m[0][1]).re).sum()
}

/// TMP moments `⟨Wⁿ⟩`, `n = 1..=n_max`, at the end of the drive.
pub fn tmp_moments_propagated<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    n_max: usize,
) -> Result<WorkMoments<T>> {
    let sweep = propagate_work(scenario, config, n_max, &[config.n_steps])?;
    Ok(sweep.points.into_iter().next().expect("one checkpoint").tmp)
}

/// POA moments `⟨W_p⟩`, `⟨W_p²⟩` at the end of the drive.
pub fn poa_moments<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
) -> Result<WorkMoments<T>> {
    let sweep = propagate_work(scenario, config, 0, &[config.n_steps])?;
    Ok(sweep.points.into_iter().next().expect("one checkpoint").poa)
}

/// The cumulative diagnostic integral as `(t, value)` at every checkpoint.
pub fn tmp_poa_difference_diagnostic<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    checkpoints: &[usize],
) -> Result<Vec<(T, T)>> {
    let sweep = propagate_work(scenario, config, 0, checkpoints)?;
    Ok(sweep.points.iter().map(|p| (p.tau, p.diagnostic)).collect())
}

/// Evolves an arbitrary block state under the master equation over the
/// scenario's drive window.
pub fn propagate<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    initial: ConditionedState<T>,
) -> Result<(ConditionedState<T>, InvariantReport)> {
    let mut integ = Integrator::new(scenario.master_equation(), config)?;
    let mut state = initial;
    let report = integ.evolve(&mut state, scenario.total_time(), &[], |_, _| {})?;
    Ok((state, report))
}

/// TMP moments from one propagation per initial outcome `(i, sector)`:
/// `χ(i,s,0) = p(i,s) |i⟩⟨i| ⊗ |s⟩⟨s|`, combined with the initial-energy
/// powers. Independent of [`propagate_work`]; runs the propagations in
/// parallel and sums them in index order.
pub fn tmp_moments_per_initial_state<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    n_max: usize,
) -> Result<(WorkMoments<T>, InvariantReport)> {
    let space = &scenario.space;
    let rho0 = scenario.initial_state()?;
    let shift = mean_energy(space, &rho0);
    let energies = shifted_energies(space, shift);
    let starts: Vec<(usize, usize, T)> = rho0
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(s, b)| [(s, 0, b.m[0][0].re), (s, 1, b.m[1][1].re)])
        .filter(|&(_, _, p)| p > T::zero())
        .collect();
    let runs: Vec<(Vec<T>, InvariantReport)> = starts
        .par_iter()
        .map(|&(s, i, p)| {
            let mut chi = ConditionedState::zeros(space.len());
            chi.blocks[s].m[i][i] = p.into();
            let (chi, report) = propagate(scenario, config, chi)?;
            let e_init = energies[s][i];
            let contrib = (1..=n_max)
                .map(|n| {
                    (0..=n)
                        .map(|m| {
                            T::lit(binomial(n, m))
                                * (-e_init).powi(m as i32)
                                * energy_trace(&energies, &chi.blocks, n - m)
                        })
                        .sum()
                })
                .collect();
            Ok((contrib, report))
        })
        .collect::<Result<_>>()?;
    let mut moments = vec![T::zero(); n_max];
    let mut report = InvariantReport::new();
    for (c, r) in &runs {
        for (m, v) in moments.iter_mut().zip(c) {
            *m += *v;
        }
        report.merge(r);
    }
    Ok((
        WorkMoments {
            method: WorkMethod::TmpPropagated,
            moments,
            std_errors: None,
        },
        report,
    ))
}

/// Sample moments `⟨Wⁿ⟩`, `n = 1..=n_max`, with standard errors
/// `sd(Wⁿ)/√N`.
pub fn sampled_moments<T: Real>(works: &[T], n_max: usize) -> Result<WorkMoments<T>> {
    if works.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two samples, got {}",
            works.len()
        )));
    }
    let n = T::from_count(works.len());
    let mut moments = Vec::with_capacity(n_max);
    let mut errors = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        let mean = works.iter().map(|w| w.powi(k as i32)).sum::<T>() / n;
        let ss: T = works
            .iter()
            .map(|w| {
                let d = w.powi(k as i32) - mean;
                d * d
            })
            .sum();
        let var = ss / (n - T::one());
        moments.push(mean);
        errors.push((var / n).sqrt());
    }
    Ok(WorkMoments {
        method: WorkMethod::TmpTrajectories,
        moments,
        std_errors: Some(errors),
    })
}

/// First and second TMP moments from trajectory records.
pub fn tmp_moments_sampled<T: Real>(records: &[TrajectoryRecord<T>]) -> Result<WorkMoments<T>> {
    let works: Vec<T> = records.iter().map(|r| r.work).collect();
    sampled_moments(&works, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feqj::Outcome;
    use crate::model::{CalorimeterModel, DriveProtocol, Resolution};

    fn scenario(g2: f64, drive: DriveProtocol<f64>, beta: f64) -> Scenario<f64> {
        let model = CalorimeterModel::uniform_tls(4, g2, Resolution::Microcanonical).unwrap();
        Scenario::new(SectorSpace::new(model).unwrap(), drive, beta).unwrap()
    }

    fn record(work: f64) -> TrajectoryRecord<f64> {
        let o = Outcome { qubit: 0, sector: 0 };
        TrajectoryRecord {
            seed: 0,
            index: 0,
            initial: o,
            events: vec![],
            final_outcome: o,
            work,
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 5), 1.0);
    }

    #[test]
    fn sampled_arithmetic() {
        let m = tmp_moments_sampled(&[record(0.0), record(1.0)]).unwrap();
        assert_eq!(m.first(), 0.5);
        assert_eq!(m.second(), 0.5);
        assert_eq!(m.std_error(1), Some(0.5));
        let z = tmp_moments_sampled(&vec![record(0.0); 5]).unwrap();
        assert_eq!((z.first(), z.second()), (0.0, 0.0));
        assert!(tmp_moments_sampled(&[record(1.0)]).is_err());
    }

    #[test]
    fn zeroth_moment_is_one() {
        let sc = scenario(1e-3, DriveProtocol::sinusoidal(0.05, 1.0, 5.0), 1.0);
        let m = tmp_moments_propagated(&sc, IntegratorConfig::rk4(500), 2).unwrap();
        assert_eq!(m.moment(0), Some(1.0));
        assert!(m.moment(3).is_none());
    }

    #[test]
    fn undriven_work_vanishes() {
        let sc = scenario(1e-3, DriveProtocol::undriven(20.0), 1.0);
        let m = tmp_moments_propagated(&sc, IntegratorConfig::rk4(2000), 3).unwrap();
        for v in &m.moments {
            assert!(v.abs() < 1e-12, "{v}");
        }
        let p = poa_moments(&sc, IntegratorConfig::rk4(2000)).unwrap();
        assert_eq!(p.moments, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_drive_has_no_power() {
        let sc = scenario(1e-3, DriveProtocol::constant(0.05, 10.0), 1.0);
        let p = poa_moments(&sc, IntegratorConfig::rk4(1000)).unwrap();
        assert_eq!(p.moments, vec![0.0, 0.0]);
    }

    #[test]
    fn diagnostic_matches_generator_integral() {
        let sc = scenario(1e-2, DriveProtocol::sinusoidal(0.1, 0.9, 20.0), 0.5);
        let sweep = propagate_work(&sc, IntegratorConfig::rk4(4000), 1, &[1000, 4000]).unwrap();
        for p in &sweep.points {
            assert!((p.diagnostic - p.generator_integral).abs() < 1e-12);
            assert!((p.drive_inclusive_difference() - p.diagnostic).abs() < 1e-10);
        }
    }

    #[test]
    fn per_initial_state_route_agrees() {
        let sc = scenario(1e-2, DriveProtocol::sinusoidal(0.1, 1.1, 15.0), 1.0);
        let cfg = IntegratorConfig::rk4(3000);
        let a = tmp_moments_propagated(&sc, cfg, 2).unwrap();
        let (b, _) = tmp_moments_per_initial_state(&sc, cfg, 2).unwrap();
        for (x, y) in a.moments.iter().zip(&b.moments) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn bad_checkpoints_rejected() {
        let sc = scenario(1e-3, DriveProtocol::undriven(1.0), 1.0);
        let cfg = IntegratorConfig::rk4(10);
        assert!(propagate_work(&sc, cfg, 1, &[3, 2]).is_err());
        assert!(propagate_work(&sc, cfg, 1, &[11]).is_err());
    }
}
