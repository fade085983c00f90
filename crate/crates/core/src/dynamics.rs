//! Deterministic integration of the block master equation.
//!
//! The composite state is block diagonal in the calorimeter basis,
//! `ρ(t) = Σ_s σ(s, t) ⊗ Π_s`, so it is stored as one 2×2 qubit block per
//! sector. The same Liouvillian serves both resolutions: only the sector
//! space (rates and couplings between sectors) differs.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Ket2, Mat2};
use crate::model::{qubit_hamiltonian, Direction, DriveProtocol, Resolution, SectorSpace};
use crate::scalar::Real;

/// Block-diagonal composite state `{sector → σ(sector)}` at a given time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedState<T> {
    pub blocks: Vec<Mat2<T>>,
    pub time: T,
}

impl<T: Real> ConditionedState<T> {
    pub fn zeros(n_sectors: usize) -> Self {
        Self {
            blocks: vec![Mat2::zero(); n_sectors],
            time: T::zero(),
        }
    }

    /// Pure qubit state `ψ` with the calorimeter in `sector`.
    pub fn pure(n_sectors: usize, sector: usize, psi: &Ket2<T>) -> Self {
        let mut s = Self::zeros(n_sectors);
        s.blocks[sector] = Mat2::projector(psi);
        s
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `Σ_s Tr σ(s)`.
    pub fn total_trace(&self) -> T {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }

    /// Probability of each calorimeter sector.
    pub fn sector_probabilities(&self) -> Vec<T> {
        self.blocks.iter().map(|b| b.trace().re).collect()
    }

    /// Reduced qubit density matrix `Σ_s σ(s)`.
    pub fn reduced_qubit(&self) -> Mat2<T> {
        self.blocks
            .iter()
            .fold(Mat2::zero(), |acc, b| acc + *b)
    }

    pub fn hermiticity_residual(&self) -> T {
        self.blocks
            .iter()
            .map(Mat2::hermiticity_residual)
            .fold(T::zero(), T::max)
    }

    /// Smallest eigenvalue over all blocks, with the sector it occurs in.
    pub fn min_eigenvalue(&self) -> (T, usize) {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.hermitian_eigenvalues()[0], i))
            .fold((T::infinity(), 0), |a, b| if b.0 < a.0 { b } else { a })
    }

    pub fn symmetrize(&mut self) {
        for b in &mut self.blocks {
            *b = b.hermitian_part();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(Mat2::is_finite)
    }

    /// Largest entry modulus over all blocks.
    pub fn max_abs(&self) -> T {
        self.blocks
            .iter()
            .map(Mat2::max_abs)
            .fold(T::zero(), T::max)
    }
}

/// `Σ_s ⟨1|σ(s)|1⟩`.
pub fn excited_population<T: Real>(state: &ConditionedState<T>) -> T {
    state.blocks.iter().map(|b| b.m[1][1].re).sum()
}

/// Thermal product state `e^{-β(H0 + Hc)} / (Z_q Z_c)` in the sector basis of
/// `space`. Microcanonical sectors carry their multiplicity `N(E)`.
/// `β = ∞` is accepted and gives the joint ground state.
pub fn thermal_state<T: Real>(beta: T, space: &SectorSpace<T>) -> Result<ConditionedState<T>> {
    if beta.is_nan() || beta < T::zero() {
        return Err(Error::InvalidArgument(format!("β must be ≥ 0, got {beta}")));
    }
    let boltzmann = |e: T| {
        if e == T::zero() {
            T::one()
        } else {
            (-beta * e).exp()
        }
    };
    let e_min = space
        .sectors()
        .iter()
        .map(|s| s.energy)
        .fold(T::infinity(), T::min);
    let excited = boltzmann(T::one());
    let z_q = T::one() + excited;
    let weights: Vec<T> = space
        .sectors()
        .iter()
        .map(|s| s.multiplicity * boltzmann(s.energy - e_min))
        .collect();
    let z_c: T = weights.iter().copied().sum();
    let blocks = weights
        .iter()
        .map(|&w| {
            let p = w / (z_q * z_c);
            Mat2::diag(p, p * excited)
        })
        .collect();
    Ok(ConditionedState {
        blocks,
        time: T::zero(),
    })
}

/// Driven qubit plus calorimeter sectors: the linear generator `L[ρ]`.
#[derive(Clone, Debug)]
pub struct MasterEquation<T> {
    space: Arc<SectorSpace<T>>,
    drive: DriveProtocol<T>,
}

impl<T: Real> MasterEquation<T> {
    pub fn new(space: Arc<SectorSpace<T>>, drive: DriveProtocol<T>) -> Self {
        Self { space, drive }
    }

    pub fn space(&self) -> &Arc<SectorSpace<T>> {
        &self.space
    }

    pub fn drive(&self) -> &DriveProtocol<T> {
        &self.drive
    }

    pub fn n_sectors(&self) -> usize {
        self.space.len()
    }

    /// Writes `dσ(s)/dt` for every sector into `out`. Linear in `blocks`, which
    /// need not be hermitian.
    pub fn liouvillian_into(&self, t: T, blocks: &[Mat2<T>], out: &mut [Mat2<T>]) {
        debug_assert_eq!(blocks.len(), self.space.len());
        debug_assert_eq!(out.len(), self.space.len());
        let h = qubit_hamiltonian(&self.drive, t);
        let i = Complex::new(T::zero(), T::one());
        let half = T::lit(0.5);
        for ((sector, sigma), d) in self.space.sectors().iter().zip(blocks).zip(out.iter_mut()) {
            let m = &sigma.m;
            // i[σ, H]
            let mut r = (*sigma * h - h * *sigma).scale_c(i);
            // -Γ↑/2 {a a†, σ} - Γ↓/2 {a†a, σ}
            let up = sector.up_rate * half;
            let down = sector.down_rate * half;
            let coh = up + down;
            r.m[0][0] = r.m[0][0] - m[0][0] * (up + up);
            r.m[1][1] = r.m[1][1] - m[1][1] * (down + down);
            r.m[0][1] = r.m[0][1] - m[0][1] * coh;
            r.m[1][0] = r.m[1][0] - m[1][0] * coh;
            // gain: Γ↓(src) a σ(src) a† and Γ↑(src) a† σ(src) a
            for g in &sector.gains {
                let src = &blocks[g.source].m;
                match g.direction {
                    Direction::Down => r.m[0][0] = r.m[0][0] + src[1][1] * g.rate,
                    Direction::Up => r.m[1][1] = r.m[1][1] + src[0][0] * g.rate,
                }
            }
            *d = r;
        }
    }

    pub fn liouvillian(&self, state: &ConditionedState<T>, t: T) -> Result<ConditionedState<T>> {
        if state.len() != self.space.len() {
            return Err(Error::BasisMismatch {
                left: state.len(),
                right: self.space.len(),
            });
        }
        let mut out = ConditionedState::zeros(state.len());
        out.time = t;
        self.liouvillian_into(t, &state.blocks, &mut out.blocks);
        Ok(out)
    }
}

/// Microstate-resolved generator.
pub fn liouvillian_microstate<T: Real>(
    eq: &MasterEquation<T>,
    state: &ConditionedState<T>,
    t: T,
) -> Result<ConditionedState<T>> {
    if eq.space.resolution() != Resolution::Microstate {
        return Err(Error::ResolutionMismatch {
            expected: "microstate",
        });
    }
    eq.liouvillian(state, t)
}

/// Energy-resolved (microcanonical) generator.
pub fn liouvillian_energy<T: Real>(
    eq: &MasterEquation<T>,
    state: &ConditionedState<T>,
    t: T,
) -> Result<ConditionedState<T>> {
    if eq.space.resolution() != Resolution::Microcanonical {
        return Err(Error::ResolutionMismatch {
            expected: "microcanonical",
        });
    }
    eq.liouvillian(state, t)
}

/// Sums microstate blocks over shells of equal excitation count, mapping a
/// microstate-resolved state onto the microcanonical sector basis.
pub fn aggregate_by_excitation<T: Real>(
    microstates: &SectorSpace<T>,
    state: &ConditionedState<T>,
) -> Result<ConditionedState<T>> {
    if microstates.resolution() != Resolution::Microstate {
        return Err(Error::ResolutionMismatch {
            expected: "microstate",
        });
    }
    if state.len() != microstates.len() {
        return Err(Error::BasisMismatch {
            left: state.len(),
            right: microstates.len(),
        });
    }
    let shells = microstates.model().max_excitations() as usize + 1;
    let mut out = ConditionedState::zeros(shells);
    out.time = state.time;
    for (i, b) in state.blocks.iter().enumerate() {
        out.blocks[microstates.excitations(i) as usize] += *b;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Euler,
}

/// Thresholds for the invariant monitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub trace_drift: f64,
    pub hermiticity: f64,
    /// Integration aborts when a block eigenvalue drops below this.
    pub min_eigenvalue: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            trace_drift: 1e-8,
            hermiticity: 1e-12,
            min_eigenvalue: -1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub n_steps: usize,
    pub method: Method,
    pub tolerances: Tolerances,
}

impl IntegratorConfig {
    pub fn rk4(n_steps: usize) -> Self {
        Self {
            n_steps,
            method: Method::Rk4,
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn step_size<T: Real>(&self, total_time: T) -> T {
        total_time / T::from_count(self.n_steps)
    }

    /// Time of grid point `j`; the last point is `total_time` exactly, so a
    /// final RK4 stage never lands past the end of the drive window.
    pub fn grid_time<T: Real>(&self, total_time: T, j: usize) -> T {
        if j >= self.n_steps {
            total_time
        } else {
            total_time * T::from_count(j) / T::from_count(self.n_steps)
        }
    }
}

/// Summary of the invariants observed over a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_trace_drift: f64,
    /// Residual after symmetrization (what the stored state carries).
    pub max_hermiticity_residual: f64,
    /// Residual produced by a single step before symmetrization.
    pub max_raw_hermiticity_residual: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
}

impl InvariantReport {
    pub fn new() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermiticity_residual: 0.0,
            max_raw_hermiticity_residual: 0.0,
            min_eigenvalue: f64::INFINITY,
            steps: 0,
        }
    }

    pub fn within(&self, tol: &Tolerances) -> bool {
        self.max_trace_drift < tol.trace_drift
            && self.max_hermiticity_residual < tol.hermiticity
            && self.min_eigenvalue > tol.min_eigenvalue
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        self.max_trace_drift = self.max_trace_drift.max(other.max_trace_drift);
        self.max_hermiticity_residual = self
            .max_hermiticity_residual
            .max(other.max_hermiticity_residual);
        self.max_raw_hermiticity_residual = self
            .max_raw_hermiticity_residual
            .max(other.max_raw_hermiticity_residual);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.steps += other.steps;
    }
}

impl InvariantReport {
    /// Checks a freshly stepped state: aborts on non-finite entries or a
    /// block eigenvalue below tolerance, symmetrizes, and folds the residuals
    /// into the report.
    pub fn record<T: Real>(
        &mut self,
        state: &mut ConditionedState<T>,
        trace0: T,
        tol: &Tolerances,
    ) -> Result<()> {
        if !state.is_finite() {
            return Err(Error::IntegratorBlowUp { t: state.time.as_f64() });
        }
        let raw = state.hermiticity_residual().as_f64();
        state.symmetrize();
        self.steps += 1;
        self.max_raw_hermiticity_residual = self.max_raw_hermiticity_residual.max(raw);
        self.max_hermiticity_residual = self
            .max_hermiticity_residual
            .max(state.hermiticity_residual().as_f64());
        self.max_trace_drift = self
            .max_trace_drift
            .max((state.total_trace() - trace0).abs().as_f64());
        let (min_eig, sector) = state.min_eigenvalue();
        self.min_eigenvalue = self.min_eigenvalue.min(min_eig.as_f64());
        if min_eig.as_f64() < tol.min_eigenvalue {
            return Err(Error::NegativeEigenvalue {
                t: state.time.as_f64(),
                sector,
                value: min_eig.as_f64(),
            });
        }
        Ok(())
    }
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self::new()
    }
}

/// Classical fourth-order Runge–Kutta over a slice of 2×2 blocks.
#[derive(Clone, Debug)]
pub struct Rk4<T> {
    k1: Vec<Mat2<T>>,
    k2: Vec<Mat2<T>>,
    k3: Vec<Mat2<T>>,
    k4: Vec<Mat2<T>>,
    tmp: Vec<Mat2<T>>,
}

impl<T: Real> Rk4<T> {
    pub fn new(len: usize) -> Self {
        let z = vec![Mat2::zero(); len];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    pub fn step<F>(&mut self, mut f: F, t: T, h: T, y: &mut [Mat2<T>])
    where
        F: FnMut(T, &[Mat2<T>], &mut [Mat2<T>]),
    {
        let half = h * T::lit(0.5);
        f(t, y, &mut self.k1);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = *y;
            tmp.add_scaled(half, k);
        }
        f(t + half, &self.tmp, &mut self.k2);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = *y;
            tmp.add_scaled(half, k);
        }
        f(t + half, &self.tmp, &mut self.k3);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = *y;
            tmp.add_scaled(h, k);
        }
        f(t + h, &self.tmp, &mut self.k4);
        let sixth = h / T::lit(6.0);
        let third = h / T::lit(3.0);
        for i in 0..y.len() {
            y[i].add_scaled(sixth, &self.k1[i]);
            y[i].add_scaled(third, &self.k2[i]);
            y[i].add_scaled(third, &self.k3[i]);
            y[i].add_scaled(sixth, &self.k4[i]);
        }
    }

    pub fn euler_step<F>(&mut self, mut f: F, t: T, h: T, y: &mut [Mat2<T>])
    where
        F: FnMut(T, &[Mat2<T>], &mut [Mat2<T>]),
    {
        f(t, y, &mut self.k1);
        for (y, k) in y.iter_mut().zip(&self.k1) {
            y.add_scaled(h, k);
        }
    }
}

/// Sequential integrator for density states under a `MasterEquation`, with
/// hermitian symmetrization and invariant monitoring after every step.
#[derive(Clone, Debug)]
pub struct Integrator<T> {
    eq: MasterEquation<T>,
    config: IntegratorConfig,
    rk: Rk4<T>,
    report: InvariantReport,
    initial_trace: Option<T>,
}

impl<T: Real> Integrator<T> {
    pub fn new(eq: MasterEquation<T>, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        let n = eq.n_sectors();
        Ok(Self {
            eq,
            config,
            rk: Rk4::new(n),
            report: InvariantReport::new(),
            initial_trace: None,
        })
    }

    pub fn equation(&self) -> &MasterEquation<T> {
        &self.eq
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn report(&self) -> &InvariantReport {
        &self.report
    }

    /// Advances `state` by `h` from `state.time`.
    pub fn step(&mut self, state: &mut ConditionedState<T>, h: T) -> Result<()> {
        if !(h > T::zero()) {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        if state.len() != self.eq.n_sectors() {
            return Err(Error::BasisMismatch {
                left: state.len(),
                right: self.eq.n_sectors(),
            });
        }
        let trace0 = *self.initial_trace.get_or_insert_with(|| state.total_trace());
        let t = state.time;
        let eq = &self.eq;
        let f = |t, y: &[Mat2<T>], dy: &mut [Mat2<T>]| eq.liouvillian_into(t, y, dy);
        match self.config.method {
            Method::Rk4 => self.rk.step(f, t, h, &mut state.blocks),
            Method::Euler => self.rk.euler_step(f, t, h, &mut state.blocks),
        }
        state.time = t + h;
        self.report.record(state, trace0, &self.config.tolerances)
    }

    /// Integrates over `[state.time, state.time + τ]` with `n_steps` equal
    /// steps, calling `observe(step_index, state)` for every index listed in
    /// `snapshots` (index 0 is the initial state).
    pub fn evolve<F>(
        &mut self,
        state: &mut ConditionedState<T>,
        total_time: T,
        snapshots: &[usize],
        mut observe: F,
    ) -> Result<InvariantReport>
    where
        F: FnMut(usize, &ConditionedState<T>),
    {
        let n = self.config.n_steps;
        let t0 = state.time;
        let mut next = snapshots.iter().peekable();
        while next.peek().is_some_and(|&&j| j == 0) {
            observe(0, state);
            next.next();
        }
        for j in 1..=n {
            // differences of grid times are exact, so t + h hits the grid
            let end = t0 + self.config.grid_time(total_time, j);
            self.step(state, end - state.time)?;
            state.time = end;
            while next.peek().is_some_and(|&&s| s == j) {
                observe(j, state);
                next.next();
            }
        }
        Ok(self.report)
    }
}

/// Convenience single step; allocates a fresh workspace.
pub fn step<T: Real>(
    eq: &MasterEquation<T>,
    state: &ConditionedState<T>,
    h: T,
    method: Method,
) -> Result<ConditionedState<T>> {
    let config = IntegratorConfig {
        n_steps: 1,
        method,
        tolerances: Tolerances::default(),
    };
    let mut integ = Integrator::new(eq.clone(), config)?;
    let mut next = state.clone();
    integ.step(&mut next, h)?;
    Ok(next)
}

/// `count` equidistant step indices over `0..=n_steps`, both ends included.
pub fn snapshot_indices(n_steps: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![n_steps];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|k| ((k as u128 * n_steps as u128 + (count as u128 - 1) / 2) / (count as u128 - 1)) as usize)
        .collect();
    out.dedup();
    out
}

/// A thermal initial state, a drive and a calorimeter: everything needed to
/// run either method.
#[derive(Clone, Debug)]
pub struct Scenario<T> {
    pub space: Arc<SectorSpace<T>>,
    pub drive: DriveProtocol<T>,
    pub beta: T,
}

impl<T: Real> Scenario<T> {
    pub fn new(space: SectorSpace<T>, drive: DriveProtocol<T>, beta: T) -> Result<Self> {
        drive.validate()?;
        if beta.is_nan() || beta < T::zero() {
            return Err(Error::InvalidArgument(format!("β must be ≥ 0, got {beta}")));
        }
        Ok(Self {
            space: Arc::new(space),
            drive,
            beta,
        })
    }

    pub fn master_equation(&self) -> MasterEquation<T> {
        MasterEquation::new(self.space.clone(), self.drive.clone())
    }

    pub fn initial_state(&self) -> Result<ConditionedState<T>> {
        thermal_state(self.beta, &self.space)
    }

    pub fn with_drive(&self, drive: DriveProtocol<T>) -> Self {
        Self {
            space: self.space.clone(),
            drive,
            beta: self.beta,
        }
    }

    pub fn total_time(&self) -> T {
        self.drive.total_time
    }
}

/// Runs the master equation from the thermal state and returns the state at
/// each snapshot index together with the invariant report.
pub fn solve<T: Real>(
    scenario: &Scenario<T>,
    config: IntegratorConfig,
    snapshots: &[usize],
) -> Result<(Vec<ConditionedState<T>>, InvariantReport)> {
    let mut integ = Integrator::new(scenario.master_equation(), config)?;
    let mut state = scenario.initial_state()?;
    let mut out = Vec::with_capacity(snapshots.len());
    let report = integ.evolve(&mut state, scenario.total_time(), snapshots, |_, s| {
        out.push(s.clone())
    })?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CalorimeterModel, Microstate};

    fn space(n: usize, res: Resolution) -> Arc<SectorSpace<f64>> {
        Arc::new(SectorSpace::new(CalorimeterModel::uniform_tls(n, 1e-3, res).unwrap()).unwrap())
    }

    #[test]
    fn undriven_uncoupled_diagonal_is_stationary() {
        let sp = Arc::new(
            SectorSpace::new(CalorimeterModel::uniform_tls(3, 0.0, Resolution::Microstate).unwrap())
                .unwrap(),
        );
        let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(10.0));
        let mut st = ConditionedState::zeros(sp.len());
        for (i, b) in st.blocks.iter_mut().enumerate() {
            *b = Mat2::diag(0.01 * i as f64, 0.02);
        }
        let d = liouvillian_microstate(&eq, &st, 1.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn thermal_state_is_stationary_both_resolutions() {
        for res in [Resolution::Microstate, Resolution::Microcanonical] {
            let sp = space(10, res);
            let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(10.0));
            let st = thermal_state(1.0, &sp).unwrap();
            let d = eq.liouvillian(&st, 0.3).unwrap();
            assert!(d.max_abs() < 1e-16, "{res:?}: {}", d.max_abs());
        }
    }

    #[test]
    fn excited_qubit_decays_at_total_down_rate() {
        let sp = space(10, Resolution::Microstate);
        let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(10.0));
        let ground = sp.microstate_index(&Microstate::ground(10)).unwrap();
        let st = ConditionedState::pure(sp.len(), ground, &Ket2::basis(1));
        let d = liouvillian_microstate(&eq, &st, 0.0).unwrap();
        assert!((d.blocks[ground].m[1][1].re + 10.0 * 1e-3).abs() < 1e-15);
        // each singly excited neighbour gains g² in its |0⟩⟨0| entry
        let one = sp.microstate_index(&Microstate::with_excited(10, &[4])).unwrap();
        assert!((d.blocks[one].m[0][0].re - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn ground_shell_ground_qubit_is_frozen() {
        let sp = space(10, Resolution::Microcanonical);
        let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(10.0));
        let st = ConditionedState::pure(sp.len(), 0, &Ket2::basis(0));
        let d = liouvillian_energy(&eq, &st, 2.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn resolution_checked() {
        let sp = space(3, Resolution::Microcanonical);
        let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(1.0));
        let st = thermal_state(1.0, &sp).unwrap();
        assert!(liouvillian_microstate(&eq, &st, 0.0).is_err());
        assert!(eq.liouvillian(&ConditionedState::zeros(3), 0.0).is_err());
    }

    #[test]
    fn zero_generator_leaves_state_unchanged() {
        let sp = Arc::new(
            SectorSpace::new(CalorimeterModel::uniform_tls(2, 0.0, Resolution::Microcanonical).unwrap())
                .unwrap(),
        );
        let eq = MasterEquation::new(sp.clone(), DriveProtocol::undriven(1.0));
        let st = thermal_state(0.7, &sp).unwrap();
        let next = step(&eq, &st, 0.1, Method::Rk4).unwrap();
        assert_eq!(next.blocks, st.blocks);
    }

    #[test]
    fn infinite_temperature_is_uniform() {
        let sp = space(1, Resolution::Microstate);
        let st = thermal_state(0.0, &sp).unwrap();
        for b in &st.blocks {
            assert!((b.m[0][0].re - 0.25).abs() < 1e-16);
            assert!((b.m[1][1].re - 0.25).abs() < 1e-16);
        }
    }

    #[test]
    fn zero_temperature_is_ground() {
        let sp = space(4, Resolution::Microcanonical);
        let st = thermal_state(f64::INFINITY, &sp).unwrap();
        assert_eq!(st.blocks[0], Mat2::diag(1.0, 0.0));
        assert_eq!(st.total_trace(), 1.0);
        assert_eq!(excited_population(&st), 0.0);
    }

    #[test]
    fn thermal_excited_population() {
        let sp = space(10, Resolution::Microcanonical);
        let st = thermal_state(1.0, &sp).unwrap();
        let expected = 1.0 / (1.0 + 1f64.exp());
        assert!((excited_population(&st) - expected).abs() < 1e-15);
        assert!((expected - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn negative_beta_rejected() {
        let sp = space(2, Resolution::Microcanonical);
        assert!(thermal_state(-1.0, &sp).is_err());
    }

    #[test]
    fn snapshot_grid_covers_both_ends() {
        let s = snapshot_indices(1000, 200);
        assert_eq!(s.len(), 200);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 1000);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(snapshot_indices(3, 200), vec![0, 1, 2, 3]);
    }
}
