use serde::{Deserialize, Serialize};

use super::{Channel, Direction};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One calorimeter mode. `cap` is the largest allowed occupation: `1` is a
/// two-level system, larger values a truncated bosonic mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode<T> {
    pub cap: u32,
    pub energy: T,
    /// `g_k²`, the golden-rule rate prefactor for this mode.
    pub coupling_sq: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// Track the full occupation pattern.
    Microstate,
    /// Track only the total excitation count; the calorimeter relaxes to the
    /// microcanonical ensemble of its energy shell after every jump.
    Microcanonical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalorimeterModel<T> {
    modes: Vec<Mode<T>>,
    resolution: Resolution,
}

impl<T: Real> CalorimeterModel<T> {
    pub fn new(modes: Vec<Mode<T>>, resolution: Resolution) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidModel("calorimeter needs at least one mode".into()));
        }
        for (k, m) in modes.iter().enumerate() {
            if m.cap == 0 {
                return Err(Error::InvalidModel(format!("mode {k} has occupation cap 0")));
            }
            if !(m.energy > T::zero()) || !m.energy.is_finite() {
                return Err(Error::InvalidModel(format!("mode {k} energy must be positive")));
            }
            if !(m.coupling_sq >= T::zero()) || !m.coupling_sq.is_finite() {
                return Err(Error::InvalidModel(format!("mode {k} coupling must be non-negative")));
            }
        }
        if resolution == Resolution::Microcanonical {
            let e0 = modes[0].energy;
            let tol = T::lit(1e-12) * e0;
            if modes.iter().any(|m| (m.energy - e0).abs() > tol) {
                return Err(Error::NonDegenerateModes);
            }
        }
        Ok(Self { modes, resolution })
    }

    /// `n` two-level systems resonant with the qubit, each with coupling `g²`.
    pub fn uniform_tls(n: usize, coupling_sq: T, resolution: Resolution) -> Result<Self> {
        Self::uniform(n, 1, coupling_sq, resolution)
    }

    pub fn uniform(n: usize, cap: u32, coupling_sq: T, resolution: Resolution) -> Result<Self> {
        let mode = Mode {
            cap,
            energy: T::one(),
            coupling_sq,
        };
        Self::new(vec![mode; n], resolution)
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn with_resolution(&self, resolution: Resolution) -> Result<Self> {
        Self::new(self.modes.clone(), resolution)
    }

    pub fn max_excitations(&self) -> u32 {
        self.modes.iter().map(|m| m.cap).sum()
    }

    /// `∏ (cap_k + 1)`.
    pub fn microstate_count(&self) -> u128 {
        self.modes
            .iter()
            .fold(1u128, |acc, m| acc.saturating_mul(m.cap as u128 + 1))
    }

    /// Energy of one quantum in a degenerate calorimeter.
    pub fn quantum(&self) -> T {
        self.modes[0].energy
    }

    pub fn check_microstate(&self, n: &Microstate) -> Result<()> {
        if n.occupations.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: n.occupations.len(),
            });
        }
        for (k, (&occ, mode)) in n.occupations.iter().zip(&self.modes).enumerate() {
            if occ > mode.cap {
                return Err(Error::OccupationOutOfRange {
                    mode: k,
                    occupation: occ,
                    cap: mode.cap,
                });
            }
        }
        Ok(())
    }
}

/// Calorimeter energy eigenstate given by its mode occupations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Microstate {
    pub occupations: Vec<u32>,
}

impl Microstate {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self { occupations }
    }

    pub fn ground(n_modes: usize) -> Self {
        Self::new(vec![0; n_modes])
    }

    /// Two-level-system microstate with the listed modes excited.
    pub fn with_excited(n_modes: usize, excited: &[usize]) -> Self {
        let mut n = Self::ground(n_modes);
        for &k in excited {
            n.occupations[k] = 1;
        }
        n
    }

    pub fn excitations(&self) -> u32 {
        self.occupations.iter().sum()
    }

    pub fn energy<T: Real>(&self, cal: &CalorimeterModel<T>) -> T {
        self.occupations
            .iter()
            .zip(cal.modes())
            .map(|(&n, m)| T::from_u32(n).unwrap() * m.energy)
            .sum()
    }
}

/// Per-mode rates `Γ↑,k(n)` and `Γ↓,k(n)` out of one microstate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRates<T> {
    pub up: Vec<T>,
    pub down: Vec<T>,
}

impl<T: Real> TransitionRates<T> {
    pub fn total_up(&self) -> T {
        self.up.iter().copied().sum()
    }

    pub fn total_down(&self) -> T {
        self.down.iter().copied().sum()
    }
}

/// Energy-shell rates `Γ↑(E)`, `Γ↓(E)` averaged over the shell's microstates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorRates<T> {
    pub up: T,
    pub down: T,
}

#[inline]
fn mode_rates<T: Real>(mode: &Mode<T>, occupation: u32) -> (T, T) {
    // ⟨n|d†d|n⟩ = n and ⟨n|d d†|n⟩ = n + 1, with creation blocked at the cap.
    let up = mode.coupling_sq * T::from_u32(occupation).unwrap();
    let down = if occupation < mode.cap {
        mode.coupling_sq * T::from_u32(occupation + 1).unwrap()
    } else {
        T::zero()
    };
    (up, down)
}

pub fn rates_for_microstate<T: Real>(
    cal: &CalorimeterModel<T>,
    n: &Microstate,
) -> Result<TransitionRates<T>> {
    cal.check_microstate(n)?;
    let (up, down) = cal
        .modes()
        .iter()
        .zip(&n.occupations)
        .map(|(m, &occ)| mode_rates(m, occ))
        .unzip();
    Ok(TransitionRates { up, down })
}

/// Coefficients of `∏_{l ∈ modes} (1 + x + … + x^{cap_l})`, i.e. the number of
/// occupation patterns per total excitation count.
fn shell_counts<T: Real>(caps: impl Iterator<Item = u32>, max: usize) -> Vec<T> {
    let mut poly = vec![T::zero(); max + 1];
    poly[0] = T::one();
    let mut deg = 0usize;
    for cap in caps {
        let cap = cap as usize;
        let mut next = vec![T::zero(); max + 1];
        for (i, &c) in poly.iter().enumerate().take(deg + 1) {
            if c == T::zero() {
                continue;
            }
            for j in 0..=cap {
                if i + j <= max {
                    next[i + j] += c;
                }
            }
        }
        deg = (deg + cap).min(max);
        poly = next;
    }
    poly
}

/// Number of microstates with `m` total excitations, for every `m`.
pub(crate) fn shell_multiplicities<T: Real>(cal: &CalorimeterModel<T>) -> Vec<T> {
    let max = cal.max_excitations() as usize;
    shell_counts(cal.modes().iter().map(|m| m.cap), max)
}

/// `Γ↑/↓(E = m ε) = [1/N(E)] Σ_{k, n: |n| = m} Γ↑/↓,k(n)`, evaluated by
/// counting occupation patterns of the remaining modes instead of
/// enumerating microstates.
pub fn rates_for_energy<T: Real>(cal: &CalorimeterModel<T>, m: u32) -> Result<SectorRates<T>> {
    if cal.resolution() != Resolution::Microcanonical {
        return Err(Error::ResolutionMismatch {
            expected: "microcanonical",
        });
    }
    let max = cal.max_excitations();
    if m > max {
        return Err(Error::ExcitationOutOfRange { m, max });
    }
    let m = m as usize;
    let modes = cal.modes();
    let total = shell_multiplicities(cal)[m];
    let mut up = T::zero();
    let mut down = T::zero();
    for (k, mode) in modes.iter().enumerate() {
        let others: Vec<T> = shell_counts(
            modes
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != k)
                .map(|(_, md)| md.cap),
            m,
        );
        for occ in 0..=mode.cap.min(m as u32) {
            let ways = others[m - occ as usize];
            let (u, d) = mode_rates(mode, occ);
            up += ways * u;
            down += ways * d;
        }
    }
    Ok(SectorRates {
        up: up / total,
        down: down / total,
    })
}

/// Calorimeter update for a jump on `channel.mode`: a qubit down-jump adds a
/// quantum to the mode, an up-jump removes one.
pub fn apply_jump_to_microstate<T: Real>(
    cal: &CalorimeterModel<T>,
    n: &Microstate,
    channel: Channel,
) -> Result<Microstate> {
    cal.check_microstate(n)?;
    let k = channel
        .mode
        .ok_or_else(|| Error::ForbiddenJump("microstate jump needs a mode index".into()))?;
    let mode = cal.modes().get(k).ok_or_else(|| {
        Error::ForbiddenJump(format!("mode {k} does not exist"))
    })?;
    let mut next = n.clone();
    let occ = &mut next.occupations[k];
    match channel.direction {
        Direction::Down => {
            if *occ >= mode.cap {
                return Err(Error::ForbiddenJump(format!(
                    "mode {k} is saturated at occupation {}",
                    mode.cap
                )));
            }
            *occ += 1;
        }
        Direction::Up => {
            if *occ == 0 {
                return Err(Error::ForbiddenJump(format!("mode {k} is empty")));
            }
            *occ -= 1;
        }
    }
    Ok(next)
}
