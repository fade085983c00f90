use serde::{Deserialize, Serialize};

use super::calorimeter::{rates_for_energy, rates_for_microstate, shell_multiplicities};
use super::{CalorimeterModel, Channel, Direction, Microstate, Resolution};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Upper bound on the number of enumerated microstates.
pub const MAX_MICROSTATES: u128 = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorLabel {
    Microstate(Microstate),
    Excitations(u32),
}

/// Jump out of a sector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exit<T> {
    pub channel: Channel,
    pub rate: T,
    pub target: usize,
}

/// Jump into a sector from `source`, with the rate evaluated in the source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gain<T> {
    pub source: usize,
    pub direction: Direction,
    pub rate: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sector<T> {
    pub label: SectorLabel,
    pub energy: T,
    /// Number of microstates represented (1 in microstate resolution).
    pub multiplicity: T,
    /// Sum of all up-jump rates out of this sector.
    pub up_rate: T,
    /// Sum of all down-jump rates out of this sector.
    pub down_rate: T,
    pub exits: Vec<Exit<T>>,
    pub gains: Vec<Gain<T>>,
}

/// The calorimeter state space in the chosen resolution, with all rates and
/// sector couplings precomputed. Sector indices are dense `0..len()`.
#[derive(Clone, Debug)]
pub struct SectorSpace<T> {
    model: CalorimeterModel<T>,
    sectors: Vec<Sector<T>>,
    strides: Vec<usize>,
}

impl<T: Real> SectorSpace<T> {
    pub fn new(model: CalorimeterModel<T>) -> Result<Self> {
        let mut space = match model.resolution() {
            Resolution::Microstate => Self::microstate(model)?,
            Resolution::Microcanonical => Self::microcanonical(model)?,
        };
        space.link_gains();
        Ok(space)
    }

    fn microstate(model: CalorimeterModel<T>) -> Result<Self> {
        let count = model.microstate_count();
        if count > MAX_MICROSTATES {
            return Err(Error::SpaceTooLarge(count));
        }
        let count = count as usize;
        let mut strides = Vec::with_capacity(model.n_modes());
        let mut stride = 1usize;
        for m in model.modes() {
            strides.push(stride);
            stride *= m.cap as usize + 1;
        }
        let mut sectors = Vec::with_capacity(count);
        for index in 0..count {
            let occupations = model
                .modes()
                .iter()
                .zip(&strides)
                .map(|(m, &s)| ((index / s) % (m.cap as usize + 1)) as u32)
                .collect();
            let n = Microstate::new(occupations);
            let rates = rates_for_microstate(&model, &n)?;
            let mut exits = Vec::new();
            for k in 0..model.n_modes() {
                if rates.up[k] > T::zero() {
                    exits.push(Exit {
                        channel: Channel::up(k),
                        rate: rates.up[k],
                        target: index - strides[k],
                    });
                }
                if rates.down[k] > T::zero() {
                    exits.push(Exit {
                        channel: Channel::down(k),
                        rate: rates.down[k],
                        target: index + strides[k],
                    });
                }
            }
            sectors.push(Sector {
                energy: n.energy(&model),
                label: SectorLabel::Microstate(n),
                multiplicity: T::one(),
                up_rate: rates.total_up(),
                down_rate: rates.total_down(),
                exits,
                gains: Vec::new(),
            });
        }
        Ok(Self {
            model,
            sectors,
            strides,
        })
    }

    fn microcanonical(model: CalorimeterModel<T>) -> Result<Self> {
        let max = model.max_excitations();
        let counts = shell_multiplicities(&model);
        let quantum = model.quantum();
        let mut sectors = Vec::with_capacity(max as usize + 1);
        for m in 0..=max {
            let rates = rates_for_energy(&model, m)?;
            let idx = m as usize;
            let mut exits = Vec::new();
            if rates.up > T::zero() {
                exits.push(Exit {
                    channel: Channel::aggregate(Direction::Up),
                    rate: rates.up,
                    target: idx - 1,
                });
            }
            if rates.down > T::zero() {
                exits.push(Exit {
                    channel: Channel::aggregate(Direction::Down),
                    rate: rates.down,
                    target: idx + 1,
                });
            }
            sectors.push(Sector {
                label: SectorLabel::Excitations(m),
                energy: quantum * T::from_u32(m).unwrap(),
                multiplicity: counts[idx],
                up_rate: rates.up,
                down_rate: rates.down,
                exits,
                gains: Vec::new(),
            });
        }
        Ok(Self {
            model,
            sectors,
            strides: Vec::new(),
        })
    }

    fn link_gains(&mut self) {
        let mut gains: Vec<Vec<Gain<T>>> = vec![Vec::new(); self.sectors.len()];
        for (source, s) in self.sectors.iter().enumerate() {
            for e in &s.exits {
                gains[e.target].push(Gain {
                    source,
                    direction: e.channel.direction,
                    rate: e.rate,
                });
            }
        }
        for (s, g) in self.sectors.iter_mut().zip(gains) {
            s.gains = g;
        }
    }

    pub fn model(&self) -> &CalorimeterModel<T> {
        &self.model
    }

    pub fn resolution(&self) -> Resolution {
        self.model.resolution()
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn sectors(&self) -> &[Sector<T>] {
        &self.sectors
    }

    pub fn sector(&self, index: usize) -> &Sector<T> {
        &self.sectors[index]
    }

    /// Index of a microstate in microstate resolution.
    pub fn microstate_index(&self, n: &Microstate) -> Result<usize> {
        if self.resolution() != Resolution::Microstate {
            return Err(Error::ResolutionMismatch {
                expected: "microstate",
            });
        }
        self.model.check_microstate(n)?;
        Ok(n.occupations
            .iter()
            .zip(&self.strides)
            .map(|(&o, &s)| o as usize * s)
            .sum())
    }

    /// Total excitation count of a sector.
    pub fn excitations(&self, index: usize) -> u32 {
        match &self.sectors[index].label {
            SectorLabel::Microstate(n) => n.excitations(),
            SectorLabel::Excitations(m) => *m,
        }
    }

    /// Sector reached by `channel` from `index`, if that jump has a nonzero rate.
    pub fn jump_target(&self, index: usize, channel: Channel) -> Option<usize> {
        self.sectors[index]
            .exits
            .iter()
            .find(|e| e.channel == channel)
            .map(|e| e.target)
    }

    /// Sum over modes of `Γ↑,k + Γ↓,k` in a sector.
    pub fn total_rate(&self, index: usize) -> T {
        let s = &self.sectors[index];
        s.up_rate + s.down_rate
    }
}
