//! Physical system: qubit operators, drive protocols, calorimeter state
//! spaces and the calorimeter-dependent transition rates.
//!
//! Units are fixed throughout the crate: `ħ = 1` and the qubit gap `ω0 = 1`,
//! so energies are in `ħω0`, times in `1/ω0` and rates in `ω0`.

mod calorimeter;
mod drive;
mod sectors;

pub use calorimeter::{
    apply_jump_to_microstate, rates_for_energy, rates_for_microstate, CalorimeterModel,
    Microstate, Mode, Resolution, SectorRates, TransitionRates,
};
pub use drive::{power_operator, qubit_hamiltonian, DriveKind, DriveProtocol};
pub use sectors::{Exit, Gain, Sector, SectorLabel, SectorSpace, MAX_MICROSTATES};

use serde::{Deserialize, Serialize};

/// Direction of a qubit jump. `Down` applies `a` to the qubit and deposits
/// one quantum into the calorimeter; `Up` applies `a†` and removes one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// A jump channel: direction plus the calorimeter mode involved. The mode is
/// `None` in microcanonical resolution, where only the total energy is tracked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub direction: Direction,
    pub mode: Option<usize>,
}

impl Channel {
    pub fn up(mode: usize) -> Self {
        Self {
            direction: Direction::Up,
            mode: Some(mode),
        }
    }

    pub fn down(mode: usize) -> Self {
        Self {
            direction: Direction::Down,
            mode: Some(mode),
        }
    }

    pub fn aggregate(direction: Direction) -> Self {
        Self {
            direction,
            mode: None,
        }
    }
}
