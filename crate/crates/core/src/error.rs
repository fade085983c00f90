use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid calorimeter model: {0}")]
    InvalidModel(String),

    #[error("invalid drive protocol: {0}")]
    InvalidDrive(String),

    #[error("microstate has {found} modes, calorimeter has {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("occupation {occupation} of mode {mode} exceeds cap {cap}")]
    OccupationOutOfRange { mode: usize, occupation: u32, cap: u32 },

    #[error("forbidden jump: {0}")]
    ForbiddenJump(String),

    #[error("operation requires {expected} resolution")]
    ResolutionMismatch { expected: &'static str },

    #[error("microcanonical resolution requires degenerate mode energies")]
    NonDegenerateModes,

    #[error("microstate space of {0} states is too large to enumerate")]
    SpaceTooLarge(u128),

    #[error("excitation count {m} outside 0..={max}")]
    ExcitationOutOfRange { m: u32, max: u32 },

    #[error("jump probability {dp} per step at t = {t} exceeds 0.1; use more steps")]
    StepTooCoarse { dp: f64, t: f64 },

    #[error("state norm vanished at t = {t}")]
    VanishingNorm { t: f64 },

    #[error("non-finite entries at t = {t}; integration step too large")]
    IntegratorBlowUp { t: f64 },

    #[error("block {sector} has eigenvalue {value:e} at t = {t}")]
    NegativeEigenvalue { t: f64, sector: usize, value: f64 },

    #[error("states live in different sector bases ({left} vs {right} blocks)")]
    BasisMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
