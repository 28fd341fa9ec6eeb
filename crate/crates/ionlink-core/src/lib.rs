//! Simulation and estimation kernels for a trapped-ion / photon entanglement
//! link with polarization-preserving quantum frequency conversion.
//!
//! The crate models the full signal chain of a barium-ion photon source:
//!
//! - [`atomic`] — eight-level optical Bloch / Lindblad dynamics of the
//!   excitation pulse, photon temporal profiles, software gating, and
//!   sequence timing.
//! - [`entangle`] — the ion-photon joint density matrix, its error channels
//!   (polarization swap, dephasing, background-noise floor, misalignment),
//!   ion rotations, and state readout.
//! - [`polarization`] — Jones calculus for waveplates, analyzers, and fiber
//!   birefringence, plus the analyzer calibration search.
//! - [`converter`] — the two-loop difference-frequency converter: efficiency
//!   curves, matched operating points, and the deterministic H/V swap.
//! - [`harness`] — Monte Carlo attempt loop composing all stages, fringe and
//!   phase scans, and time-tag record generation.
//! - [`analysis`] — estimators: density elements from counts, fidelity
//!   bounds, fringe fits, gap-distribution fits, and the error-budget table.
//!
//! All simulation is deterministic for a fixed RNG seed; randomness is always
//! passed in explicitly. The crate is `no_std` (with `alloc`) so the kernels
//! can be embedded; file formats and the CLI live in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod atomic;
pub mod converter;
pub mod entangle;
pub mod harness;
mod linalg;
pub mod oracle;
pub mod polarization;

pub use linalg::C64;

use core::fmt;

/// Errors reported by the simulation and estimation kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A branching fraction or probability lies outside `[0, 1]`, or a set of
    /// branching fractions does not sum to one.
    BadBranching,
    /// An input density matrix is not Hermitian within tolerance.
    NonHermitian,
    /// The integrator step is too coarse for the requested decay rate.
    StepTooLarge,
    /// A time grid or window argument is invalid.
    BadGrid(&'static str),
    /// Requested conversion efficiency exceeds the achievable peak.
    TargetAbovePeak,
    /// A Jones matrix that must be unitary is not.
    NonUnitary,
    /// Analyzer calibration cannot find structure to optimize (flat
    /// visibility landscape, e.g. a separable source).
    CalibrationImpossible,
    /// The target state passed to a fidelity computation is not pure.
    TargetNotPure,
    /// A fit was requested with too few or degenerate data points.
    UnderDetermined(&'static str),
    /// An estimator was given an empty or all-zero data set.
    EmptyData,
    /// A negative quantity where only non-negative values make sense.
    NegativeInput(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BadBranching => write!(f, "branching fractions must lie in [0,1] and sum to 1"),
            Error::NonHermitian => write!(f, "density matrix is not Hermitian"),
            Error::StepTooLarge => write!(f, "integrator step too large for decay rate"),
            Error::BadGrid(what) => write!(f, "invalid grid or window: {what}"),
            Error::TargetAbovePeak => write!(f, "target efficiency exceeds peak conversion"),
            Error::NonUnitary => write!(f, "matrix is not unitary"),
            Error::CalibrationImpossible => {
                write!(f, "visibility landscape is flat; calibration impossible")
            }
            Error::TargetNotPure => write!(f, "fidelity target must be a pure state"),
            Error::UnderDetermined(what) => write!(f, "under-determined fit: {what}"),
            Error::EmptyData => write!(f, "empty data set"),
            Error::NegativeInput(what) => write!(f, "negative input: {what}"),
        }
    }
}

impl core::error::Error for Error {}

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;

/// Photon wavelength labels for the two measured links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wavelength {
    /// Native emission, measured directly at the first analyzer.
    Nm493,
    /// Frequency-converted light after the two-loop converter.
    Nm780,
}

impl Wavelength {
    pub fn nanometers(self) -> u16 {
        match self {
            Wavelength::Nm493 => 493,
            Wavelength::Nm780 => 780,
        }
    }
}

impl fmt::Display for Wavelength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.nanometers())
    }
}
