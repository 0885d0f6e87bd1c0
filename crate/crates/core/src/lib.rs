//! Simulation and analysis of multi-photon absorption in periodically driven
//! few-level ladders.
//!
//! * [`units`]: constants and the measured-quantity → coupling chain.
//! * [`model`]: the driven nearest-neighbour ladder.
//! * [`propagate`]: fixed-step RK4 for the Schrödinger equation.
//! * [`floquet`]: monodromy, quasienergies, time-averaged transition
//!   probabilities and convolved absorption spectra.
//! * [`pulsed`]: finite Gaussian pulses, excitation spectra and power scans.
//! * [`fitkit`]: power-law, Malus and exponentially-modified-Gaussian fits.
//! * [`config`]: the JSON run configuration.
//! * [`validation`]: end-to-end checks of the model against reference numbers.

pub mod config;
pub mod error;
pub mod export;
pub mod fitkit;
pub mod floquet;
pub mod model;
pub mod peaks;
pub mod propagate;
pub mod pulsed;
pub mod units;
pub mod validation;

pub use error::{Error, Result};
pub use model::{reference_system, DriveKind, DriveSpec, LadderSystem, Parity};
pub use num_complex::Complex64 as C64;
