//! The periodically driven ladder: level energies, parities, nearest-neighbour
//! dipole couplings and the drive field that modulates them.
//!
//! All energies are in eV and `ħ = 1`; couplings are stored as energies and can
//! be given in rad/s through [`LadderSystem::from_rad_s`].

use std::f64::consts::{LN_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::UnitSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flipped(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

/// A ladder of levels with strictly alternating parity, coupled only between
/// neighbours. Level `k` couples to `k + 1` with strength `couplings[k]` (eV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSystem {
    level_energies: Vec<f64>,
    parities: Vec<Parity>,
    couplings: Vec<f64>,
}

impl LadderSystem {
    pub fn new(level_energies: Vec<f64>, parities: Vec<Parity>, couplings: Vec<f64>) -> Result<Self> {
        let n = level_energies.len();
        if n < 2 {
            return Err(Error::Domain(format!("a ladder needs at least 2 levels, got {n}")));
        }
        if level_energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("level energies must be finite".into()));
        }
        if level_energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("level energies must be strictly increasing".into()));
        }
        if parities.len() != n {
            return Err(Error::Domain(format!("expected {n} parities, got {}", parities.len())));
        }
        if parities.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(
                "parities must alternate; dipole coupling connects opposite parities only".into(),
            ));
        }
        if couplings.len() != n - 1 {
            return Err(Error::Domain(format!("expected {} couplings, got {}", n - 1, couplings.len())));
        }
        if couplings.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Domain("couplings must be finite and non-negative".into()));
        }
        Ok(Self {
            level_energies,
            parities,
            couplings,
        })
    }

    /// Ladder starting from an even ground state.
    pub fn alternating(level_energies: Vec<f64>, couplings: Vec<f64>) -> Result<Self> {
        let parities = std::iter::successors(Some(Parity::Even), |p| Some(p.flipped()))
            .take(level_energies.len())
            .collect();
        Self::new(level_energies, parities, couplings)
    }

    pub fn from_rad_s(level_energies: Vec<f64>, parities: Vec<Parity>, couplings_rad_s: &[f64]) -> Result<Self> {
        let couplings = couplings_rad_s.iter().map(|&w| UnitSystem::rad_s_to_ev(w)).collect();
        Self::new(level_energies, parities, couplings)
    }

    pub fn dim(&self) -> usize {
        self.level_energies.len()
    }

    pub fn level_energies(&self) -> &[f64] {
        &self.level_energies
    }

    pub fn parities(&self) -> &[Parity] {
        &self.parities
    }

    /// Couplings in eV (`ħ = 1`).
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn couplings_rad_s(&self) -> Vec<f64> {
        self.couplings.iter().map(|&c| UnitSystem::ev_to_rad_s(c)).collect()
    }

    pub fn transition_energy(&self, from: usize, to: usize) -> f64 {
        (self.level_energies[to] - self.level_energies[from]).abs()
    }

    /// Same ladder with every level shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            level_energies: self.level_energies.iter().map(|e| e + delta).collect(),
            ..self.clone()
        }
    }

    /// Same ladder with every energy and coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            level_energies: self.level_energies.iter().map(|e| e * factor).collect(),
            parities: self.parities.clone(),
            couplings: self.couplings.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn with_couplings_scaled(&self, factor: f64) -> Self {
        Self {
            couplings: self.couplings.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }
}

/// Ground state at 0, exciton at 2.61 eV, second electron level 70 meV above,
/// `b = 8.4e13 rad/s` and `b'/b = 0.44`.
pub fn reference_system() -> LadderSystem {
    let b = UnitSystem::rad_s_to_ev(REFERENCE_COUPLING_RAD_S);
    LadderSystem::new(
        vec![0.0, 2.61, 2.68],
        vec![Parity::Even, Parity::Odd, Parity::Even],
        vec![b, REFERENCE_COUPLING_RATIO * b],
    )
    .expect("canonical system is valid")
}

pub const REFERENCE_COUPLING_RAD_S: f64 = 8.4e13;
pub const REFERENCE_COUPLING_RATIO: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKind {
    Monochromatic,
    /// Gaussian field envelope `exp(-2 ln2 t² / fwhm²)` centred at `t = 0`;
    /// `duration_fwhm` is in seconds.
    GaussianPulse { duration_fwhm: f64 },
}

/// Laser drive. The off-diagonal element between levels `k` and `k+1` is
/// `2 b_k · amplitude_scale · g(t) · sin(ω t + carrier_phase)` with `g ≡ 1`
/// for a monochromatic drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub kind: DriveKind,
    /// Photon energy `ħω`, eV.
    pub photon_energy: f64,
    pub amplitude_scale: f64,
    pub carrier_phase: f64,
}

impl DriveSpec {
    pub fn monochromatic(photon_energy: f64) -> Self {
        Self {
            kind: DriveKind::Monochromatic,
            photon_energy,
            amplitude_scale: 1.0,
            carrier_phase: 0.0,
        }
    }

    pub fn gaussian_pulse(photon_energy: f64, duration_fwhm: f64, peak_scale: f64, carrier_phase: f64) -> Self {
        Self {
            kind: DriveKind::GaussianPulse { duration_fwhm },
            photon_energy,
            amplitude_scale: peak_scale,
            carrier_phase,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.amplitude_scale = scale;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.carrier_phase = phase;
        self
    }

    /// Carrier period `2π/ω` in internal time units.
    pub fn period(&self) -> f64 {
        TAU / self.photon_energy
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_energy.is_finite() && self.photon_energy > 0.0) {
            return Err(Error::Domain(format!("photon energy must be positive, got {}", self.photon_energy)));
        }
        if !self.amplitude_scale.is_finite() || !self.carrier_phase.is_finite() {
            return Err(Error::Domain("drive scale and phase must be finite".into()));
        }
        if let DriveKind::GaussianPulse { duration_fwhm } = self.kind {
            if !(duration_fwhm.is_finite() && duration_fwhm > 0.0) {
                return Err(Error::Domain(format!("pulse duration must be positive, got {duration_fwhm}")));
            }
        }
        Ok(())
    }
}

/// A Hamiltonian the integrator can apply to a state.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    /// `out = H(t) psi`.
    fn apply(&self, t: f64, psi: &[C64], out: &mut [C64]);

    /// Upper bound on the operator norm of `H(t)` over all `t`.
    fn norm_bound(&self) -> f64;

    /// Carrier period, if the generator oscillates.
    fn carrier_period(&self) -> Option<f64>;
}

/// A ladder together with its drive, in internal units.
#[derive(Debug, Clone)]
pub struct DrivenLadder {
    energies: Vec<f64>,
    couplings: Vec<f64>,
    omega: f64,
    scale: f64,
    phase: f64,
    /// `2 ln2 / fwhm²` in internal time units; `None` for a monochromatic drive.
    envelope_rate: Option<f64>,
}

impl DrivenLadder {
    pub fn new(system: &LadderSystem, drive: &DriveSpec) -> Result<Self> {
        drive.validate()?;
        let envelope_rate = match drive.kind {
            DriveKind::Monochromatic => None,
            DriveKind::GaussianPulse { duration_fwhm } => {
                let fwhm = UnitSystem::seconds_to_internal(duration_fwhm);
                Some(2.0 * LN_2 / (fwhm * fwhm))
            }
        };
        Ok(Self {
            energies: system.level_energies.clone(),
            couplings: system.couplings.clone(),
            omega: drive.photon_energy,
            scale: drive.amplitude_scale,
            phase: drive.carrier_phase,
            envelope_rate,
        })
    }

    pub fn envelope(&self, t: f64) -> f64 {
        match self.envelope_rate {
            None => 1.0,
            Some(rate) => (-rate * t * t).exp(),
        }
    }

    /// Common factor of all off-diagonal elements, `2 · scale · g(t) · sin(ωt + φ)`.
    #[inline]
    pub fn field(&self, t: f64) -> f64 {
        2.0 * self.scale * self.envelope(t) * (self.omega * t + self.phase).sin()
    }

    pub fn matrix(&self, t: f64) -> DMatrix<C64> {
        let n = self.energies.len();
        let f = self.field(t);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(self.energies[i], 0.0)
            } else if j == i + 1 {
                C64::new(self.couplings[i] * f, 0.0)
            } else if i == j + 1 {
                C64::new(self.couplings[j] * f, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

impl Generator for DrivenLadder {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    #[inline]
    fn apply(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let f = self.field(t);
        let n = self.energies.len();
        for k in 0..n {
            let mut acc = psi[k] * self.energies[k];
            if k > 0 {
                acc += psi[k - 1] * (self.couplings[k - 1] * f);
            }
            if k + 1 < n {
                acc += psi[k + 1] * (self.couplings[k] * f);
            }
            out[k] = acc;
        }
    }

    fn norm_bound(&self) -> f64 {
        let n = self.energies.len();
        let amp = 2.0 * self.scale.abs();
        (0..n)
            .map(|k| {
                let left = if k > 0 { self.couplings[k - 1] } else { 0.0 };
                let right = if k + 1 < n { self.couplings[k] } else { 0.0 };
                self.energies[k].abs() + amp * (left + right)
            })
            .fold(0.0, f64::max)
    }

    fn carrier_period(&self) -> Option<f64> {
        Some(TAU / self.omega)
    }
}

/// `H(t)` for a monochromatic drive.
pub fn hamiltonian_at(system: &LadderSystem, drive: &DriveSpec, t: f64) -> Result<DMatrix<C64>> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite, got {t}")));
    }
    if drive.kind != DriveKind::Monochromatic {
        return Err(Error::Precondition(
            "hamiltonian_at takes a monochromatic drive; pulses are handled by the pulsed module".into(),
        ));
    }
    Ok(DrivenLadder::new(system, drive)?.matrix(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at_quarter_period(system: &LadderSystem, w: f64) -> DMatrix<C64> {
        let drive = DriveSpec::monochromatic(w);
        hamiltonian_at(system, &drive, drive.period() / 4.0).unwrap()
    }

    #[test]
    fn reference_system_parameters() {
        let s = reference_system();
        assert_eq!(s.transition_energy(0, 1), 2.61);
        assert!((s.transition_energy(1, 2) - 0.070).abs() < 1e-12);
        assert_eq!(s.parities(), &[Parity::Even, Parity::Odd, Parity::Even]);
        let b = s.couplings_rad_s();
        assert!((b[0] - 8.4e13).abs() < 1.0);
        assert!((b[1] / b[0] - 0.44).abs() < 1e-12);
        let ratio = b[0] / UnitSystem::ev_to_rad_s(2.61);
        assert!((ratio - 0.0212).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn diagonal_at_time_zero() {
        let s = reference_system();
        let h = hamiltonian_at(&s, &DriveSpec::monochromatic(0.87), 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { s.level_energies()[i] } else { 0.0 };
                assert_eq!(h[(i, j)], C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn couplings_at_quarter_period() {
        let s = reference_system();
        let h = at_quarter_period(&s, 0.87);
        let b = UnitSystem::rad_s_to_ev(8.4e13);
        assert!((h[(0, 1)].re - 2.0 * b).abs() < 1e-14);
        assert!((h[(1, 2)].re - 2.0 * 0.44 * b).abs() < 1e-14);
        assert_eq!(h[(0, 2)], C64::new(0.0, 0.0));
    }

    #[test]
    fn pulse_rejected_by_hamiltonian_at() {
        let d = DriveSpec::gaussian_pulse(0.87, 100e-15, 1.0, 0.0);
        assert!(matches!(hamiltonian_at(&reference_system(), &d, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_ladders() {
        assert!(LadderSystem::alternating(vec![0.0], vec![]).is_err());
        assert!(LadderSystem::alternating(vec![0.0, 1.0, 0.5], vec![0.1, 0.1]).is_err());
        assert!(LadderSystem::alternating(vec![0.0, 1.0], vec![-0.1]).is_err());
        assert!(LadderSystem::alternating(vec![0.0, 1.0], vec![0.1, 0.2]).is_err());
        assert!(LadderSystem::new(vec![0.0, 1.0], vec![Parity::Odd, Parity::Odd], vec![0.1]).is_err());
    }

    #[test]
    fn apply_matches_matrix() {
        let s = LadderSystem::alternating(vec![0.0, 1.0, 1.3, 2.2, 2.5], vec![0.1, 0.05, 0.2, 0.03]).unwrap();
        let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(0.4).with_phase(0.3)).unwrap();
        let psi: Vec<C64> = (0..5).map(|k| C64::new(k as f64 * 0.3 - 0.5, 0.2 * k as f64)).collect();
        let mut out = vec![C64::default(); 5];
        for t in [0.0, 1.3, 7.7] {
            g.apply(t, &psi, &mut out);
            let m = g.matrix(t);
            for i in 0..5 {
                let expect: C64 = (0..5).map(|j| m[(i, j)] * psi[j]).sum();
                assert!((out[i] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn norm_bound_dominates_spectral_norm() {
        let s = reference_system();
        let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(0.87).with_scale(3.0)).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let norm = g.matrix(t).norm();
            // Frobenius norm of a 3×3 exceeds the spectral norm by at most sqrt(3)
            assert!(norm / 3f64.sqrt() <= g.norm_bound() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn hermitian_traceless_drive_and_periodic(t in -50.0f64..50.0, w in 0.3f64..3.0, phase in 0.0f64..6.3) {
            let s = reference_system();
            let d = DriveSpec::monochromatic(w).with_phase(phase);
            let h = hamiltonian_at(&s, &d, t).unwrap();
            prop_assert_eq!(&h, &h.adjoint());
            let drive_trace: f64 = (0..3).map(|i| h[(i, i)].re - s.level_energies()[i]).sum();
            prop_assert_eq!(drive_trace, 0.0);
            prop_assert_eq!(h[(0, 2)], C64::new(0.0, 0.0));
            let h2 = hamiltonian_at(&s, &d, t + d.period()).unwrap();
            prop_assert!((h - h2).camax() < 1e-12);
        }
    }
}
