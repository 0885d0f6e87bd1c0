//! Physical constants, unit conversions and the derivation of model couplings
//! from measured quantities.
//!
//! Internally the simulator works with energies in eV and `ħ = 1`, so the time
//! unit is `ħ/eV ≈ 6.582e-16 s` and an angular frequency in rad/s maps to an
//! energy by multiplication with `ħ` in eV·s.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, J·s (exact, SI 2019).
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m (CODATA 2018).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Reduced Planck constant, J·s.
pub const HBAR_J_S: f64 = PLANCK_J_S / TAU;
/// Planck constant, eV·s.
pub const PLANCK_EV_S: f64 = PLANCK_J_S / ELEMENTARY_CHARGE;
/// Reduced Planck constant, eV·s. This is also the length of one internal time unit in seconds.
pub const HBAR_EV_S: f64 = HBAR_J_S / ELEMENTARY_CHARGE;

/// Refractive index of GaN used when none is configured.
pub const DEFAULT_GAN_INDEX: f64 = 2.4;

const NM: f64 = 1e-9;

/// Conversions between SI quantities and the internal `ħ = 1`, eV-based units.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitSystem;

impl UnitSystem {
    pub fn ev_to_rad_s(energy_ev: f64) -> f64 {
        energy_ev / HBAR_EV_S
    }

    pub fn rad_s_to_ev(omega: f64) -> f64 {
        omega * HBAR_EV_S
    }

    pub fn seconds_to_internal(t: f64) -> f64 {
        t / HBAR_EV_S
    }

    pub fn internal_to_seconds(t: f64) -> f64 {
        t * HBAR_EV_S
    }

    /// Ordinary frequency (Hz) of a photon or transition of the given energy.
    pub fn ev_to_hz(energy_ev: f64) -> f64 {
        energy_ev / PLANCK_EV_S
    }
}

/// Measured quantities from which the drive coupling of the model is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentalParams {
    /// Radiative lifetime, s.
    pub radiative_lifetime: f64,
    /// Ground-to-first-excited transition energy, eV.
    pub transition_energy: f64,
    pub refractive_index: f64,
    /// Time-averaged power density, W/m².
    pub avg_power_density: f64,
    /// Pulse repetition rate, Hz.
    pub rep_rate: f64,
    /// Pulse duration, s.
    pub pulse_duration_fwhm: f64,
}

/// Chain of derived quantities: dipole moment, peak field and coupling `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoupling {
    pub dipole_e_nm: f64,
    pub field_v_m: f64,
    pub coupling_rad_s: f64,
}

impl ExperimentalParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("radiative_lifetime", self.radiative_lifetime),
            ("transition_energy", self.transition_energy),
            ("avg_power_density", self.avg_power_density),
            ("rep_rate", self.rep_rate),
            ("pulse_duration_fwhm", self.pulse_duration_fwhm),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.refractive_index >= 1.0) {
            return Err(Error::Domain(format!(
                "refractive index must be >= 1, got {}",
                self.refractive_index
            )));
        }
        Ok(())
    }

    /// Derive the coupling `b`. `field_override` replaces the field computed from
    /// the average intensity (V/m).
    pub fn derive_coupling(&self, field_override: Option<f64>) -> Result<DerivedCoupling> {
        self.validate()?;
        let dipole =
            dipole_from_lifetime(self.radiative_lifetime, self.transition_energy, self.refractive_index)?;
        let field = match field_override {
            Some(f) => f,
            None => field_from_avg_intensity(self.avg_power_density, self.rep_rate, self.pulse_duration_fwhm)?,
        };
        let coupling = rabi_coupling(dipole, field)?;
        Ok(DerivedCoupling {
            dipole_e_nm: dipole,
            field_v_m: field,
            coupling_rad_s: coupling,
        })
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Transition dipole moment (e·nm) of a two-level emitter with radiative
/// lifetime `tau` (s), transition energy `transition_ev` and host refractive index `n`:
///
/// ```text
/// |M| = sqrt(3 ε0 c³ ħ / (τ · 8π² ν³ · n)),   ν = E / h
/// ```
///
/// `ν` is the ordinary frequency; with `ω = 2πν` this is the usual
/// spontaneous-emission relation `|M|² = 3π ε0 ħ c³ / (τ n ω³)`.
pub fn dipole_from_lifetime(tau: f64, transition_ev: f64, n: f64) -> Result<f64> {
    require_positive("lifetime", tau)?;
    require_positive("transition energy", transition_ev)?;
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Domain(format!("refractive index must be >= 1, got {n}")));
    }
    let nu = UnitSystem::ev_to_hz(transition_ev);
    let m2 = 3.0 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT.powi(3) * HBAR_J_S
        / (tau * 8.0 * PI * PI * nu.powi(3) * n);
    Ok(m2.sqrt() / (ELEMENTARY_CHARGE * NM))
}

/// Inverse of [`dipole_from_lifetime`]: the radiative lifetime (s) implied by a dipole moment (e·nm).
pub fn lifetime_from_dipole(dipole_e_nm: f64, transition_ev: f64, n: f64) -> Result<f64> {
    require_positive("dipole moment", dipole_e_nm)?;
    require_positive("transition energy", transition_ev)?;
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Domain(format!("refractive index must be >= 1, got {n}")));
    }
    let m = dipole_e_nm * ELEMENTARY_CHARGE * NM;
    let nu = UnitSystem::ev_to_hz(transition_ev);
    Ok(3.0 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT.powi(3) * HBAR_J_S / (m * m * 8.0 * PI * PI * nu.powi(3) * n))
}

/// Field amplitude (V/m) during a pulse, from the time-averaged intensity
/// `sqrt(2 I_avg / (c ε0 f_rep τ_p))`.
pub fn field_from_avg_intensity(avg_intensity: f64, rep_rate: f64, duration: f64) -> Result<f64> {
    if !(avg_intensity.is_finite() && avg_intensity >= 0.0) {
        return Err(Error::Domain(format!("intensity must be non-negative, got {avg_intensity}")));
    }
    require_positive("repetition rate", rep_rate)?;
    require_positive("pulse duration", duration)?;
    Ok((2.0 * avg_intensity / (SPEED_OF_LIGHT * VACUUM_PERMITTIVITY * rep_rate * duration)).sqrt())
}

/// Coupling `b = |M| E0 / (2ħ)` in rad/s (half the Rabi frequency) for a dipole
/// in e·nm and a field in V/m.
pub fn rabi_coupling(dipole_e_nm: f64, field_v_m: f64) -> Result<f64> {
    if !(dipole_e_nm.is_finite() && dipole_e_nm >= 0.0) {
        return Err(Error::Domain(format!("dipole moment must be non-negative, got {dipole_e_nm}")));
    }
    if !(field_v_m.is_finite() && field_v_m >= 0.0) {
        return Err(Error::Domain(format!("field must be non-negative, got {field_v_m}")));
    }
    Ok(dipole_e_nm * ELEMENTARY_CHARGE * NM * field_v_m / (2.0 * HBAR_J_S))
}

/// Amplitude ratio of the second- to third-order nonlinear polarization,
/// `ε0 χ2 E² / (ε0 χ3 E³) = χ2 / (χ3 E)`.
pub fn classical_polarization_ratio(chi2: f64, chi3: f64, field_v_m: f64) -> Result<f64> {
    require_positive("chi2", chi2)?;
    require_positive("chi3", chi3)?;
    require_positive("field", field_v_m)?;
    Ok(chi2 / (chi3 * field_v_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hbar_matches_codata_value() {
        assert_relative_eq!(HBAR_EV_S, 6.582_119_569e-16, max_relative = 1e-10);
        assert_relative_eq!(HBAR_J_S, 1.054_571_817e-34, max_relative = 1e-9);
        assert_relative_eq!(UnitSystem::ev_to_rad_s(1.0), 1.519_267_447e15, max_relative = 1e-9);
    }

    #[test]
    fn energy_frequency_round_trip() {
        for e in [1e-6, 0.07, 0.87, 2.61, 1e3] {
            let back = UnitSystem::rad_s_to_ev(UnitSystem::ev_to_rad_s(e));
            assert!(((back - e) / e).abs() < 1e-12);
            let t = UnitSystem::internal_to_seconds(UnitSystem::seconds_to_internal(e * 1e-12));
            assert!(((t - e * 1e-12) / (e * 1e-12)).abs() < 1e-12);
        }
    }

    #[test]
    fn dipole_from_typical_lifetime() {
        let m = dipole_from_lifetime(250e-12, 2.61, 2.4).unwrap();
        assert!((m - 0.4969).abs() < 5e-4, "{m}");
        let m440 = dipole_from_lifetime(440e-12, 2.61, 2.4).unwrap();
        assert!((m440 - 0.3746).abs() < 5e-4, "{m440}");
        assert_relative_eq!(m440, m * (250.0f64 / 440.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn dipole_scales_as_inverse_sqrt_lifetime() {
        let a = dipole_from_lifetime(300e-12, 2.0, 2.4).unwrap();
        let b = dipole_from_lifetime(1200e-12, 2.0, 2.4).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn dipole_agrees_with_angular_frequency_form() {
        let (tau, e, n) = (250e-12, 2.61, 2.4);
        let w = UnitSystem::ev_to_rad_s(e);
        let m2 = 3.0 * PI * VACUUM_PERMITTIVITY * HBAR_J_S * SPEED_OF_LIGHT.powi(3) / (tau * n * w.powi(3));
        let m = m2.sqrt() / (ELEMENTARY_CHARGE * NM);
        assert_relative_eq!(m, dipole_from_lifetime(tau, e, n).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn lifetime_inverse_round_trip() {
        for tau in [50e-12, 250e-12, 440e-12, 2e-9] {
            let m = dipole_from_lifetime(tau, 2.61, 2.4).unwrap();
            let back = lifetime_from_dipole(m, 2.61, 2.4).unwrap();
            assert!(((back - tau) / tau).abs() < 1e-9);
        }
    }

    #[test]
    fn dipole_rejects_bad_inputs() {
        assert!(matches!(dipole_from_lifetime(0.0, 2.61, 2.4), Err(Error::Domain(_))));
        assert!(matches!(dipole_from_lifetime(1e-9, -1.0, 2.4), Err(Error::Domain(_))));
        assert!(matches!(dipole_from_lifetime(1e-9, 2.61, 0.9), Err(Error::Domain(_))));
    }

    #[test]
    fn field_from_intensity() {
        // 283 kW/cm² = 2.83e9 W/m²
        let e0 = field_from_avg_intensity(2.83e9, 80e6, 100e-15).unwrap();
        assert!((e0 - 5.1627e8).abs() < 1e4, "{e0}");
        assert_eq!(field_from_avg_intensity(0.0, 80e6, 100e-15).unwrap(), 0.0);
        let e4 = field_from_avg_intensity(4.0 * 2.83e9, 80e6, 100e-15).unwrap();
        assert_relative_eq!(e4, 2.0 * e0, max_relative = 1e-14);
        assert!(field_from_avg_intensity(1.0, 0.0, 1e-13).is_err());
        assert!(field_from_avg_intensity(-1.0, 1.0, 1e-13).is_err());
    }

    #[test]
    fn rabi_coupling_values() {
        let b = rabi_coupling(0.5, 2.2e8).unwrap();
        assert!((b - 8.356e13).abs() < 1e10, "{b}");
        assert!((b - 8.4e13).abs() < 1e12);
        assert_eq!(rabi_coupling(0.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(rabi_coupling(0.5, 1.1e8).unwrap(), b / 2.0, max_relative = 1e-14);
        assert!(rabi_coupling(-0.1, 1.0).is_err());
    }

    #[test]
    fn rabi_coupling_same_in_internal_units() {
        // dipole (e·nm) × field (V/m) × 1e-9 is an energy in eV; halve it and
        // convert with ħ in eV·s.
        for (m, e0) in [(0.5, 2.2e8), (0.37, 5.16e8), (1.2, 3.0e6)] {
            let si = rabi_coupling(m, e0).unwrap();
            let internal = UnitSystem::ev_to_rad_s(m * e0 * NM / 2.0);
            assert!(((si - internal) / si).abs() < 1e-10);
        }
    }

    #[test]
    fn classical_ratio() {
        let r = classical_polarization_ratio(1.3e-11, 5.3e-19, 2.2e8).unwrap();
        assert!((r - 0.1115).abs() < 1e-4, "{r}");
        assert_relative_eq!(classical_polarization_ratio(1.3e-11, 5.3e-19, 1.1e8).unwrap(), 2.0 * r, max_relative = 1e-14);
        assert_eq!(classical_polarization_ratio(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(classical_polarization_ratio(1.0, 0.0, 1.0).is_err());
        assert!(classical_polarization_ratio(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn derived_chain_with_field_override() {
        let p = ExperimentalParams {
            radiative_lifetime: 250e-12,
            transition_energy: 2.61,
            refractive_index: 2.4,
            avg_power_density: 2.83e9,
            rep_rate: 80e6,
            pulse_duration_fwhm: 100e-15,
        };
        let verbatim = p.derive_coupling(None).unwrap();
        assert!((verbatim.field_v_m - 5.1627e8).abs() < 1e4);
        let quoted = p.derive_coupling(Some(2.2e8)).unwrap();
        assert!((quoted.coupling_rad_s - 8.4e13).abs() < 1e12);
        let mut bad = p.clone();
        bad.refractive_index = 0.5;
        assert!(bad.derive_coupling(None).is_err());
    }
}
