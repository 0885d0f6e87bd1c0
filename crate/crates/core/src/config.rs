//! JSON run configuration. Every dimensional key carries its unit in the name;
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitkit::EmgOptions;
use crate::model::{LadderSystem, Parity};
use crate::pulsed::{PulseOptions, WINDOW_FWHM};
use crate::units::{DerivedCoupling, ExperimentalParams, UnitSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every simulation command; fit and synth runs may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemBlock>,
    #[serde(default)]
    pub drive: DriveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "level_energies_eV")]
    pub level_energies_ev: Vec<f64>,
    /// Defaults to alternating parity starting from even.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parities: Option<Vec<Parity>>,
    pub coupling: CouplingBlock,
}

/// Either a reference coupling `b` in rad/s or the measured quantities it is
/// derived from. `ratios` give each nearest-neighbour coupling relative to `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_rad_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentBlock>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub radiative_lifetime_ps: f64,
    #[serde(rename = "transition_energy_eV")]
    pub transition_energy_ev: f64,
    pub refractive_index: f64,
    #[serde(rename = "avg_power_density_W_m2")]
    pub avg_power_density_w_m2: f64,
    #[serde(rename = "rep_rate_Hz")]
    pub rep_rate_hz: f64,
    pub pulse_duration_fwhm_fs: f64,
    /// Replaces the peak field estimated from the average intensity.
    #[serde(rename = "peak_field_V_m", default, skip_serializing_if = "Option::is_none")]
    pub peak_field_v_m: Option<f64>,
}

impl ExperimentBlock {
    pub fn params(&self) -> ExperimentalParams {
        ExperimentalParams {
            radiative_lifetime: self.radiative_lifetime_ps * 1e-12,
            transition_energy: self.transition_energy_ev,
            refractive_index: self.refractive_index,
            avg_power_density: self.avg_power_density_w_m2,
            rep_rate: self.rep_rate_hz,
            pulse_duration_fwhm: self.pulse_duration_fwhm_fs * 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub carrier_phase_rad: f64,
}

impl Default for DriveBlock {
    fn default() -> Self {
        Self { scale: 1.0, carrier_phase_rad: 0.0 }
    }
}

fn one() -> f64 {
    1.0
}

fn default_window() -> f64 {
    WINDOW_FWHM
}

fn default_target() -> usize {
    1
}

fn default_convolution() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    pub duration_fwhm_fs: f64,
    #[serde(default = "default_window")]
    pub window_fwhm: f64,
    #[serde(default)]
    pub initial_level: usize,
    #[serde(default = "default_target")]
    pub target_level: usize,
}

impl PulseBlock {
    pub fn duration_s(&self) -> f64 {
        self.duration_fwhm_fs * 1e-15
    }

    pub fn options(&self, drive: &DriveBlock) -> PulseOptions {
        PulseOptions {
            window_fwhm: self.window_fwhm,
            initial_level: self.initial_level,
            target_level: self.target_level,
            carrier_phase: drive.carrier_phase_rad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(rename = "start_eV")]
    pub start_ev: f64,
    #[serde(rename = "stop_eV")]
    pub stop_ev: f64,
    #[serde(rename = "step_eV")]
    pub step_ev: f64,
    #[serde(rename = "convolution_fwhm_eV", default = "default_convolution")]
    pub convolution_fwhm_ev: f64,
    #[serde(default)]
    pub from_level: usize,
    #[serde(default = "default_target")]
    pub to_level: usize,
}

impl ScanBlock {
    /// `start, start + step, …` up to `stop` (inclusive within 1e-9 of a step).
    pub fn grid(&self) -> Result<Vec<f64>> {
        let (a, b, h) = (self.start_ev, self.stop_ev, self.step_ev);
        if !(a.is_finite() && b.is_finite() && h.is_finite() && h > 0.0 && a > 0.0) {
            return Err(Error::Config(format!("scan: invalid grid start={a} stop={b} step={h}")));
        }
        if b < a {
            return Err(Error::Config(format!("scan: empty grid (stop_eV {b} < start_eV {a})")));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + i as f64 * h).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBlock {
    #[serde(rename = "photon_energy_eV")]
    pub photon_energy_ev: f64,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Power,
    Malus,
    Emg,
}

impl std::str::FromStr for FitModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Self::Power),
            "malus" => Ok(Self::Malus),
            "emg" | "lifetime" => Ok(Self::Emg),
            other => Err(Error::Config(format!("unknown fit model {other:?} (power, malus, emg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub input: PathBuf,
    pub model: FitModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma_ps: Option<f64>,
}

impl FitBlock {
    pub fn emg_options(&self) -> EmgOptions {
        EmgOptions { fixed_sigma: self.fixed_sigma_ps }
    }
}

/// Parameters of a synthetic data set; times in ps, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthBlock {
    Power {
        prefactor: f64,
        exponent: f64,
        x_min: f64,
        x_max: f64,
        points: usize,
        rel_noise: f64,
    },
    Malus {
        dolp: f64,
        peak: f64,
        theta0_deg: f64,
        step_deg: f64,
        noise_frac: f64,
    },
    Emg {
        tau_ps: f64,
        sigma_ps: f64,
        t0_ps: f64,
        peak_counts: f64,
        baseline_counts: f64,
        t_start_ps: f64,
        t_stop_ps: f64,
        bin_ps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: default_dir(), formats: default_formats() }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

/// The resolved ladder together with the derivation chain when the coupling
/// came from measured quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSystem {
    pub system: LadderSystem,
    pub derived: Option<DerivedCoupling>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Cross-field checks that the schema alone cannot express.
    pub fn check(&self) -> Result<()> {
        if let Some(sys) = &self.system {
            let n = sys.level_energies_ev.len();
            let c = &sys.coupling;
            if c.b_rad_s.is_some() == c.experiment.is_some() {
                return Err(Error::Config("system.coupling: give exactly one of b_rad_s or experiment".into()));
            }
            if c.ratios.len() + 1 != n {
                return Err(Error::Config(format!(
                    "system.coupling.ratios: expected {} entries for {n} levels, got {}",
                    n.saturating_sub(1),
                    c.ratios.len()
                )));
            }
            self.resolve_system()?;
        }
        if let Some(scan) = &self.scan {
            scan.grid()?;
            if !(scan.convolution_fwhm_ev > 0.0) {
                return Err(Error::Config("scan.convolution_fwhm_eV must be positive".into()));
            }
        }
        if let Some(p) = &self.power {
            if p.scales.is_empty() {
                return Err(Error::Config("power.scales is empty".into()));
            }
        }
        Ok(())
    }

    pub fn resolve_system(&self) -> Result<ResolvedSystem> {
        let sys = self.system.as_ref().ok_or_else(|| Error::Config("missing system block".into()))?;
        let c = &sys.coupling;
        let (b, derived) = match (c.b_rad_s, &c.experiment) {
            (Some(b), None) => (b, None),
            (None, Some(exp)) => {
                let d = exp.params().derive_coupling(exp.peak_field_v_m)?;
                (d.coupling_rad_s, Some(d))
            }
            _ => return Err(Error::Config("system.coupling: give exactly one of b_rad_s or experiment".into())),
        };
        let couplings: Vec<f64> = c.ratios.iter().map(|r| r * UnitSystem::rad_s_to_ev(b)).collect();
        let system = match &sys.parities {
            Some(p) => LadderSystem::new(sys.level_energies_ev.clone(), p.clone(), couplings),
            None => LadderSystem::alternating(sys.level_energies_ev.clone(), couplings),
        }
        .map_err(|e| Error::Config(format!("system: {e}")))?;
        Ok(ResolvedSystem { system, derived })
    }

    pub fn scan(&self) -> Result<&ScanBlock> {
        self.scan.as_ref().ok_or_else(|| Error::Config("missing scan block".into()))
    }

    pub fn pulse(&self) -> Result<&PulseBlock> {
        self.pulse.as_ref().ok_or_else(|| Error::Config("missing pulse block".into()))
    }

    pub fn power(&self) -> Result<&PowerBlock> {
        self.power.as_ref().ok_or_else(|| Error::Config("missing power block".into()))
    }

    pub fn fit(&self) -> Result<&FitBlock> {
        self.fit.as_ref().ok_or_else(|| Error::Config("missing fit block".into()))
    }

    pub fn synth(&self) -> Result<&SynthBlock> {
        self.synth.as_ref().ok_or_else(|| Error::Config("missing synth block".into()))
    }
}
