//! End-to-end validation cases. Each case checks one claim about the model
//! against a reference value, an analytic limit or an independent oracle, and
//! the suite produces a deterministic JSON report.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::export::fmt_f64;
use crate::fitkit::{self, synth, DataSeries, EmgOptions};
use crate::floquet::{self, fold, spectrum_scan, SpectrumOptions, SpectrumResult};
use crate::model::{reference_system, DriveSpec, DrivenLadder, LadderSystem};
use crate::propagate::{auto_step, observed_order, propagate_with, propagator_over, unitarity_defect, QuantumState};
use crate::pulsed::{power_scan, PulseOptions};
use crate::units::{dipole_from_lifetime, rabi_coupling, DEFAULT_GAN_INDEX};

/// Identifiers of all cases, in report order.
pub const ALL_CASES: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub system: LadderSystem,
    /// Multiplies every coupling of `system`; values far from 1 should make
    /// the spectral cases fail.
    pub coupling_scale: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            system: reference_system(),
            coupling_scale: 1.0,
            seed: 20_240_601,
        }
    }
}

impl ValidationOptions {
    fn system(&self) -> LadderSystem {
        self.system.with_couplings_scaled(self.coupling_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub id: u32,
    pub name: &'static str,
    /// The property being checked.
    pub claim: &'static str,
    /// Where the expected value comes from.
    pub basis: &'static str,
    pub tolerance: &'static str,
    /// Measured quantities; `null` marks a quantity that does not exist
    /// (for example an undetected peak).
    pub measured: BTreeMap<String, Option<f64>>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub coupling_scale: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub cases: Vec<CaseOutcome>,
}

impl ValidationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn case(&self, id: u32) -> Option<&CaseOutcome> {
        self.cases.iter().find(|c| c.id == id)
    }
}

struct Meta {
    name: &'static str,
    claim: &'static str,
    basis: &'static str,
    tolerance: &'static str,
}

fn meta(id: u32) -> Meta {
    match id {
        1 => Meta {
            name: "rabi_rwa",
            claim: "a weakly driven resonant two-level system follows sin²(bt) over one Rabi period",
            basis: "analytic rotating-wave limit",
            tolerance: "max |P1 - sin²(bt)| < 0.02 at b/ω0 = 0.01",
        },
        2 => Meta {
            name: "unitarity_and_order",
            claim: "propagators stay unitary and RK4 converges at fourth order on the reference ladder",
            basis: "integrator property",
            tolerance: "‖U†U − I‖max ≤ 1e-8; observed order ≥ 3.8",
        },
        3 => Meta {
            name: "quasienergy_sum_rule",
            claim: "the quasienergies sum to the bare level energies modulo ħω",
            basis: "traceless drive, det U(T) = exp(-iTΣE)",
            tolerance: "≤ 1e-7 eV at 200 photon energies in 0.80–1.45 eV",
        },
        4 => Meta {
            name: "floquet_vs_time_domain",
            claim: "the Floquet time-averaged transition probability equals a long direct time average",
            basis: "independent 400-period direct integration",
            tolerance: "|ΔP̄| ≤ 1e-3 on 20 random (ħω, scale) samples",
        },
        5 => Meta {
            name: "three_vs_two_photon_spectrum",
            claim: "after 20 meV broadening the g→1 spectrum has a three-photon peak at E1/3 about an order of magnitude above the two-photon feature, with a width set by the broadening",
            basis: "reference theory values for the InGaN dot: peak near 0.870 eV, ratio about 12, width about 20 meV",
            tolerance: "center 0.870 ± 0.005 eV; ratio in [6, 24]; FWHM 20 meV ± 20%; an order-2 feature present",
        },
        6 => Meta {
            name: "parity_trend",
            claim: "weakening the drive suppresses the two-photon feature faster than the three-photon peak",
            basis: "parity selection in a nearest-neighbour ladder",
            tolerance: "ratio non-decreasing over s = 1, 0.5, 0.25 and larger at 0.25 than at 1",
        },
        7 => Meta {
            name: "cubic_power_law",
            claim: "three-photon excitation by 100 fs pulses grows with the cube of the intensity",
            basis: "perturbative limit; measured exponent 2.9 ± 0.3",
            tolerance: "log-log slope 3.0 ± 0.15 with populations < 1e-2",
        },
        8 => Meta {
            name: "parameter_chain",
            claim: "lifetime, index and field give the dipole and coupling used in the model",
            basis: "reference values 0.50 e·nm and 84 THz",
            tolerance: "dipole 0.50 ± 0.01 e·nm; coupling 84 ± 1 (10¹² rad/s)",
        },
        9 => Meta {
            name: "fit_recovery",
            claim: "the lifetime, polarization and power-law fits recover known parameters from noisy synthetic data",
            basis: "synthetic data with seeded noise",
            tolerance: "τ ± 20 ps (Poisson, 1e4 peak counts); DOLP ± 0.02 (3% noise); exponent ± 0.15 (5% noise)",
        },
        10 => Meta {
            name: "determinism",
            claim: "repeating a computation produces byte-identical artifacts",
            basis: "fixed formatting, ordered parallel merge, seeded RNG",
            tolerance: "identical bytes",
        },
        _ => unreachable!("case ids are checked before dispatch"),
    }
}

type Measured = BTreeMap<String, Option<f64>>;

fn m(pairs: &[(&str, Option<f64>)]) -> Measured {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Long-time average of `|⟨to|ψ(t)⟩|²` from direct propagation over `periods`
/// drive periods, sampled 200 times per period (trapezoidal rule).
pub fn direct_time_average(system: &LadderSystem, drive: &DriveSpec, from: usize, to: usize, periods: usize) -> Result<f64> {
    let e = system.level_energies();
    let centre = 0.5 * (e[0] + e[e.len() - 1]);
    let g = DrivenLadder::new(&system.shifted(-centre), drive)?;
    let span = periods as f64 * drive.period();
    let per_period = 200;
    let dt = auto_step(&g, span);
    let sub = (drive.period() / per_period as f64 / dt).ceil() as usize;
    let h = drive.period() / (per_period * sub) as f64;
    let traj = propagate_with(&g, &QuantumState::basis(system.dim(), from), (0.0, span), h, sub)?;
    let p: Vec<f64> = traj.states.iter().map(|s| s.amplitudes()[to].norm_sqr()).collect();
    let n = p.len() - 1;
    let inner: f64 = p[1..n].iter().sum();
    Ok((inner + 0.5 * (p[0] + p[n])) / n as f64)
}

fn case_rabi() -> Result<(Measured, bool, String)> {
    let b = 0.01;
    let s = LadderSystem::alternating(vec![0.0, 1.0], vec![b])?;
    let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(1.0))?;
    let t_end = PI / b;
    let dt = auto_step(&g, t_end);
    let traj = propagate_with(&g, &QuantumState::basis(2, 0), (0.0, t_end), dt, 20)?;
    let dev = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, st)| (st.populations()[1] - (b * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    Ok((m(&[("max_deviation", Some(dev))]), dev < 0.02, format!("max deviation {dev:.3e}")))
}

fn case_unitarity(system: &LadderSystem) -> Result<(Measured, bool, String)> {
    let defects = (0..14)
        .into_par_iter()
        .map(|i| {
            let w = 0.80 + 0.05 * i as f64;
            let d = DriveSpec::monochromatic(w);
            Ok(unitarity_defect(&floquet::monodromy(system, &d)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let pulse = DriveSpec::gaussian_pulse(0.87, 100e-15, 1.0, 0.0);
    let g = DrivenLadder::new(system, &pulse)?;
    let half = 4.0 * crate::units::UnitSystem::seconds_to_internal(100e-15);
    let u_pulse = propagator_over(&g, -half, half, auto_step(&g, 2.0 * half))?;
    let max_defect = defects.iter().copied().fold(unitarity_defect(&u_pulse), f64::max);
    let d = DriveSpec::monochromatic(0.87);
    let order = observed_order(&DrivenLadder::new(system, &d)?, &QuantumState::basis(system.dim(), 0), (0.0, 10.0 * d.period()))?;
    let ok = max_defect <= 1e-8 && order >= 3.8;
    Ok((
        m(&[("max_unitarity_defect", Some(max_defect)), ("observed_order", Some(order))]),
        ok,
        format!("15 propagators, worst defect {max_defect:.2e}; order {order:.3}"),
    ))
}

fn case_sum_rule(system: &LadderSystem) -> Result<(Measured, bool, String)> {
    let grid: Vec<f64> = (0..200).map(|i| 0.80 + 0.65 * i as f64 / 199.0).collect();
    let pts = floquet::quasienergy_scan(system, 1.0, &grid)?;
    let worst = pts.iter().map(|p| p.sum_rule_residual(system)).fold(0.0, f64::max);
    Ok((m(&[("max_residual_eV", Some(worst))]), worst <= 1e-7, format!("worst residual {worst:.2e} eV")))
}

fn near_multiphoton_resonance(system: &LadderSystem, w: f64) -> bool {
    let e = system.level_energies();
    (0..e.len())
        .flat_map(|a| (a + 1..e.len()).map(move |b| (e[b] - e[a]).abs()))
        .any(|de| de > 0.5 * w && fold(de, w).abs() < 0.08)
}

fn case_oracle(system: &LadderSystem, seed: u64) -> Result<(Measured, bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a11_0ac1e);
    let mut samples = Vec::new();
    while samples.len() < 20 {
        let w: f64 = rng.random_range(0.8..1.45);
        let s: f64 = rng.random_range(0.5..2.0);
        if !near_multiphoton_resonance(system, w) {
            samples.push((w, s));
        }
    }
    let diffs = samples
        .par_iter()
        .map(|&(w, s)| {
            let d = DriveSpec::monochromatic(w).with_scale(s);
            let floq = floquet::averaged_transition_probability(system, &d, 0, 1)?.value;
            let direct = direct_time_average(system, &d, 0, 1, 400)?;
            Ok((floq - direct).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    Ok((
        m(&[("samples", Some(diffs.len() as f64)), ("max_abs_difference", Some(worst))]),
        worst <= 1e-3,
        format!("{} samples, worst |ΔP̄| {worst:.2e}", diffs.len()),
    ))
}

fn reference_grid() -> Vec<f64> {
    (0..=650).map(|i| 0.80 + i as f64 * 1e-3).collect()
}

/// Prominence of the strongest order-3 peak over that of the strongest order-2
/// feature; `None` when no order-2 feature is detected.
pub fn three_to_two_ratio(r: &SpectrumResult) -> (Option<f64>, Option<f64>) {
    let three = r.strongest(3).map(|p| p.prominence);
    let two = r.strongest(2).map(|p| p.prominence);
    match (three, two) {
        (Some(a), Some(b)) => (Some(a / b), Some(b)),
        _ => (None, two),
    }
}

fn case_spectrum(system: &LadderSystem) -> Result<(Measured, bool, String)> {
    let r = spectrum_scan(system, 1.0, &reference_grid(), 0.02, &SpectrumOptions::default())?;
    let three = r.strongest(3);
    let two = r.strongest(2);
    let (ratio, _) = three_to_two_ratio(&r);
    let measured = m(&[
        ("three_photon_center_eV", three.map(|p| p.center_ev)),
        ("three_photon_fwhm_eV", three.map(|p| p.fwhm_ev)),
        ("three_photon_prominence", three.map(|p| p.prominence)),
        ("two_photon_center_eV", two.map(|p| p.center_ev)),
        ("two_photon_prominence", two.map(|p| p.prominence)),
        ("ratio", ratio),
    ]);
    let ok = match (three, two, ratio) {
        (Some(t), Some(_), Some(q)) => {
            (t.center_ev - 0.870).abs() <= 0.005 && (t.fwhm_ev / 0.020 - 1.0).abs() <= 0.2 && (6.0..=24.0).contains(&q)
        }
        _ => false,
    };
    let detail = match (three, ratio) {
        (Some(t), Some(q)) => format!(
            "3PA at {:.4} eV, FWHM {:.1} meV, 3PA/2PA prominence ratio {q:.2}",
            t.center_ev,
            t.fwhm_ev * 1e3
        ),
        (Some(t), None) => format!("3PA at {:.4} eV; no order-2 feature detected", t.center_ev),
        _ => "no three-photon peak detected".into(),
    };
    Ok((measured, ok, detail))
}

fn case_parity_trend(system: &LadderSystem) -> Result<(Measured, bool, String)> {
    let scales = [1.0, 0.5, 0.25];
    let ratios = scales
        .par_iter()
        .map(|&s| {
            let r = spectrum_scan(system, s, &reference_grid(), 0.02, &SpectrumOptions::default())?;
            let has_three = r.strongest(3).is_some();
            // a vanished two-photon feature counts as an unbounded ratio
            Ok(match three_to_two_ratio(&r) {
                (Some(q), _) => Some(q),
                (None, None) if has_three => Some(f64::INFINITY),
                _ => None,
            })
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let ok = ratios.iter().all(Option::is_some) && {
        let q: Vec<f64> = ratios.iter().map(|r| r.unwrap_or(0.0)).collect();
        q.windows(2).all(|w| w[1] >= w[0]) && q[2] > q[0]
    };
    let show = |r: Option<f64>| match r {
        Some(v) if v.is_infinite() => "no 2PA feature".to_string(),
        Some(v) => format!("{v:.2}"),
        None => "no 3PA peak".to_string(),
    };
    let finite = |r: Option<f64>| r.filter(|v| v.is_finite());
    Ok((
        m(&[
            ("ratio_s1", finite(ratios[0])),
            ("ratio_s0.5", finite(ratios[1])),
            ("ratio_s0.25", finite(ratios[2])),
        ]),
        ok,
        format!("ratios at s = 1, 0.5, 0.25: {}, {}, {}", show(ratios[0]), show(ratios[1]), show(ratios[2])),
    ))
}

fn case_power_law(system: &LadderSystem) -> Result<(Measured, bool, String)> {
    let scales = synth::log_grid(0.15, 0.5, 8);
    let pts = power_scan(system, system.transition_energy(0, 1) / 3.0, 100e-15, &scales, &PulseOptions::default())?;
    let max_pop = pts.iter().map(|p| p.population).fold(0.0, f64::max);
    let data = DataSeries::new(
        pts.iter().map(|p| p.intensity_proxy).collect(),
        pts.iter().map(|p| p.population).collect(),
    )?;
    let fit = fitkit::fit_power_law(&data)?;
    let k = fit.param("exponent").unwrap_or(f64::NAN);
    let ok = (k - 3.0).abs() <= 0.15 && max_pop < 1e-2;
    Ok((
        m(&[("exponent", Some(k)), ("max_population", Some(max_pop))]),
        ok,
        format!("slope {k:.4}, largest population {max_pop:.2e}"),
    ))
}

fn case_parameters() -> Result<(Measured, bool, String)> {
    let dipole = dipole_from_lifetime(250e-12, 2.61, DEFAULT_GAN_INDEX)?;
    let b = rabi_coupling(0.5, 2.2e8)? / 1e12;
    let ok = (dipole - 0.50).abs() <= 0.01 && (b - 84.0).abs() <= 1.0;
    Ok((
        m(&[("dipole_e_nm", Some(dipole)), ("coupling_1e12_rad_s", Some(b))]),
        ok,
        format!("dipole {dipole:.4} e·nm, coupling {b:.2}e12 rad/s"),
    ))
}

fn case_fits(seed: u64) -> Result<(Measured, bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf175);
    let times: Vec<f64> = (0..500).map(|i| -400.0 + 8.0 * i as f64).collect();
    let mut measured = Measured::new();
    let mut ok = true;
    for tau in [260.0, 440.0] {
        let d = synth::emg_trace(tau, 80.0, 0.0, 1e4, 0.0, &times, &mut rng)?;
        let got = fitkit::fit_lifetime_emg(&d, &EmgOptions::default())?.param("tau").unwrap_or(f64::NAN);
        ok &= (got - tau).abs() <= 20.0;
        measured.insert(format!("tau_{tau:.0}_ps"), Some(got));
    }
    let angles: Vec<f64> = (0..180).map(|i| 2.0 * i as f64).collect();
    for dolp in [0.74, 0.87] {
        let (a, b) = synth::malus_params_for_dolp(dolp, 1000.0);
        let d = synth::malus_series(a, b, 35.0, &angles, 0.03, &mut rng)?;
        let got = fitkit::fit_malus(&d)?.param("dolp").unwrap_or(f64::NAN);
        ok &= (got - dolp).abs() <= 0.02;
        measured.insert(format!("dolp_{dolp}"), Some(got));
    }
    let x = synth::log_grid(1.0, 10.0, 12);
    let d = synth::power_law_series(2.0, 3.0, &x, 0.05, &mut rng)?;
    let k = fitkit::fit_power_law(&d)?.param("exponent").unwrap_or(f64::NAN);
    ok &= (k - 3.0).abs() <= 0.15;
    measured.insert("power_exponent".into(), Some(k));
    let detail = measured
        .iter()
        .map(|(k, v)| format!("{k}={:.4}", v.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((measured, ok, detail))
}

fn determinism_artifacts(system: &LadderSystem, seed: u64) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let grid: Vec<f64> = (0..=40).map(|i| 0.85 + i as f64 * 1e-3).collect();
    spectrum_scan(system, 1.0, &grid, 0.02, &SpectrumOptions::default())?.write_csv(&mut out)?;
    for p in power_scan(system, 0.87, 100e-15, &[0.2, 0.3], &PulseOptions::default())? {
        out.extend(format!("{},{}\n", fmt_f64(p.intensity_proxy), fmt_f64(p.population)).bytes());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = synth::emg_trace(260.0, 80.0, 0.0, 1e4, 1.0, &(0..300).map(|i| -300.0 + 8.0 * i as f64).collect::<Vec<_>>(), &mut rng)?;
    let fit = fitkit::fit_lifetime_emg(&d, &EmgOptions::default())?;
    out.extend(serde_json::to_vec(&fit)?);
    let pts = floquet::quasienergy_scan(system, 1.0, &grid)?;
    for p in pts {
        for e in &p.quasienergies {
            out.extend(fmt_f64(*e).bytes());
        }
    }
    Ok(out)
}

fn case_determinism(system: &LadderSystem, seed: u64) -> Result<(Measured, bool, String)> {
    let a = determinism_artifacts(system, seed)?;
    let b = determinism_artifacts(system, seed)?;
    let same = a == b;
    Ok((
        m(&[("bytes", Some(a.len() as f64))]),
        same,
        format!("{} bytes, {}", a.len(), if same { "identical" } else { "differ" }),
    ))
}

fn run_case(id: u32, opts: &ValidationOptions) -> CaseOutcome {
    let system = opts.system();
    let result = match id {
        1 => case_rabi(),
        2 => case_unitarity(&system),
        3 => case_sum_rule(&system),
        4 => case_oracle(&system, opts.seed),
        5 => case_spectrum(&system),
        6 => case_parity_trend(&system),
        7 => case_power_law(&system),
        8 => case_parameters(),
        9 => case_fits(opts.seed),
        10 => case_determinism(&system, opts.seed),
        _ => unreachable!(),
    };
    let meta = meta(id);
    let (measured, passed, detail) = result.unwrap_or_else(|e| (Measured::new(), false, format!("error: {e}")));
    CaseOutcome {
        id,
        name: meta.name,
        claim: meta.claim,
        basis: meta.basis,
        tolerance: meta.tolerance,
        measured,
        passed,
        detail,
    }
}

/// Run the selected cases (unknown ids are reported as warnings and skipped).
pub fn run_validation(ids: &[u32], opts: &ValidationOptions) -> ValidationReport {
    let mut warnings = Vec::new();
    let mut selected: Vec<u32> = Vec::new();
    for &id in ids {
        if !ALL_CASES.contains(&id) {
            warnings.push(format!("unknown case {id} skipped"));
        } else if !selected.contains(&id) {
            selected.push(id);
        }
    }
    selected.sort_unstable();
    if selected.is_empty() {
        warnings.push("empty suite: nothing was checked".into());
    }
    let cases: Vec<CaseOutcome> = selected.par_iter().map(|&id| run_case(id, opts)).collect();
    ValidationReport {
        passed: cases.iter().all(|c| c.passed),
        coupling_scale: opts.coupling_scale,
        seed: opts.seed,
        warnings,
        cases,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_passes_with_warning() {
        let r = run_validation(&[], &ValidationOptions::default());
        assert!(r.passed && r.cases.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn unknown_case_is_a_warning() {
        let r = run_validation(&[8, 99], &ValidationOptions::default());
        assert_eq!(r.cases.len(), 1);
        assert!(r.passed);
        assert!(r.warnings[0].contains("99"));
    }

    #[test]
    fn direct_average_of_an_undriven_system_is_zero() {
        let s = reference_system().with_couplings_scaled(0.0);
        let v = direct_time_average(&s, &DriveSpec::monochromatic(1.0), 0, 1, 5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn parameter_chain_case() {
        let r = run_validation(&[8], &ValidationOptions::default());
        assert!(r.passed, "{:?}", r.cases[0]);
    }
}
