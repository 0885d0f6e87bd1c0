//! One function per subcommand. Each loads what it needs from the config,
//! runs the computation, writes its artifacts and returns the exit status.

use std::fs::File;
use std::path::{Path, PathBuf};

use mpa_core::config::{FitModel, ResolvedSystem, RunConfig, SynthBlock};
use mpa_core::export::write_numeric_csv;
use mpa_core::fitkit::synth::{emg_trace, log_grid, malus_params_for_dolp, malus_series, power_law_series};
use mpa_core::fitkit::{fit_lifetime_emg, fit_malus, fit_power_law, DataSeries, EmgOptions, FitResult};
use mpa_core::floquet::{quasienergy_scan, spectrum_scan, SpectrumOptions, SpectrumResult};
use mpa_core::pulsed::{power_scan, pulse_spectrum_scan};
use mpa_core::validation::{run_validation, ValidationOptions, ALL_CASES};
use mpa_core::reference_system;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::output::{Manifest, RunDir};
use crate::{Cli, Command, Failure, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VALIDATION};

/// Seed used by `synth` when `--seed` is not given.
pub const DEFAULT_SYNTH_SEED: u64 = 1;

pub fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    let cfg = match &cli.config {
        Some(p) => Some(RunConfig::from_path(p)?),
        None => None,
    };
    match &cli.command {
        Command::Spectrum => spectrum(cli, require(cfg)?),
        Command::Quasienergies => quasienergies(cli, require(cfg)?),
        Command::PulseScan => pulse_scan(cli, require(cfg)?),
        Command::PowerScan => power(cli, require(cfg)?),
        Command::Fit { input, model, fixed_sigma_ps } => fit(cli, cfg, input.as_deref(), model.as_deref(), *fixed_sigma_ps),
        Command::Synth => synth(cli, require(cfg)?),
        Command::Validate { cases, coupling_scale } => validate(cli, cfg, cases.as_deref(), *coupling_scale),
    }
}

fn require(cfg: Option<RunConfig>) -> Result<RunConfig, Failure> {
    cfg.ok_or_else(|| Failure::input("this command needs --config PATH"))
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.map(|c| c.output.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn manifest(cli: &Cli, cfg: Option<&RunConfig>, resolved: Option<&ResolvedSystem>, seed: Option<u64>) -> Manifest {
    Manifest {
        tool: "mpa",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config_path: cli.config.clone(),
        config: cfg.cloned(),
        couplings_ev: resolved.map(|r| r.system.couplings().to_vec()),
        derived_coupling: resolved.and_then(|r| r.derived),
        seed,
        threads: rayon::current_num_threads(),
        outputs: Vec::new(),
        wall_time_s: 0.0,
    }
}

fn wants_csv(cfg: &RunConfig) -> bool {
    cfg.output.wants(mpa_core::config::OutputFormat::Csv)
}

fn wants_json(cfg: &RunConfig) -> bool {
    cfg.output.wants(mpa_core::config::OutputFormat::Json)
}

fn print_resonances(r: &SpectrumResult) {
    for res in &r.resonances {
        println!(
            "[resonance] order {} at {:.5} eV, height {:.4e}, prominence {:.4e}, fwhm {:.2} meV",
            res.order,
            res.center_ev,
            res.height,
            res.prominence,
            res.fwhm_ev * 1e3
        );
    }
}

fn resonance_json(r: &SpectrumResult) -> serde_json::Value {
    json!({
        "resonances": r.resonances,
        "crossings": r.crossings,
        "raw_area": r.raw_area,
        "convolved_area": r.convolved_area,
    })
}

fn spectrum(cli: &Cli, cfg: RunConfig) -> Result<u8, Failure> {
    let resolved = cfg.resolve_system()?;
    let scan = cfg.scan()?;
    let grid = scan.grid()?;
    let opts = SpectrumOptions { from: scan.from_level, to: scan.to_level, ..Default::default() };
    let mut dir = RunDir::create(&out_dir(cli, Some(&cfg)))?;
    println!("[spectrum] {} grid points, {:.3}-{:.3} eV", grid.len(), grid[0], grid[grid.len() - 1]);
    let result = spectrum_scan(&resolved.system, cfg.drive.scale, &grid, scan.convolution_fwhm_ev, &opts)?;
    print_resonances(&result);
    if wants_csv(&cfg) {
        dir.write("spectrum.csv", |w| Ok(result.write_csv(w)?))?;
        dir.write("spectrum_nodes.csv", |w| Ok(result.write_nodes_csv(w)?))?;
    }
    if wants_json(&cfg) {
        dir.write_json("resonances.json", &resonance_json(&result))?;
    }
    dir.finish(manifest(cli, Some(&cfg), Some(&resolved), None))?;
    Ok(EXIT_OK)
}

fn quasienergies(cli: &Cli, cfg: RunConfig) -> Result<u8, Failure> {
    let resolved = cfg.resolve_system()?;
    let system = &resolved.system;
    let grid = cfg.scan()?.grid()?;
    let mut dir = RunDir::create(&out_dir(cli, Some(&cfg)))?;
    let points = quasienergy_scan(system, cfg.drive.scale, &grid)?;
    let n = system.dim();
    let names: Vec<String> = std::iter::once("photon_energy_eV".to_string())
        .chain((0..n).map(|k| format!("eps_{k}_eV")))
        .chain(["sum_rule_residual_eV".to_string(), "min_gap_eV".to_string()])
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(points.len());
    let mut worst: f64 = 0.0;
    for p in &points {
        let mut row = vec![p.photon_energy];
        for k in 0..n {
            let e = p
                .branch_energy(k)
                .ok_or_else(|| Failure::new(crate::EXIT_NUMERIC, anyhow::anyhow!("branch {k} lost at {} eV", p.photon_energy)))?;
            row.push(e);
        }
        let residual = p.sum_rule_residual(system);
        worst = worst.max(residual);
        row.push(residual);
        row.push(p.min_gap);
        rows.push(row);
    }
    println!("[quasienergies] {} points, worst sum-rule residual {:.2e} eV", points.len(), worst);
    if wants_csv(&cfg) {
        dir.write("quasienergies.csv", |w| Ok(write_numeric_csv(w, &header, &rows)?))?;
    }
    dir.finish(manifest(cli, Some(&cfg), Some(&resolved), None))?;
    Ok(EXIT_OK)
}

fn pulse_scan(cli: &Cli, cfg: RunConfig) -> Result<u8, Failure> {
    let resolved = cfg.resolve_system()?;
    let pulse = cfg.pulse()?;
    let grid = cfg.scan()?.grid()?;
    let opts = pulse.options(&cfg.drive);
    let mut dir = RunDir::create(&out_dir(cli, Some(&cfg)))?;
    println!(
        "[pulse-scan] {} centre energies, {} fs pulses, scale {}",
        grid.len(),
        pulse.duration_fwhm_fs,
        cfg.drive.scale
    );
    let result = pulse_spectrum_scan(&resolved.system, &grid, pulse.duration_s(), cfg.drive.scale, &opts)?;
    print_resonances(&result);
    if wants_csv(&cfg) {
        dir.write("pulse_scan.csv", |w| {
            let rows: Vec<Vec<f64>> = result
                .photon_energies
                .iter()
                .zip(&result.absorption_strength)
                .map(|(&x, &y)| vec![x, y])
                .collect();
            Ok(write_numeric_csv(w, &["photon_energy_eV", "target_population"], &rows)?)
        })?;
    }
    if wants_json(&cfg) {
        dir.write_json("resonances.json", &resonance_json(&result))?;
    }
    dir.finish(manifest(cli, Some(&cfg), Some(&resolved), None))?;
    Ok(EXIT_OK)
}

fn power(cli: &Cli, cfg: RunConfig) -> Result<u8, Failure> {
    let resolved = cfg.resolve_system()?;
    let pulse = cfg.pulse()?;
    let block = cfg.power()?;
    let opts = pulse.options(&cfg.drive);
    let mut dir = RunDir::create(&out_dir(cli, Some(&cfg)))?;
    println!(
        "[power-scan] {} scales at {} eV, {} fs pulses",
        block.scales.len(),
        block.photon_energy_ev,
        pulse.duration_fwhm_fs
    );
    let points = power_scan(&resolved.system, block.photon_energy_ev, pulse.duration_s(), &block.scales, &opts)?;
    let n = resolved.system.dim();
    let names: Vec<String> = ["scale".to_string(), "intensity_proxy".to_string()]
        .into_iter()
        .chain((0..n).map(|k| format!("population_{k}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| [p.scale, p.intensity_proxy].into_iter().chain(p.final_populations.iter().copied()).collect())
        .collect();
    if wants_csv(&cfg) {
        dir.write("power_scan.csv", |w| Ok(write_numeric_csv(w, &header, &rows)?))?;
        dir.write("power_fit_input.csv", |w| {
            let pairs: Vec<Vec<f64>> = points.iter().map(|p| vec![p.intensity_proxy, p.population]).collect();
            Ok(write_numeric_csv(w, &["intensity_proxy", "population"], &pairs)?)
        })?;
    }
    dir.finish(manifest(cli, Some(&cfg), Some(&resolved), None))?;
    Ok(EXIT_OK)
}

/// Relative fit inputs named in a config resolve against the config's directory.
fn resolve_input(path: &Path, config: Option<&Path>) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(base) if path.is_relative() => base.join(path),
        _ => path.to_path_buf(),
    }
}

fn fit(
    cli: &Cli,
    cfg: Option<RunConfig>,
    input: Option<&Path>,
    model: Option<&str>,
    fixed_sigma_ps: Option<f64>,
) -> Result<u8, Failure> {
    let block = cfg.as_ref().and_then(|c| c.fit.as_ref());
    let input = match (input, block) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(b)) => resolve_input(&b.input, cli.config.as_deref()),
        (None, None) => return Err(Failure::input("fit needs --input PATH or a fit block in the config")),
    };
    let model: FitModel = match (model, block) {
        (Some(m), _) => m.parse()?,
        (None, Some(b)) => b.model,
        (None, None) => return Err(Failure::input("fit needs --model or a fit block in the config")),
    };
    let opts = EmgOptions { fixed_sigma: fixed_sigma_ps.or(block.and_then(|b| b.fixed_sigma_ps)) };
    let file = File::open(&input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let data = DataSeries::read_csv(file).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let result: FitResult = match model {
        FitModel::Power => fit_power_law(&data)?,
        FitModel::Malus => fit_malus(&data)?,
        FitModel::Emg => fit_lifetime_emg(&data, &opts)?,
    };
    let mut dir = RunDir::create(&out_dir(cli, cfg.as_ref()))?;
    dir.write_json("fit.json", &result)?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(|e| Failure::new(crate::EXIT_IO, e))?);
    dir.finish(manifest(cli, cfg.as_ref(), None, None))?;
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: fit did not converge after {} iterations", result.iterations);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn synth(cli: &Cli, cfg: RunConfig) -> Result<u8, Failure> {
    let seed = cli.seed.unwrap_or(DEFAULT_SYNTH_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, header) = match cfg.synth()? {
        SynthBlock::Power { prefactor, exponent, x_min, x_max, points, rel_noise } => {
            if !(*x_min > 0.0 && x_max > x_min && *points >= 2) {
                return Err(Failure::input("synth: need 0 < x_min < x_max and at least 2 points"));
            }
            let x = log_grid(*x_min, *x_max, *points);
            (power_law_series(*prefactor, *exponent, &x, *rel_noise, &mut rng)?, ["x", "y"])
        }
        SynthBlock::Malus { dolp, peak, theta0_deg, step_deg, noise_frac } => {
            if !(*step_deg > 0.0 && *step_deg <= 72.0) {
                return Err(Failure::input("synth: step_deg must lie in (0, 72]"));
            }
            let n = (360.0 / step_deg).round() as usize;
            let angles: Vec<f64> = (0..n).map(|i| i as f64 * step_deg).collect();
            let (a, b) = malus_params_for_dolp(*dolp, *peak);
            (malus_series(a, b, *theta0_deg, &angles, *noise_frac, &mut rng)?, ["angle_deg", "intensity"])
        }
        SynthBlock::Emg { tau_ps, sigma_ps, t0_ps, peak_counts, baseline_counts, t_start_ps, t_stop_ps, bin_ps } => {
            if !(*bin_ps > 0.0 && t_stop_ps > t_start_ps) {
                return Err(Failure::input("synth: need bin_ps > 0 and t_stop_ps > t_start_ps"));
            }
            let n = ((t_stop_ps - t_start_ps) / bin_ps + 1e-9).floor() as usize;
            let times: Vec<f64> = (0..=n).map(|i| t_start_ps + i as f64 * bin_ps).collect();
            let trace = emg_trace(*tau_ps, *sigma_ps, *t0_ps, *peak_counts, *baseline_counts, &times, &mut rng)?;
            (trace, ["time_ps", "counts"])
        }
    };
    let mut dir = RunDir::create(&out_dir(cli, Some(&cfg)))?;
    dir.write("synth.csv", |w| Ok(data.write_csv(w, &header)?))?;
    println!("[synth] {} rows, seed {seed}", data.len());
    dir.finish(manifest(cli, Some(&cfg), None, Some(seed)))?;
    Ok(EXIT_OK)
}

fn validate(cli: &Cli, cfg: Option<RunConfig>, cases: Option<&[u32]>, coupling_scale: f64) -> Result<u8, Failure> {
    if !(coupling_scale.is_finite() && coupling_scale >= 0.0) {
        return Err(Failure::input(format!("--coupling-scale must be finite and non-negative, got {coupling_scale}")));
    }
    let resolved = match cfg.as_ref().filter(|c| c.system.is_some()) {
        Some(c) => Some(c.resolve_system()?),
        None => None,
    };
    let mut opts = ValidationOptions {
        system: resolved.as_ref().map_or_else(reference_system, |r| r.system.clone()),
        coupling_scale,
        ..Default::default()
    };
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let ids = cases.unwrap_or(&ALL_CASES);
    let report = run_validation(ids, &opts);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.cases {
        println!("[case {:>2}] {} {}: {}", c.id, if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let mut dir = RunDir::create(&out_dir(cli, cfg.as_ref()))?;
    let text = report.to_json()?;
    dir.write("validation_report.json", |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    dir.finish(manifest(cli, cfg.as_ref(), resolved.as_ref(), Some(opts.seed)))?;
    let failed = report.cases.iter().filter(|c| !c.passed).count();
    println!(
        "[validate] {} of {} cases passed (coupling scale {})",
        report.cases.len() - failed,
        report.cases.len(),
        coupling_scale
    );
    Ok(if report.passed { EXIT_OK } else { EXIT_VALIDATION })
}
