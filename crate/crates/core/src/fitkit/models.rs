use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use super::{nls_minimize, Bounds, DataSeries, FitResult, LmOptions, LmOutcome};
use crate::error::{Error, Result};

/// Power law `y = prefactor · x^exponent` by linear regression of `ln y` on `ln x`.
pub fn fit_power_law(data: &DataSeries) -> Result<FitResult> {
    data.require_points(2)?;
    if data.x.iter().chain(&data.y).any(|&v| v <= 0.0) {
        return Err(Error::Domain("power-law fit needs positive x and y".into()));
    }
    let lx: Vec<f64> = data.x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = data.y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fit needs at least two distinct x".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = sse / (n - 2.0);
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let prefactor = intercept.exp();
    let out = LmOutcome {
        params: vec![slope, prefactor],
        stderr: vec![se_slope, prefactor * se_intercept],
        residual_norm: sse.sqrt(),
        converged: true,
        iterations: 0,
    };
    Ok(FitResult::from_outcome("power", &["exponent", "prefactor"], &out))
}

fn malus(theta_deg: f64, p: &[f64]) -> f64 {
    p[0] * (((theta_deg - p[2]).to_radians()).cos()).powi(2) + p[1]
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Malus law `I(θ) = A cos²(θ − θ0) + B` with angles in degrees, `A, B ≥ 0`.
/// Adds `dolp = A / (A + 2B)` to the derived quantities.
pub fn fit_malus(data: &DataSeries) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(Error::Precondition(format!("Malus fit needs at least 5 angles, got {}", data.len())));
    }
    let mut angles = data.x.clone();
    angles.sort_by(f64::total_cmp);
    let mut steps: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let spacing = if steps.is_empty() { 0.0 } else { median(&mut steps) };
    if angles[angles.len() - 1] - angles[0] + spacing < 180.0 - 1e-9 {
        return Err(Error::Precondition("Malus fit needs angles spanning a half turn".into()));
    }
    let (imin, imax) = data.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if imax - imin <= 1e-12 * imax.abs().max(f64::MIN_POSITIVE) {
        let out = LmOutcome {
            params: vec![0.0, imin.max(0.0), 0.0],
            stderr: vec![0.0; 3],
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
        };
        let mut r = FitResult::from_outcome("malus", &["A", "B", "theta0_deg"], &out);
        r.derived.insert("dolp".into(), 0.0);
        r.flags.push("degenerate".into());
        return Ok(r);
    }
    let argmax = data.y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let init = [imax - imin, imin.max(0.0), data.x[argmax]];
    let bounds = Bounds {
        lo: vec![0.0, 0.0, f64::NEG_INFINITY],
        hi: vec![f64::INFINITY; 3],
    };
    let mut out = nls_minimize(malus, data, &init, &bounds, None, &LmOptions::default())?;
    out.params[2] = out.params[2].rem_euclid(180.0);
    let mut r = FitResult::from_outcome("malus", &["A", "B", "theta0_deg"], &out);
    let (a, b) = (out.params[0], out.params[1]);
    if a + 2.0 * b > 0.0 {
        r.derived.insert("dolp".into(), a / (a + 2.0 * b));
    } else {
        r.derived.insert("dolp".into(), 0.0);
        r.flags.push("degenerate".into());
    }
    Ok(r)
}

/// Unit-area exponentially modified Gaussian: a Gaussian of width `sigma`
/// centred at `t0` convolved with `exp(-t/tau)/tau`.
pub fn emg(t: f64, t0: f64, sigma: f64, tau: f64) -> f64 {
    let x = t - t0;
    let z = (sigma / tau - x / sigma) / SQRT_2;
    if z < 25.0 {
        0.5 / tau * (0.5 * (sigma / tau).powi(2) - x / tau + erfc(z).ln()).exp()
    } else {
        // exp(z²) erfc(z) by its asymptotic series; the Gaussian factor
        // absorbs the exponentials so nothing overflows
        let z2 = z * z;
        let erfcx = (1.0 - 0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2) + 6.5625 / (z2 * z2 * z2 * z2))
            / (z * PI.sqrt());
        0.5 / tau * (-0.5 * (x / sigma).powi(2)).exp() * erfcx
    }
}

fn emg_model(t: f64, p: &[f64]) -> f64 {
    p[0] * emg(t, p[1], p[2], p[3]) + p[4]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmgOptions {
    /// Hold the Gaussian width at this value instead of fitting it.
    pub fixed_sigma: Option<f64>,
}

fn smooth(y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn crossing_before(x: &[f64], y: &[f64], peak: usize, level: f64) -> Option<f64> {
    (1..=peak).rev().find(|&i| y[i - 1] < level && y[i] >= level).map(|i| {
        let t = (level - y[i - 1]) / (y[i] - y[i - 1]);
        x[i - 1] + t * (x[i] - x[i - 1])
    })
}

/// Deterministic starting point `[amplitude, t0, sigma, tau, baseline]`.
fn emg_initial(data: &DataSeries) -> [f64; 5] {
    let (x, y) = (&data.x, &data.y);
    let ys = smooth(y);
    let span = x[x.len() - 1] - x[0];
    let dx = span / (x.len() - 1) as f64;
    let baseline = ys.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let peak = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let height = ys[peak] - baseline;

    let sigma = match (
        crossing_before(x, &ys, peak, baseline + 0.1 * height),
        crossing_before(x, &ys, peak, baseline + 0.9 * height),
    ) {
        (Some(a), Some(b)) if b > a => (b - a) / 2.563,
        _ => dx,
    };

    let tail: Vec<(f64, f64)> = (peak..x.len())
        .map(|i| (x[i], ys[i] - baseline))
        .skip_while(|(_, v)| *v > 0.5 * height)
        .take_while(|(_, v)| *v > 0.05 * height)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    let tau = if tail.len() >= 3 {
        let n = tail.len() as f64;
        let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = tail.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let stl: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let slope = stl / stt;
        if slope < 0.0 {
            -1.0 / slope
        } else {
            span / 5.0
        }
    } else {
        span / 5.0
    };

    let amplitude = x
        .windows(2)
        .zip(y.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1] - 2.0 * baseline))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    [amplitude, x[peak], sigma, tau, baseline]
}

/// Fit `amplitude · emg(t; t0, σ, τ) + baseline` to a photon-count trace with
/// Poisson weights `1/max(y, 1)`.
pub fn fit_lifetime_emg(data: &DataSeries, opts: &EmgOptions) -> Result<FitResult> {
    data.require_points(5)?;
    if data.x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("lifetime fit needs strictly increasing times".into()));
    }
    if data.y.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("photon counts must be nonnegative".into()));
    }
    let (x, y) = (&data.x, &data.y);
    let span = x[x.len() - 1] - x[0];
    let dx_min = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(0.0, f64::max);

    let mut lo = vec![0.0, x[0] - span, 1e-3 * dx_min, 1e-3 * dx_min, 0.0];
    let mut hi = vec![f64::INFINITY, x[x.len() - 1], span, 100.0 * span, ymax.max(1.0)];
    let mut init = emg_initial(data);
    if let Some(s) = opts.fixed_sigma {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("fixed sigma must be positive, got {s}")));
        }
        lo[2] = s;
        hi[2] = s;
        init[2] = s;
    }
    for i in 0..5 {
        init[i] = init[i].clamp(lo[i], hi[i]);
    }
    let weights: Vec<f64> = y.iter().map(|v| 1.0 / v.max(1.0).sqrt()).collect();
    let out = nls_minimize(emg_model, data, &init, &Bounds { lo, hi }, Some(&weights), &LmOptions::default())?;
    let mut r = FitResult::from_outcome("emg", &["amplitude", "t0", "sigma", "tau", "baseline"], &out);
    let peak_t = x[y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)];
    if x[x.len() - 1] - peak_t < 5.0 * out.params[3] {
        r.flags.push("trace_shorter_than_5_tau".into());
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitkit::synth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_cubic() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 7.0 * v.powi(3)).collect();
        let r = fit_power_law(&DataSeries::new(x, y).unwrap()).unwrap();
        assert!((r.param("exponent").unwrap() - 3.0).abs() < 1e-9);
        assert!((r.param("prefactor").unwrap() - 7.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_exponent() {
        let r = fit_power_law(&DataSeries::new(vec![1.0, 2.0, 5.0], vec![4.0; 3]).unwrap()).unwrap();
        assert!(r.param("exponent").unwrap().abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_nonpositive() {
        let d = DataSeries::new(vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 2.0]).unwrap();
        assert!(matches!(fit_power_law(&d), Err(Error::Domain(_))));
    }

    #[test]
    fn exponent_invariant_under_rescaling() {
        let x: Vec<f64> = (1..=8).map(|i| f64::from(i) * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v.powf(2.7) * (1.0 + 0.01 * v.sin())).collect();
        let a = fit_power_law(&DataSeries::new(x.clone(), y.clone()).unwrap()).unwrap();
        let b = fit_power_law(&DataSeries::new(x.iter().map(|v| v * 13.0).collect(), y.iter().map(|v| v * 0.2).collect()).unwrap())
            .unwrap();
        assert!((a.param("exponent").unwrap() - b.param("exponent").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn malus_pure_cos2_has_unit_dolp() {
        let x: Vec<f64> = (0..36).map(|i| f64::from(i) * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| malus(t, &[1.0, 0.0, 30.0])).collect();
        let r = fit_malus(&DataSeries::new(x, y).unwrap()).unwrap();
        assert!((r.param("dolp").unwrap() - 1.0).abs() < 1e-6);
        assert!((r.param("theta0_deg").unwrap() - 30.0).abs() < 1e-6);
    }

    #[test]
    fn malus_degenerate_and_invariances() {
        let x: Vec<f64> = (0..19).map(|i| f64::from(i) * 10.0).collect();
        let flat = fit_malus(&DataSeries::new(x.clone(), vec![3.0; 19]).unwrap()).unwrap();
        assert_eq!(flat.param("dolp"), Some(0.0));
        assert!(flat.flags.contains(&"degenerate".to_string()));

        let y: Vec<f64> = x.iter().map(|&t| malus(t, &[0.8, 0.1, 50.0]) * (1.0 + 0.02 * (0.37 * t).sin())).collect();
        let a = fit_malus(&DataSeries::new(x.clone(), y.clone()).unwrap()).unwrap();
        let scaled = fit_malus(&DataSeries::new(x.clone(), y.iter().map(|v| 40.0 * v).collect()).unwrap()).unwrap();
        assert!((a.param("dolp").unwrap() - scaled.param("dolp").unwrap()).abs() < 1e-6);
        let turned = fit_malus(&DataSeries::new(x.iter().map(|t| t + 180.0).collect(), y).unwrap()).unwrap();
        assert!((a.param("dolp").unwrap() - turned.param("dolp").unwrap()).abs() < 1e-6);

        assert!(fit_malus(&DataSeries::new(vec![0.0, 10.0, 20.0, 30.0, 40.0], vec![1.0; 5]).unwrap()).is_err());
    }

    #[test]
    fn emg_has_unit_area() {
        for (sigma, tau) in [(80.0, 260.0), (5.0, 440.0), (300.0, 50.0)] {
            let (lo, hi) = (-12.0 * sigma, 12.0 * sigma + 45.0 * tau);
            let n = 400_000;
            let h = (hi - lo) / n as f64;
            let sum: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * emg(lo + i as f64 * h, 0.0, sigma, tau)
                })
                .sum::<f64>()
                * h;
            assert!((sum - 1.0).abs() < 1e-6, "{sigma} {tau}: {sum}");
        }
    }

    #[test]
    fn emg_tends_to_exponential_and_is_finite_far_before_onset() {
        let tau = 260.0;
        let v = emg(500.0, 0.0, 0.26, tau);
        // the only difference is the factor exp(σ²/2τ²)
        assert!((v / ((-500.0 / tau).exp() / tau) - 1.0).abs() < 1e-6);
        let early = emg(-50.0, 0.0, 1.0, 260.0);
        assert!(early.is_finite() && early >= 0.0 && early < 1e-300);
        // continuity across the asymptotic switch
        let (s, t) = (3.0, 200.0);
        let x_switch = s * (s / t - 25.0 * std::f64::consts::SQRT_2);
        let a = emg(x_switch - 1e-9, 0.0, s, t);
        let b = emg(x_switch + 1e-9, 0.0, s, t);
        assert!((a / b - 1.0).abs() < 1e-7, "{a} {b}");
    }

    #[test]
    fn noiseless_recovery_for_all_models() {
        let x: Vec<f64> = (1..=12).map(|i| f64::from(i) * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.4 * v.powf(3.2)).collect();
        let r = fit_power_law(&DataSeries::new(x, y).unwrap()).unwrap();
        assert!((r.param("exponent").unwrap() - 3.2).abs() < 1e-6);

        let x: Vec<f64> = (0..37).map(|i| f64::from(i) * 5.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| malus(t, &[2.0, 0.3, 112.0])).collect();
        let r = fit_malus(&DataSeries::new(x, y).unwrap()).unwrap();
        for (k, v) in [("A", 2.0), ("B", 0.3), ("theta0_deg", 112.0)] {
            assert!((r.param(k).unwrap() - v).abs() < 1e-6, "{k}: {r:?}");
        }

        let t: Vec<f64> = (0..500).map(|i| -500.0 + f64::from(i) * 8.0).collect();
        let truth = [5.0e5, 0.0, 80.0, 260.0, 3.0];
        let y: Vec<f64> = t.iter().map(|&v| emg_model(v, &truth)).collect();
        let r = fit_lifetime_emg(&DataSeries::new(t, y).unwrap(), &EmgOptions::default()).unwrap();
        assert!(r.converged);
        for (k, v) in ["amplitude", "t0", "sigma", "tau", "baseline"].iter().zip(truth) {
            let got = r.param(k).unwrap();
            assert!((got - v).abs() <= 1e-6 * v.abs().max(1.0), "{k}: {got} vs {v}");
        }
    }

    #[test]
    fn emg_pure_exponential_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<f64> = (0..400).map(|i| -200.0 + f64::from(i) * 8.0).collect();
        let d = synth::emg_trace(260.0, 0.26, 0.0, 1e4, 0.0, &t, &mut rng).unwrap();
        let r = fit_lifetime_emg(&d, &EmgOptions::default()).unwrap();
        assert!((r.param("tau").unwrap() / 260.0 - 1.0).abs() < 0.01, "{r:?}");
    }

    #[test]
    fn fixed_sigma_is_held() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t: Vec<f64> = (0..400).map(|i| -400.0 + f64::from(i) * 8.0).collect();
        let d = synth::emg_trace(440.0, 80.0, 0.0, 1e4, 2.0, &t, &mut rng).unwrap();
        let r = fit_lifetime_emg(&d, &EmgOptions { fixed_sigma: Some(80.0) }).unwrap();
        assert_eq!(r.param("sigma"), Some(80.0));
        assert_eq!(r.stderr["sigma"], 0.0);
        assert!((r.param("tau").unwrap() - 440.0).abs() < 20.0);
    }
}
