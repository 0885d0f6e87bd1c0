//! Synthetic data with known generating parameters, for fit-recovery checks.
//! All generators draw from the caller's RNG so a seeded generator gives
//! reproducible series.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{emg, DataSeries};
use crate::error::{Error, Result};

/// `n` points spaced evenly in `ln x` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `prefactor · x^exponent · (1 + η)`, η normal with standard deviation `rel_noise`.
pub fn power_law_series<R: Rng>(prefactor: f64, exponent: f64, x: &[f64], rel_noise: f64, rng: &mut R) -> Result<DataSeries> {
    let noise = Normal::new(0.0, rel_noise).map_err(|e| Error::Domain(e.to_string()))?;
    let y = x.iter().map(|&v| prefactor * v.powf(exponent) * (1.0 + noise.sample(rng))).collect();
    DataSeries::new(x.to_vec(), y)
}

/// Malus-law amplitudes `(A, B)` with `A + B = peak` and the given DOLP.
pub fn malus_params_for_dolp(dolp: f64, peak: f64) -> (f64, f64) {
    (2.0 * dolp / (1.0 + dolp) * peak, (1.0 - dolp) / (1.0 + dolp) * peak)
}

/// `A cos²(θ − θ0) + B` (degrees) plus Gaussian noise of standard deviation
/// `noise_frac · (A + B)`.
pub fn malus_series<R: Rng>(
    amplitude: f64,
    baseline: f64,
    theta0_deg: f64,
    angles_deg: &[f64],
    noise_frac: f64,
    rng: &mut R,
) -> Result<DataSeries> {
    let noise = Normal::new(0.0, noise_frac * (amplitude + baseline)).map_err(|e| Error::Domain(e.to_string()))?;
    let y = angles_deg
        .iter()
        .map(|&t| amplitude * (t - theta0_deg).to_radians().cos().powi(2) + baseline + noise.sample(rng))
        .collect();
    DataSeries::new(angles_deg.to_vec(), y)
}

/// Poisson photon counts from `a · emg(t; t0, σ, τ) + baseline`, with `a`
/// chosen so the noiseless trace peaks at `peak_counts` above the baseline.
pub fn emg_trace<R: Rng>(
    tau: f64,
    sigma: f64,
    t0: f64,
    peak_counts: f64,
    baseline: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<DataSeries> {
    if !(tau > 0.0 && sigma > 0.0 && peak_counts > 0.0 && baseline >= 0.0) {
        return Err(Error::Domain("trace parameters must be positive".into()));
    }
    let shape: Vec<f64> = times.iter().map(|&t| emg(t, t0, sigma, tau)).collect();
    let max = shape.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::Domain("time grid misses the decay".into()));
    }
    let counts = shape
        .iter()
        .map(|&s| {
            let mean = peak_counts * s / max + baseline;
            if mean > 0.0 {
                Poisson::new(mean).map(|p| p.sample(rng)).map_err(|e| Error::Domain(e.to_string()))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DataSeries::new(times.to_vec(), counts)
}
