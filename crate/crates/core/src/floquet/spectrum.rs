//! Absorption spectrum from time-averaged transition probabilities.
//!
//! Multiphoton resonances of the driven ladder are Lorentzian needles whose
//! width is set by the N-photon splitting, often far below any practical grid
//! step. The scan therefore locates every avoided crossing between pairs of
//! level-dominated quasienergy branches, measures its splitting, and adds a
//! Lorentz-adapted quadrature (`ω = c + w tan θ`, θ uniform) around it before
//! the Gaussian convolution. Crossings whose splitting vanishes (parity-forbidden
//! orders) are reported but need no extra nodes.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{floquet_point, fold, FloquetOptions, QuasienergyPoint};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::model::{DriveSpec, LadderSystem};
use crate::peaks::find_peaks;

/// Splittings below this (eV) are treated as exact crossings.
pub const FORBIDDEN_GAP: f64 = 1e-9;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Initial level of the transition probability.
    pub from: usize,
    /// Final level of the transition probability.
    pub to: usize,
    /// Extra quadrature nodes per located crossing.
    pub nodes_per_crossing: usize,
    /// Half-width of the refined window in units of the local grid step.
    pub window_steps: f64,
    /// Peaks with prominence below this fraction of the convolved maximum are dropped.
    pub min_relative_prominence: f64,
    /// Disable crossing refinement (plain grid quadrature).
    pub refine: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            from: 0,
            to: 1,
            nodes_per_crossing: 600,
            window_steps: 3.0,
            min_relative_prominence: 1e-3,
            refine: true,
        }
    }
}

/// A peak of the convolved spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    #[serde(rename = "center_eV")]
    pub center_ev: f64,
    /// Convolved strength at the refined peak.
    pub height: f64,
    /// Height above the higher of the two bases on either side.
    pub prominence: f64,
    /// Full width at half prominence.
    #[serde(rename = "fwhm_eV")]
    pub fwhm_ev: f64,
    /// Photon order `round(E_transition / ħω_peak)`.
    pub order: u32,
}

/// An avoided (or exact) crossing between the branches dominated by two levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub levels: (usize, usize),
    pub order: u32,
    #[serde(rename = "center_eV")]
    pub center_ev: f64,
    /// Minimum quasienergy splitting, eV.
    #[serde(rename = "gap_eV")]
    pub gap_ev: f64,
    /// Lorentzian half width in photon energy, `gap / order`.
    #[serde(rename = "half_width_eV")]
    pub half_width_ev: f64,
    pub forbidden: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    #[serde(rename = "photon_energies_eV")]
    pub photon_energies: Vec<f64>,
    /// Time-averaged transition probability on the grid.
    pub absorption_strength: Vec<f64>,
    pub convolved_strength: Vec<f64>,
    pub resonances: Vec<Resonance>,
    pub crossings: Vec<Crossing>,
    /// Quadrature nodes (grid plus refinement) and the strength there.
    #[serde(skip)]
    pub nodes: Vec<f64>,
    #[serde(skip)]
    pub node_strength: Vec<f64>,
    pub raw_area: f64,
    pub convolved_area: f64,
}

impl SpectrumResult {
    /// `photon_energy_eV, pbar_raw, pbar_convolved`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "photon_energy_eV,pbar_raw,pbar_convolved")?;
        for i in 0..self.photon_energies.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.photon_energies[i]),
                fmt_f64(self.absorption_strength[i]),
                fmt_f64(self.convolved_strength[i])
            )?;
        }
        Ok(())
    }

    /// All quadrature nodes, `photon_energy_eV, pbar_raw`.
    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "photon_energy_eV,pbar_raw")?;
        for (x, y) in self.nodes.iter().zip(&self.node_strength) {
            writeln!(w, "{},{}", fmt_f64(*x), fmt_f64(*y))?;
        }
        Ok(())
    }

    /// Strongest resonance of the given photon order.
    pub fn strongest(&self, order: u32) -> Option<&Resonance> {
        self.resonances
            .iter()
            .filter(|r| r.order == order)
            .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.len()];
    for i in 0..x.len().saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Gaussian convolution of samples `(nodes, values)` evaluated at `outputs`.
/// The kernel is truncated at ±4σ and renormalized at each output point over
/// the nodes it actually covers, so grid edges are not pulled toward zero.
pub fn gaussian_convolve(nodes: &[f64], values: &[f64], outputs: &[f64], fwhm: f64) -> Vec<f64> {
    let sigma = fwhm / FWHM_PER_SIGMA;
    let w = trapezoid_weights(nodes);
    outputs
        .iter()
        .map(|&x| {
            let lo = nodes.partition_point(|&n| n < x - 4.0 * sigma);
            let hi = nodes.partition_point(|&n| n <= x + 4.0 * sigma);
            let (mut num, mut den) = (0.0, 0.0);
            for i in lo..hi {
                let z = (nodes[i] - x) / sigma;
                let k = (-0.5 * z * z).exp() * w[i];
                num += k * values[i];
                den += k;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

fn transition_order(system: &LadderSystem, a: usize, b: usize, omega: f64) -> u32 {
    (system.transition_energy(a, b) / omega).round() as u32
}

/// Folded quasienergy difference between the modes dominated by levels `b` and `a`.
fn pair_difference(p: &QuasienergyPoint, a: usize, b: usize) -> Option<f64> {
    let n = p.dim();
    let dominated: Vec<usize> = (0..n).map(|k| p.dominant_level(k)).collect();
    let mode_of = |level: usize| {
        let mut it = dominated.iter().enumerate().filter(|(_, &l)| l == level);
        match (it.next(), it.next()) {
            (Some((k, _)), None) => Some(k),
            _ => None,
        }
    };
    let (ka, kb) = (mode_of(a)?, mode_of(b)?);
    Some(fold(p.quasienergies[kb] - p.quasienergies[ka], p.photon_energy))
}

/// Splitting of the two modes carrying most of the weight of levels `a` and `b`.
fn pair_gap(p: &QuasienergyPoint, a: usize, b: usize) -> f64 {
    let n = p.dim();
    let mut ks: Vec<usize> = (0..n).collect();
    ks.sort_by(|&x, &y| {
        let wx = p.overlaps[(a, x)] + p.overlaps[(b, x)];
        let wy = p.overlaps[(a, y)] + p.overlaps[(b, y)];
        wy.total_cmp(&wx)
    });
    fold(p.quasienergies[ks[0]] - p.quasienergies[ks[1]], p.photon_energy).abs()
}

fn sign_change(dl: f64, dr: f64, omega: f64) -> bool {
    dl * dr < 0.0 && dl.abs() < 0.25 * omega && dr.abs() < 0.25 * omega
}

fn eval(system: &LadderSystem, scale: f64, omega: f64) -> Result<QuasienergyPoint> {
    floquet_point(
        system,
        &DriveSpec::monochromatic(omega).with_scale(scale),
        &FloquetOptions::default(),
    )
}

/// Bisect for the crossing of the `a`- and `b`-dominated branches inside
/// `[lo, hi]`, given the folded branch differences at the ends.
fn bisect_crossing(
    system: &LadderSystem,
    scale: f64,
    (a, b): (usize, usize),
    (mut lo, mut dl): (f64, f64),
    (mut hi, mut dr): (f64, f64),
) -> Result<Crossing> {
    let mut mid_point = None;
    for _ in 0..80 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = eval(system, scale, mid)?;
        let dm = pair_difference(&p, a, b);
        match dm {
            Some(dm) if dm.abs() >= 1e-11 && dm * dl > 0.0 => {
                lo = mid;
                dl = dm;
            }
            Some(dm) if dm.abs() >= 1e-11 && dm * dr > 0.0 => {
                hi = mid;
                dr = dm;
            }
            _ => {
                mid_point = Some(p);
                break;
            }
        }
        mid_point = Some(p);
    }
    let center = 0.5 * (lo + hi);
    let p = match mid_point {
        Some(p) if (p.photon_energy - center).abs() <= (hi - lo) => p,
        _ => eval(system, scale, center)?,
    };
    let gap = pair_gap(&p, a, b).min(dl.abs().max(dr.abs()));
    let order = transition_order(system, a, b, center);
    let forbidden = gap < FORBIDDEN_GAP;
    Ok(Crossing {
        levels: (a, b),
        order,
        center_ev: p.photon_energy,
        gap_ev: gap,
        half_width_ev: if order > 0 { gap / order as f64 } else { gap },
        forbidden,
    })
}

/// Locate the crossing of the branches dominated by levels `a` and `b` between
/// photon energies `lo` and `hi`.
pub fn locate_crossing(system: &LadderSystem, scale: f64, a: usize, b: usize, lo: f64, hi: f64) -> Result<Crossing> {
    let pl = eval(system, scale, lo)?;
    let pr = eval(system, scale, hi)?;
    match (pair_difference(&pl, a, b), pair_difference(&pr, a, b)) {
        (Some(dl), Some(dr)) if sign_change(dl, dr, 0.5 * (lo + hi)) => {
            bisect_crossing(system, scale, (a, b), (lo, dl), (hi, dr))
        }
        _ => Err(Error::Precondition(format!(
            "no crossing of the level-{a} and level-{b} branches between {lo} and {hi} eV"
        ))),
    }
}

fn find_crossings(system: &LadderSystem, scale: f64, grid: &[f64], points: &[QuasienergyPoint]) -> Result<Vec<Crossing>> {
    let n = system.dim();
    let mut brackets = Vec::new();
    for i in 0..grid.len() - 1 {
        for a in 0..n {
            for b in a + 1..n {
                if let (Some(dl), Some(dr)) = (pair_difference(&points[i], a, b), pair_difference(&points[i + 1], a, b)) {
                    if sign_change(dl, dr, grid[i]) && transition_order(system, a, b, grid[i]) > 0 {
                        brackets.push(((a, b), (grid[i], dl), (grid[i + 1], dr)));
                    }
                }
            }
        }
    }
    brackets
        .into_par_iter()
        .map(|(pair, l, r)| bisect_crossing(system, scale, pair, l, r))
        .collect()
}

fn refinement_nodes(c: &Crossing, grid: &[f64], opts: &SpectrumOptions) -> Vec<f64> {
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    let idx = grid.partition_point(|&x| x < c.center_ev).clamp(1, grid.len() - 1);
    let step = grid[idx] - grid[idx - 1];
    let lo = (c.center_ev - opts.window_steps * step).max(first);
    let hi = (c.center_ev + opts.window_steps * step).min(last);
    let w = c.half_width_ev.max(1e-15);
    let (tl, th) = (((lo - c.center_ev) / w).atan(), ((hi - c.center_ev) / w).atan());
    let m = opts.nodes_per_crossing;
    (0..m)
        .map(|i| c.center_ev + w * (tl + (i as f64 + 0.5) * (th - tl) / m as f64).tan())
        .filter(|x| *x > first && *x < last)
        .collect()
}

/// Time-averaged transition probability over a photon-energy grid, refined
/// around every avoided crossing and convolved with a Gaussian of the given FWHM (eV).
pub fn spectrum_scan(
    system: &LadderSystem,
    scale: f64,
    grid: &[f64],
    convolution_fwhm: f64,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult> {
    if grid.len() < 3 {
        return Err(Error::Precondition(format!("grid needs at least 3 points, got {}", grid.len())));
    }
    if grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("grid must be positive and strictly increasing".into()));
    }
    if !(convolution_fwhm.is_finite() && convolution_fwhm > 0.0) {
        return Err(Error::Precondition(format!("convolution FWHM must be positive, got {convolution_fwhm}")));
    }
    let max_step = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > convolution_fwhm / 5.0 * (1.0 + 1e-9) {
        return Err(Error::Precondition(format!(
            "grid step {max_step:.3e} eV is coarser than FWHM/5 = {:.3e} eV",
            convolution_fwhm / 5.0
        )));
    }
    let n = system.dim();
    if opts.from >= n || opts.to >= n {
        return Err(Error::Domain(format!("level index out of range for a {n}-level system")));
    }

    let points = grid
        .par_iter()
        .map(|&w| eval(system, scale, w))
        .collect::<Result<Vec<_>>>()?;
    let absorption: Vec<f64> = points.iter().map(|p| p.transition_probability(opts.from, opts.to)).collect();

    let crossings = if opts.refine {
        find_crossings(system, scale, grid, &points)?
    } else {
        Vec::new()
    };
    let mut extra: Vec<f64> = crossings
        .iter()
        .filter(|c| !c.forbidden)
        .flat_map(|c| refinement_nodes(c, grid, opts))
        .collect();
    extra.sort_by(f64::total_cmp);
    extra.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let extra_values = extra
        .par_iter()
        .map(|&w| eval(system, scale, w).map(|p| p.transition_probability(opts.from, opts.to)))
        .collect::<Result<Vec<_>>>()?;

    let mut merged: Vec<(f64, f64)> = grid.iter().copied().zip(absorption.iter().copied()).collect();
    merged.extend(extra.into_iter().zip(extra_values));
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    merged.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    let (nodes, node_strength): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();

    let convolved = gaussian_convolve(&nodes, &node_strength, grid, convolution_fwhm);
    let raw_area = trapezoid_weights(&nodes).iter().zip(&node_strength).map(|(w, v)| w * v).sum();
    let convolved_area = trapezoid_weights(grid).iter().zip(&convolved).map(|(w, v)| w * v).sum();

    let max_conv = convolved.iter().copied().fold(0.0, f64::max);
    let transition = system.transition_energy(opts.from, opts.to);
    let resonances = find_peaks(grid, &convolved, opts.min_relative_prominence * max_conv)
        .into_iter()
        .map(|p| Resonance {
            center_ev: p.center,
            height: p.height,
            prominence: p.prominence,
            fwhm_ev: p.fwhm,
            order: (transition / p.center).round() as u32,
        })
        .collect();

    Ok(SpectrumResult {
        photon_energies: grid.to_vec(),
        absorption_strength: absorption,
        convolved_strength: convolved,
        resonances,
        crossings,
        nodes,
        node_strength,
        raw_area,
        convolved_area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn convolution_preserves_area_of_a_needle() {
        // narrow Lorentzian on a Lorentz-adapted node set, far from the edges
        let (c, w) = (1.0, 2e-5);
        let mut nodes = grid(0.8, 1.2, 1e-3);
        let th = f64::atan(3e-3 / w);
        nodes.extend((0..800).map(|i| c + w * f64::tan(-th + (i as f64 + 0.5) * 2.0 * th / 800.0)));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let values: Vec<f64> = nodes.iter().map(|x| 0.5 * w * w / (w * w + (x - c) * (x - c))).collect();
        let out = grid(0.8, 1.2, 1e-3);
        let conv = gaussian_convolve(&nodes, &values, &out, 0.02);
        let raw: f64 = trapezoid_weights(&nodes).iter().zip(&values).map(|(a, b)| a * b).sum();
        let smooth: f64 = trapezoid_weights(&out).iter().zip(&conv).map(|(a, b)| a * b).sum();
        assert!(((raw - smooth) / raw).abs() < 1e-3, "{raw} vs {smooth}");
        // the analytic Lorentzian area over the window is close to π w / 2
        assert!((raw / (0.5 * std::f64::consts::PI * w) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn convolution_of_constant_is_constant_up_to_edges() {
        let x = grid(0.8, 1.0, 1e-3);
        let v = vec![0.3; x.len()];
        for y in gaussian_convolve(&x, &v, &x, 0.02) {
            assert!((y - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let s = crate::model::reference_system();
        let g = grid(0.8, 0.9, 0.01);
        let r = spectrum_scan(&s, 1.0, &g, 0.02, &SpectrumOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
        assert!(spectrum_scan(&s, 1.0, &[], 0.02, &SpectrumOptions::default()).is_err());
    }

    #[test]
    fn three_photon_crossing_located_near_third_of_transition() {
        let s = crate::model::reference_system();
        let c = locate_crossing(&s, 1.0, 0, 1, 0.86, 0.88).unwrap();
        assert_eq!(c.order, 3);
        assert!(!c.forbidden);
        assert!((c.center_ev - 0.87).abs() < 5e-3, "{c:?}");
        assert!(c.gap_ev > 1e-6 && c.gap_ev < 1e-3, "{c:?}");
    }

    #[test]
    fn two_photon_crossing_of_opposite_parity_levels_is_exact() {
        let s = crate::model::reference_system();
        let c = locate_crossing(&s, 1.0, 0, 1, 1.29, 1.32).unwrap();
        assert_eq!(c.order, 2);
        assert!(c.forbidden, "{c:?}");
    }
}
