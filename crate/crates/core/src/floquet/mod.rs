//! Floquet analysis of the monochromatically driven ladder.
//!
//! The one-period propagator `U(T)` is integrated once per photon energy; its
//! eigenphases give the quasienergies and its eigenvectors the Floquet modes at
//! `t = 0`. The same integration yields `U(t)` at evenly spaced sample times,
//! from which the period-averaged level populations of every mode follow
//! without further propagation.

mod spectrum;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DriveKind, DriveSpec, DrivenLadder, LadderSystem};
use crate::propagate::{auto_step, propagator_samples, steps_for};

pub use spectrum::{gaussian_convolve, locate_crossing, spectrum_scan, Crossing, Resonance, SpectrumOptions, SpectrumResult};

/// Samples per period used for mode averages.
pub const SAMPLES_PER_PERIOD: usize = 200;

/// Quasienergy gaps below this (eV) are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Largest off-diagonal element tolerated in the Schur form of `U(T)`.
const SCHUR_NORMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetOptions {
    pub samples_per_period: usize,
    /// Integration steps between samples; chosen from the step cap when `None`.
    pub steps_per_sample: Option<usize>,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            samples_per_period: SAMPLES_PER_PERIOD,
            steps_per_sample: None,
        }
    }
}

/// Fold a quasienergy into `[-ω/2, ω/2)`.
pub fn fold(eps: f64, omega: f64) -> f64 {
    let folded = eps - omega * ((eps + 0.5 * omega) / omega).floor();
    if folded >= 0.5 * omega {
        folded - omega
    } else {
        folded
    }
}

/// Floquet data at one photon energy.
#[derive(Debug, Clone, Serialize)]
pub struct QuasienergyPoint {
    pub photon_energy: f64,
    /// Folded quasienergies (eV), ascending before branch tracking.
    pub quasienergies: Vec<f64>,
    /// Floquet modes at `t = 0`, one per column.
    #[serde(skip)]
    pub modes: DMatrix<C64>,
    /// `overlaps[(j, k)] = |<j|mode_k(0)>|²`.
    #[serde(skip)]
    pub overlaps: DMatrix<f64>,
    /// `mode_populations[(j, k)]` = period average of `|<j|mode_k(t)>|²`.
    #[serde(skip)]
    pub mode_populations: DMatrix<f64>,
    /// Branch identity of each mode; equal to the dominant level at the first point of a scan.
    pub branch_labels: Vec<usize>,
    /// Smallest folded distance between two quasienergies (eV).
    pub min_gap: f64,
}

impl QuasienergyPoint {
    pub fn dim(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn degenerate(&self) -> bool {
        self.min_gap < DEGENERACY_GAP
    }

    /// Long-time average of `|<to|ψ(t)>|²` for `ψ(0) = |from>`:
    /// `Σ_k |<mode_k|from>|² · avg_t |<to|mode_k(t)>|²`.
    pub fn transition_probability(&self, from: usize, to: usize) -> f64 {
        (0..self.dim())
            .map(|k| self.overlaps[(from, k)] * self.mode_populations[(to, k)])
            .sum()
    }

    /// Level with the largest weight in mode `k`.
    pub fn dominant_level(&self, k: usize) -> usize {
        argmax((0..self.dim()).map(|j| self.overlaps[(j, k)]))
    }

    /// Quasienergy of the mode carrying branch label `label`.
    pub fn branch_energy(&self, label: usize) -> Option<f64> {
        self.branch_labels
            .iter()
            .position(|&l| l == label)
            .map(|k| self.quasienergies[k])
    }

    /// `|Σ ε_k - Σ E_k|`, folded; zero for a traceless drive.
    pub fn sum_rule_residual(&self, system: &LadderSystem) -> f64 {
        let eps: f64 = self.quasienergies.iter().sum();
        let bare: f64 = system.level_energies().iter().sum();
        fold(eps - bare, self.photon_energy).abs()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn require_monochromatic(drive: &DriveSpec) -> Result<()> {
    drive.validate()?;
    if drive.kind != DriveKind::Monochromatic {
        return Err(Error::Precondition("Floquet analysis needs a monochromatic drive".into()));
    }
    Ok(())
}

fn steps_per_sample(g: &DrivenLadder, period: f64, opts: &FloquetOptions) -> usize {
    opts.steps_per_sample.unwrap_or_else(|| {
        let dt = auto_step(g, period);
        steps_for(period, dt).div_ceil(opts.samples_per_period)
    })
}

/// `U(t)` at `samples_per_period + 1` equally spaced times in `[0, T]`.
pub fn period_propagators(system: &LadderSystem, drive: &DriveSpec, opts: &FloquetOptions) -> Result<Vec<DMatrix<C64>>> {
    require_monochromatic(drive)?;
    let g = DrivenLadder::new(system, drive)?;
    let period = drive.period();
    let sps = steps_per_sample(&g, period, opts);
    propagator_samples(&g, 0.0, period, opts.samples_per_period, sps)
}

/// One-period propagator `U(T)`, `T = 2π/ω`.
pub fn monodromy(system: &LadderSystem, drive: &DriveSpec) -> Result<DMatrix<C64>> {
    require_monochromatic(drive)?;
    let g = DrivenLadder::new(system, drive)?;
    let period = drive.period();
    let opts = FloquetOptions::default();
    let sps = steps_per_sample(&g, period, &opts);
    let mut samples = propagator_samples(&g, 0.0, period, 1, sps * opts.samples_per_period)?;
    Ok(samples.pop().expect("end-of-period sample"))
}

/// Eigen-decomposition of a unitary matrix through its complex Schur form,
/// which is diagonal for a normal matrix. Returns eigenvalues and eigenvectors
/// (columns).
fn unitary_eigen(u: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = u.nrows();
    let schur = Schur::try_new(u.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition of the monodromy did not converge".into()))?;
    let (q, t) = schur.unpack();
    let mut off = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            off = off.max(t[(i, j)].norm());
        }
    }
    if off > SCHUR_NORMALITY_TOL {
        return Err(Error::Numeric(format!(
            "monodromy is not normal within tolerance (Schur off-diagonal {off:.2e})"
        )));
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), q))
}

/// Quasienergies and modes from a monodromy matrix, ordered by ascending
/// folded quasienergy. Each mode is phased so its largest component is real and positive.
pub fn quasienergies(u: &DMatrix<C64>, period: f64) -> Result<QuasienergyPoint> {
    let n = u.nrows();
    let omega = std::f64::consts::TAU / period;
    let (values, vectors) = unitary_eigen(u)?;
    let mut order: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .map(|(k, lam)| (fold(-lam.arg() / period, omega), k))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let quasienergies: Vec<f64> = order.iter().map(|o| o.0).collect();
    let mut modes = DMatrix::<C64>::zeros(n, n);
    for (dst, &(_, src)) in order.iter().enumerate() {
        let col = vectors.column(src);
        let big = argmax(col.iter().map(|c| c.norm()));
        let phase = col[big].conj() / col[big].norm();
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            modes[(i, dst)] = col[i] * phase / norm;
        }
    }
    let overlaps = modes.map(|c| c.norm_sqr());
    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            min_gap = min_gap.min(fold(quasienergies[b] - quasienergies[a], omega).abs());
        }
    }
    let branch_labels = (0..n).map(|k| argmax((0..n).map(|j| overlaps[(j, k)]))).collect();
    Ok(QuasienergyPoint {
        photon_energy: omega,
        quasienergies,
        modes,
        overlaps,
        mode_populations: DMatrix::zeros(n, n),
        branch_labels,
        min_gap,
    })
}

/// Full Floquet analysis at one drive: quasienergies, modes and their
/// period-averaged populations (trapezoidal rule over the sample times).
pub fn floquet_point(system: &LadderSystem, drive: &DriveSpec, opts: &FloquetOptions) -> Result<QuasienergyPoint> {
    let samples = period_propagators(system, drive, opts)?;
    let period = drive.period();
    let mut point = quasienergies(samples.last().expect("non-empty"), period)?;
    point.photon_energy = drive.photon_energy;
    let n = point.dim();
    let m = samples.len() - 1;
    let mut avg = DMatrix::<f64>::zeros(n, n);
    for (s, u) in samples.iter().enumerate() {
        let w = if s == 0 || s == m { 0.5 } else { 1.0 } / m as f64;
        let evolved = u * &point.modes;
        for k in 0..n {
            for j in 0..n {
                avg[(j, k)] += w * evolved[(j, k)].norm_sqr();
            }
        }
    }
    point.mode_populations = avg;
    Ok(point)
}

/// Time-averaged transition probability with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionAverage {
    pub value: f64,
    /// Two quasienergies closer than [`DEGENERACY_GAP`]; the mode-sum then
    /// omits cross terms that do not average out.
    pub degenerate: bool,
}

pub fn averaged_transition_probability(
    system: &LadderSystem,
    drive: &DriveSpec,
    from: usize,
    to: usize,
) -> Result<TransitionAverage> {
    let n = system.dim();
    if from >= n || to >= n {
        return Err(Error::Domain(format!("level index out of range for a {n}-level system")));
    }
    let point = floquet_point(system, drive, &FloquetOptions::default())?;
    Ok(TransitionAverage {
        value: point.transition_probability(from, to),
        degenerate: point.degenerate(),
    })
}

/// Relabel modes along a scan so that each label follows one branch: every
/// mode inherits the label of the previous point's mode it overlaps most.
/// Ties (within 1e-9) go to the lower quasienergy.
pub fn track_branches(points: &mut [QuasienergyPoint]) {
    for i in 1..points.len() {
        let (head, tail) = points.split_at_mut(i);
        let prev = &head[i - 1];
        let cur = &mut tail[0];
        let n = cur.dim();
        let ov = prev.modes.adjoint() * &cur.modes;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                pairs.push((ov[(a, b)].norm(), a, b));
            }
        }
        pairs.sort_by(|x, y| {
            if (x.0 - y.0).abs() < 1e-9 {
                cur.quasienergies[x.2]
                    .total_cmp(&cur.quasienergies[y.2])
                    .then(x.1.cmp(&y.1))
            } else {
                y.0.total_cmp(&x.0)
            }
        });
        let mut used_prev = vec![false; n];
        let mut labels = vec![usize::MAX; n];
        for (_, a, b) in pairs {
            if !used_prev[a] && labels[b] == usize::MAX {
                used_prev[a] = true;
                labels[b] = prev.branch_labels[a];
            }
        }
        cur.branch_labels = labels;
    }
}

/// Quasienergies over a grid of photon energies with branch tracking.
/// Points are evaluated in parallel and merged in grid order.
pub fn quasienergy_scan(system: &LadderSystem, scale: f64, grid: &[f64]) -> Result<Vec<QuasienergyPoint>> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty photon-energy grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("photon-energy grid must be strictly increasing".into()));
    }
    let opts = FloquetOptions::default();
    let mut points = grid
        .par_iter()
        .map(|&w| floquet_point(system, &DriveSpec::monochromatic(w).with_scale(scale), &opts))
        .collect::<Result<Vec<_>>>()?;
    // first point: label each mode by its dominant level, resolving clashes greedily
    if let Some(first) = points.first_mut() {
        first.branch_labels = assign_by_levels(&first.overlaps);
    }
    track_branches(&mut points);
    Ok(points)
}

fn assign_by_levels(overlaps: &DMatrix<f64>) -> Vec<usize> {
    let n = overlaps.nrows();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..n {
        for k in 0..n {
            pairs.push((overlaps[(j, k)], j, k));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut level_used = vec![false; n];
    let mut labels = vec![usize::MAX; n];
    for (_, j, k) in pairs {
        if !level_used[j] && labels[k] == usize::MAX {
            level_used[j] = true;
            labels[k] = j;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_system;
    use crate::propagate::{auto_step, propagate_with, unitarity_defect, QuantumState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uncoupled() -> LadderSystem {
        LadderSystem::alternating(vec![0.0, 2.61, 2.68], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn fold_window_is_half_open() {
        let w = 1.0;
        assert_eq!(fold(0.5, w), -0.5);
        assert_eq!(fold(-0.5, w), -0.5);
        assert!((fold(2.61, 0.87) - 0.0).abs() < 1e-12);
        assert!((fold(0.7, 1.0) + 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fold_invariant_under_photon_shifts(eps in -3.0f64..3.0, w in 0.5f64..1.5, m in -20i32..20) {
            let a = fold(eps, w);
            let b = fold(eps + m as f64 * w, w);
            prop_assert!(a >= -0.5 * w && a < 0.5 * w);
            let d = (a - b).abs();
            prop_assert!(d < 1e-12 || (d - w).abs() < 1e-12);
        }
    }

    #[test]
    fn monodromy_without_coupling_is_diagonal_phase() {
        let s = uncoupled();
        let d = DriveSpec::monochromatic(0.87);
        let u = monodromy(&s, &d).unwrap();
        let t = d.period();
        for i in 0..3 {
            let expect = C64::new(0.0, -s.level_energies()[i] * t).exp();
            // RK4 phase error is about (E dt)^5 / 120 per step
            assert!((u[(i, i)] - expect).norm() < 1e-7);
        }
        let p = quasienergies(&u, t).unwrap();
        let mut bare: Vec<f64> = s.level_energies().iter().map(|&e| fold(e, 0.87)).collect();
        bare.sort_by(f64::total_cmp);
        for (a, b) in p.quasienergies.iter().zip(&bare) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn monodromy_squares_to_two_periods() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.87);
        let u = monodromy(&s, &d).unwrap();
        assert!(unitarity_defect(&u) < 1e-8);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let dt = d.period() / 1200.0;
        let u2 = crate::propagate::propagator_over(&g, 0.0, 2.0 * d.period(), dt).unwrap();
        assert!((&u * &u - u2).camax() < 1e-7);
    }

    #[test]
    fn pulse_rejected() {
        let d = DriveSpec::gaussian_pulse(0.87, 100e-15, 1.0, 0.0);
        assert!(matches!(monodromy(&reference_system(), &d), Err(Error::Precondition(_))));
    }

    #[test]
    fn sum_rule_and_doubly_stochastic_overlaps() {
        let s = reference_system();
        for w in [0.8, 0.87, 1.0, 1.3, 1.45] {
            let p = floquet_point(&s, &DriveSpec::monochromatic(w), &FloquetOptions::default()).unwrap();
            assert!(p.sum_rule_residual(&s).abs() < 1e-7);
            for i in 0..3 {
                let row: f64 = (0..3).map(|k| p.overlaps[(i, k)]).sum();
                let col: f64 = (0..3).map(|k| p.overlaps[(k, i)]).sum();
                assert!((row - 1.0).abs() < 1e-6 && (col - 1.0).abs() < 1e-6);
                let avg: f64 = (0..3).map(|j| p.mode_populations[(j, i)]).sum();
                assert!((avg - 1.0).abs() < 1e-8);
            }
            for q in &p.quasienergies {
                assert!(*q >= -w / 2.0 && *q < w / 2.0);
            }
        }
    }

    #[test]
    fn zero_coupling_gives_no_transitions() {
        let s = uncoupled();
        for w in [0.9, 1.1] {
            let p = averaged_transition_probability(&s, &DriveSpec::monochromatic(w), 0, 1).unwrap();
            assert!(p.value.abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_samples_changes_average_little() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.95);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let steps = steps_for(d.period(), auto_step(&g, d.period())).div_ceil(400) * 400;
        let coarse = FloquetOptions {
            samples_per_period: 200,
            steps_per_sample: Some(steps / 200),
        };
        let fine = FloquetOptions {
            samples_per_period: 400,
            steps_per_sample: Some(steps / 400),
        };
        let a = floquet_point(&s, &d, &coarse).unwrap().transition_probability(0, 1);
        let b = floquet_point(&s, &d, &fine).unwrap().transition_probability(0, 1);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    /// Brute-force time average of |a_1(t)|² from |g> over many periods.
    fn time_domain_average(s: &LadderSystem, d: &DriveSpec, periods: usize) -> f64 {
        let g = DrivenLadder::new(s, d).unwrap();
        let t_end = periods as f64 * d.period();
        let dt = auto_step(&g, t_end);
        let traj = propagate_with(&g, &QuantumState::basis(s.dim(), 0), (0.0, t_end), dt, 1).unwrap();
        let pops: Vec<f64> = traj.states.iter().map(|st| st.amplitudes()[1].norm_sqr()).collect();
        let n = pops.len() - 1;
        let sum: f64 = pops.iter().sum::<f64>() - 0.5 * (pops[0] + pops[n]);
        sum / n as f64
    }

    #[test]
    fn floquet_average_matches_direct_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s0 = reference_system();
        let mut checked = 0;
        while checked < 4 {
            let w: f64 = rng.random_range(0.8..1.45);
            let scale: f64 = rng.random_range(0.5..2.0);
            // stay clear of multiphoton resonances so the finite average converges
            let e = s0.level_energies();
            let near = (0..3)
                .flat_map(|a| (a + 1..3).map(move |b| e[b] - e[a]))
                .any(|de| de > 0.5 * w && fold(de, w).abs() < 0.08);
            if near {
                continue;
            }
            let d = DriveSpec::monochromatic(w).with_scale(scale);
            let floq = averaged_transition_probability(&s0, &d, 0, 1).unwrap().value;
            let direct = time_domain_average(&s0, &d, 400);
            assert!((floq - direct).abs() < 1e-3, "w={w} s={scale}: {floq} vs {direct}");
            checked += 1;
        }
    }

    #[test]
    fn scaling_covariance() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.93);
        let a = averaged_transition_probability(&s, &d, 0, 1).unwrap().value;
        let lambda = 1.7;
        let d2 = DriveSpec::monochromatic(0.93 * lambda);
        let b = averaged_transition_probability(&s.scaled(lambda), &d2, 0, 1).unwrap().value;
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn carrier_phase_leaves_quasienergies_and_mode_averages() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(1.1);
        let opts = FloquetOptions::default();
        let p0 = floquet_point(&s, &d, &opts).unwrap();
        let p1 = floquet_point(&s, &d.with_phase(std::f64::consts::FRAC_PI_2), &opts).unwrap();
        for k in 0..3 {
            assert!((p0.quasienergies[k] - p1.quasienergies[k]).abs() < 1e-9);
            for j in 0..3 {
                assert!((p0.mode_populations[(j, k)] - p1.mode_populations[(j, k)]).abs() < 1e-6);
            }
        }
        // The sudden-start average differs only through the initial projection,
        // which moves by O((b/Δ)²).
        let a = p0.transition_probability(0, 1);
        let b = p1.transition_probability(0, 1);
        assert!((a - b).abs() < 5e-3);
    }
}
