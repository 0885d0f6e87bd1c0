//! Fixed-step fourth-order Runge–Kutta integration of `i dψ/dt = H(t) ψ`.
//!
//! The integrator never renormalizes: the norm drift of the state (or the
//! departure of a propagator from unitarity) is the step-size diagnostic and is
//! reported as [`Error::StepSize`] once it exceeds [`NORM_TOLERANCE`].

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{DriveSpec, DrivenLadder, Generator, LadderSystem};
use crate::units::UnitSystem;

pub const NORM_TOLERANCE: f64 = 1e-8;

/// Minimum number of steps per carrier period.
pub const MIN_STEPS_PER_PERIOD: usize = 200;

/// Bound on `dt · ‖H‖`.
pub const MAX_PHASE_PER_STEP: f64 = 0.02;

/// Norm drift budget used when choosing a step automatically.
const AUTO_DRIFT_BUDGET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<C64>,
}

impl QuantumState {
    /// A normalized state; fails if the norm differs from one by more than [`NORM_TOLERANCE`].
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let s = Self { amplitudes };
        let drift = (s.norm() - 1.0).abs();
        if !(drift <= NORM_TOLERANCE) {
            return Err(Error::Domain(format!("state is not normalized (|norm - 1| = {drift:.3e})")));
        }
        Ok(s)
    }

    pub fn basis(dim: usize, level: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[level] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn conj(&self) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a.conj()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
}

impl Trajectory {
    pub fn populations(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(QuantumState::populations).collect()
    }

    pub fn last(&self) -> &QuantumState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// CSV with columns `t_s, re_k, im_k ..., pop_k ...`; times in seconds.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.states.first().map_or(0, QuantumState::dim);
        let mut header = vec!["t_s".to_string()];
        for k in 0..dim {
            header.push(format!("re_a{k}"));
            header.push(format!("im_a{k}"));
        }
        header.extend((0..dim).map(|k| format!("pop_{k}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![crate::export::fmt_f64(UnitSystem::internal_to_seconds(*t))];
            for a in s.amplitudes() {
                row.push(crate::export::fmt_f64(a.re));
                row.push(crate::export::fmt_f64(a.im));
            }
            row.extend(s.populations().into_iter().map(crate::export::fmt_f64));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Largest step permitted for `g`: the smaller of 1/200 of the carrier period
/// and `0.02 / ‖H‖`.
pub fn step_cap<G: Generator + ?Sized>(g: &G) -> f64 {
    let by_norm = MAX_PHASE_PER_STEP / g.norm_bound().max(f64::MIN_POSITIVE);
    match g.carrier_period() {
        Some(period) => by_norm.min(period / MIN_STEPS_PER_PERIOD as f64),
        None => by_norm,
    }
}

/// A step below [`step_cap`] whose predicted RK4 norm drift over `duration`
/// stays below 1e-9. The per-step amplitude error of RK4 for an eigenvalue `λ`
/// is `(λ dt)^6 / 72` in the squared norm.
pub fn auto_step<G: Generator + ?Sized>(g: &G, duration: f64) -> f64 {
    let cap = step_cap(g);
    let lambda = g.norm_bound();
    if lambda <= 0.0 || duration <= 0.0 {
        return cap;
    }
    let by_drift = (72.0 * AUTO_DRIFT_BUDGET / (duration * lambda.powi(6))).powf(0.2);
    cap.min(by_drift)
}

/// Number of equal steps covering `span` with a step no larger than `dt`.
pub fn steps_for(span: f64, dt: f64) -> usize {
    ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// RK4 integrator over a block of `ncols` column vectors of dimension `dim`.
struct Rk4<'g, G: Generator + ?Sized> {
    g: &'g G,
    dim: usize,
    ncols: usize,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl<'g, G: Generator + ?Sized> Rk4<'g, G> {
    fn new(g: &'g G, ncols: usize) -> Self {
        let len = g.dim() * ncols;
        let zeros = || vec![C64::new(0.0, 0.0); len];
        Self {
            g,
            dim: g.dim(),
            ncols,
            k: [zeros(), zeros(), zeros(), zeros()],
            tmp: zeros(),
        }
    }

    /// `out = -i H(t) x` for every column.
    fn deriv(g: &G, dim: usize, ncols: usize, t: f64, x: &[C64], out: &mut [C64]) {
        for c in 0..ncols {
            let cols = c * dim..(c + 1) * dim;
            g.apply(t, &x[cols.clone()], &mut out[cols.clone()]);
            for v in &mut out[cols] {
                *v = C64::new(v.im, -v.re);
            }
        }
    }

    fn step(&mut self, t: f64, h: f64, x: &mut [C64]) {
        let (g, dim, ncols) = (self.g, self.dim, self.ncols);
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        Self::deriv(g, dim, ncols, t, x, k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + k1[i] * (0.5 * h);
        }
        Self::deriv(g, dim, ncols, t + 0.5 * h, tmp, k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + k2[i] * (0.5 * h);
        }
        Self::deriv(g, dim, ncols, t + 0.5 * h, tmp, k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + k3[i] * h;
        }
        Self::deriv(g, dim, ncols, t + h, tmp, k4);
        for i in 0..x.len() {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
}

fn check_step<G: Generator + ?Sized>(g: &G, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let cap = step_cap(g);
    if dt > cap * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "dt = {dt:.4e} exceeds the step cap {cap:.4e} (min of period/{MIN_STEPS_PER_PERIOD} and {MAX_PHASE_PER_STEP}/|H|)"
        )));
    }
    Ok(())
}

fn norm_drift(x: &[C64]) -> f64 {
    (x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs()
}

fn check_state(x: &[C64], dt: f64) -> Result<()> {
    if x.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::Numeric("state contains NaN or Inf".into()));
    }
    let drift = norm_drift(x);
    if drift > NORM_TOLERANCE {
        return Err(Error::StepSize {
            what: "norm drift",
            value: drift,
            tolerance: NORM_TOLERANCE,
            dt,
        });
    }
    Ok(())
}

/// Integrate `psi0` from `t0` to `t1` with equal steps no larger than `dt`,
/// recording every `record_stride`-th step (the final state is always recorded).
pub fn propagate_with<G: Generator + ?Sized>(
    g: &G,
    psi0: &QuantumState,
    t_span: (f64, f64),
    dt: f64,
    record_stride: usize,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if psi0.dim() != g.dim() {
        return Err(Error::Domain(format!("state has dimension {}, system {}", psi0.dim(), g.dim())));
    }
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::Domain(format!("invalid time span ({t0}, {t1})")));
    }
    check_step(g, dt)?;
    check_state(psi0.amplitudes(), dt)?;
    let stride = record_stride.max(1);
    let mut times = vec![t0];
    let mut states = vec![psi0.clone()];
    if t1 == t0 {
        return Ok(Trajectory { times, states });
    }
    let n = steps_for(t1 - t0, dt);
    let h = (t1 - t0) / n as f64;
    let mut x = psi0.amplitudes().to_vec();
    let mut rk = Rk4::new(g, 1);
    for i in 0..n {
        let t = t0 + i as f64 * h;
        rk.step(t, h, &mut x);
        if (i + 1) % stride == 0 || i + 1 == n {
            check_state(&x, h)?;
            times.push(if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * h });
            states.push(QuantumState { amplitudes: x.clone() });
        }
    }
    Ok(Trajectory { times, states })
}

/// [`propagate_with`] recording every step.
pub fn propagate<G: Generator + ?Sized>(g: &G, psi0: &QuantumState, t_span: (f64, f64), dt: f64) -> Result<Trajectory> {
    propagate_with(g, psi0, t_span, dt, 1)
}

/// Convenience form taking the ladder and drive directly.
pub fn propagate_ladder(
    system: &LadderSystem,
    drive: &DriveSpec,
    psi0: &QuantumState,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory> {
    propagate(&DrivenLadder::new(system, drive)?, psi0, t_span, dt)
}

/// Observed order of accuracy: final states at `dt`, `dt/2` and `dt/4`
/// (starting from the step cap) give `log2(|x₁ − x₂| / |x₂ − x₄|)`.
pub fn observed_order<G: Generator + ?Sized>(g: &G, psi0: &QuantumState, t_span: (f64, f64)) -> Result<f64> {
    let dt0 = step_cap(g);
    let finals = (0..3)
        .map(|k| {
            let traj = propagate_with(g, psi0, t_span, dt0 / f64::powi(2.0, k), usize::MAX)?;
            Ok(traj.last().amplitudes().to_vec())
        })
        .collect::<Result<Vec<Vec<C64>>>>()?;
    let diff = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok((diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2])).log2())
}

/// `max |U†U - I|`.
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).camax()
}

fn check_unitary(u: &DMatrix<C64>, dt: f64) -> Result<()> {
    if u.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::Numeric("propagator contains NaN or Inf".into()));
    }
    let defect = unitarity_defect(u);
    if defect > NORM_TOLERANCE {
        return Err(Error::StepSize {
            what: "unitarity defect",
            value: defect,
            tolerance: NORM_TOLERANCE,
            dt,
        });
    }
    Ok(())
}

/// Propagator snapshots `U(t0 + j·(t1-t0)/samples, t0)` for `j = 0..=samples`,
/// integrated with `samples · steps_per_sample` equal steps.
pub fn propagator_samples<G: Generator + ?Sized>(
    g: &G,
    t0: f64,
    t1: f64,
    samples: usize,
    steps_per_sample: usize,
) -> Result<Vec<DMatrix<C64>>> {
    if samples == 0 || steps_per_sample == 0 {
        return Err(Error::Domain("sample and step counts must be positive".into()));
    }
    let dim = g.dim();
    let n = samples * steps_per_sample;
    let h = (t1 - t0) / n as f64;
    if t1 != t0 {
        check_step(g, h.abs())?;
    }
    let identity = DMatrix::<C64>::identity(dim, dim);
    let mut x: Vec<C64> = identity.as_slice().to_vec();
    let mut out = Vec::with_capacity(samples + 1);
    out.push(identity);
    let mut rk = Rk4::new(g, dim);
    for i in 0..n {
        rk.step(t0 + i as f64 * h, h, &mut x);
        if (i + 1) % steps_per_sample == 0 {
            let u = DMatrix::from_column_slice(dim, dim, &x);
            check_unitary(&u, h)?;
            out.push(u);
        }
    }
    Ok(out)
}

/// `U(t1, t0)`, obtained by integrating every basis vector.
pub fn propagator_over<G: Generator + ?Sized>(g: &G, t0: f64, t1: f64, dt: f64) -> Result<DMatrix<C64>> {
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::Domain(format!("invalid time span ({t0}, {t1})")));
    }
    check_step(g, dt)?;
    if t1 == t0 {
        return Ok(DMatrix::identity(g.dim(), g.dim()));
    }
    let n = steps_for(t1 - t0, dt);
    let mut samples = propagator_samples(g, t0, t1, 1, n)?;
    Ok(samples.pop().expect("one sample"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_system;

    fn two_level(w0: f64, b: f64) -> LadderSystem {
        LadderSystem::alternating(vec![0.0, w0], vec![b]).unwrap()
    }

    #[test]
    fn stationary_states_without_coupling() {
        let s = LadderSystem::alternating(vec![0.0, 2.61, 2.68], vec![0.0, 0.0]).unwrap();
        let d = DriveSpec::monochromatic(0.87);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let amps = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.48), C64::new(0.64, 0.0)];
        let psi0 = QuantumState::new(amps.clone()).unwrap();
        // phase error of RK4 grows like t·E^5·dt^4/120; 1e-3 keeps it below 1e-10
        let traj = propagate_with(&g, &psi0, (0.0, 50.0), 1e-3, 100).unwrap();
        for (t, st) in traj.times.iter().zip(&traj.states) {
            for k in 0..3 {
                let expect = amps[k] * C64::new(0.0, -s.level_energies()[k] * t).exp();
                assert!((st.amplitudes()[k] - expect).norm() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn rejects_oversized_step() {
        let s = reference_system();
        let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(0.87)).unwrap();
        let cap = step_cap(&g);
        let r = propagate(&g, &QuantumState::basis(3, 0), (0.0, 1.0), 2.0 * cap);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn norm_drift_reported_not_hidden() {
        // A generator whose norm bound understates |H| defeats the step cap;
        // the drift must surface as a step-size error.
        struct Liar;
        impl Generator for Liar {
            fn dim(&self) -> usize {
                2
            }
            fn apply(&self, _t: f64, psi: &[C64], out: &mut [C64]) {
                out[0] = psi[1] * 40.0;
                out[1] = psi[0] * 40.0;
            }
            fn norm_bound(&self) -> f64 {
                0.01
            }
            fn carrier_period(&self) -> Option<f64> {
                None
            }
        }
        let r = propagate(&Liar, &QuantumState::basis(2, 0), (0.0, 100.0), 0.05);
        assert!(matches!(r, Err(Error::StepSize { .. })), "{r:?}");
    }

    #[test]
    fn unnormalized_initial_state_rejected() {
        assert!(QuantumState::new(vec![C64::new(1.0, 0.0), C64::new(0.1, 0.0)]).is_err());
    }

    #[test]
    fn resonant_rabi_follows_rwa() {
        let (w0, b) = (1.0, 0.01);
        let s = two_level(w0, b);
        let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(w0)).unwrap();
        let t_end = std::f64::consts::PI / b;
        let dt = auto_step(&g, t_end);
        let traj = propagate_with(&g, &QuantumState::basis(2, 0), (0.0, t_end), dt, 10).unwrap();
        let worst = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, st)| (st.populations()[1] - (b * t).sin().powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "max deviation {worst}");
    }

    #[test]
    fn propagator_identity_and_free_evolution() {
        let s = LadderSystem::alternating(vec![0.0, 2.61, 2.68], vec![0.0, 0.0]).unwrap();
        let d = DriveSpec::monochromatic(0.87);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let dt = step_cap(&g);
        let u0 = propagator_over(&g, 3.0, 3.0, dt).unwrap();
        assert_eq!(u0, DMatrix::identity(3, 3));
        let t = d.period();
        let u = propagator_over(&g, 0.0, t, dt / 4.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j {
                    C64::new(0.0, -s.level_energies()[i] * t).exp()
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((u[(i, j)] - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn propagator_composes_and_matches_state_propagation() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.91);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let dt = auto_step(&g, 40.0);
        let (t0, t1, t2) = (0.0, 13.0 * dt * 100.0, 26.0 * dt * 100.0);
        let u10 = propagator_over(&g, t0, t1, dt).unwrap();
        let u21 = propagator_over(&g, t1, t2, dt).unwrap();
        let u20 = propagator_over(&g, t0, t2, dt).unwrap();
        assert!((&u21 * &u10 - &u20).camax() < 1e-8);
        assert!(unitarity_defect(&u20) < 1e-8);

        let psi0 = QuantumState::new(vec![C64::new(0.8, 0.0), C64::new(0.0, 0.6), C64::new(0.0, 0.0)]).unwrap();
        let traj = propagate_with(&g, &psi0, (t0, t2), dt, 1000).unwrap();
        let direct = &u20 * nalgebra::DVector::from_column_slice(psi0.amplitudes());
        for k in 0..3 {
            assert!((traj.last().amplitudes()[k] - direct[k]).norm() < 1e-8);
        }
    }

    #[test]
    fn global_energy_shift_leaves_populations() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.87);
        let t_end = 10.0 * d.period();
        let shifted = s.shifted(0.37);
        let g0 = DrivenLadder::new(&s, &d).unwrap();
        let g1 = DrivenLadder::new(&shifted, &d).unwrap();
        let dt = auto_step(&g1, t_end) / 2.0;
        let a = propagate_with(&g0, &QuantumState::basis(3, 0), (0.0, t_end), dt, 50).unwrap();
        let b = propagate_with(&g1, &QuantumState::basis(3, 0), (0.0, t_end), dt, 50).unwrap();
        for (pa, pb) in a.populations().iter().zip(b.populations()) {
            for k in 0..3 {
                assert!((pa[k] - pb[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let s = reference_system();
        let d = DriveSpec::monochromatic(0.87);
        let g = DrivenLadder::new(&s, &d).unwrap();
        let order = observed_order(&g, &QuantumState::basis(3, 0), (0.0, 10.0 * d.period())).unwrap();
        assert!(order >= 3.8, "observed order {order}");
    }

    #[test]
    fn trajectory_csv_layout() {
        let s = two_level(1.0, 0.01);
        let g = DrivenLadder::new(&s, &DriveSpec::monochromatic(1.0)).unwrap();
        let traj = propagate_with(&g, &QuantumState::basis(2, 0), (0.0, 1.0), step_cap(&g), 10).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t_s,re_a0,im_a0,re_a1,im_a1,pop_0,pop_1");
        assert_eq!(lines.count(), traj.times.len());
    }
}
