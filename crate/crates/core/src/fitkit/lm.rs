//! Bounded Levenberg–Marquardt with a forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: f64,
    /// Stop when `‖Jᵀr‖∞` (free parameters) falls below this.
    pub gradient_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Box constraints; `lo[i] == hi[i]` freezes parameter `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn is_free(&self, i: usize) -> bool {
        self.lo[i] < self.hi[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// From `s² (JᵀJ)⁻¹` with `s² = ‖r‖² / (m − n_free)`; zero for frozen parameters.
    pub stderr: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian<F>(f: &F, p: &[f64], r0: &[f64], bounds: &Bounds, free: &[usize]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut j = DMatrix::zeros(r0.len(), free.len());
    let mut q = p.to_vec();
    for (c, &i) in free.iter().enumerate() {
        let mut h = f64::EPSILON.sqrt() * if p[i] == 0.0 { 1.0 } else { p[i].abs() };
        if p[i] + h > bounds.hi[i] {
            h = -h;
        }
        q[i] = p[i] + h;
        let r = f(&q);
        q[i] = p[i];
        for (k, (a, b)) in r.iter().zip(r0).enumerate() {
            let d = (a - b) / h;
            if !d.is_finite() {
                return Err(Error::Numeric(format!("non-finite Jacobian entry for parameter {i}")));
            }
            j[(k, c)] = d;
        }
    }
    Ok(j)
}

/// Minimize `½‖r(p)‖²` subject to `bounds`, starting from `initial`.
pub fn minimize_residuals<F>(residuals: F, initial: &[f64], bounds: &Bounds, opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = initial.len();
    if bounds.lo.len() != n || bounds.hi.len() != n {
        return Err(Error::Precondition("bounds and initial guess differ in length".into()));
    }
    for i in 0..n {
        if !(bounds.lo[i] <= bounds.hi[i]) || !(initial[i] >= bounds.lo[i] && initial[i] <= bounds.hi[i]) {
            return Err(Error::Precondition(format!(
                "initial parameter {i} = {} outside [{}, {}]",
                initial[i], bounds.lo[i], bounds.hi[i]
            )));
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| bounds.is_free(i)).collect();
    let mut p = initial.to_vec();
    let mut r = residuals(&p);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite residual at the initial guess".into()));
    }
    let m = r.len();
    let mut cost = cost_of(&r);
    let mut lambda = 1e-4;
    let mut converged = free.is_empty();
    let mut iterations = 0;
    let mut jac = jacobian(&residuals, &p, &r, bounds, &free)?;

    while !converged && iterations < opts.max_iterations {
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        if g.amax() < opts.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let a = jac.transpose() * &jac;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for k in 0..free.len() {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += step[k];
            }
            bounds.project(&mut trial);
            let rt = residuals(&trial);
            let ct = cost_of(&rt);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        jac = jacobian(&residuals, &p, &r, bounds, &free)?;
    }

    let dof = m.saturating_sub(free.len()).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let mut stderr = vec![0.0; n];
    let cov = (jac.transpose() * &jac).pseudo_inverse(1e-14).map_err(|e| Error::Numeric(e.to_string()))?;
    for (k, &i) in free.iter().enumerate() {
        stderr[i] = (s2 * cov[(k, k)]).max(0.0).sqrt();
    }
    Ok(LmOutcome {
        params: p,
        stderr,
        residual_norm: (2.0 * cost).sqrt(),
        converged,
        iterations,
    })
}
