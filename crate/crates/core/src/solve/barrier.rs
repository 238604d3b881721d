//! Log-barrier method over the affine subspace of the equality constraints.
//! Bounds are treated as ordinary inequality rows. An infeasible start goes
//! through restoration (squared-hinge penalty) and, if still not strictly
//! inside, a phase-one barrier on the maximum violation.

// `!(a < b)` is deliberate below: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use super::bfgs::{minimize, LineSearch, MinFailure};
use super::linalg::{norm_inf, Subspace};
use super::SolveOptions;
use crate::expr::compiled::Compiled;

pub(crate) enum Row {
    Fn(Compiled),
    /// `x_k - b <= 0` when `upper`, `b - x_k <= 0` otherwise.
    Bound {
        k: usize,
        b: f64,
        upper: bool,
    },
}

impl Row {
    fn value(&self, x: &[f64]) -> Option<f64> {
        match self {
            Row::Fn(c) => c.value(x).ok().filter(|v| v.is_finite()),
            Row::Bound { k, b, upper } => Some(if *upper { x[*k] - b } else { b - x[*k] }),
        }
    }

    /// Adds `w * grad` into `acc` and returns the value.
    fn add_grad(&self, x: &[f64], w: f64, acc: &mut [f64], scratch: &mut [f64]) -> Option<f64> {
        match self {
            Row::Fn(c) => {
                let v = c.value_grad(x, scratch).ok().filter(|v| v.is_finite())?;
                for (a, g) in acc.iter_mut().zip(scratch.iter()) {
                    *a += w * g;
                }
                Some(v)
            }
            Row::Bound { k, b, upper } => {
                if *upper {
                    acc[*k] += w;
                    Some(x[*k] - b)
                } else {
                    acc[*k] -= w;
                    Some(b - x[*k])
                }
            }
        }
    }
}

pub(crate) struct Smooth {
    pub f: Compiled,
    pub rows: Vec<Row>,
    pub space: Subspace,
    pub n: usize,
}

#[derive(Debug)]
pub(crate) enum Outcome {
    Done {
        x: Vec<f64>,
        iterations: usize,
        stationarity: f64,
        converged: bool,
        /// Constraints were loosened by this much to find an interior.
        shift: f64,
    },
    Infeasible {
        iterations: usize,
        violation: f64,
    },
    Failure {
        iterations: usize,
        message: String,
    },
}

impl Smooth {
    pub fn max_violation(&self, x: &[f64]) -> Option<f64> {
        self.rows
            .iter()
            .try_fold(f64::NEG_INFINITY, |m, r| r.value(x).map(|v| m.max(v)))
    }

    fn line_search(opts: &SolveOptions) -> LineSearch {
        LineSearch {
            step0: opts.step_scale,
            shrink: opts.beta,
            armijo: opts.armijo,
        }
    }

    /// Minimizes `sum max(0, c_i)^2` starting from `z`.
    fn restore(&self, z: &[f64], opts: &SolveOptions, used: &mut usize) -> Option<Vec<f64>> {
        let n = self.n;
        let mut scratch = vec![0.0; n];
        let mut fg = |z: &[f64]| {
            let x = self.space.point(z);
            let mut total = 0.0;
            let mut gx = vec![0.0; n];
            for r in &self.rows {
                let v = r.value(&x)?;
                if v > 0.0 {
                    total += v * v;
                    r.add_grad(&x, 2.0 * v, &mut gx, &mut scratch)?;
                }
            }
            Some((total, self.space.pull(&gx)))
        };
        let budget = opts.max_iter.saturating_sub(*used).max(1);
        let r = minimize(
            &mut fg,
            z,
            1e-14,
            budget,
            Self::line_search(opts),
            &mut |z| {
                self.max_violation(&self.space.point(z))
                    .is_some_and(|v| v < 0.0)
            },
        )
        .ok()?;
        *used += r.iterations;
        Some(r.z)
    }

    /// Phase one: minimize `s` subject to `c_i(x) <= s`. Returns the point
    /// and the attained `s`.
    fn phase_one(
        &self,
        z: &[f64],
        opts: &SolveOptions,
        used: &mut usize,
    ) -> Result<(Vec<f64>, f64), String> {
        let n = self.n;
        let k = z.len();
        let x = self.space.point(z);
        let s0 = self
            .max_violation(&x)
            .ok_or("constraints undefined at the start")?
            + 1.0;
        let mut w: Vec<f64> = z.to_vec();
        w.push(s0);
        let mut mu = 1.0;
        let mut scratch = vec![0.0; n];
        let target = -1e-9;
        for _ in 0..20 {
            let mut fg = |w: &[f64]| {
                let (z, s) = (&w[..k], w[k]);
                let x = self.space.point(z);
                let mut gx = vec![0.0; n];
                let mut val = s;
                let mut ds = 1.0;
                for r in &self.rows {
                    let c = r.value(&x)?;
                    let slack = s - c;
                    if !(slack > 0.0) {
                        return None;
                    }
                    val -= mu * slack.ln();
                    ds -= mu / slack;
                    r.add_grad(&x, mu / slack, &mut gx, &mut scratch)?;
                }
                let mut g = self.space.pull(&gx);
                g.push(ds);
                Some((val, g))
            };
            let budget = opts.max_iter.saturating_sub(*used).max(1);
            let r = minimize(
                &mut fg,
                &w,
                1e-10,
                budget,
                Self::line_search(opts),
                &mut |w| {
                    self.max_violation(&self.space.point(&w[..k]))
                        .is_some_and(|v| v < target)
                },
            )
            .map_err(|e| format!("phase one failed: {e:?}"))?;
            *used += r.iterations;
            w = r.z;
            let v = self
                .max_violation(&self.space.point(&w[..k]))
                .ok_or("constraints undefined")?;
            if v < target || *used >= opts.max_iter {
                break;
            }
            // keep s strictly above the constraint values after shrinking
            w[k] = w[k].max(v + 1e-12);
            mu /= 10.0;
        }
        let v = self
            .max_violation(&self.space.point(&w[..k]))
            .ok_or("constraints undefined")?;
        w.truncate(k);
        Ok((w, v))
    }

    pub fn run(&self, z0: &[f64], opts: &SolveOptions) -> Outcome {
        let mut used = 0;
        let mut z = z0.to_vec();
        let x = self.space.point(&z);
        let Some(v0) = self.max_violation(&x) else {
            return Outcome::Failure {
                iterations: 0,
                message: "constraints undefined at the start".into(),
            };
        };
        let mut shift = 0.0;
        if v0 >= 0.0 {
            if let Some(zr) = self.restore(&z, opts, &mut used) {
                z = zr;
            }
            let v = self
                .max_violation(&self.space.point(&z))
                .unwrap_or(f64::INFINITY);
            if v >= 0.0 {
                match self.phase_one(&z, opts, &mut used) {
                    Ok((zp, s)) => {
                        z = zp;
                        if s >= 0.0 {
                            if s > 0.5 * opts.feas_tol {
                                return Outcome::Infeasible {
                                    iterations: used,
                                    violation: s,
                                };
                            }
                            shift = opts.feas_tol;
                        }
                    }
                    Err(message) => {
                        return Outcome::Failure {
                            iterations: used,
                            message,
                        }
                    }
                }
            }
        }
        let x = self.space.point(&z);
        if self.f.value(&x).map_or(true, |v| !v.is_finite()) {
            return Outcome::Failure {
                iterations: used,
                message: "objective undefined at the barrier start".into(),
            };
        }

        let n = self.n;
        let m = self.rows.len();
        let mut scratch = vec![0.0; n];
        let mut mu = if m == 0 { 0.0 } else { opts.mu0 };
        let mu_min = opts.tol / (m.max(1) as f64);
        let mut last = None;
        loop {
            let mut fg = |z: &[f64]| {
                let x = self.space.point(z);
                let mut gx = vec![0.0; n];
                let mut val = self
                    .f
                    .value_grad(&x, &mut gx)
                    .ok()
                    .filter(|v| v.is_finite())?;
                for r in &self.rows {
                    let c = r.value(&x)? - shift;
                    if !(c < 0.0) {
                        return None;
                    }
                    val -= mu * (-c).ln();
                    r.add_grad(&x, mu / -c, &mut gx, &mut scratch)?;
                }
                let g = self.space.pull(&gx);
                g.iter().all(|v| v.is_finite()).then_some((val, g))
            };
            let budget = opts.max_iter.saturating_sub(used);
            if budget == 0 {
                break;
            }
            let res = match minimize(
                &mut fg,
                &z,
                opts.tol,
                budget,
                Self::line_search(opts),
                &mut |_| false,
            ) {
                Ok(r) => r,
                Err(MinFailure::Unbounded) => {
                    return Outcome::Failure {
                        iterations: used,
                        message: "objective is unbounded below".into(),
                    }
                }
                Err(MinFailure::BadStart) => {
                    return Outcome::Failure {
                        iterations: used,
                        message: "non-finite value inside the barrier".into(),
                    }
                }
            };
            used += res.iterations;
            z = res.z;
            last = Some(res.grad_inf);
            if mu <= mu_min {
                break;
            }
            mu = (mu / opts.mu_factor).max(mu_min);
        }
        let x = self.space.point(&z);
        let stationarity = last.unwrap_or(f64::INFINITY);
        let mut gf = vec![0.0; n];
        let scale = self
            .f
            .value_grad(&x, &mut gf)
            .map_or(1.0, |_| 1.0 + norm_inf(&self.space.pull(&gf)));
        Outcome::Done {
            converged: mu <= mu_min && stationarity <= opts.feas_tol * scale,
            x,
            iterations: used,
            stationarity,
            shift,
        }
    }
}
