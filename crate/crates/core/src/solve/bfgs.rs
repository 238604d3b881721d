//! Dense BFGS with Armijo backtracking. The objective may refuse a point by
//! returning `None` (outside its domain); the line search then backtracks.

// `!(a < b)` is deliberate below: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use super::linalg::{axpy, dot, norm_inf};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LineSearch {
    pub step0: f64,
    pub shrink: f64,
    pub armijo: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct MinResult {
    pub z: Vec<f64>,
    pub grad_inf: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum MinFailure {
    /// The starting point is outside the domain.
    BadStart,
    /// Values decreased without bound.
    Unbounded,
}

const UNBOUNDED: f64 = -1e30;

/// Minimizes `fg` from `z0` until the gradient's max-norm is at most `tol`,
/// progress stalls at machine precision, `stop` returns true, or
/// `max_iter` iterations pass.
#[allow(clippy::type_complexity)]
pub(crate) fn minimize(
    fg: &mut dyn FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    z0: &[f64],
    tol: f64,
    max_iter: usize,
    ls: LineSearch,
    stop: &mut dyn FnMut(&[f64]) -> bool,
) -> Result<MinResult, MinFailure> {
    let k = z0.len();
    let mut z = z0.to_vec();
    let (mut f, mut g) = fg(&z).ok_or(MinFailure::BadStart)?;
    if k == 0 {
        return Ok(MinResult {
            z,
            grad_inf: 0.0,
            iterations: 0,
        });
    }
    let mut h = identity(k);
    let mut fresh = true;
    let mut stalls = 0;
    let mut iterations = 0;
    while iterations < max_iter {
        if norm_inf(&g) <= tol || stop(&z) {
            return Ok(MinResult {
                grad_inf: norm_inf(&g),
                z,
                iterations,
            });
        }
        iterations += 1;
        let mut d = matvec(&h, &g);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(k);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut alpha = ls.step0;
        let mut accepted = None;
        while alpha > 1e-20 {
            let mut trial = z.clone();
            axpy(&mut trial, alpha, &d);
            if let Some((ft, gt)) = fg(&trial) {
                // near a minimizer the decrease drops below the rounding of f;
                // then accept on the directional derivative instead
                let noise = 16.0 * f64::EPSILON * f.abs().max(1.0);
                let sufficient = ft <= f + ls.armijo * alpha * slope;
                let flat = ft <= f + noise && dot(&gt, &d).abs() <= 0.9 * slope.abs();
                if ft.is_finite() && (sufficient || flat) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= ls.shrink;
        }
        let Some((zn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            h = identity(k);
            fresh = true;
            continue;
        };
        debug_assert!(
            fnew <= f + 16.0 * f64::EPSILON * f.abs().max(1.0),
            "line search accepted an increase"
        );
        if fnew < UNBOUNDED {
            return Err(MinFailure::Unbounded);
        }
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > 1e-12 * (dot(&s, &s) * dot(&y, &y)).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
                fresh = false;
            }
            update(&mut h, &s, &y, sy);
        } else if sy <= 0.0 {
            // no curvature seen along s: lengthen the next step
            h.iter_mut().flatten().for_each(|v| *v *= 4.0);
        }
        let moved = s
            .iter()
            .zip(&z)
            .any(|(d, z)| d.abs() > 1e-15 * (1.0 + z.abs()));
        if moved {
            stalls = 0;
        } else {
            stalls += 1;
        }
        z = zn;
        f = fnew;
        g = gn;
        if stalls >= 3 {
            break;
        }
    }
    let grad_inf = norm_inf(&g);
    Ok(MinResult {
        z,
        grad_inf,
        iterations,
    })
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut r = vec![0.0; k];
            r[i] = 1.0;
            r
        })
        .collect()
}

fn matvec(h: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    h.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H <- (I - r s y') H (I - r y s') + r s s'`.
fn update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let r = 1.0 / sy;
    let hy = matvec(h, y);
    let yhy = dot(y, &hy);
    let k = s.len();
    for i in 0..k {
        for j in 0..k {
            h[i][j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}
