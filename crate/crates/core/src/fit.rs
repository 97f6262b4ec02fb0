//! Early-time wavefront fit
//! `Re F(t) = 1 - exp(-lambda (d - v t)^(1+p) / t^p) / 2`.
//!
//! Bounded Levenberg-Marquardt with a central-difference Jacobian, started
//! from every point of a fixed grid. Steps leaving the box are projected back
//! onto it.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::otoc::OtocCurve;

pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const P_MAX: f64 = 1.5;
const POSITIVE_FLOOR: f64 = 1e-9;
const UPPER: f64 = 1e3;
const COST_TOL: f64 = 1e-10;
const MAX_ITER: usize = 1000;

const LAMBDA_STARTS: [f64; 3] = [0.5, 2.0, 5.0];
const SPEED_STARTS: [f64; 3] = [1.0, 2.0, 4.0];
const P_STARTS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub lambda: f64,
    pub v_f: f64,
    pub p: f64,
    /// `sqrt(sum of squared residuals)` over the window.
    pub residual_norm: f64,
    pub n_points_used: usize,
    pub window_threshold: f64,
    pub distance: f64,
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d={} lambda={:.6} v_f={:.6} p={:.6} residual={:.3e} points={} threshold={}",
            self.distance, self.lambda, self.v_f, self.p, self.residual_norm, self.n_points_used, self.window_threshold
        )
    }
}

/// Pretty-printed JSON array of fit records.
pub fn to_json(fits: &[FitResult]) -> Result<String> {
    serde_json::to_string_pretty(fits).map_err(|e| Error::Format(e.to_string()))
}

/// `sign(x) |x|^e`.
fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

/// The model at time `t > 0`.
pub fn model(t: f64, d: f64, lambda: f64, v_f: f64, p: f64) -> f64 {
    let arg = lambda * signed_pow(d - v_f * t, 1.0 + p) / t.powf(p);
    1.0 - 0.5 * (-arg).exp()
}

/// Window selection: `t > 0` and `Re F > threshold`.
pub fn window(points: &[(f64, f64)], threshold: f64) -> Vec<(f64, f64)> {
    let mut w: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(t, y)| t > 0.0 && y > threshold && t.is_finite() && y.is_finite())
        .collect();
    // the objective is a sum, but summation order changes the last bits
    w.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    w
}

/// Fit `Re F` of `curve` at operator distance `d`.
pub fn fit_wavefront(curve: &OtocCurve, d: f64, threshold: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.t, p.f.re)).collect();
    fit_points(&pts, d, threshold)
}

/// Joint fit of several curves sharing one distance.
pub fn fit_pooled(curves: &[&OtocCurve], d: f64, threshold: f64) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| (p.t, p.f.re)))
        .collect();
    fit_points(&pts, d, threshold)
}

/// Fit `(t, Re F)` pairs.
pub fn fit_points(points: &[(f64, f64)], d: f64, threshold: f64) -> Result<FitResult> {
    if !(d > 0.0) {
        return Err(Error::Fit(format!("distance must be > 0, got {d}")));
    }
    let data = window(points, threshold);
    if data.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 points with t > 0 and Re F > {threshold}, found {}",
            data.len()
        )));
    }
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for &l in &LAMBDA_STARTS {
        for &v in &SPEED_STARTS {
            for &p in &P_STARTS {
                if let Some((cost, x)) = levenberg_marquardt(&data, d, Vector3::new(l, v, p)) {
                    if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                        best = Some((cost, x));
                    }
                }
            }
        }
    }
    let (cost, x) = best.ok_or_else(|| Error::Fit("no start converged".into()))?;
    Ok(FitResult {
        lambda: x[0],
        v_f: x[1],
        p: x[2],
        residual_norm: cost.sqrt(),
        n_points_used: data.len(),
        window_threshold: threshold,
        distance: d,
    })
}

fn project(x: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        x[0].clamp(POSITIVE_FLOOR, UPPER),
        x[1].clamp(POSITIVE_FLOOR, UPPER),
        x[2].clamp(0.0, P_MAX),
    )
}

fn residuals(data: &[(f64, f64)], d: f64, x: &Vector3<f64>) -> Vec<f64> {
    data.iter().map(|&(t, y)| model(t, d, x[0], x[1], x[2]) - y).collect()
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Returns the final cost and parameters, or `None` if the run produced
/// non-finite values or hit the iteration cap.
fn levenberg_marquardt(data: &[(f64, f64)], d: f64, start: Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    let mut x = project(start);
    let mut r = residuals(data, d, &x);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return None;
    }
    let mut mu = 1e-3;
    for _ in 0..MAX_ITER {
        if cost == 0.0 {
            return Some((cost, x));
        }
        // central differences, one-sided at the box edges
        let mut jac = vec![[0.0; 3]; data.len()];
        for k in 0..3 {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut hi = x;
            let mut lo = x;
            hi[k] += h;
            lo[k] -= h;
            let (hi, lo) = (project(hi), project(lo));
            let span = hi[k] - lo[k];
            let rh = residuals(data, d, &hi);
            let rl = residuals(data, d, &lo);
            for (row, (a, b)) in jac.iter_mut().zip(rh.iter().zip(&rl)) {
                row[k] = (a - b) / span;
            }
        }
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..3 {
                jtr[a] += row[a] * ri;
                for b in 0..3 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while mu < 1e16 {
            let mut m = jtj;
            for a in 0..3 {
                m[(a, a)] += mu * jtj[(a, a)].max(1e-12);
            }
            let Some(step) = m.lu().solve(&(-jtr)) else {
                mu *= 4.0;
                continue;
            };
            let trial = project(x + step);
            let tr = residuals(data, d, &trial);
            let tc = cost_of(&tr);
            if tc.is_finite() && tc < cost {
                let converged = cost - tc <= COST_TOL * cost || (trial - x).norm() <= 1e-15 * x.norm();
                x = trial;
                r = tr;
                cost = tc;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                if converged {
                    return Some((cost, x));
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            // no descent direction left: a (possibly constrained) minimum
            return Some((cost, x));
        }
    }
    None
}
