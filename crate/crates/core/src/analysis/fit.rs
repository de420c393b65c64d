//! Least-squares fits of the functional forms used for the critical
//! analysis: power laws, exponentials and the logarithmic extrapolation
//! `y = a ln(x + b) + c`.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    Power,
    Logform,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: BTreeMap<String, f64>,
    /// Euclidean norm of the residuals in the space the fit was done in.
    pub residual: f64,
    /// `[lo, hi]` of the abscissae used.
    pub window: (f64, f64),
    pub points: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// Abscissa window; `None` bounds are open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        FitWindow {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

fn select(xs: &[f64], ys: &[f64], window: &FitWindow) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.len() != ys.len() {
        return Err(SbmError::FitRefused(format!(
            "x and y lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let (sx, sy): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| window.contains(**x))
        .map(|(x, y)| (*x, *y))
        .unzip();
    Ok((sx, sy))
}

fn span(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Ordinary least squares `y = slope·x + intercept`.
fn line_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(SbmError::FitRefused("need at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(SbmError::FitRefused("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((slope, intercept, residual))
}

/// `y = amplitude · x^exponent`, fitted on log-log data.
pub fn fit_power_law(xs: &[f64], ys: &[f64], window: &FitWindow) -> Result<FitResult> {
    let (sx, sy) = select(xs, ys, window)?;
    if sx.iter().chain(&sy).any(|v| !(*v > 0.0)) {
        return Err(SbmError::FitRefused(
            "power-law fit needs positive data in the window".into(),
        ));
    }
    let lx: Vec<f64> = sx.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = sy.iter().map(|y| y.ln()).collect();
    let (slope, intercept, residual) = line_fit(&lx, &ly)?;
    Ok(FitResult {
        model: FitModel::Power,
        params: BTreeMap::from([
            ("amplitude".to_string(), intercept.exp()),
            ("exponent".to_string(), slope),
        ]),
        residual,
        window: span(&sx),
        points: sx.len(),
    })
}

/// `y = prefactor · exp(−rate · x)`, fitted on `(x, ln y)`.
pub fn fit_exponential(xs: &[f64], ys: &[f64], window: &FitWindow) -> Result<FitResult> {
    let (sx, sy) = select(xs, ys, window)?;
    if sy.iter().any(|v| !(*v > 0.0)) {
        return Err(SbmError::FitRefused(
            "exponential fit needs positive ordinates".into(),
        ));
    }
    let ly: Vec<f64> = sy.iter().map(|y| y.ln()).collect();
    let (slope, intercept, residual) = line_fit(&sx, &ly)?;
    Ok(FitResult {
        model: FitModel::Exponential,
        params: BTreeMap::from([
            ("prefactor".to_string(), intercept.exp()),
            ("rate".to_string(), -slope),
        ]),
        residual,
        window: span(&sx),
        points: sx.len(),
    })
}

fn log_form_residuals(xs: &[f64], ys: &[f64], p: &Vector3<f64>) -> Option<Vec<f64>> {
    let (a, b, c) = (p[0], p[1], p[2]);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let arg = x + b;
            (arg > 0.0).then(|| a * arg.ln() + c - y)
        })
        .collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// For fixed `b` the model is linear in `(a, c)`.
fn profile_log_form(xs: &[f64], ys: &[f64], b: f64) -> Option<(Vector3<f64>, f64)> {
    let lx: Option<Vec<f64>> = xs.iter().map(|x| (x + b > 0.0).then(|| (x + b).ln())).collect();
    let (a, c, _) = line_fit(&lx?, ys).ok()?;
    let p = Vector3::new(a, b, c);
    let r = log_form_residuals(xs, ys, &p)?;
    Some((p, sum_sq(&r)))
}

/// `y = a ln(x + b) + c` by Levenberg–Marquardt, started from the best
/// point of a scan over `b` with `(a, c)` solved exactly.
///
/// The extrapolation `y(0) = a ln b + c` is reported as `y0` when `b > 0`.
pub fn fit_log_form(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(SbmError::FitRefused("x and y lengths differ".into()));
    }
    if xs.len() < 4 {
        return Err(SbmError::FitRefused(format!(
            "log-form fit needs at least 4 points, got {}",
            xs.len()
        )));
    }
    let (xmin, xmax) = span(xs);
    let width = (xmax - xmin).max(xmax.abs()).max(1e-300);

    let mut start: Option<(Vector3<f64>, f64)> = None;
    for i in 0..=400 {
        let offset = width * 10f64.powf(-10.0 + 14.0 * i as f64 / 400.0);
        if let Some(cand) = profile_log_form(xs, ys, -xmin + offset) {
            if start.as_ref().is_none_or(|s| cand.1 < s.1) {
                start = Some(cand);
            }
        }
    }
    let (mut p, mut cost) =
        start.ok_or_else(|| SbmError::FitRefused("no admissible starting point".into()))?;

    let jacobian = |p: &Vector3<f64>| -> Vec<[f64; 3]> {
        xs.iter()
            .map(|x| {
                let arg = x + p[1];
                [arg.ln(), p[0] / arg, 1.0]
            })
            .collect()
    };
    let mut mu: f64 = 1e-3;
    for _ in 0..500 {
        let r = log_form_residuals(xs, ys, &p).expect("current point is admissible");
        let jac = jacobian(&p);
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
        if jtr.amax() <= 1e-15 * (1.0 + cost.sqrt()) {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for a in 0..3 {
                damped[(a, a)] += mu * jtj[(a, a)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            match log_form_residuals(xs, ys, &trial).map(|r| sum_sq(&r)) {
                Some(c) if c < cost => {
                    let rel = (cost - c) / cost.max(1e-300);
                    p = trial;
                    cost = c;
                    mu = (mu * 0.3).max(1e-12);
                    improved = rel > 1e-16 || step.amax() > 1e-14 * p.amax();
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }

    let jac = jacobian(&p);
    let jm = nalgebra::DMatrix::from_fn(jac.len(), 3, |i, j| jac[i][j]);
    let sv = jm.svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(SbmError::FitRefused(format!(
            "log-form Jacobian is singular (condition {:.3e})",
            smax / smin
        )));
    }
    let mut params = BTreeMap::from([
        ("a".to_string(), p[0]),
        ("b".to_string(), p[1]),
        ("c".to_string(), p[2]),
    ]);
    if p[1] > 0.0 {
        params.insert("y0".to_string(), p[0] * p[1].ln() + p[2]);
    }
    Ok(FitResult {
        model: FitModel::Logform,
        params,
        residual: cost.sqrt(),
        window: (xmin, xmax),
        points: xs.len(),
    })
}
