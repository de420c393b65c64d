//! Limited-memory BFGS on the flattened ansatz parameters.
//!
//! Steps are accepted by an Armijo backtracking search. Close to a minimum
//! the energy decrease of a step drops below the rounding level of `E`
//! itself, where the Armijo test becomes noise; there the approximate Wolfe
//! test on the directional derivative is used instead.

use std::collections::VecDeque;

use crate::ansatz::EnergyFunctional;
use crate::error::{Result, SbmError};

const ARMIJO_C1: f64 = 1e-4;
const WOLFE_SIGMA: f64 = 0.9;
const APPROX_WOLFE_DELTA: f64 = 0.1;
const ROUNDING_EPS: f64 = 1e-14;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LbfgsSettings {
    pub grad_tol: f64,
    pub energy_tol: f64,
    pub stall_window: usize,
    pub max_iters: usize,
    pub memory: usize,
    pub log_every: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Rescales the weights to unit norm in place and returns the old norm.
fn renormalize(x: &mut [f64], n: usize, norm: f64) {
    let s = 1.0 / norm.sqrt();
    x[..2 * n].iter_mut().for_each(|w| *w *= s);
}

/// Max-norm of the gradient the same state would have at unit norm.
///
/// Weight derivatives scale as `1/√N` under `w → w/√N`; displacement
/// derivatives are scale-free.
fn normalized_grad_norm(grad: &[f64], n: usize, norm: f64) -> f64 {
    let s = norm.sqrt();
    let weights = grad[..2 * n].iter().map(|g| (g * s).abs());
    let rest = grad[2 * n..].iter().map(|g| g.abs());
    weights.chain(rest).fold(0.0, f64::max)
}

fn weight_norm(x: &[f64], functional: &EnergyFunctional) -> f64 {
    functional.norm_of(x).unwrap_or(f64::NAN)
}

pub(crate) fn minimize(
    functional: &EnergyFunctional,
    x0: &[f64],
    settings: &LbfgsSettings,
) -> Result<LbfgsOutcome> {
    let n = functional.n();
    let dim = functional.dim();
    let steepest = |g: &[f64], d: &mut [f64]| {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = (1.0 / gmax).min(1.0);
        d.iter_mut().zip(g).for_each(|(d, gi)| *d = -gi * scale);
    };
    let mut x = x0.to_vec();
    let norm0 = weight_norm(&x, functional);
    if !(norm0 > 0.0) {
        return Err(SbmError::DegenerateState("initial state has no norm".into()));
    }
    renormalize(&mut x, n, norm0);
    let mut g = vec![0.0; dim];
    let mut e = functional.energy_and_gradient(&x, &mut g).map_err(|err| {
        SbmError::OptimizationFailure {
            message: format!("initial energy evaluation failed: {err}"),
            best_energy: f64::NAN,
            best_grad_norm: f64::NAN,
        }
    })?;
    let mut norm = 1.0;

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut history = vec![e];
    let mut grad_norm = normalized_grad_norm(&g, n, norm);
    let mut iterations = 0;
    let mut direction = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut alphas = vec![0.0; settings.memory];

    while grad_norm > settings.grad_tol && iterations < settings.max_iters {
        // two-loop recursion
        direction.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &direction);
            alphas[i] = a;
            direction.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            direction.iter_mut().for_each(|d| *d *= gamma);
        } else {
            steepest(&g, &mut direction);
        }
        for (i, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &direction);
            direction
                .iter_mut()
                .zip(s)
                .for_each(|(d, si)| *d += (alphas[i] - b) * si);
        }

        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            mem.clear();
            steepest(&g, &mut direction);
            slope = dot(&g, &direction);
        }

        let accepted = line_search(
            functional,
            &x,
            e,
            slope,
            &direction,
            &mut x_new,
            &mut g_new,
        );
        let (e_new, step) = match accepted {
            Some(v) => v,
            None if !mem.is_empty() => {
                mem.clear();
                continue;
            }
            None => break,
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && step > 0.0 {
            if mem.len() == settings.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        e = e_new;
        iterations += 1;
        history.push(e);

        norm = weight_norm(&x, functional);
        if !(0.25..=4.0).contains(&norm) {
            renormalize(&mut x, n, norm);
            e = functional.energy_and_gradient(&x, &mut g)?;
            norm = 1.0;
            mem.clear();
        }
        grad_norm = normalized_grad_norm(&g, n, norm);

        if settings.log_every > 0 && iterations % settings.log_every == 0 {
            log::info!("iter {iterations:>7}  energy {e:.15e}  grad {grad_norm:.3e}");
        }
        let w = settings.stall_window;
        if w > 0 && history.len() > w {
            let before = history[history.len() - 1 - w];
            if before - e < settings.energy_tol {
                log::debug!("stalled after {iterations} iterations at grad {grad_norm:.3e}");
                break;
            }
        }
    }

    renormalize(&mut x, n, norm);
    let e = functional.energy_and_gradient(&x, &mut g)?;
    let grad_norm = normalized_grad_norm(&g, n, 1.0);
    Ok(LbfgsOutcome {
        x,
        energy: e,
        grad_norm,
        iterations,
        converged: grad_norm <= settings.grad_tol,
        history,
    })
}

/// Backtracking along `direction`; returns the accepted energy and step.
fn line_search(
    functional: &EnergyFunctional,
    x: &[f64],
    e0: f64,
    slope: f64,
    direction: &[f64],
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<(f64, f64)> {
    let mut t = 1.0;
    for _ in 0..MAX_BACKTRACKS {
        x_new
            .iter_mut()
            .zip(x.iter().zip(direction))
            .for_each(|(xn, (xi, di))| *xn = xi + t * di);
        if let Ok(e) = functional.energy_and_gradient(x_new, g_new) {
            if e <= e0 + ARMIJO_C1 * t * slope {
                return Some((e, t));
            }
            let new_slope = dot(g_new, direction);
            let approx_wolfe = e <= e0 + ROUNDING_EPS * e0.abs()
                && WOLFE_SIGMA * slope <= new_slope
                && new_slope <= (2.0 * APPROX_WOLFE_DELTA - 1.0) * slope;
            if approx_wolfe {
                return Some((e, t));
            }
        }
        t *= 0.5;
    }
    None
}
