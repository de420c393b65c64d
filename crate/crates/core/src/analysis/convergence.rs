//! Ground-state energy as a function of the ansatz size `N` or the number
//! of bath modes `M`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ModelParams, VariationalState};
use crate::bath::MeshSpec;
use crate::error::{Result, SbmError};
use crate::optimizer::{multi_start_report, OptimizerOptions};

use super::fit::{fit_exponential, FitResult, FitWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceAxis {
    #[serde(rename = "N")]
    States,
    #[serde(rename = "M")]
    Modes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub value: usize,
    pub energy: f64,
    /// `E_g(value) − E_g(largest value)`.
    pub shift: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub axis: ConvergenceAxis,
    pub alpha: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Exponential fit of the positive shifts.
    pub fit: Option<FitResult>,
    /// Values where `E_g` rose above the previous value by more than the
    /// rounding level.
    pub non_monotone: Vec<usize>,
}

/// Appends coherent states with zero weight to `state`, so the padded state
/// has exactly the same energy. Their displacements copy existing rows with
/// a small perturbation.
pub fn pad_state(state: &VariationalState, n_new: usize, seed: u64) -> Result<VariationalState> {
    let (n, m) = (state.n(), state.m());
    if n_new < n {
        return Err(SbmError::Parameter(format!("cannot shrink N={n} to {n_new}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = state.a().to_vec();
    let mut d = state.d().to_vec();
    let mut f = state.f().to_vec();
    let mut g = state.g().to_vec();
    for _ in n..n_new {
        let src = rng.random_range(0..n);
        a.push(0.0);
        d.push(0.0);
        let jitter = rng.random_range(0.05..0.3);
        f.extend(state.f_row(src).iter().map(|v| v * (1.0 - jitter)));
        g.extend(state.g_row(src).iter().map(|v| v * (1.0 - jitter)));
    }
    debug_assert_eq!(f.len(), n_new * m);
    VariationalState::new(a, d, f, g)
}

pub fn convergence_study(
    params: &ModelParams,
    alpha: f64,
    mesh: &MeshSpec,
    axis: ConvergenceAxis,
    values: &[usize],
    opts: &OptimizerOptions,
) -> Result<ConvergenceStudy> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SbmError::Parameter(
            "convergence values must be nonempty and strictly ascending".into(),
        ));
    }
    let mut energies = Vec::with_capacity(values.len());
    let mut grads = Vec::with_capacity(values.len());
    let mut previous: Option<VariationalState> = None;
    for &value in values {
        let (bath, run_opts) = match axis {
            ConvergenceAxis::States => (
                mesh.build(alpha)?,
                OptimizerOptions {
                    n_states: value,
                    ..*opts
                },
            ),
            ConvergenceAxis::Modes => (mesh.with_modes(value).build(alpha)?, *opts),
        };
        let warm = match (axis, &previous) {
            (ConvergenceAxis::States, Some(prev)) => vec![pad_state(prev, value, opts.seed ^ value as u64)?],
            _ => Vec::new(),
        };
        // Every restart's energy is a variational upper bound, so the lowest
        // one is kept even if its trajectory hit the iteration cap.
        let sol = multi_start_report(params, &bath, &run_opts, &warm)?
            .best_any
            .ok_or_else(|| SbmError::OptimizationFailure {
                message: format!("every restart aborted at {axis:?}={value}"),
                best_energy: f64::NAN,
                best_grad_norm: f64::NAN,
            })?;
        log::info!(
            "{axis:?}={value}: E={:.15e} grad={:.3e} converged={}",
            sol.energy,
            sol.grad_norm,
            sol.converged
        );
        energies.push(sol.energy);
        grads.push((sol.grad_norm, sol.converged));
        previous = Some(sol.state);
    }

    let e_inf = *energies.last().expect("nonempty");
    let rows: Vec<ConvergenceRow> = values
        .iter()
        .zip(&energies)
        .zip(&grads)
        .map(|((&value, &energy), &(grad_norm, converged))| ConvergenceRow {
            value,
            energy,
            shift: energy - e_inf,
            grad_norm,
            converged,
        })
        .collect();
    let tol = 1e-12 * e_inf.abs().max(1.0);
    let non_monotone = rows
        .windows(2)
        .filter(|w| w[1].energy > w[0].energy + tol)
        .map(|w| w[1].value)
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows[..rows.len() - 1]
        .iter()
        .filter(|r| r.shift > 0.0)
        .map(|r| (r.value as f64, r.shift))
        .unzip();
    let fit = if xs.len() >= 2 {
        fit_exponential(&xs, &ys, &FitWindow::default()).ok()
    } else {
        None
    };
    Ok(ConvergenceStudy {
        axis,
        alpha,
        rows,
        fit,
        non_monotone,
    })
}
