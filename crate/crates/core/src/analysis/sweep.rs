//! Coupling sweeps: one multi-start ground state plus observables per α.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ModelParams, VariationalState};
use crate::bath::{BathDiscretization, MeshSpec};
use crate::error::{Result, SbmError};
use crate::observables::{
    bath_observables, correlation_row, spin_observables, symmetry_parameter,
    DEFAULT_DEGENERACY_TOL,
};
use crate::optimizer::{multi_start_report, GroundStateSolution, OptimizerOptions};

use super::transition::{classify_zeta, ZetaBand};

/// Per-mode observables of one ground state, in ascending frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub omegas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub f_bar: Option<Vec<f64>>,
    pub g_bar: Option<Vec<f64>>,
    /// Correlations with the lowest mode (`l = 0`, `ω_l = ω_min`).
    pub cor_x_low: Vec<Option<f64>>,
    pub cor_p_low: Vec<Option<f64>>,
    /// Correlations with the highest mode (`l = M − 1`, next to `ω_c`).
    pub cor_x_top: Vec<Option<f64>>,
    pub cor_p_top: Vec<Option<f64>>,
}

impl ModeProfile {
    pub fn from_state(state: &VariationalState, bath: &BathDiscretization) -> Result<Self> {
        let obs = bath_observables(state)?;
        let (cor_x_low, cor_p_low) = correlation_row(state, 0)?;
        let (cor_x_top, cor_p_top) = correlation_row(state, state.m() - 1)?;
        Ok(ModeProfile {
            omegas: bath.omegas.clone(),
            lambdas: bath.lambdas.clone(),
            delta_x: obs.delta_x,
            delta_p: obs.delta_p,
            f_bar: obs.averages.f_bar,
            g_bar: obs.averages.g_bar,
            cor_x_low,
            cor_p_low,
            cor_x_top,
            cor_p_top,
        })
    }

    pub fn uncertainty_excess(&self) -> Vec<f64> {
        self.delta_x
            .iter()
            .zip(&self.delta_p)
            .map(|(x, p)| x * p - 0.25)
            .collect()
    }

    pub fn momentum_offset(&self) -> Vec<f64> {
        self.delta_p.iter().map(|p| 0.5 - p).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub energy: f64,
    /// `NaN` when the point did not converge.
    pub zeta: f64,
    pub parity: f64,
    pub sigma_z: f64,
    pub sigma_x: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start_index: usize,
    pub band: ZetaBand,
    /// File holding this point's per-mode data, when written.
    pub modes_file: Option<String>,
    #[serde(skip)]
    pub profile: Option<ModeProfile>,
    #[serde(skip)]
    pub solution: Option<GroundStateSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub params: ModelParams,
    pub mesh: MeshSpec,
    pub opts: OptimizerOptions,
    /// Seed each point with the previous point's ground state as an extra
    /// start; points then run in sequence.
    pub warm_start: bool,
    pub degeneracy_tol: f64,
    pub keep_profiles: bool,
}

impl SweepConfig {
    pub fn new(params: ModelParams, mesh: MeshSpec, opts: OptimizerOptions) -> Self {
        SweepConfig {
            params,
            mesh,
            opts,
            warm_start: true,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            keep_profiles: true,
        }
    }
}

/// Ground state and observables at a single coupling.
pub fn solve_point(
    alpha: f64,
    cfg: &SweepConfig,
    warm_starts: &[VariationalState],
) -> Result<SweepRecord> {
    let bath = cfg.mesh.build(alpha)?;
    let report = multi_start_report(&cfg.params, &bath, &cfg.opts, warm_starts)?;
    let solution = report
        .best_converged
        .or(report.best_any)
        .ok_or_else(|| SbmError::OptimizationFailure {
            message: format!("every restart aborted at alpha={alpha}"),
            best_energy: f64::NAN,
            best_grad_norm: f64::NAN,
        })?;
    record_from_solution(alpha, solution, &bath, cfg)
}

pub fn record_from_solution(
    alpha: f64,
    solution: GroundStateSolution,
    bath: &BathDiscretization,
    cfg: &SweepConfig,
) -> Result<SweepRecord> {
    let spin = spin_observables(&solution.state)?;
    let (zeta, parity) = if solution.converged {
        let sym = symmetry_parameter(&solution, &cfg.params, bath, cfg.degeneracy_tol, &cfg.opts)?;
        (sym.zeta, sym.parity)
    } else {
        log::warn!(
            "alpha={alpha}: no restart converged (best grad norm {:.3e})",
            solution.grad_norm
        );
        (
            f64::NAN,
            crate::observables::parity_expectation(&solution.state)?,
        )
    };
    let profile = if cfg.keep_profiles {
        Some(ModeProfile::from_state(&solution.state, bath)?)
    } else {
        None
    };
    Ok(SweepRecord {
        alpha,
        energy: solution.energy,
        zeta,
        parity,
        sigma_z: spin.sigma_z,
        sigma_x: spin.sigma_x,
        entropy: spin.entropy,
        grad_norm: solution.grad_norm,
        converged: solution.converged,
        iterations: solution.iterations,
        start_index: solution.start_index,
        band: classify_zeta(zeta),
        modes_file: None,
        profile,
        solution: Some(solution),
    })
}

/// Sweeps the coupling over an ascending grid. Unconverged points are kept
/// and flagged.
pub fn sweep_alpha(alphas: &[f64], cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    if alphas.is_empty() {
        return Err(SbmError::Parameter("alpha grid is empty".into()));
    }
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SbmError::Parameter("alpha grid must be strictly ascending".into()));
    }
    if cfg.warm_start {
        let mut out: Vec<SweepRecord> = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let warm: Vec<VariationalState> = out
                .last()
                .and_then(|r| r.solution.as_ref())
                .map(|s| vec![s.state.clone()])
                .unwrap_or_default();
            let rec = solve_point(alpha, cfg, &warm)?;
            log::info!(
                "alpha={alpha:.4} E={:.12e} zeta={:.6} converged={}",
                rec.energy,
                rec.zeta,
                rec.converged
            );
            out.push(rec);
        }
        Ok(out)
    } else {
        alphas
            .par_iter()
            .map(|&alpha| solve_point(alpha, cfg, &[]))
            .collect()
    }
}
