//! Ground-state search: quasi-Newton descent from many random starts, with
//! optional annealing for restarts that end in metastable minima.
//!
//! Every restart owns an RNG stream derived from the master seed and its
//! restart index, so results do not depend on thread scheduling.

mod anneal;
mod lbfgs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use anneal::{anneal, AnnealSchedule};

use crate::ansatz::{apply_parity, energy, parity_projection, random_state_with_rng, EnergyFunctional, ModelParams,
    VariationalState};
use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Number of coherent states per spin branch.
    pub n_states: usize,
    /// Convergence threshold on the max-norm of the gradient at unit norm.
    pub grad_tol: f64,
    /// A trajectory stops when its energy drops by less than this over
    /// `stall_window` iterations.
    pub energy_tol: f64,
    pub stall_window: usize,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    pub n_starts: usize,
    pub anneal: Option<AnnealSchedule>,
    /// Restarts ending more than this above the best restart get annealed.
    pub anneal_gap: f64,
    pub seed: u64,
    pub spread: f64,
    /// Odd-numbered restarts start from the parity-even projection of
    /// their random state. Near the transition the delocalized minimum is
    /// rarely reached from unconstrained random starts.
    pub symmetric_starts: bool,
    /// Progress line every this many iterations; 0 disables.
    pub log_every: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            n_states: 6,
            grad_tol: 1e-9,
            energy_tol: 1e-15,
            stall_window: 2000,
            max_iters: 50_000,
            lbfgs_memory: 12,
            n_starts: 128,
            anneal: None,
            anneal_gap: 1e-8,
            seed: 20_210_601,
            spread: 1.0,
            symmetric_starts: true,
            log_every: 0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(SbmError::Parameter("grad_tol must be > 0".into()));
        }
        if self.n_starts < 1 {
            return Err(SbmError::Parameter("n_starts must be >= 1".into()));
        }
        if self.n_states < 1 {
            return Err(SbmError::Parameter("n_states must be >= 1".into()));
        }
        if self.lbfgs_memory < 1 {
            return Err(SbmError::Parameter("lbfgs_memory must be >= 1".into()));
        }
        if let Some(schedule) = &self.anneal {
            schedule.validate()?;
        }
        Ok(())
    }

    fn lbfgs(&self) -> lbfgs::LbfgsSettings {
        lbfgs::LbfgsSettings {
            grad_tol: self.grad_tol,
            energy_tol: self.energy_tol,
            stall_window: self.stall_window,
            max_iters: self.max_iters,
            memory: self.lbfgs_memory,
            log_every: self.log_every,
        }
    }
}

/// Seed of the RNG stream owned by restart `index`.
pub fn restart_seed(master: u64, index: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = master ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSolution {
    /// Winning state at unit norm.
    pub state: VariationalState,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub start_index: usize,
    pub converged: bool,
    pub master_seed: u64,
    pub restart_seed: Option<u64>,
    pub annealed: bool,
    /// Energy of the parity image of `state`.
    pub parity_partner_energy: f64,
}

/// Local minimization from `initial`.
pub fn minimize(
    initial: &VariationalState,
    params: &ModelParams,
    bath: &BathDiscretization,
    opts: &OptimizerOptions,
) -> Result<GroundStateSolution> {
    minimize_with_history(initial, params, bath, opts).map(|(sol, _)| sol)
}

/// Local minimization that also returns the energy after every accepted step.
pub fn minimize_with_history(
    initial: &VariationalState,
    params: &ModelParams,
    bath: &BathDiscretization,
    opts: &OptimizerOptions,
) -> Result<(GroundStateSolution, Vec<f64>)> {
    opts.validate()?;
    if initial.m() != bath.mode_count() {
        return Err(SbmError::Parameter(format!(
            "state has {} modes but the bath has {}",
            initial.m(),
            bath.mode_count()
        )));
    }
    let functional = EnergyFunctional::new(initial.n(), params, bath)?;
    let out = lbfgs::minimize(&functional, &initial.to_params(), &opts.lbfgs())?;
    let state = VariationalState::from_params(initial.n(), initial.m(), &out.x)?;
    let parity_partner_energy = energy(&apply_parity(&state), params, bath)?;
    let sol = GroundStateSolution {
        state,
        energy: out.energy,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        start_index: 0,
        converged: out.converged,
        master_seed: opts.seed,
        restart_seed: None,
        annealed: false,
        parity_partner_energy,
    };
    Ok((sol, out.history))
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub annealed: bool,
}

#[derive(Debug, Clone)]
pub struct MultiStartReport {
    /// Lowest-energy converged restart.
    pub best_converged: Option<GroundStateSolution>,
    /// Lowest-energy restart regardless of convergence.
    pub best_any: Option<GroundStateSolution>,
    pub restarts: Vec<RestartSummary>,
    /// Solutions of all restarts, index-ordered.
    pub solutions: Vec<GroundStateSolution>,
}

fn better(a: &GroundStateSolution, b: &GroundStateSolution) -> bool {
    a.energy < b.energy || (a.energy == b.energy && a.start_index < b.start_index)
}

fn pick_best<'a, I: Iterator<Item = &'a GroundStateSolution>>(it: I) -> Option<GroundStateSolution> {
    it.fold(None::<&GroundStateSolution>, |acc, s| match acc {
        Some(b) if !better(s, b) => Some(b),
        _ => Some(s),
    })
    .cloned()
}

/// Runs `opts.n_starts` random restarts plus the supplied warm starts (with
/// indices `n_starts..`) and reports all of them.
pub fn multi_start_report(
    params: &ModelParams,
    bath: &BathDiscretization,
    opts: &OptimizerOptions,
    warm_starts: &[VariationalState],
) -> Result<MultiStartReport> {
    opts.validate()?;
    let m = bath.mode_count();
    let total = opts.n_starts + warm_starts.len();

    let run_one = |index: usize| -> Option<GroundStateSolution> {
        let (initial, seed) = if index < opts.n_starts {
            let seed = restart_seed(opts.seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = random_state_with_rng(opts.n_states, m, bath, opts.spread, &mut rng).ok()?;
            if opts.symmetric_starts && index % 2 == 1 {
                st = parity_projection(&st);
            }
            (st, Some(seed))
        } else {
            (warm_starts[index - opts.n_starts].clone(), None)
        };
        match minimize(&initial, params, bath, opts) {
            Ok(mut sol) => {
                sol.start_index = index;
                sol.restart_seed = seed;
                Some(sol)
            }
            Err(err) => {
                log::warn!("restart {index} aborted: {err}");
                None
            }
        }
    };
    let mut solutions: Vec<GroundStateSolution> =
        (0..total).into_par_iter().filter_map(run_one).collect();

    if let (Some(schedule), Some(incumbent)) =
        (opts.anneal, pick_best(solutions.iter()).map(|s| s.energy))
    {
        solutions.par_iter_mut().for_each(|sol| {
            if sol.energy <= incumbent + opts.anneal_gap {
                return;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(opts.seed, sol.start_index));
            rng.set_stream(1);
            let escaped = anneal(&sol.state, params, bath, &schedule, &mut rng)
                .and_then(|st| minimize(&st, params, bath, opts));
            if let Ok(mut cand) = escaped {
                if cand.energy < sol.energy {
                    cand.start_index = sol.start_index;
                    cand.restart_seed = sol.restart_seed;
                    cand.annealed = true;
                    cand.iterations += sol.iterations;
                    *sol = cand;
                }
            }
        });
    }

    let restarts = solutions
        .iter()
        .map(|s| RestartSummary {
            index: s.start_index,
            energy: s.energy,
            grad_norm: s.grad_norm,
            iterations: s.iterations,
            converged: s.converged,
            annealed: s.annealed,
        })
        .collect();
    Ok(MultiStartReport {
        best_converged: pick_best(solutions.iter().filter(|s| s.converged)),
        best_any: pick_best(solutions.iter()),
        restarts,
        solutions,
    })
}

/// Lowest-energy converged solution over all restarts.
pub fn multi_start(
    params: &ModelParams,
    bath: &BathDiscretization,
    opts: &OptimizerOptions,
) -> Result<GroundStateSolution> {
    multi_start_warm(params, bath, opts, &[])
}

pub fn multi_start_warm(
    params: &ModelParams,
    bath: &BathDiscretization,
    opts: &OptimizerOptions,
    warm_starts: &[VariationalState],
) -> Result<GroundStateSolution> {
    let report = multi_start_report(params, bath, opts, warm_starts)?;
    match report.best_converged {
        Some(best) => Ok(best),
        None => {
            let (best_energy, best_grad_norm) = report
                .best_any
                .map(|s| (s.energy, s.grad_norm))
                .unwrap_or((f64::NAN, f64::NAN));
            Err(SbmError::OptimizationFailure {
                message: format!("none of {} restarts converged", report.restarts.len()),
                best_energy,
                best_grad_norm,
            })
        }
    }
}
