//! Metropolis random walk in parameter space for escaping metastable minima.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::{energy, ModelParams, VariationalState};
use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};

/// Geometric cooling schedule `T_j = t0 · decay^j`, `j = 0..n_temps`.
///
/// Each step perturbs one block of parameters: a single weight, or one
/// coherent-state row. Proposals are Gaussian with width
/// `proposal_scale · T` for weights and `proposal_scale · T · λ_k/(2ω_k)`
/// for the displacement of mode `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub decay: f64,
    pub n_temps: usize,
    pub steps_per_temp: usize,
    pub proposal_scale: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t0: 1e-3,
            decay: 0.7,
            n_temps: 12,
            steps_per_temp: 40,
            proposal_scale: 20.0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(SbmError::Parameter(format!(
                "annealing needs t0 > 0, got {}",
                self.t0
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(SbmError::Parameter(format!(
                "annealing decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.proposal_scale >= 0.0 && self.proposal_scale.is_finite()) {
            return Err(SbmError::Parameter("proposal_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn temperatures(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_temps).map(move |j| self.t0 * self.decay.powi(j as i32))
    }
}

/// Runs the walk and returns the lowest-energy state visited.
pub fn anneal<R: Rng + ?Sized>(
    state: &VariationalState,
    params: &ModelParams,
    bath: &BathDiscretization,
    schedule: &AnnealSchedule,
    rng: &mut R,
) -> Result<VariationalState> {
    schedule.validate()?;
    let (n, m) = (state.n(), state.m());
    let c: Vec<f64> = bath.classical_displacements().iter().map(|v| v.max(1e-6)).collect();
    let mut x = state.normalized()?.to_params();
    let mut e = energy(&VariationalState::from_params(n, m, &x)?, params, bath)?;
    let mut best = (x.clone(), e);
    if schedule.proposal_scale == 0.0 {
        return Ok(state.clone());
    }
    // Blocks 0..2n are single weights, the next 2n are displacement rows.
    let blocks = 4 * n;
    let mut trial = x.clone();
    for temp in schedule.temperatures() {
        let width = schedule.proposal_scale * temp;
        for _ in 0..schedule.steps_per_temp {
            let block = rng.random_range(0..blocks);
            let range = block_range(block, n, m);
            for (j, idx) in range.clone().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                let scale = if block < 2 * n { 1.0 } else { c[j] };
                trial[idx] = x[idx] + width * scale * z;
            }
            let candidate = VariationalState::from_params(n, m, &trial)
                .and_then(|st| energy(&st, params, bath));
            let accept = match candidate {
                Ok(v) => v <= e || rng.random::<f64>() < (-(v - e) / temp).exp(),
                Err(_) => false,
            };
            if accept {
                x[range.clone()].copy_from_slice(&trial[range]);
                e = candidate.expect("accepted candidates are finite");
                if e < best.1 {
                    best = (x.clone(), e);
                }
            } else {
                trial[range.clone()].copy_from_slice(&x[range]);
            }
        }
    }
    VariationalState::from_params(n, m, &best.0)?.normalized()
}

fn block_range(block: usize, n: usize, m: usize) -> std::ops::Range<usize> {
    if block < 2 * n {
        block..block + 1
    } else {
        let start = 2 * n + (block - 2 * n) * m;
        start..start + m
    }
}
