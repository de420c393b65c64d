//! Closed-form ground-state observables of a variational state.
//!
//! Coherent-state matrix elements used throughout (real displacements,
//! `x = (b + b†)/√2`, `p = i(b† − b)/√2`):
//!
//! ```text
//! ⟨f_m| x_k |f_n⟩     = (f_mk + f_nk)/√2 · F_mn
//! ⟨f_m| x_k² |f_n⟩    = ((f_mk + f_nk)² + 1)/2 · F_mn
//! ⟨f_m| p_k² |f_n⟩    = (1 − (f_mk − f_nk)²)/2 · F_mn
//! ⟨f_m| x_k x_l |f_n⟩ = (f_mk + f_nk)(f_ml + f_nl)/2 · F_mn      (k ≠ l)
//! ⟨f_m| p_k p_l |f_n⟩ = −(f_mk − f_nk)(f_ml − f_nl)/2 · F_mn     (k ≠ l)
//! ```

use serde::{Deserialize, Serialize};

use crate::ansatz::{
    apply_parity, branch_norms, energy, gaussian_kernel, norm, overlap_kernels, ModelParams,
    VariationalState,
};
use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};
use crate::optimizer::{minimize, GroundStateSolution, OptimizerOptions};

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinObservables {
    pub sigma_z: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Spin-bath entanglement entropy in nats.
    pub entropy: f64,
}

impl SpinObservables {
    pub fn entropy_bits(&self) -> f64 {
        self.entropy / std::f64::consts::LN_2
    }
}

/// Von Neumann entropy of a spin with Bloch vector length `r`, in nats.
pub fn bloch_entropy(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    [(1.0 + r) / 2.0, (1.0 - r) / 2.0]
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|w| -w * w.ln())
        .sum()
}

pub fn spin_observables(state: &VariationalState) -> Result<SpinObservables> {
    let kernels = overlap_kernels(state);
    let (up, down) = branch_norms(state, &kernels);
    let total = norm(state)?;
    let n = state.n();
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            cross += state.a()[i] * state.d()[j] * kernels.k_at(i, j);
        }
    }
    let sigma_z = (up - down) / total;
    let sigma_x = 2.0 * cross / total;
    let sigma_y = 0.0;
    let r = (sigma_x * sigma_x + sigma_y * sigma_y + sigma_z * sigma_z).sqrt();
    Ok(SpinObservables {
        sigma_z,
        sigma_x,
        sigma_y,
        entropy: bloch_entropy(r),
    })
}

/// Normalized pair weights `A_m A_n F_mn / N` and `D_m D_n G_mn / N`.
struct PairWeights {
    up: Vec<f64>,
    down: Vec<f64>,
}

fn pair_weights(state: &VariationalState) -> Result<PairWeights> {
    let kernels = overlap_kernels(state);
    let total = norm(state)?;
    let n = state.n();
    let mut up = vec![0.0; n * n];
    let mut down = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            up[i * n + j] = state.a()[i] * state.a()[j] * kernels.f_at(i, j) / total;
            down[i * n + j] = state.d()[i] * state.d()[j] * kernels.g_at(i, j) / total;
        }
    }
    Ok(PairWeights { up, down })
}

/// Sum over both branches of `w_mn · term(row_m, row_n)`.
fn pair_sum<T>(state: &VariationalState, weights: &PairWeights, term: T) -> f64
where
    T: Fn(&[f64], &[f64]) -> f64,
{
    let n = state.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (wu, wd) = (weights.up[i * n + j], weights.down[i * n + j]);
            if wu != 0.0 {
                acc += wu * term(state.f_row(i), state.f_row(j));
            }
            if wd != 0.0 {
                acc += wd * term(state.g_row(i), state.g_row(j));
            }
        }
    }
    acc
}

fn check_mode(state: &VariationalState, k: usize) -> Result<()> {
    if k >= state.m() {
        return Err(SbmError::Domain(format!(
            "mode index {k} out of range for M={}",
            state.m()
        )));
    }
    Ok(())
}

/// `⟨x_k⟩` for every mode.
pub fn mean_positions(state: &VariationalState) -> Result<Vec<f64>> {
    let w = pair_weights(state)?;
    Ok((0..state.m())
        .map(|k| {
            pair_sum(state, &w, |a, b| (a[k] + b[k]) * std::f64::consts::FRAC_1_SQRT_2)
        })
        .collect())
}

/// `(ΔX_b, ΔP_b)` of mode `k`: the position variance and `⟨p_k²⟩`.
pub fn mode_variances(state: &VariationalState, k: usize) -> Result<(f64, f64)> {
    check_mode(state, k)?;
    let w = pair_weights(state)?;
    Ok(variances_with(state, &w, k))
}

fn variances_with(state: &VariationalState, w: &PairWeights, k: usize) -> (f64, f64) {
    let x = pair_sum(state, w, |a, b| (a[k] + b[k]) * std::f64::consts::FRAC_1_SQRT_2);
    let x2 = pair_sum(state, w, |a, b| 0.5 * ((a[k] + b[k]).powi(2) + 1.0));
    let p2 = pair_sum(state, w, |a, b| 0.5 * (1.0 - (a[k] - b[k]).powi(2)));
    (x2 - x * x, p2)
}

/// `(Cor_X, Cor_P)` between distinct modes `k` and `l`.
pub fn correlations(state: &VariationalState, k: usize, l: usize) -> Result<(f64, f64)> {
    check_mode(state, k)?;
    check_mode(state, l)?;
    if k == l {
        return Err(SbmError::Domain(
            "correlations need distinct modes; use mode_variances for k = l".into(),
        ));
    }
    let w = pair_weights(state)?;
    Ok(correlation_with(state, &w, k, l))
}

fn correlation_with(state: &VariationalState, w: &PairWeights, k: usize, l: usize) -> (f64, f64) {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let xk = pair_sum(state, w, |a, b| (a[k] + b[k]) * s2);
    let xl = pair_sum(state, w, |a, b| (a[l] + b[l]) * s2);
    let xx = pair_sum(state, w, |a, b| 0.5 * (a[k] + b[k]) * (a[l] + b[l]));
    let pp = pair_sum(state, w, |a, b| -0.5 * (a[k] - b[k]) * (a[l] - b[l]));
    (xx - xk * xl, pp)
}

/// `Cor_X(k, l)` and `Cor_P(k, l)` for all `k` at fixed `l`; the `k = l`
/// entries are `None`.
pub fn correlation_row(
    state: &VariationalState,
    l: usize,
) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    check_mode(state, l)?;
    let w = pair_weights(state)?;
    let m = state.m();
    let mut cor_x = Vec::with_capacity(m);
    let mut cor_p = Vec::with_capacity(m);
    for k in 0..m {
        if k == l {
            cor_x.push(None);
            cor_p.push(None);
        } else {
            let (cx, cp) = correlation_with(state, &w, k, l);
            cor_x.push(Some(cx));
            cor_p.push(Some(cp));
        }
    }
    Ok((cor_x, cor_p))
}

/// Branch weights and weighted mean displacements; a branch whose weight
/// vanishes has no averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageDisplacements {
    pub a_bar: f64,
    pub d_bar: f64,
    pub f_bar: Option<Vec<f64>>,
    pub g_bar: Option<Vec<f64>>,
}

pub fn average_displacements(state: &VariationalState) -> Result<AverageDisplacements> {
    let state = state.normalized()?;
    let kernels = overlap_kernels(&state);
    let (up, down) = branch_norms(&state, &kernels);
    let n = state.n();
    let m = state.m();
    let branch = |weights: &[f64], rows: &[f64], kernel: &dyn Fn(usize, usize) -> f64, total: f64| {
        if !(total > 0.0) {
            return None;
        }
        let mut avg = vec![0.0; m];
        for i in 0..n {
            for j in 0..n {
                let w = weights[i] * weights[j] * kernel(i, j) / (2.0 * total);
                if w == 0.0 {
                    continue;
                }
                for ((out, a), b) in avg
                    .iter_mut()
                    .zip(&rows[i * m..(i + 1) * m])
                    .zip(&rows[j * m..(j + 1) * m])
                {
                    *out += w * (a + b);
                }
            }
        }
        Some(avg)
    };
    let f_bar = branch(state.a(), state.f(), &|i, j| kernels.f_at(i, j), up);
    let g_bar = branch(state.d(), state.g(), &|i, j| kernels.g_at(i, j), down);
    Ok(AverageDisplacements {
        a_bar: up.max(0.0).sqrt(),
        d_bar: down.max(0.0).sqrt(),
        f_bar,
        g_bar,
    })
}

/// `⟨σ_x exp(iπ Σ b†b)⟩`, using `exp(iπ n̂)|h⟩ = |−h⟩`.
pub fn parity_expectation(state: &VariationalState) -> Result<f64> {
    let total = norm(state)?;
    let n = state.n();
    let term = |i: usize, j: usize| {
        let s: f64 = state
            .f_row(i)
            .iter()
            .zip(state.g_row(j))
            .map(|(f, g)| (f + g) * (f + g))
            .sum();
        state.a()[i] * state.d()[j] * gaussian_kernel(s)
    };
    // Pairing (i, j) with (j, i) makes the sum invariant under the parity
    // map, which swaps the two, bit for bit.
    let mut acc = 0.0;
    for i in 0..n {
        acc += term(i, i);
        for j in i + 1..n {
            acc += term(i, j) + term(j, i);
        }
    }
    Ok(2.0 * acc / total)
}

/// Per-mode bath observables of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathObservables {
    pub delta_x: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub averages: AverageDisplacements,
}

impl BathObservables {
    /// `ΔX_b ΔP_b − 1/4` per mode.
    pub fn uncertainty_excess(&self) -> Vec<f64> {
        self.delta_x
            .iter()
            .zip(&self.delta_p)
            .map(|(x, p)| x * p - 0.25)
            .collect()
    }

    /// `1/2 − ΔP_b` per mode.
    pub fn momentum_offset(&self) -> Vec<f64> {
        self.delta_p.iter().map(|p| 0.5 - p).collect()
    }
}

pub fn bath_observables(state: &VariationalState) -> Result<BathObservables> {
    let w = pair_weights(state)?;
    let mut delta_x = Vec::with_capacity(state.m());
    let mut delta_p = Vec::with_capacity(state.m());
    for k in 0..state.m() {
        let (x, p) = variances_with(state, &w, k);
        delta_x.push(x);
        delta_p.push(p);
    }
    Ok(BathObservables {
        delta_x,
        delta_p,
        mean_x: mean_positions(state)?,
        averages: average_displacements(state)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub zeta: f64,
    pub parity: f64,
    /// Whether the state and its parity image are degenerate ground states.
    pub degenerate: bool,
    pub partner_energy: f64,
    pub reminimized_energy: Option<f64>,
}

/// Symmetry parameter `ζ = ⟨P⟩ Δ_E` of a converged solution.
///
/// `Δ_E = 1` when the parity image has the same energy within
/// `degeneracy_tol · max(1, |E|)` and re-minimizing from the image returns
/// the same energy; any nonzero bias gives `Δ_E = 0`.
pub fn symmetry_parameter(
    solution: &GroundStateSolution,
    params: &ModelParams,
    bath: &BathDiscretization,
    degeneracy_tol: f64,
    opts: &OptimizerOptions,
) -> Result<SymmetryReport> {
    if !solution.converged {
        return Err(SbmError::Refused(format!(
            "symmetry parameter needs a converged solution (grad norm {:.3e})",
            solution.grad_norm
        )));
    }
    let parity = parity_expectation(&solution.state)?;
    let image = apply_parity(&solution.state);
    let partner_energy = energy(&image, params, bath)?;
    let tol = degeneracy_tol * solution.energy.abs().max(1.0);
    if params.epsilon != 0.0 {
        return Ok(SymmetryReport {
            zeta: 0.0,
            parity,
            degenerate: false,
            partner_energy,
            reminimized_energy: None,
        });
    }
    let mut degenerate = (partner_energy - solution.energy).abs() <= tol;
    let mut reminimized_energy = None;
    if degenerate {
        let again = minimize(&image, params, bath, opts)?;
        degenerate = (again.energy - solution.energy).abs() <= tol;
        reminimized_energy = Some(again.energy);
    }
    Ok(SymmetryReport {
        zeta: if degenerate { parity } else { 0.0 },
        parity,
        degenerate,
        partner_energy,
        reminimized_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::random_state;
    use crate::bath::{discretize_log, SpectralDensity};
    use crate::oracle::{evaluate_state, FockBasisSpec, FockState};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_bath() -> BathDiscretization {
        discretize_log(&SpectralDensity::ohmic(0.5), 2.0, 2).unwrap()
    }

    #[test]
    fn spin_examples() {
        let up = VariationalState::new(vec![1.0], vec![0.0], vec![0.3, 0.1], vec![0.0; 2]).unwrap();
        let s = spin_observables(&up).unwrap();
        assert_eq!(s.sigma_z, 1.0);
        assert_eq!(s.entropy, 0.0);

        let free = VariationalState::vacuum(vec![1.0], vec![1.0], 2).unwrap();
        let s = spin_observables(&free).unwrap();
        assert_relative_eq!(s.sigma_x, 1.0, epsilon = 1e-15);
        assert!(s.entropy.abs() < 1e-12);

        let sym = VariationalState::new(vec![0.4], vec![0.4], vec![0.3, -0.2], vec![-0.3, 0.2]).unwrap();
        assert_eq!(spin_observables(&sym).unwrap().sigma_z, 0.0);
        assert_relative_eq!(bloch_entropy(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn single_coherent_state_is_minimum_uncertainty() {
        let s = VariationalState::new(vec![1.0], vec![0.0], vec![0.7, -1.1], vec![0.0; 2]).unwrap();
        for k in 0..2 {
            let (x, p) = mode_variances(&s, k).unwrap();
            assert_relative_eq!(x, 0.5, epsilon = 1e-14);
            assert_relative_eq!(p, 0.5, epsilon = 1e-14);
        }
        let (cx, cp) = correlations(&s, 0, 1).unwrap();
        assert!(cx.abs() < 1e-14 && cp.abs() < 1e-14);
        assert!(matches!(correlations(&s, 1, 1), Err(SbmError::Domain(_))));
        assert!(matches!(mode_variances(&s, 2), Err(SbmError::Domain(_))));
    }

    #[test]
    fn cat_state_variance_matches_oracle() {
        let s = VariationalState::from_rows(
            vec![0.8, 0.6],
            vec![0.0, 0.0],
            &[vec![1.2], vec![-1.2]],
            &[vec![0.0], vec![0.0]],
        )
        .unwrap();
        let basis = FockBasisSpec::new(1, 30).unwrap();
        let v = evaluate_state(&s, &basis).unwrap();
        let fs = FockState::new(&v, &basis).unwrap();
        let (x, p) = mode_variances(&s, 0).unwrap();
        let (ox, op) = fs.variances(0);
        assert!((x - ox).abs() < 1e-10 && (p - op).abs() < 1e-10);
        assert!(x * p > 0.25);
    }

    #[test]
    fn averages_and_parity_examples() {
        let s = VariationalState::new(vec![2.0], vec![0.0], vec![0.3, -0.4], vec![0.0; 2]).unwrap();
        let avg = average_displacements(&s).unwrap();
        assert_eq!(avg.f_bar.as_deref(), Some(&[0.3, -0.4][..]));
        assert!(avg.g_bar.is_none());
        assert_relative_eq!(avg.a_bar, 1.0, epsilon = 1e-15);
        assert_eq!(parity_expectation(&s).unwrap(), 0.0);

        let sym = VariationalState::from_rows(
            vec![0.5, -0.2],
            vec![0.5, -0.2],
            &[vec![0.3, -0.2], vec![0.1, 0.9]],
            &[vec![-0.3, 0.2], vec![-0.1, -0.9]],
        )
        .unwrap();
        assert_relative_eq!(parity_expectation(&sym).unwrap(), 1.0, epsilon = 1e-14);

        let bath = toy_bath();
        let c = bath.classical_displacements();
        let deep = VariationalState::new(
            vec![0.9],
            vec![0.1],
            c.iter().map(|v| -v).collect(),
            c.iter().map(|v| -v).collect(),
        )
        .unwrap();
        let bound = (-2.0 * c.iter().map(|v| v * v).sum::<f64>()).exp();
        assert!(parity_expectation(&deep).unwrap().abs() <= bound);
    }

    #[test]
    fn unconverged_solution_is_refused() {
        let bath = toy_bath();
        let params = ModelParams::new(0.0, 0.1).unwrap();
        let state = random_state(2, 2, &bath, 1, 1.0).unwrap();
        let sol = GroundStateSolution {
            energy: energy(&state, &params, &bath).unwrap(),
            parity_partner_energy: 0.0,
            state,
            grad_norm: 1.0,
            iterations: 0,
            start_index: 0,
            converged: false,
            master_seed: 0,
            restart_seed: None,
            annealed: false,
        };
        let err = symmetry_parameter(&sol, &params, &bath, 1e-8, &OptimizerOptions::default());
        assert!(matches!(err, Err(SbmError::Refused(_))));
    }

    proptest! {
        #[test]
        fn bounds_on_random_states(seed in any::<u64>(), n in 1usize..5) {
            let bath = discretize_log(&SpectralDensity::ohmic(0.9), 1.5, 4).unwrap();
            let s = random_state(n, 4, &bath, seed, 2.0).unwrap();
            let spin = spin_observables(&s).unwrap();
            prop_assert!(spin.sigma_x.powi(2) + spin.sigma_z.powi(2) <= 1.0 + 1e-12);
            prop_assert!(spin.entropy >= 0.0 && spin.entropy <= std::f64::consts::LN_2 + 1e-15);
            let obs = bath_observables(&s).unwrap();
            for k in 0..4 {
                prop_assert!(obs.delta_x[k] > 0.0 && obs.delta_p[k] > 0.0);
                prop_assert!(obs.delta_x[k] * obs.delta_p[k] >= 0.25 - 1e-12);
            }
            let (cx, cp) = correlations(&s, 0, 3).unwrap();
            let (cx2, cp2) = correlations(&s, 3, 0).unwrap();
            prop_assert_eq!(cx, cx2);
            prop_assert_eq!(cp, cp2);
            let p = parity_expectation(&s).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&p));
            prop_assert_eq!(parity_expectation(&apply_parity(&s)).unwrap(), p);
        }
    }
}
