//! Truncated-Fock exact diagonalization for baths of at most three modes.
//!
//! The oracle is independent of the coherent-state algebra: it builds the
//! Hamiltonian from ladder-operator matrix elements, expands trial states in
//! number states, and evaluates expectation values by explicit operator
//! application. It exists to validate the closed forms in [`crate::ansatz`]
//! and [`crate::observables`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::{ModelParams, VariationalState};
use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};

pub const MAX_ORACLE_MODES: usize = 3;
pub const DEFAULT_DIMENSION_CAP: usize = 200_000;
/// Largest tolerated norm loss when a coherent state is cut at `n_max`.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Spin ⊗ Fock product basis with `n_max + 1` levels per mode.
///
/// Index layout: `spin · (n_max+1)^M + Σ_k n_k (n_max+1)^k` with spin 0 = ↑.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasisSpec {
    modes: usize,
    n_max: usize,
    cap: usize,
}

impl FockBasisSpec {
    pub fn new(modes: usize, n_max: usize) -> Result<Self> {
        Self::with_cap(modes, n_max, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(modes: usize, n_max: usize, cap: usize) -> Result<Self> {
        if modes == 0 || modes > MAX_ORACLE_MODES {
            return Err(SbmError::OracleRefused(format!(
                "oracle supports 1..={MAX_ORACLE_MODES} modes, got {modes}"
            )));
        }
        if n_max < 1 {
            return Err(SbmError::OracleRefused("n_max must be >= 1".into()));
        }
        let dim = (n_max + 1)
            .checked_pow(modes as u32)
            .and_then(|v| v.checked_mul(2));
        match dim {
            Some(dim) if dim <= cap => Ok(FockBasisSpec { modes, n_max, cap }),
            _ => {
                let dim = 2.0 * ((n_max + 1) as f64).powi(modes as i32);
                // sparse matrix (diag + 2M off-diagonals per row) plus ~40 work vectors
                let bytes = dim * 8.0 * (1.0 + 2.0 * modes as f64 * 2.0) + dim * 8.0 * 40.0;
                Err(SbmError::OracleRefused(format!(
                    "dimension {dim:.0} exceeds cap {cap}; would need about {:.1} MiB",
                    bytes / (1024.0 * 1024.0)
                )))
            }
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn fock_dim(&self) -> usize {
        (self.n_max + 1).pow(self.modes as u32)
    }

    pub fn dimension(&self) -> usize {
        2 * self.fock_dim()
    }

    fn stride(&self, k: usize) -> usize {
        (self.n_max + 1).pow(k as u32)
    }

    /// Occupation of mode `k` in Fock index `idx`.
    fn occupation(&self, idx: usize, k: usize) -> usize {
        (idx / self.stride(k)) % (self.n_max + 1)
    }

    fn total_occupation(&self, idx: usize) -> usize {
        (0..self.modes).map(|k| self.occupation(idx, k)).sum()
    }
}

/// Real symmetric matrix stored as diagonal plus upper-triangle entries.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    dim: usize,
    diagonal: Vec<f64>,
    upper: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, d), xi) in y.iter_mut().zip(&self.diagonal).zip(x) {
            *yi = d * xi;
        }
        for &(i, j, v) in &self.upper {
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.diagonal.clone()));
        for &(i, j, v) in &self.upper {
            m[(i, j)] += v;
            m[(j, i)] += v;
        }
        m
    }
}

/// Spin-boson Hamiltonian in the truncated product basis.
pub fn build_hamiltonian(
    params: &ModelParams,
    bath: &BathDiscretization,
    basis: &FockBasisSpec,
) -> Result<SparseSymmetric> {
    if bath.mode_count() != basis.modes {
        return Err(SbmError::OracleRefused(format!(
            "bath has {} modes, basis has {}",
            bath.mode_count(),
            basis.modes
        )));
    }
    let fock = basis.fock_dim();
    let dim = basis.dimension();
    let mut diagonal = vec![0.0; dim];
    let mut upper = Vec::new();
    for spin in 0..2 {
        let sz = if spin == 0 { 1.0 } else { -1.0 };
        for idx in 0..fock {
            let row = spin * fock + idx;
            let mut diag = 0.5 * params.epsilon * sz;
            for k in 0..basis.modes {
                let occ = basis.occupation(idx, k);
                diag += bath.omegas[k] * occ as f64;
                if occ < basis.n_max {
                    // ⟨n+1| b† |n⟩ = √(n+1)
                    let v = 0.5 * sz * bath.lambdas[k] * ((occ + 1) as f64).sqrt();
                    if v != 0.0 {
                        upper.push((row, row + basis.stride(k), v));
                    }
                }
            }
            diagonal[row] = diag;
        }
    }
    if params.delta != 0.0 {
        for idx in 0..fock {
            upper.push((idx, fock + idx, -0.5 * params.delta));
        }
    }
    Ok(SparseSymmetric {
        dim,
        diagonal,
        upper,
    })
}

/// Lowest eigenpair found by Lanczos iteration.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Lanczos with full reorthogonalization and explicit restarts from the
/// current Ritz vector.
pub fn lowest_eigenpair(matrix: &SparseSymmetric, tol: f64) -> Eigenpair {
    let dim = matrix.dim();
    let krylov_max = dim.min(160);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut start);

    let mut best = Eigenpair {
        value: f64::INFINITY,
        vector: start.clone(),
        residual: f64::INFINITY,
    };
    for _restart in 0..200 {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        loop {
            let j = basis.len() - 1;
            matrix.matvec(&basis[j], &mut w);
            let a = dot(&w, &basis[j]);
            alphas.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = normalize(&mut w);
            let exhausted = b < 1e-13 || basis.len() == krylov_max;
            if exhausted {
                break;
            }
            betas.push(b);
            basis.push(w.clone());
        }

        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        let coeffs = eig.eigenvectors.column(imin);
        let mut ritz = vec![0.0; dim];
        for (c, q) in coeffs.iter().zip(&basis) {
            ritz.iter_mut().zip(q).for_each(|(r, qi)| *r += c * qi);
        }
        normalize(&mut ritz);
        matrix.matvec(&ritz, &mut w);
        let residual = w
            .iter()
            .zip(&ritz)
            .map(|(hv, v)| (hv - theta * v).powi(2))
            .sum::<f64>()
            .sqrt();
        best = Eigenpair {
            value: theta,
            vector: ritz.clone(),
            residual,
        };
        if residual <= tol * theta.abs().max(1.0) || k == dim {
            break;
        }
        start = ritz;
    }
    best
}

#[derive(Debug, Clone)]
pub struct ExactGround {
    pub energy: f64,
    pub vector: Vec<f64>,
    pub basis: FockBasisSpec,
    /// Energy obtained with `n_max + 5`, when that basis fits under the cap.
    pub refined_energy: Option<f64>,
    /// Relative change `|E(n_max+5) − E(n_max)| < 1e-9`.
    pub truncation_converged: bool,
    pub residual: f64,
}

/// Ground state in the given basis, plus a truncation check against a basis
/// with five more levels per mode.
pub fn exact_ground(
    params: &ModelParams,
    bath: &BathDiscretization,
    basis: &FockBasisSpec,
) -> Result<ExactGround> {
    let h = build_hamiltonian(params, bath, basis)?;
    let pair = lowest_eigenpair(&h, 1e-11);
    let refined = FockBasisSpec::with_cap(basis.modes, basis.n_max + 5, basis.cap)
        .ok()
        .map(|bigger| -> Result<f64> {
            let hb = build_hamiltonian(params, bath, &bigger)?;
            Ok(lowest_eigenpair(&hb, 1e-11).value)
        })
        .transpose()?;
    let truncation_converged = refined
        .map(|r| (r - pair.value).abs() < 1e-9 * pair.value.abs().max(1e-300))
        .unwrap_or(false);
    Ok(ExactGround {
        energy: pair.value,
        vector: pair.vector,
        basis: *basis,
        refined_energy: refined,
        truncation_converged,
        residual: pair.residual,
    })
}

/// Number-state amplitudes `e^{-h²/2} hⁿ / √(n!)` for `n = 0..=n_max`.
fn coherent_amplitudes(h: f64, n_max: usize) -> Vec<f64> {
    let mut amps = Vec::with_capacity(n_max + 1);
    let mut c = (-0.5 * h * h).exp();
    amps.push(c);
    for n in 1..=n_max {
        c *= h / (n as f64).sqrt();
        amps.push(c);
    }
    amps
}

/// Expands the variational state in the truncated product basis.
pub fn evaluate_state(state: &VariationalState, basis: &FockBasisSpec) -> Result<Vec<f64>> {
    if state.m() != basis.modes {
        return Err(SbmError::OracleRefused(format!(
            "state has {} modes, basis has {}",
            state.m(),
            basis.modes
        )));
    }
    let fock = basis.fock_dim();
    let mut out = vec![0.0; basis.dimension()];
    for (spin, weights) in [state.a(), state.d()].into_iter().enumerate() {
        for (row, &w) in weights.iter().enumerate() {
            let disp = if spin == 0 { state.f_row(row) } else { state.g_row(row) };
            let amps: Vec<Vec<f64>> = disp
                .iter()
                .map(|&h| coherent_amplitudes(h, basis.n_max))
                .collect();
            let kept: f64 = amps
                .iter()
                .map(|a| a.iter().map(|v| v * v).sum::<f64>())
                .product();
            if 1.0 - kept > TRUNCATION_TOLERANCE {
                return Err(SbmError::OracleRefused(format!(
                    "coherent state loses {:.3e} of its norm at n_max={}",
                    1.0 - kept,
                    basis.n_max
                )));
            }
            for idx in 0..fock {
                let mut c = w;
                for (k, a) in amps.iter().enumerate() {
                    c *= a[basis.occupation(idx, k)];
                }
                out[spin * fock + idx] += c;
            }
        }
    }
    Ok(out)
}

/// Ladder-operator action on basis vectors; components pushed above `n_max`
/// are dropped.
fn apply_ladder(v: &[f64], basis: &FockBasisSpec, k: usize, create: bool) -> Vec<f64> {
    let fock = basis.fock_dim();
    let stride = basis.stride(k);
    let mut out = vec![0.0; v.len()];
    for spin in 0..2 {
        for idx in 0..fock {
            let occ = basis.occupation(idx, k);
            let src = spin * fock + idx;
            if create {
                if occ < basis.n_max {
                    out[src + stride] += ((occ + 1) as f64).sqrt() * v[src];
                }
            } else if occ > 0 {
                out[src - stride] += (occ as f64).sqrt() * v[src];
            }
        }
    }
    out
}

/// `x_k v = (b_k + b_k†) v / √2`.
pub fn apply_position(v: &[f64], basis: &FockBasisSpec, k: usize) -> Vec<f64> {
    let up = apply_ladder(v, basis, k, true);
    let down = apply_ladder(v, basis, k, false);
    up.iter()
        .zip(&down)
        .map(|(a, b)| (a + b) * std::f64::consts::FRAC_1_SQRT_2)
        .collect()
}

/// `(b_k† − b_k) v / √2`, so that `p_k = i ×` this operator.
pub fn apply_momentum_real(v: &[f64], basis: &FockBasisSpec, k: usize) -> Vec<f64> {
    let up = apply_ladder(v, basis, k, true);
    let down = apply_ladder(v, basis, k, false);
    up.iter()
        .zip(&down)
        .map(|(a, b)| (a - b) * std::f64::consts::FRAC_1_SQRT_2)
        .collect()
}

/// Expectation values of an explicit basis vector, computed by operator
/// application rather than coherent-state identities.
#[derive(Debug, Clone)]
pub struct FockState<'a> {
    vector: &'a [f64],
    basis: FockBasisSpec,
    norm: f64,
}

impl<'a> FockState<'a> {
    pub fn new(vector: &'a [f64], basis: &FockBasisSpec) -> Result<Self> {
        if vector.len() != basis.dimension() {
            return Err(SbmError::OracleRefused("vector length mismatches basis".into()));
        }
        let norm = dot(vector, vector);
        if !(norm > 0.0) {
            return Err(SbmError::DegenerateState("zero oracle vector".into()));
        }
        Ok(FockState {
            vector,
            basis: *basis,
            norm,
        })
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn energy(&self, hamiltonian: &SparseSymmetric) -> f64 {
        dot(self.vector, &hamiltonian.apply(self.vector)) / self.norm
    }

    pub fn sigma_z(&self) -> f64 {
        let fock = self.basis.fock_dim();
        let (up, down) = self.vector.split_at(fock);
        (dot(up, up) - dot(down, down)) / self.norm
    }

    pub fn sigma_x(&self) -> f64 {
        let fock = self.basis.fock_dim();
        let (up, down) = self.vector.split_at(fock);
        2.0 * dot(up, down) / self.norm
    }

    /// `⟨σ_x exp(iπ Σ b†b)⟩`.
    pub fn parity(&self) -> f64 {
        let fock = self.basis.fock_dim();
        let mut acc = 0.0;
        for idx in 0..fock {
            let sign = if self.basis.total_occupation(idx) % 2 == 0 { 1.0 } else { -1.0 };
            acc += 2.0 * sign * self.vector[idx] * self.vector[fock + idx];
        }
        acc / self.norm
    }

    pub fn position(&self, k: usize) -> f64 {
        dot(self.vector, &apply_position(self.vector, &self.basis, k)) / self.norm
    }

    /// `⟨x_k x_l⟩`, including `k = l`.
    pub fn position_product(&self, k: usize, l: usize) -> f64 {
        let xk = apply_position(self.vector, &self.basis, k);
        let xl = apply_position(self.vector, &self.basis, l);
        dot(&xk, &xl) / self.norm
    }

    /// `⟨p_k p_l⟩`; with `q = (b† − b)/√2` real antisymmetric,
    /// `⟨p_k p_l⟩ = −⟨q_k q_l⟩ = ⟨q_k v, q_l v⟩`.
    pub fn momentum_product(&self, k: usize, l: usize) -> f64 {
        let qk = apply_momentum_real(self.vector, &self.basis, k);
        let ql = apply_momentum_real(self.vector, &self.basis, l);
        dot(&qk, &ql) / self.norm
    }

    /// `(ΔX_b, ΔP_b)` of mode `k`.
    pub fn variances(&self, k: usize) -> (f64, f64) {
        let x = self.position(k);
        (
            self.position_product(k, k) - x * x,
            self.momentum_product(k, k),
        )
    }

    /// `(Cor_X, Cor_P)` for modes `k ≠ l`.
    pub fn correlations(&self, k: usize, l: usize) -> (f64, f64) {
        (
            self.position_product(k, l) - self.position(k) * self.position(l),
            self.momentum_product(k, l),
        )
    }
}

/// Largest deviation found by [`validate_formulas`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub n_max: usize,
    pub seed: u64,
    pub max_deviation: f64,
    /// Observable and trial index of the largest deviation.
    pub worst: String,
}

/// Compares the closed-form energy, variances, correlations and parity of
/// random states (`N ≤ 3`, `M ≤ 2`, `0.05 ≤ α < 1.5` on a `Λ = 2` mesh)
/// with their values in the truncated Fock basis.
pub fn validate_formulas(trials: usize, n_max: usize, seed: u64) -> Result<ValidationReport> {
    use crate::ansatz::{energy, random_state_with_rng};
    use crate::bath::{discretize_log, SpectralDensity};
    use crate::observables::{correlations, mode_variances, parity_expectation};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0f64;
    let mut worst = String::new();
    for trial in 0..trials {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=2);
        let bath = discretize_log(&SpectralDensity::ohmic(rng.random_range(0.05..1.5)), 2.0, m)?;
        let spread = rng.random_range(0.2..2.0);
        let state = random_state_with_rng(n, m, &bath, spread, &mut rng)?;
        let params = ModelParams::new(rng.random_range(-0.1..0.1), rng.random_range(0.0..0.5))?;

        let basis = FockBasisSpec::new(m, n_max)?;
        let h = build_hamiltonian(&params, &bath, &basis)?;
        let vector = evaluate_state(&state, &basis)?;
        let fock = FockState::new(&vector, &basis)?;
        let mut diffs = vec![
            ("energy", energy(&state, &params, &bath)? - fock.energy(&h)),
            ("parity", parity_expectation(&state)? - fock.parity()),
        ];
        for k in 0..m {
            let (dx, dp) = mode_variances(&state, k)?;
            let (ox, op) = fock.variances(k);
            diffs.push(("delta_x", dx - ox));
            diffs.push(("delta_p", dp - op));
            for l in (0..m).filter(|&l| l != k) {
                let (cx, cp) = correlations(&state, k, l)?;
                let (ox, op) = fock.correlations(k, l);
                diffs.push(("cor_x", cx - ox));
                diffs.push(("cor_p", cp - op));
            }
        }
        for (what, d) in diffs {
            if !(d.abs() <= max_deviation) {
                max_deviation = d.abs();
                worst = format!("{what} in trial {trial}");
            }
        }
    }
    Ok(ValidationReport {
        trials,
        n_max,
        seed,
        max_deviation,
        worst,
    })
}
