//! Multi-coherent-state trial wavefunction.
//!
//! ```text
//! |Ψ⟩ = |↑⟩ Σ_n A_n |f_n⟩ + |↓⟩ Σ_n D_n |g_n⟩
//! ```
//!
//! where `|f_n⟩` is the multimode coherent state with real displacements
//! `f_{n,k}`. All expectation values reduce to Gaussian overlaps of the
//! displacement rows, so energy and gradient cost `O(N² M)`.
//!
//! Parameters are flattened as `[A (N), D (N), f (N×M), g (N×M)]`, rows
//! of `f` and `g` stored contiguously.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};

/// Exponents below this are treated as exact zeros in the overlap kernels.
pub const KERNEL_EXPONENT_FLOOR: f64 = -700.0;

/// Norms below this are treated as a vanishing wavefunction.
const NORM_FLOOR: f64 = 1e-280;

/// Bias and tunneling of the two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) || !epsilon.is_finite() {
            return Err(SbmError::Parameter(format!(
                "need finite epsilon and delta >= 0, got epsilon={epsilon}, delta={delta}"
            )));
        }
        Ok(ModelParams { epsilon, delta })
    }
}

#[inline]
pub(crate) fn gaussian_kernel(sq_dist: f64) -> f64 {
    let e = -0.5 * sq_dist;
    if e < KERNEL_EXPONENT_FLOOR {
        0.0
    } else {
        e.exp()
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    n: usize,
    m: usize,
    a: Vec<f64>,
    d: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl VariationalState {
    /// Builds a state from weights and row-major `N×M` displacement arrays.
    pub fn new(a: Vec<f64>, d: Vec<f64>, f: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 || d.len() != n {
            return Err(SbmError::Parameter(format!(
                "weights must be nonempty and equal length, got {} and {}",
                a.len(),
                d.len()
            )));
        }
        if f.is_empty() || f.len() % n != 0 || g.len() != f.len() {
            return Err(SbmError::Parameter(format!(
                "displacements must be N×M arrays with N={n}, got {} and {} entries",
                f.len(),
                g.len()
            )));
        }
        let m = f.len() / n;
        let state = VariationalState { n, m, a, d, f, g };
        if !state.all_finite() {
            return Err(SbmError::Parameter("state has non-finite entries".into()));
        }
        Ok(state)
    }

    /// Builds a state from displacement rows.
    pub fn from_rows(
        a: Vec<f64>,
        d: Vec<f64>,
        f: &[Vec<f64>],
        g: &[Vec<f64>],
    ) -> Result<Self> {
        let m = f.first().map_or(0, Vec::len);
        if f.iter().chain(g).any(|row| row.len() != m) {
            return Err(SbmError::Parameter("ragged displacement rows".into()));
        }
        Self::new(a, d, f.concat(), g.concat())
    }

    /// All-zero displacements (vacuum bath) with the given weights.
    pub fn vacuum(a: Vec<f64>, d: Vec<f64>, m: usize) -> Result<Self> {
        let n = a.len();
        Self::new(a, d, vec![0.0; n * m], vec![0.0; n * m])
    }

    pub fn from_params(n: usize, m: usize, x: &[f64]) -> Result<Self> {
        if x.len() != parameter_count(n, m) {
            return Err(SbmError::Parameter(format!(
                "expected {} parameters for N={n}, M={m}, got {}",
                parameter_count(n, m),
                x.len()
            )));
        }
        let nm = n * m;
        Self::new(
            x[..n].to_vec(),
            x[n..2 * n].to_vec(),
            x[2 * n..2 * n + nm].to_vec(),
            x[2 * n + nm..].to_vec(),
        )
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(parameter_count(self.n, self.m));
        x.extend_from_slice(&self.a);
        x.extend_from_slice(&self.d);
        x.extend_from_slice(&self.f);
        x.extend_from_slice(&self.g);
        x
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn f_row(&self, i: usize) -> &[f64] {
        &self.f[i * self.m..(i + 1) * self.m]
    }

    pub fn g_row(&self, i: usize) -> &[f64] {
        &self.g[i * self.m..(i + 1) * self.m]
    }

    fn all_finite(&self) -> bool {
        self.a
            .iter()
            .chain(&self.d)
            .chain(&self.f)
            .chain(&self.g)
            .all(|v| v.is_finite())
    }

    /// Same state with the weights rescaled so that `⟨Ψ|Ψ⟩ = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let scale = 1.0 / norm(self)?.sqrt();
        let mut out = self.clone();
        out.a.iter_mut().chain(out.d.iter_mut()).for_each(|w| *w *= scale);
        Ok(out)
    }

    pub fn scale_weights(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.a.iter_mut().chain(out.d.iter_mut()).for_each(|w| *w *= factor);
        out
    }
}

pub fn parameter_count(n: usize, m: usize) -> usize {
    2 * n + 2 * n * m
}

/// Overlap matrices between the coherent states of the ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapKernels {
    pub n: usize,
    /// `F_mn = ⟨f_m|f_n⟩`, row-major.
    pub f: Vec<f64>,
    /// `G_mn = ⟨g_m|g_n⟩`.
    pub g: Vec<f64>,
    /// `K_mn = ⟨f_m|g_n⟩`.
    pub k: Vec<f64>,
}

impl OverlapKernels {
    pub fn f_at(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.n + j]
    }

    pub fn g_at(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn k_at(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

pub fn overlap_kernels(state: &VariationalState) -> OverlapKernels {
    let n = state.n;
    let mut f = vec![1.0; n * n];
    let mut g = vec![1.0; n * n];
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if j > i {
                let fv = gaussian_kernel(sq_dist(state.f_row(i), state.f_row(j)));
                let gv = gaussian_kernel(sq_dist(state.g_row(i), state.g_row(j)));
                f[i * n + j] = fv;
                f[j * n + i] = fv;
                g[i * n + j] = gv;
                g[j * n + i] = gv;
            }
            k[i * n + j] = gaussian_kernel(sq_dist(state.f_row(i), state.g_row(j)));
        }
    }
    OverlapKernels { n, f, g, k }
}

/// Up- and down-branch weights `Σ A_m A_n F_mn` and `Σ D_m D_n G_mn`.
pub fn branch_norms(state: &VariationalState, kernels: &OverlapKernels) -> (f64, f64) {
    let n = state.n;
    let mut up = 0.0;
    let mut down = 0.0;
    for i in 0..n {
        for j in 0..n {
            up += state.a[i] * state.a[j] * kernels.f_at(i, j);
            down += state.d[i] * state.d[j] * kernels.g_at(i, j);
        }
    }
    (up, down)
}

/// `⟨Ψ|Ψ⟩`.
pub fn norm(state: &VariationalState) -> Result<f64> {
    let (up, down) = branch_norms(state, &overlap_kernels(state));
    let total = up + down;
    if !(total > NORM_FLOOR) || !total.is_finite() {
        return Err(SbmError::DegenerateState(format!("norm {total} is not positive")));
    }
    Ok(total)
}

/// Variational energy `⟨Ψ|H|Ψ⟩ / ⟨Ψ|Ψ⟩`.
pub fn energy(
    state: &VariationalState,
    params: &ModelParams,
    bath: &BathDiscretization,
) -> Result<f64> {
    EnergyFunctional::new(state.n, params, bath)?.energy(&state.to_params())
}

/// Gradient of the energy in the flattened parameter layout.
pub fn energy_gradient(
    state: &VariationalState,
    params: &ModelParams,
    bath: &BathDiscretization,
) -> Result<Vec<f64>> {
    let functional = EnergyFunctional::new(state.n, params, bath)?;
    let mut grad = vec![0.0; functional.dim()];
    functional.energy_and_gradient(&state.to_params(), &mut grad)?;
    Ok(grad)
}

/// Energy and gradient of the ansatz as a function of the flat parameter
/// vector, for a fixed Hamiltonian and coherent-state count.
#[derive(Debug, Clone)]
pub struct EnergyFunctional<'a> {
    n: usize,
    m: usize,
    params: ModelParams,
    bath: &'a BathDiscretization,
}

/// Pairwise quantities shared by the energy and its gradient.
struct PairTerms {
    norm: f64,
    hamiltonian: f64,
    f_kernel: Vec<f64>,
    g_kernel: Vec<f64>,
    k_kernel: Vec<f64>,
    h_up: Vec<f64>,
    h_down: Vec<f64>,
}

impl<'a> EnergyFunctional<'a> {
    pub fn new(n: usize, params: &ModelParams, bath: &'a BathDiscretization) -> Result<Self> {
        if n == 0 {
            return Err(SbmError::Parameter("need at least one coherent state".into()));
        }
        Ok(EnergyFunctional {
            n,
            m: bath.mode_count(),
            params: *params,
            bath,
        })
    }

    pub fn dim(&self) -> usize {
        parameter_count(self.n, self.m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bath(&self) -> &BathDiscretization {
        self.bath
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(SbmError::Parameter(format!(
                "state has {} parameters, functional expects {} (N={}, M={})",
                x.len(),
                self.dim(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }

    fn pair_terms(&self, x: &[f64]) -> Result<PairTerms> {
        let (n, m) = (self.n, self.m);
        let (a, rest) = x.split_at(n);
        let (d, rest) = rest.split_at(n);
        let (f, g) = rest.split_at(n * m);
        let omegas = &self.bath.omegas;
        let lambdas = &self.bath.lambdas;
        let half_eps = 0.5 * self.params.epsilon;

        let mut f_kernel = vec![0.0; n * n];
        let mut g_kernel = vec![0.0; n * n];
        let mut k_kernel = vec![0.0; n * n];
        let mut h_up = vec![0.0; n * n];
        let mut h_down = vec![0.0; n * n];
        let mut norm = 0.0;
        let mut ham = 0.0;

        for i in 0..n {
            let fi = &f[i * m..(i + 1) * m];
            let gi = &g[i * m..(i + 1) * m];
            for j in i..n {
                let fj = &f[j * m..(j + 1) * m];
                let gj = &g[j * m..(j + 1) * m];
                let (mut sf, mut sg, mut hf, mut hg) = (0.0, 0.0, 0.0, 0.0);
                for k in 0..m {
                    let (p, q) = (fi[k], fj[k]);
                    let (u, v) = (gi[k], gj[k]);
                    sf += (p - q) * (p - q);
                    sg += (u - v) * (u - v);
                    hf += omegas[k] * p * q + 0.5 * lambdas[k] * (p + q);
                    hg += omegas[k] * u * v - 0.5 * lambdas[k] * (u + v);
                }
                let (kf, kg) = (gaussian_kernel(sf), gaussian_kernel(sg));
                let (hf, hg) = (half_eps + hf, -half_eps + hg);
                let (ij, ji) = (i * n + j, j * n + i);
                f_kernel[ij] = kf;
                f_kernel[ji] = kf;
                g_kernel[ij] = kg;
                g_kernel[ji] = kg;
                h_up[ij] = hf;
                h_up[ji] = hf;
                h_down[ij] = hg;
                h_down[ji] = hg;
                let mult = if i == j { 1.0 } else { 2.0 };
                let wf = mult * a[i] * a[j] * kf;
                let wg = mult * d[i] * d[j] * kg;
                norm += wf + wg;
                ham += wf * hf + wg * hg;
            }
        }

        let mut tunneling = 0.0;
        for i in 0..n {
            let fi = &f[i * m..(i + 1) * m];
            for j in 0..n {
                let gj = &g[j * m..(j + 1) * m];
                let kv = gaussian_kernel(sq_dist(fi, gj));
                k_kernel[i * n + j] = kv;
                tunneling += a[i] * d[j] * kv;
            }
        }
        ham -= self.params.delta * tunneling;

        if !(norm > NORM_FLOOR) || !norm.is_finite() {
            return Err(SbmError::DegenerateState(format!(
                "norm {norm} underflows or is not finite"
            )));
        }
        if !ham.is_finite() {
            return Err(SbmError::DegenerateState("non-finite energy".into()));
        }
        Ok(PairTerms {
            norm,
            hamiltonian: ham,
            f_kernel,
            g_kernel,
            k_kernel,
            h_up,
            h_down,
        })
    }

    /// `⟨Ψ|Ψ⟩` of the parameter vector.
    pub fn norm_of(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.pair_terms(x)?.norm)
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let t = self.pair_terms(x)?;
        Ok(t.hamiltonian / t.norm)
    }

    /// Returns the energy and writes `∂E/∂x` into `grad`.
    ///
    /// Uses `∂E/∂x = (∂H/∂x − E ∂N/∂x) / N`; the numerator is the
    /// stationarity residual of the self-consistency equations.
    pub fn energy_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dim(x)?;
        if grad.len() != x.len() {
            return Err(SbmError::Parameter("gradient buffer has wrong length".into()));
        }
        let t = self.pair_terms(x)?;
        let e = t.hamiltonian / t.norm;
        let inv_norm = 1.0 / t.norm;
        let (n, m) = (self.n, self.m);
        let delta = self.params.delta;
        let omegas = &self.bath.omegas;
        let lambdas = &self.bath.lambdas;

        let (a, rest) = x.split_at(n);
        let (d, rest) = rest.split_at(n);
        let (f, g) = rest.split_at(n * m);
        grad.fill(0.0);
        let (ga, rest) = grad.split_at_mut(n);
        let (gd, rest) = rest.split_at_mut(n);
        let (gf, gg) = rest.split_at_mut(n * m);

        for i in 0..n {
            let fi = &f[i * m..(i + 1) * m];
            let gi = &g[i * m..(i + 1) * m];
            let mut da = 0.0;
            let mut dd = 0.0;
            for j in 0..n {
                let ij = i * n + j;
                let fj = &f[j * m..(j + 1) * m];
                let gj = &g[j * m..(j + 1) * m];

                let cf = a[j] * t.f_kernel[ij];
                let shifted_f = t.h_up[ij] - e;
                da += 2.0 * cf * shifted_f;
                let wf = 2.0 * a[i] * cf * inv_norm;
                if wf != 0.0 {
                    let row = &mut gf[i * m..(i + 1) * m];
                    for k in 0..m {
                        row[k] += wf
                            * (-(fi[k] - fj[k]) * shifted_f + omegas[k] * fj[k] + 0.5 * lambdas[k]);
                    }
                }

                let cg = d[j] * t.g_kernel[ij];
                let shifted_g = t.h_down[ij] - e;
                dd += 2.0 * cg * shifted_g;
                let wg = 2.0 * d[i] * cg * inv_norm;
                if wg != 0.0 {
                    let row = &mut gg[i * m..(i + 1) * m];
                    for k in 0..m {
                        row[k] += wg
                            * (-(gi[k] - gj[k]) * shifted_g + omegas[k] * gj[k] - 0.5 * lambdas[k]);
                    }
                }
            }
            ga[i] = da * inv_norm;
            gd[i] = dd * inv_norm;
        }

        if delta != 0.0 {
            for i in 0..n {
                let fi = &f[i * m..(i + 1) * m];
                for j in 0..n {
                    let kv = t.k_kernel[i * n + j];
                    if kv == 0.0 {
                        continue;
                    }
                    ga[i] -= delta * d[j] * kv * inv_norm;
                    gd[j] -= delta * a[i] * kv * inv_norm;
                    let gj = &g[j * m..(j + 1) * m];
                    let wf = delta * a[i] * d[j] * kv * inv_norm;
                    if wf != 0.0 {
                        for k in 0..m {
                            let diff = fi[k] - gj[k];
                            gf[i * m + k] += wf * diff;
                            gg[j * m + k] -= wf * diff;
                        }
                    }
                }
            }
        }
        Ok(e)
    }
}

/// Random initial state: weights uniform in `[-1, 1]`, displacement of mode
/// `k` uniform in `±spread·λ_k/(2ω_k)`.
pub fn random_state(
    n: usize,
    m: usize,
    bath: &BathDiscretization,
    seed: u64,
    spread: f64,
) -> Result<VariationalState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_state_with_rng(n, m, bath, spread, &mut rng)
}

pub fn random_state_with_rng<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    bath: &BathDiscretization,
    spread: f64,
    rng: &mut R,
) -> Result<VariationalState> {
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(SbmError::Parameter(format!("spread must be >= 0, got {spread}")));
    }
    if n == 0 || m == 0 || m != bath.mode_count() {
        return Err(SbmError::Parameter(format!(
            "need N >= 1 and M equal to the bath mode count ({}), got N={n}, M={m}",
            bath.mode_count()
        )));
    }
    let scale = bath.classical_displacements();
    let mut weight = || rng.random_range(-1.0..=1.0);
    let a: Vec<f64> = (0..n).map(|_| weight()).collect();
    let d: Vec<f64> = (0..n).map(|_| weight()).collect();
    let displacements = |rng: &mut R| -> Vec<f64> {
        (0..n * m)
            .map(|idx| spread * scale[idx % m] * rng.random_range(-1.0..=1.0))
            .collect()
    };
    let f = displacements(rng);
    let g = displacements(rng);
    VariationalState::new(a, d, f, g)
}

/// Average of the state and its parity image: `A = D`, `g = −f`.
pub fn parity_projection(state: &VariationalState) -> VariationalState {
    let a: Vec<f64> = state.a.iter().zip(&state.d).map(|(a, d)| 0.5 * (a + d)).collect();
    let f: Vec<f64> = state.f.iter().zip(&state.g).map(|(f, g)| 0.5 * (f - g)).collect();
    VariationalState {
        n: state.n,
        m: state.m,
        d: a.clone(),
        a,
        g: f.iter().map(|v| -v).collect(),
        f,
    }
}

/// Image of the state under `σ_x exp(iπ Σ b†b)`.
pub fn apply_parity(state: &VariationalState) -> VariationalState {
    VariationalState {
        n: state.n,
        m: state.m,
        a: state.d.clone(),
        d: state.a.clone(),
        f: state.g.iter().map(|v| -v).collect(),
        g: state.f.iter().map(|v| -v).collect(),
    }
}

/// JSON checkpoint of a variational state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCheckpoint {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub mesh_fingerprint: String,
}

impl StateCheckpoint {
    pub fn new(state: &VariationalState, seed: Option<u64>, bath: &BathDiscretization) -> Self {
        StateCheckpoint {
            n: state.n,
            m: state.m,
            a: state.a.clone(),
            d: state.d.clone(),
            f: state.f.chunks(state.m).map(<[f64]>::to_vec).collect(),
            g: state.g.chunks(state.m).map(<[f64]>::to_vec).collect(),
            seed,
            mesh_fingerprint: bath.fingerprint(),
        }
    }

    /// Restores the state, refusing a checkpoint written for another mesh.
    pub fn restore(&self, bath: &BathDiscretization) -> Result<VariationalState> {
        if self.mesh_fingerprint != bath.fingerprint() {
            return Err(SbmError::Refused(
                "checkpoint was written for a different bath mesh".into(),
            ));
        }
        let state = VariationalState::from_rows(self.a.clone(), self.d.clone(), &self.f, &self.g)?;
        if state.n != self.n || state.m != self.m {
            return Err(SbmError::Parameter("checkpoint N/M disagree with arrays".into()));
        }
        Ok(state)
    }
}
