//! Discrete bath modes for a power-law spectral density.
//!
//! The interval `[a, b]` of each mode is mapped to a single oscillator whose
//! squared coupling is the spectral weight on the interval and whose
//! frequency is the first moment of `J` on it. Both integrals are monomials,
//! so they are evaluated in closed form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SbmError};

/// `J(ω) = 2 α ω_c^{1-s} ω^s Θ(ω_c - ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub alpha: f64,
    pub s: f64,
    pub omega_c: f64,
}

impl SpectralDensity {
    pub fn new(alpha: f64, s: f64, omega_c: f64) -> Result<Self> {
        let sd = SpectralDensity { alpha, s, omega_c };
        sd.validate()?;
        Ok(sd)
    }

    /// Ohmic density (`s = 1`) in units of the cutoff.
    pub fn ohmic(alpha: f64) -> Self {
        SpectralDensity {
            alpha,
            s: 1.0,
            omega_c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(SbmError::Parameter(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(SbmError::Parameter(format!("s must be > 0, got {}", self.s)));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(SbmError::Parameter(format!(
                "omega_c must be > 0, got {}",
                self.omega_c
            )));
        }
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        2.0 * self.alpha * self.omega_c.powf(1.0 - self.s)
    }

    /// `∫_a^b J(t) t^moment dt` for `0 <= a <= b <= ω_c`.
    fn moment(&self, a: f64, b: f64, moment: i32) -> f64 {
        let p = self.s + 1.0 + moment as f64;
        self.prefactor() * power_difference(a, b, p) / p
    }
}

/// `b^p - a^p` without cancellation when `a` and `b` are close.
fn power_difference(a: f64, b: f64, p: f64) -> f64 {
    if a <= 0.0 {
        return b.powf(p);
    }
    a.powf(p) * (p * (b / a).ln()).exp_m1()
}

pub fn spectral_density(omega: f64, sd: &SpectralDensity) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(SbmError::Domain(format!(
            "spectral density needs omega >= 0, got {omega}"
        )));
    }
    if omega > sd.omega_c {
        return Ok(0.0);
    }
    Ok(sd.prefactor() * omega.powf(sd.s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeshScheme {
    Logarithmic { lambda: f64 },
    Linear,
}

/// Effective bath modes in ascending frequency order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathDiscretization {
    pub omegas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub interval_lo: Vec<f64>,
    pub interval_hi: Vec<f64>,
    pub scheme: MeshScheme,
    /// Low-energy cutoff of the mesh. For the logarithmic scheme this is the
    /// lowest interval edge `Λ^{-M} ω_c`; for the linear scheme it is the
    /// width `ω_c / M` of the first interval, whose lower edge is zero.
    pub omega_min: f64,
    pub spectral: SpectralDensity,
}

impl BathDiscretization {
    pub fn mode_count(&self) -> usize {
        self.omegas.len()
    }

    /// Lower edge of the first interval; the mesh covers `[lowest_edge, ω_c]`.
    pub fn lowest_edge(&self) -> f64 {
        self.interval_lo[0]
    }

    /// Sum of `λ_k²`, i.e. the spectral weight captured by the mesh.
    pub fn total_weight(&self) -> f64 {
        self.lambdas.iter().map(|l| l * l).sum()
    }

    /// Classical polaron displacement `λ_k / (2 ω_k)` of each mode.
    pub fn classical_displacements(&self) -> Vec<f64> {
        self.omegas
            .iter()
            .zip(&self.lambdas)
            .map(|(w, l)| l / (2.0 * w))
            .collect()
    }

    /// Energy of the fully polarized displaced-oscillator state, `-Σ λ²/(4ω)`.
    pub fn reorganization_energy(&self) -> f64 {
        -self
            .omegas
            .iter()
            .zip(&self.lambdas)
            .map(|(w, l)| l * l / (4.0 * w))
            .sum::<f64>()
    }

    /// Stable hex digest of the mode data, used to tag checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (w, l) in self.omegas.iter().zip(&self.lambdas) {
            hasher.update(w.to_le_bytes());
            hasher.update(l.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn from_intervals(
        sd: &SpectralDensity,
        edges: &[(f64, f64)],
        scheme: MeshScheme,
        omega_min: f64,
    ) -> Self {
        let mut omegas = Vec::with_capacity(edges.len());
        let mut lambdas = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let weight = sd.moment(a, b, 0);
            // Normalized first moment of t^s, independent of α. Written as a
            // ratio of expm1 terms so that deep IR intervals, where a^{s+2}
            // underflows, keep full precision.
            let omega = if a > 0.0 {
                let (p0, p1) = (sd.s + 1.0, sd.s + 2.0);
                let ln_ratio = (b / a).ln();
                a * (p0 / p1) * (p1 * ln_ratio).exp_m1() / (p0 * ln_ratio).exp_m1()
            } else {
                b * (sd.s + 1.0) / (sd.s + 2.0)
            };
            omegas.push(omega);
            lambdas.push(weight.sqrt());
        }
        BathDiscretization {
            omegas,
            lambdas,
            interval_lo: edges.iter().map(|e| e.0).collect(),
            interval_hi: edges.iter().map(|e| e.1).collect(),
            scheme,
            omega_min,
            spectral: *sd,
        }
    }
}

/// Wilson mesh with edges `Λ^{k-M} ω_c`, `k = 0..=M`.
pub fn discretize_log(sd: &SpectralDensity, lambda: f64, m: usize) -> Result<BathDiscretization> {
    sd.validate()?;
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(SbmError::Parameter(format!(
            "logarithmic mesh needs Lambda > 1, got {lambda}"
        )));
    }
    if m < 1 {
        return Err(SbmError::Parameter("mode count M must be >= 1".into()));
    }
    let ln_lambda = lambda.ln();
    let edge = |k: usize| sd.omega_c * ((k as f64 - m as f64) * ln_lambda).exp();
    let edges: Vec<(f64, f64)> = (0..m)
        .map(|k| (edge(k), if k + 1 == m { sd.omega_c } else { edge(k + 1) }))
        .collect();
    let omega_min = edges[0].0;
    // The lowest coupling λ_0² ~ ω_min^{s+1} must stay a normal double.
    if (sd.s + 1.0) * omega_min.ln() < f64::MIN_POSITIVE.ln() + 10.0 {
        return Err(SbmError::Parameter(format!(
            "mesh Lambda={lambda}, M={m} reaches omega_min={omega_min:e}, below double range"
        )));
    }
    Ok(BathDiscretization::from_intervals(
        sd,
        &edges,
        MeshScheme::Logarithmic { lambda },
        omega_min,
    ))
}

/// Uniform mesh with edges `(k/M) ω_c`, `k = 0..=M`.
pub fn discretize_linear(sd: &SpectralDensity, m: usize) -> Result<BathDiscretization> {
    sd.validate()?;
    if m < 1 {
        return Err(SbmError::Parameter("mode count M must be >= 1".into()));
    }
    let edge = |k: usize| sd.omega_c * k as f64 / m as f64;
    let edges: Vec<(f64, f64)> = (0..m).map(|k| (edge(k), edge(k + 1))).collect();
    Ok(BathDiscretization::from_intervals(
        sd,
        &edges,
        MeshScheme::Linear,
        sd.omega_c / m as f64,
    ))
}

/// Mesh description that can be rebuilt for any coupling strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub scheme: MeshScheme,
    pub modes: usize,
    pub s: f64,
}

impl MeshSpec {
    pub fn log(lambda: f64, modes: usize) -> Self {
        MeshSpec {
            scheme: MeshScheme::Logarithmic { lambda },
            modes,
            s: 1.0,
        }
    }

    pub fn linear(modes: usize) -> Self {
        MeshSpec {
            scheme: MeshScheme::Linear,
            modes,
            s: 1.0,
        }
    }

    pub fn with_modes(self, modes: usize) -> Self {
        MeshSpec { modes, ..self }
    }

    pub fn build(&self, alpha: f64) -> Result<BathDiscretization> {
        let sd = SpectralDensity::new(alpha, self.s, 1.0)?;
        match self.scheme {
            MeshScheme::Logarithmic { lambda } => discretize_log(&sd, lambda, self.modes),
            MeshScheme::Linear => discretize_linear(&sd, self.modes),
        }
    }
}
