//! Correlation-fluctuation ratio `R_l(ω_k) = Cor_X(k, l) / (ΔX_b(k) − 1/2)`.

use serde::{Deserialize, Serialize};

use crate::ansatz::VariationalState;
use crate::bath::BathDiscretization;
use crate::error::{Result, SbmError};
use crate::observables::{correlation_row, mode_variances};

/// Denominators below this leave the ratio undefined.
pub const RATIO_DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub l: usize,
    pub omegas: Vec<f64>,
    /// `R_l(ω_k)`; the `k = l` entry is 1 by the self-correlation convention
    /// `Cor_X(l, l) = ΔX_b(l) − 1/2`.
    pub ratio: Vec<Option<f64>>,
    /// `R_l(ω_k) − 1`, reported when `l` is the top (cutoff) mode.
    pub offset: Option<Vec<Option<f64>>>,
}

impl RatioTable {
    /// `R_l(ω_k) − R_l(ω_top)` against the last mode.
    pub fn shift_from_top(&self) -> Vec<Option<f64>> {
        let top = self.ratio.last().copied().flatten();
        self.ratio
            .iter()
            .map(|r| match (r, top) {
                (Some(r), Some(t)) => Some(r - t),
                _ => None,
            })
            .collect()
    }
}

/// Builds the ratio table from a correlation row (at fixed `l`) and the
/// per-mode position variances.
pub fn ratio_from_parts(
    omegas: &[f64],
    cor_x: &[Option<f64>],
    delta_x: &[f64],
    l: usize,
) -> Result<RatioTable> {
    let m = omegas.len();
    if cor_x.len() != m || delta_x.len() != m {
        return Err(SbmError::Parameter("per-mode arrays have different lengths".into()));
    }
    if l >= m {
        return Err(SbmError::Domain(format!("l={l} out of range for M={m}")));
    }
    let ratio = (0..m)
        .map(|k| {
            let denom = delta_x[k] - 0.5;
            if denom.abs() < RATIO_DENOMINATOR_FLOOR {
                return None;
            }
            if k == l {
                Some(1.0)
            } else {
                cor_x[k].map(|c| c / denom)
            }
        })
        .collect::<Vec<_>>();
    let offset = (l == m - 1).then(|| ratio.iter().map(|r| r.map(|v| v - 1.0)).collect());
    Ok(RatioTable {
        l,
        omegas: omegas.to_vec(),
        ratio,
        offset,
    })
}

pub fn ratio_functions(
    state: &VariationalState,
    bath: &BathDiscretization,
    l: usize,
) -> Result<RatioTable> {
    let (cor_x, _) = correlation_row(state, l)?;
    let delta_x = (0..state.m())
        .map(|k| mode_variances(state, k).map(|v| v.0))
        .collect::<Result<Vec<_>>>()?;
    ratio_from_parts(&bath.omegas, &cor_x, &delta_x, l)
}

/// Frequency of the maximum of `−Cor_P(k, l)`, the onset `ω*` of the
/// critical domain.
pub fn correlation_peak(omegas: &[f64], cor_p: &[Option<f64>]) -> Option<(usize, f64)> {
    omegas
        .iter()
        .zip(cor_p)
        .enumerate()
        .filter_map(|(k, (w, c))| c.map(|c| (k, *w, -c)))
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(k, w, _)| (k, w))
}

/// `max/min` of `|values|` restricted to the frequencies in `[lo, hi]`;
/// `None` when the window is empty or contains a zero.
pub fn variation_factor(omegas: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let sel: Vec<f64> = omegas
        .iter()
        .zip(values)
        .filter(|(w, _)| **w >= lo && **w <= hi)
        .map(|(_, v)| v.abs())
        .collect();
    if sel.is_empty() {
        return None;
    }
    let (mn, mx) = sel
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    (mn > 0.0).then(|| mx / mn)
}
