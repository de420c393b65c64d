//! Location of the jump of the symmetry parameter along a coupling grid.

use serde::{Deserialize, Serialize};

use super::sweep::SweepRecord;
use crate::error::{Result, SbmError};

/// Values of ζ above this belong to the symmetric band.
pub const ZETA_BAND_THRESHOLD: f64 = 0.5;
/// Values of ζ farther than this from both 0 and 1 mark a suspect point.
pub const ZETA_BAND_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZetaBand {
    Symmetric,
    Broken,
    Suspect,
    Unknown,
}

pub fn classify_zeta(zeta: f64) -> ZetaBand {
    if !zeta.is_finite() {
        ZetaBand::Unknown
    } else if (zeta - 1.0).abs() <= ZETA_BAND_WIDTH {
        ZetaBand::Symmetric
    } else if zeta.abs() <= ZETA_BAND_WIDTH {
        ZetaBand::Broken
    } else {
        ZetaBand::Suspect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub alpha_c: f64,
    /// Half the grid gap bracketing the jump.
    pub uncertainty: f64,
    /// Half the spread between the two seed subgroups, when available.
    pub statistical_error: Option<f64>,
    pub last_symmetric: f64,
    pub first_broken: f64,
}

/// Midpoint between the last ζ > 1/2 point and the next ζ < 1/2 point.
/// Points without a finite ζ are skipped; `Ok(None)` means only one band
/// is present.
pub fn detect_transition_from(alphas: &[f64], zetas: &[f64]) -> Result<Option<TransitionEstimate>> {
    if alphas.len() != zetas.len() {
        return Err(SbmError::Parameter("alpha and zeta lengths differ".into()));
    }
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SbmError::Parameter("records must be sorted by alpha".into()));
    }
    let Some(last_sym) = (0..alphas.len())
        .rev()
        .find(|&i| zetas[i].is_finite() && zetas[i] > ZETA_BAND_THRESHOLD)
    else {
        return Ok(None);
    };
    let Some(first_broken) = (last_sym + 1..alphas.len())
        .find(|&i| zetas[i].is_finite() && zetas[i] < ZETA_BAND_THRESHOLD)
    else {
        return Ok(None);
    };
    let (lo, hi) = (alphas[last_sym], alphas[first_broken]);
    Ok(Some(TransitionEstimate {
        alpha_c: 0.5 * (lo + hi),
        uncertainty: 0.5 * (hi - lo),
        statistical_error: None,
        last_symmetric: lo,
        first_broken: hi,
    }))
}

pub fn detect_transition(records: &[SweepRecord]) -> Result<Option<TransitionEstimate>> {
    let alphas: Vec<f64> = records.iter().map(|r| r.alpha).collect();
    let zetas: Vec<f64> = records.iter().map(|r| r.zeta).collect();
    detect_transition_from(&alphas, &zetas)
}

/// Transition from several independent sweeps (one per seed) on a common
/// grid. The sweeps are split into two subgroups whose ζ averages give two
/// estimates; their half-difference is the statistical error.
pub fn detect_transition_seeds(sweeps: &[Vec<SweepRecord>]) -> Result<Option<TransitionEstimate>> {
    if sweeps.is_empty() {
        return Ok(None);
    }
    let grid: Vec<f64> = sweeps[0].iter().map(|r| r.alpha).collect();
    if sweeps
        .iter()
        .any(|s| s.iter().map(|r| r.alpha).ne(grid.iter().copied()))
    {
        return Err(SbmError::Parameter("seed sweeps use different grids".into()));
    }
    let mean_zeta = |group: &[Vec<SweepRecord>]| -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let vals: Vec<f64> = group
                    .iter()
                    .map(|s| s[i].zeta)
                    .filter(|z| z.is_finite())
                    .collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    };
    let Some(mut all) = detect_transition_from(&grid, &mean_zeta(sweeps))? else {
        return Ok(None);
    };
    if sweeps.len() >= 2 {
        let (first, second) = sweeps.split_at(sweeps.len() / 2);
        let a = detect_transition_from(&grid, &mean_zeta(first))?;
        let b = detect_transition_from(&grid, &mean_zeta(second))?;
        if let (Some(a), Some(b)) = (a, b) {
            all.statistical_error = Some(0.5 * (a.alpha_c - b.alpha_c).abs());
        }
    }
    Ok(Some(all))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_jump() {
        let alphas: Vec<f64> = (90..=110).map(|i| i as f64 / 100.0).collect();
        let zetas: Vec<f64> = alphas.iter().map(|&a| if a <= 1.0 { 1.0 } else { 0.0 }).collect();
        let t = detect_transition_from(&alphas, &zetas).unwrap().unwrap();
        assert!((t.alpha_c - 1.005).abs() < 1e-12);
        assert!((t.uncertainty - 0.005).abs() < 1e-12);
    }

    #[test]
    fn single_band_has_no_transition() {
        let alphas = [0.1, 0.2, 0.3];
        assert!(detect_transition_from(&alphas, &[1.0, 1.0, 0.98]).unwrap().is_none());
        assert!(detect_transition_from(&alphas, &[0.0, 0.0, 0.0]).unwrap().is_none());
        assert!(detect_transition_from(&[0.2, 0.1], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(classify_zeta(0.999), ZetaBand::Symmetric);
        assert_eq!(classify_zeta(0.0), ZetaBand::Broken);
        assert_eq!(classify_zeta(0.5), ZetaBand::Suspect);
        assert_eq!(classify_zeta(f64::NAN), ZetaBand::Unknown);
    }

    proptest! {
        #[test]
        fn refinement_preserving_bracket_is_invariant(
            lo in 0.5f64..1.0, gap in 0.001f64..0.2, extra in prop::collection::vec(0.0f64..1.0, 0..8)
        ) {
            let hi = lo + gap;
            let mut coarse = vec![lo - 0.3, lo - 0.1, lo, hi, hi + 0.1];
            let zeta = |a: f64| if a <= lo { 1.0 } else { 0.0 };
            let t0 = detect_transition_from(&coarse, &coarse.iter().map(|&a| zeta(a)).collect::<Vec<_>>())
                .unwrap().unwrap();
            // refine outside the bracketing pair only
            for e in extra {
                coarse.push(lo - 0.3 + e * 0.29);
                coarse.push(hi + 0.1 + e);
            }
            coarse.sort_by(f64::total_cmp);
            coarse.dedup();
            let zs: Vec<f64> = coarse.iter().map(|&a| zeta(a)).collect();
            let t1 = detect_transition_from(&coarse, &zs).unwrap().unwrap();
            prop_assert_eq!(t0.alpha_c, t1.alpha_c);
            prop_assert_eq!(t0.uncertainty, t1.uncertainty);
        }
    }
}
