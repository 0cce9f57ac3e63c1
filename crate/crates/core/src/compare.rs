//! Distances between model and measured curves.

use serde::{Deserialize, Serialize};

use crate::error::{ImpactError, Result};
use crate::estimators::ResponseSet;
use crate::event::EventType;
use crate::tim::DiffusionCurve;

/// `sqrt(sum w (a - b)^2 / sum w b^2)`; `b` is the reference.
pub fn relative_l2(a: &[f64], b: &[f64], weights: Option<&[f64]>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len().min(b.len()) {
        let w = weights.map_or(1.0, |w| w[i]);
        num += w * (a[i] - b[i]).powi(2);
        den += w * b[i] * b[i];
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

pub fn max_abs_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDistance {
    pub label: String,
    pub relative_l2: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub curves: Vec<CurveDistance>,
}

impl ComparisonReport {
    pub fn worst_relative_l2(&self) -> f64 {
        self.curves.iter().map(|c| c.relative_l2).fold(0.0, f64::max)
    }
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    match weights {
        Some(w) if w.len() != n => Err(ImpactError::GridMismatch(format!(
            "{} weights for {n} lags",
            w.len()
        ))),
        Some(w) if w.iter().any(|x| !(*x >= 0.0)) => {
            Err(ImpactError::InvalidConfig("weights must be non-negative".into()))
        }
        _ => Ok(()),
    }
}

/// Compares two diffusion curves; `b` is the reference.
pub fn compare_diffusion(a: &DiffusionCurve, b: &DiffusionCurve, weights: Option<&[f64]>) -> Result<ComparisonReport> {
    if a.max_lag() != b.max_lag() {
        return Err(ImpactError::GridMismatch(format!(
            "diffusion curves span {} and {} lags",
            a.max_lag(),
            b.max_lag()
        )));
    }
    check_weights(weights, a.max_lag())?;
    Ok(ComparisonReport {
        curves: vec![CurveDistance {
            label: "D".into(),
            relative_l2: relative_l2(&a.d, &b.d, weights),
            max_abs: max_abs_deviation(&a.d, &b.d),
        }],
    })
}

/// Compares response functions type by type; types absent from either side are skipped.
pub fn compare_response(a: &ResponseSet, b: &ResponseSet, weights: Option<&[f64]>) -> Result<ComparisonReport> {
    if a.ell_max != b.ell_max {
        return Err(ImpactError::GridMismatch(format!(
            "response sets span {} and {} lags",
            a.ell_max, b.ell_max
        )));
    }
    check_weights(weights, a.ell_max)?;
    let curves = EventType::ALL
        .iter()
        .filter(|pi| a.is_present(**pi) && b.is_present(**pi))
        .map(|&pi| CurveDistance {
            label: format!("R_{pi}"),
            relative_l2: relative_l2(a.curve(pi), b.curve(pi), weights),
            max_abs: max_abs_deviation(a.curve(pi), b.curve(pi)),
        })
        .collect();
    Ok(ComparisonReport { curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tim::Provenance;

    fn curve(d: Vec<f64>) -> DiffusionCurve {
        DiffusionCurve {
            d,
            provenance: Provenance::Simulated,
        }
    }

    #[test]
    fn identical_curves_have_zero_distance() {
        let a = curve(vec![1.0, 2.0, 3.5]);
        let r = compare_diffusion(&a, &a, None).unwrap();
        assert_eq!(r.curves[0].relative_l2, 0.0);
        assert_eq!(r.curves[0].max_abs, 0.0);
    }

    #[test]
    fn constant_offset_is_max_deviation() {
        let a = curve(vec![1.0, 2.0, 3.5]);
        let b = curve(vec![1.25, 2.25, 3.75]);
        assert_eq!(compare_diffusion(&a, &b, None).unwrap().curves[0].max_abs, 0.25);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = curve(vec![1.0, 2.0]);
        let b = curve(vec![1.0]);
        assert!(compare_diffusion(&a, &b, None).is_err());
        assert!(compare_diffusion(&a, &a, Some(&[1.0])).is_err());
    }

    #[test]
    fn weights_select_lags() {
        let a = [1.0, 5.0];
        let b = [1.0, 1.0];
        assert_eq!(relative_l2(&a, &b, Some(&[1.0, 0.0])), 0.0);
        assert_eq!(relative_l2(&a, &b, None), (16.0f64 / 2.0).sqrt());
    }
}
