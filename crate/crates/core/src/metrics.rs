//! Estimation-quality metrics.

use crate::channel::VisibilityVector;
use crate::error::{Error, Result};
use crate::scalar::{abs2, Cplx, Real};

/// Lower clamp applied when reporting NMSE in dB.
pub const NMSE_FLOOR_DB: f64 = -100.0;

/// `|est - truth|^2 / |truth|^2` over matching element sequences
/// (column-major matrices and vectors alike).
pub fn nmse<T: Real>(est: &[Cplx<T>], truth: &[Cplx<T>]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "estimate vs truth size",
            expected: truth.len(),
            got: est.len(),
        });
    }
    let den: f64 = truth.iter().map(|z| abs2(*z).as_f64()).sum();
    if den <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let num: f64 = est
        .iter()
        .zip(truth)
        .map(|(a, b)| abs2(*a - *b).as_f64())
        .sum();
    Ok(num / den)
}

pub fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
}

pub fn nmse_db<T: Real>(est: &[Cplx<T>], truth: &[Cplx<T>]) -> Result<f64> {
    nmse(est, truth).map(to_db)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrMetrics {
    pub accuracy: f64,
    /// 1 when nothing is predicted visible.
    pub precision: f64,
    /// 1 when nothing is truly visible.
    pub recall: f64,
}

/// Binary classification scores of `belief > threshold` against the true mask.
pub fn vr_metrics<T: Real>(
    belief: &[T],
    mask: &VisibilityVector,
    threshold: f64,
) -> Result<VrMetrics> {
    if belief.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            what: "belief vs mask length",
            expected: mask.len(),
            got: belief.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (b, &m) in belief.iter().zip(&mask.mask) {
        match (b.as_f64() > threshold, m) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| {
        if a + b == 0 {
            1.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    Ok(VrMetrics {
        accuracy: (tp + tn) as f64 / belief.len().max(1) as f64,
        precision: ratio(tp, fp),
        recall: ratio(tp, fn_),
    })
}
