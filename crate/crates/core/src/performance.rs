//! Bounds on the accuracy of the Bayes-optimal multimodal classifier as a
//! function of the total information `I({X1, X2}; Y)`.
//!
//! Lower: `2^(I - H(Y))`. Upper (Fano, uniform `Y`): `(I + 1) / log2 |Y|`.

use serde::{Deserialize, Serialize};

use crate::bounds::SynergyBounds;
use crate::dist::PairwiseMarginals;
use crate::error::{Error, Result};
use crate::pid::PidResult;

/// Total-variation distance from uniform above which the uniform-label
/// assumption of the Fano step is flagged.
pub const UNIFORM_Y_TV_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBounds {
    pub p_lower: f64,
    /// Raw Fano value; can exceed 1.
    pub p_upper: f64,
    pub p_upper_clamped: f64,
    /// Midpoint of `p_lower` and the raw `p_upper`.
    pub p_m_hat: f64,
    pub i_lower: f64,
    pub i_upper: f64,
    pub h_y: f64,
    pub y_cardinality: usize,
    /// Total variation between `p(y)` and uniform, when `p(y)` was known.
    pub y_uniform_tv: Option<f64>,
    /// Set when `y_uniform_tv` exceeds [`UNIFORM_Y_TV_THRESHOLD`].
    pub uniform_y_assumption_violated: bool,
}

pub fn accuracy_bounds(i_bits: f64, h_y_bits: f64, y_cardinality: usize) -> Result<(f64, f64)> {
    if y_cardinality < 2 {
        return Err(Error::InvalidArgument(format!(
            "label cardinality must be >= 2, got {y_cardinality}"
        )));
    }
    if !(i_bits >= 0.0) || !i_bits.is_finite() {
        return Err(Error::InvalidArgument(format!("information must be >= 0, got {i_bits}")));
    }
    if !(h_y_bits >= 0.0) || !h_y_bits.is_finite() {
        return Err(Error::InvalidArgument(format!("H(Y) must be >= 0, got {h_y_bits}")));
    }
    let lower = (i_bits - h_y_bits).exp2();
    let upper = (i_bits + 1.0) / (y_cardinality as f64).log2();
    Ok((lower, upper))
}

/// `(R + U1 + U2 + max(0, S_lower), R + U1 + U2 + S_upper)`.
pub fn total_information_window(rui: &PidResult, sb: &SynergyBounds) -> (f64, f64) {
    let base = rui.r + rui.u1 + rui.u2;
    (base + sb.s_lower.max(0.0), base + sb.s_upper)
}

pub fn estimate_pm(window: (f64, f64), h_y: f64, y_cardinality: usize) -> Result<PerformanceBounds> {
    let (i_lower, i_upper) = window;
    let (p_lower, _) = accuracy_bounds(i_lower, h_y, y_cardinality)?;
    let (_, p_upper) = accuracy_bounds(i_upper, h_y, y_cardinality)?;
    Ok(PerformanceBounds {
        p_lower,
        p_upper,
        p_upper_clamped: p_upper.min(1.0),
        p_m_hat: 0.5 * (p_lower + p_upper),
        i_lower,
        i_upper,
        h_y,
        y_cardinality,
        y_uniform_tv: None,
        uniform_y_assumption_violated: false,
    })
}

/// Full estimate from marginals and their decomposition and bounds.
pub fn estimate_for_marginals(m: &PairwiseMarginals, rui: &PidResult, sb: &SynergyBounds) -> Result<PerformanceBounds> {
    let p_y = m.p_y();
    let ny = p_y.len();
    let mut out = estimate_pm(total_information_window(rui, sb), m.h_y(), ny)?;
    let tv = 0.5 * p_y.iter().map(|p| (p - 1.0 / ny as f64).abs()).sum::<f64>();
    out.y_uniform_tv = Some(tv);
    out.uniform_y_assumption_violated = tv > UNIFORM_Y_TV_THRESHOLD;
    Ok(out)
}
