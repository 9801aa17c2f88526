//! Synergy bounds from pairwise marginals only.
//!
//! * Agreement bound: `S >= R - I(X1;X2) + min_r I_r(X1;X2|Y)`, where the
//!   minimum runs over joints matching all three pairwise marginals and is
//!   obtained from the `r*` max-entropy program.
//! * Disagreement bound: `S >= c * α - max(U1, U2)`, with `α` the expected
//!   distance between the two unimodal Bayes predictors.
//! * Upper bound: `S <= H(X1,X2) + H(Y) - min_r H_r(X1,X2,Y) - min_q I_q({X1,X2};Y)`,
//!   with the joint-entropy minimum replaced by its majorization lower bound.

use serde::{Deserialize, Serialize};

use crate::coupling::{min_joint_entropy_bound, CouplingTerm};
use crate::dist::{conditionals_from_marginal, PairwiseMarginals};
use crate::error::{Error, Result};
use crate::maxent::{solve_r_star, SolverConfig};
use crate::pid::{compute_rui, PidResult};

/// Label-space distance between two predicted distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// `Σ_y (a_y - b_y)^2`.
    #[default]
    SquaredEuclidean,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisagreementConfig {
    /// Relaxed triangle inequality constant of the distance.
    pub c_d: f64,
    /// Multiplier on `α` in the disagreement bound.
    pub c: f64,
    pub distance: Distance,
}

impl Default for DisagreementConfig {
    /// `c = 1 / (2 c_d)` with `c_d = 1`.
    fn default() -> Self {
        Self::with_c_d(1.0)
    }
}

impl DisagreementConfig {
    pub fn with_c_d(c_d: f64) -> Self {
        Self {
            c_d,
            c: 1.0 / (2.0 * c_d),
            distance: Distance::SquaredEuclidean,
        }
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_d >= 1.0) || !self.c_d.is_finite() {
            return Err(Error::InvalidArgument("c_d must be >= 1".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidArgument("c must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementBound {
    pub value: f64,
    /// Bound from `max H_r(X1 | X2, Y)`.
    pub x1_centered: f64,
    /// Bound from `max H_r(X2 | X1, Y)`.
    pub x2_centered: f64,
    pub residual_x1: f64,
    pub residual_x2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDiagnostics {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub q_residual: f64,
    pub agree_x1_centered: f64,
    pub agree_x2_centered: f64,
    pub r_residual_x1: f64,
    pub r_residual_x2: f64,
    pub coupling_terms: [f64; 3],
    pub coupling_winner: CouplingTerm,
    /// Set when the upper bound came out below the lower bound.
    pub crossed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyBounds {
    pub s_agree: f64,
    pub s_disagree: f64,
    /// `max(s_agree, s_disagree)`; may be negative.
    pub s_lower: f64,
    /// `max(0, s_lower)`.
    pub effective_lower: f64,
    pub s_upper: f64,
    pub alpha: f64,
    pub c_effective: f64,
    pub h_y: f64,
    pub y_cardinality: usize,
    pub diagnostics: BoundsDiagnostics,
}

/// `min_r I_r(X1; X2 | Y)` via `H(X1) - I(X1;Y) - max_r H_r(X1 | X2, Y)`.
fn min_conditional_dependence(m: &PairwiseMarginals, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let sol = solve_r_star(m.m1(), m.m12(), cfg)?;
    Ok((m.h_x1() - m.mi_x1_y() - sol.objective_bits, sol.residual))
}

/// Agreement bound given the redundancy of the same marginals.
pub fn agreement_bound(m: &PairwiseMarginals, redundancy: f64, cfg: &SolverConfig) -> Result<AgreementBound> {
    let base = redundancy - m.mi_x1_x2();
    let (min1, residual_x1) = min_conditional_dependence(m, cfg)?;
    let (min2, residual_x2) = min_conditional_dependence(&m.swapped(), cfg)?;
    let (x1_centered, x2_centered) = (base + min1, base + min2);
    Ok(AgreementBound {
        value: x1_centered.max(x2_centered),
        x1_centered,
        x2_centered,
        residual_x1,
        residual_x2,
    })
}

pub fn lower_bound_agreement(m: &PairwiseMarginals, cfg: &SolverConfig) -> Result<f64> {
    let rui = compute_rui(m, cfg)?;
    Ok(agreement_bound(m, rui.raw.r, cfg)?.value)
}

/// `α = Σ_{x1,x2} p(x1,x2) d(p(y|x1), p(y|x2))`.
pub fn disagreement(m: &PairwiseMarginals, dcfg: &DisagreementConfig) -> f64 {
    let f1 = conditionals_from_marginal(m.m1());
    let f2 = conditionals_from_marginal(m.m2());
    m.m12()
        .indexed_iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|((i, j), &p)| {
            let a = f1.rows.row(i);
            let b = f2.rows.row(j);
            p * dcfg.distance.eval(a.as_slice().expect("standard layout"), b.as_slice().expect("standard layout"))
        })
        .sum()
}

/// `c * α - max(U1, U2)`, unclamped.
pub fn lower_bound_disagreement(alpha: f64, u1: f64, u2: f64, dcfg: &DisagreementConfig) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("disagreement must be >= 0, got {alpha}")));
    }
    Ok(dcfg.c * alpha - u1.max(u2))
}

/// Upper bound from the solved `q*` objective `max_q H_q(Y | X1, X2)`.
pub fn upper_bound_from_objective(m: &PairwiseMarginals, q_objective: f64) -> (f64, crate::coupling::JointEntropyBound) {
    let joint = min_joint_entropy_bound(m);
    let h_y = m.h_y();
    let min_total_information = h_y - q_objective;
    (m.h_x1x2() + h_y - joint.value - min_total_information, joint)
}

pub fn upper_bound(m: &PairwiseMarginals, cfg: &SolverConfig) -> Result<f64> {
    let rui = compute_rui(m, cfg)?;
    Ok(upper_bound_from_objective(m, rui.q_objective).0)
}

/// All bounds, reusing an already computed decomposition of the same marginals.
pub fn bounds_with_rui(
    m: &PairwiseMarginals,
    rui: &PidResult,
    cfg: &SolverConfig,
    dcfg: &DisagreementConfig,
) -> Result<SynergyBounds> {
    dcfg.validate()?;
    let agree = agreement_bound(m, rui.raw.r, cfg)?;
    let alpha = disagreement(m, dcfg);
    let s_disagree = lower_bound_disagreement(alpha, rui.u1, rui.u2, dcfg)?;
    let (s_upper, joint) = upper_bound_from_objective(m, rui.q_objective);
    let s_lower = agree.value.max(s_disagree);
    Ok(SynergyBounds {
        s_agree: agree.value,
        s_disagree,
        s_lower,
        effective_lower: s_lower.max(0.0),
        s_upper,
        alpha,
        c_effective: dcfg.c,
        h_y: m.h_y(),
        y_cardinality: m.dims().2,
        diagnostics: BoundsDiagnostics {
            r: rui.r,
            u1: rui.u1,
            u2: rui.u2,
            q_residual: rui.residual,
            agree_x1_centered: agree.x1_centered,
            agree_x2_centered: agree.x2_centered,
            r_residual_x1: agree.residual_x1,
            r_residual_x2: agree.residual_x2,
            coupling_terms: joint.terms,
            coupling_winner: joint.winner,
            crossed: s_upper < s_lower,
        },
    })
}

pub fn bounds_summary(m: &PairwiseMarginals, cfg: &SolverConfig, dcfg: &DisagreementConfig) -> Result<SynergyBounds> {
    let rui = compute_rui(m, cfg)?;
    bounds_with_rui(m, &rui, cfg, dcfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::pairwise_marginals;
    use crate::synthetic::{canonical, CanonicalName};

    fn marginals(name: CanonicalName) -> PairwiseMarginals {
        pairwise_marginals(&canonical(name))
    }

    #[test]
    fn agreement_examples() {
        let cfg = SolverConfig::default();
        // every pairwise marginal of XOR is uniform, exactly as for the uniform
        // joint over eight atoms whose synergy is 0, so no marginal-only lower
        // bound can exceed 0 here
        let v = lower_bound_agreement(&marginals(CanonicalName::AgreementXor), &cfg).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
        let v = lower_bound_agreement(&marginals(CanonicalName::YEqX1EqX2), &cfg).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn disagreement_examples() {
        let d = DisagreementConfig::default();
        assert_eq!(disagreement(&marginals(CanonicalName::YEqX1EqX2), &d), 0.0);
        assert_eq!(disagreement(&marginals(CanonicalName::AgreementXor), &d), 0.0);
        assert!((disagreement(&marginals(CanonicalName::YEqX1), &d) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disagreement_bound_arithmetic() {
        let c1 = DisagreementConfig::default().with_c(1.0);
        assert!((lower_bound_disagreement(0.15, 0.02, 0.0, &c1).unwrap() - 0.13).abs() < 1e-15);
        assert_eq!(lower_bound_disagreement(0.0, 0.0, 0.0, &DisagreementConfig::default()).unwrap(), 0.0);
        let half = DisagreementConfig::default();
        assert_eq!(half.c, 0.5);
        assert!((lower_bound_disagreement(0.5, 1.0, 0.0, &half).unwrap() + 0.75).abs() < 1e-15);
        assert!(lower_bound_disagreement(-0.1, 0.0, 0.0, &half).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DisagreementConfig::with_c_d(0.5).validate().is_err());
        assert!(DisagreementConfig::default().with_c(0.0).validate().is_err());
        assert_eq!(DisagreementConfig::with_c_d(2.0).c, 0.25);
    }

    #[test]
    fn upper_examples() {
        let cfg = SolverConfig::default();
        for (name, expected) in [
            (CanonicalName::AgreementXor, 1.0),
            (CanonicalName::YEqX1EqX2, 0.0),
            (CanonicalName::YEqX1, 0.0),
        ] {
            let v = upper_bound(&marginals(name), &cfg).unwrap();
            assert!((v - expected).abs() < 1e-6, "{name:?}: {v}");
        }
    }

    #[test]
    fn summary_examples() {
        let cfg = SolverConfig::default();
        let d = DisagreementConfig::default();
        let b = bounds_summary(&marginals(CanonicalName::AgreementXor), &cfg, &d).unwrap();
        assert!(b.s_lower.abs() < 1e-6 && (b.s_upper - 1.0).abs() < 1e-6);
        assert_eq!(b.s_lower, b.s_agree.max(b.s_disagree));
        let b = bounds_summary(&marginals(CanonicalName::YEqX1EqX2), &cfg, &d).unwrap();
        assert!(b.s_lower.abs() < 1e-6 && b.s_upper.abs() < 1e-6);
        let b = bounds_summary(&marginals(CanonicalName::DisagreementXor), &cfg, &d).unwrap();
        assert!(b.s_disagree > b.s_agree, "{b:?}");
    }
}
