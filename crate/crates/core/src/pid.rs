//! Partial information decomposition of `I({X1, X2}; Y)` into redundancy,
//! two uniquenesses and synergy.
//!
//! Redundancy and uniqueness depend only on `p(x1, y)` and `p(x2, y)`: they
//! are read off the joint `q*` that maximizes `H(Y | X1, X2)` among all joints
//! with those two marginals. Synergy additionally needs the true joint, as the
//! gap between `I_p({X1, X2}; Y)` and the minimum of `I_q` over the same set
//! (which `q*` attains, since `H(Y)` is fixed by the constraints).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dist::{conditional_mutual_info, interaction_info, mutual_info, pairwise_marginals, Axis, DiscreteJoint, PairwiseMarginals};
use crate::error::Result;
use crate::maxent::{solve_q_star, MaxEntSolution, SolverConfig};

/// Reported values above this (negative) threshold are clamped to zero.
pub const CLAMP_THRESHOLD: f64 = -1e-8;

fn clamp(v: f64) -> f64 {
    if v < 0.0 && v >= CLAMP_THRESHOLD {
        0.0
    } else {
        v
    }
}

/// Unclamped values, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPid {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidResult {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    /// Absent when only the pairwise marginals were available.
    pub s: Option<f64>,
    /// `I_p({X1, X2}; Y)`; absent without the full joint.
    pub total_information: Option<f64>,
    /// `H_{q*}(Y | X1, X2)`.
    pub q_objective: f64,
    pub residual: f64,
    pub converged: bool,
    pub raw: RawPid,
}

impl PidResult {
    /// `I_{q*}({X1, X2}; Y) = R + U1 + U2`, the minimum total information
    /// compatible with the labeled marginals.
    pub fn min_total_information(&self) -> f64 {
        self.raw.r + self.raw.u1 + self.raw.u2
    }
}

/// R, U1, U2 of a solved `q*`.
fn decompose(q: &DiscreteJoint) -> (f64, f64, f64) {
    let r = interaction_info(q);
    let u1 = conditional_mutual_info(q, Axis::X1, Axis::Y, Axis::X2).expect("distinct axes");
    let u2 = conditional_mutual_info(q, Axis::X2, Axis::Y, Axis::X1).expect("distinct axes");
    (r, u1, u2)
}

fn from_solution(sol: &MaxEntSolution, total_information: Option<f64>) -> PidResult {
    let (r, u1, u2) = decompose(&sol.q);
    let s = total_information.map(|i| i - mutual_info(&sol.q, &[Axis::X1, Axis::X2], &[Axis::Y]).expect("disjoint"));
    PidResult {
        r: clamp(r),
        u1: clamp(u1),
        u2: clamp(u2),
        s: s.map(clamp),
        total_information,
        q_objective: sol.objective_bits,
        residual: sol.residual,
        converged: sol.converged,
        raw: RawPid { r, u1, u2, s },
    }
}

/// Redundancy and uniqueness from the labeled unimodal marginals alone.
pub fn compute_rui_labeled(m1: &Array2<f64>, m2: &Array2<f64>, cfg: &SolverConfig) -> Result<PidResult> {
    let sol = solve_q_star(m1, m2, cfg)?;
    Ok(from_solution(&sol, None))
}

/// Like [`compute_rui_labeled`], also returning the solved `q*`.
pub fn compute_rui_with_solution(m: &PairwiseMarginals, cfg: &SolverConfig) -> Result<(PidResult, MaxEntSolution)> {
    let sol = solve_q_star(m.m1(), m.m2(), cfg)?;
    Ok((from_solution(&sol, None), sol))
}

/// R, U1, U2 from pairwise marginals; synergy is left empty.
pub fn compute_rui(m: &PairwiseMarginals, cfg: &SolverConfig) -> Result<PidResult> {
    compute_rui_labeled(m.m1(), m.m2(), cfg)
}

/// The full decomposition, including synergy, from a known joint.
pub fn compute_pid_full(j: &DiscreteJoint, cfg: &SolverConfig) -> Result<PidResult> {
    let m = pairwise_marginals(j);
    let sol = solve_q_star(m.m1(), m.m2(), cfg)?;
    let total = mutual_info(j, &[Axis::X1, Axis::X2], &[Axis::Y])?;
    Ok(from_solution(&sol, Some(total)))
}

/// Synergy for a joint given an already solved `q*` over its marginals.
pub(crate) fn full_from_solution(j: &DiscreteJoint, sol: &MaxEntSolution) -> PidResult {
    let total = mutual_info(j, &[Axis::X1, Axis::X2], &[Axis::Y]).expect("disjoint");
    from_solution(sol, Some(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{canonical, CanonicalName};

    fn assert_pid(p: &PidResult, expected: (f64, f64, f64, Option<f64>), tol: f64) {
        assert!((p.r - expected.0).abs() <= tol, "R {} vs {}", p.r, expected.0);
        assert!((p.u1 - expected.1).abs() <= tol, "U1 {} vs {}", p.u1, expected.1);
        assert!((p.u2 - expected.2).abs() <= tol, "U2 {} vs {}", p.u2, expected.2);
        match (p.s, expected.3) {
            (Some(s), Some(e)) => assert!((s - e).abs() <= tol, "S {s} vs {e}"),
            (None, None) => {}
            other => panic!("synergy presence mismatch: {other:?}"),
        }
    }

    #[test]
    fn rui_examples() {
        let cfg = SolverConfig::default();
        let m = pairwise_marginals(&canonical(CanonicalName::YEqX1));
        assert_pid(&compute_rui(&m, &cfg).unwrap(), (0.0, 1.0, 0.0, None), 1e-6);
        let m = pairwise_marginals(&canonical(CanonicalName::AgreementXor));
        assert_pid(&compute_rui(&m, &cfg).unwrap(), (0.0, 0.0, 0.0, None), 1e-6);
        let m = pairwise_marginals(&canonical(CanonicalName::AndGate));
        assert_pid(&compute_rui(&m, &cfg).unwrap(), (0.3113, 0.0, 0.0, None), 1e-3);
    }

    #[test]
    fn full_examples() {
        let cfg = SolverConfig::default();
        let p = compute_pid_full(&canonical(CanonicalName::AgreementXor), &cfg).unwrap();
        assert_pid(&p, (0.0, 0.0, 0.0, Some(1.0)), 1e-6);
        let p = compute_pid_full(&canonical(CanonicalName::YEqX1EqX2), &cfg).unwrap();
        assert_pid(&p, (1.0, 0.0, 0.0, Some(0.0)), 1e-6);
        let p = compute_pid_full(&canonical(CanonicalName::AndGate), &cfg).unwrap();
        assert_pid(&p, (0.3113, 0.0, 0.0, Some(0.5)), 1e-3);
        assert!((p.total_information.unwrap() - 0.811278124459).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_labeled_marginals_fail() {
        let m1 = ndarray::array![[0.5, 0.0], [0.0, 0.5]];
        let m2 = ndarray::array![[0.7, 0.0], [0.0, 0.3]];
        let err = compute_rui_labeled(&m1, &m2, &SolverConfig::default()).unwrap_err();
        assert!(err.is_data_error());
    }

    #[test]
    fn clamping_keeps_raw_values() {
        assert_eq!(clamp(-5e-9), 0.0);
        assert_eq!(clamp(-1e-6), -1e-6);
        assert_eq!(clamp(0.25), 0.25);
    }
}
