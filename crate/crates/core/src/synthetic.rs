//! Canonical example distributions, uniform sampling from the probability
//! simplex, and the sweep that checks the synergy bounds against exact
//! synergy on random joints.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bounds_with_rui, DisagreementConfig};
use crate::dist::{pairwise_marginals, DiscreteJoint};
use crate::error::{Error, Result};
use crate::maxent::{solve_q_star, SolverConfig};
use crate::pid::full_from_solution;

/// Slack used when counting bound violations.
pub const VIOLATION_SLACK: f64 = 1e-6;

/// Relative distance from `S` within which a point counts as near-tight for
/// the boundary fits.
pub const NEAR_TIGHT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalName {
    DisagreementXor,
    AgreementXor,
    YEqX1,
    YEqX1EqX2,
    AndGate,
}

impl CanonicalName {
    pub const ALL: [CanonicalName; 5] = [
        CanonicalName::DisagreementXor,
        CanonicalName::AgreementXor,
        CanonicalName::YEqX1,
        CanonicalName::YEqX1EqX2,
        CanonicalName::AndGate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CanonicalName::DisagreementXor => "disagreement_xor",
            CanonicalName::AgreementXor => "agreement_xor",
            CanonicalName::YEqX1 => "y_eq_x1",
            CanonicalName::YEqX1EqX2 => "y_eq_x1_eq_x2",
            CanonicalName::AndGate => "and_gate",
        }
    }
}

impl fmt::Display for CanonicalName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CanonicalName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CanonicalName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = CanonicalName::ALL.iter().map(|n| n.as_str()).collect();
                Error::InvalidArgument(format!("unknown distribution {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// Disagreement XOR weights over `(x1, x2, y)` in lexicographic order.
pub const DISAGREEMENT_XOR_TABLE: [f64; 8] = [0.0, 0.05, 0.03, 0.28, 0.53, 0.03, 0.01, 0.06];

/// Exact probability table for a named example. All variables are binary.
pub fn canonical(name: CanonicalName) -> DiscreteJoint {
    let atoms: Vec<(usize, usize, usize, f64)> = match name {
        CanonicalName::DisagreementXor => {
            // the table as given sums to 0.99 and is renormalized
            let total: f64 = DISAGREEMENT_XOR_TABLE.iter().sum();
            DISAGREEMENT_XOR_TABLE
                .iter()
                .enumerate()
                .map(|(idx, &p)| (idx >> 2, (idx >> 1) & 1, idx & 1, p / total))
                .collect()
        }
        CanonicalName::AgreementXor => binary_inputs(|a, b| a ^ b),
        CanonicalName::YEqX1 => binary_inputs(|a, _| a),
        CanonicalName::AndGate => binary_inputs(|a, b| a & b),
        CanonicalName::YEqX1EqX2 => vec![(0, 0, 0, 0.5), (1, 1, 1, 0.5)],
    };
    DiscreteJoint::from_atoms((2, 2, 2), &atoms).expect("canonical tables are valid")
}

/// Uniform independent binary inputs with a deterministic label.
fn binary_inputs(f: impl Fn(usize, usize) -> usize) -> Vec<(usize, usize, usize, f64)> {
    let mut atoms = Vec::with_capacity(4);
    for a in 0..2 {
        for b in 0..2 {
            atoms.push((a, b, f(a, b), 0.25));
        }
    }
    atoms
}

fn validate_dims(dims: (usize, usize, usize)) -> Result<()> {
    if dims.0 < 1 || dims.1 < 1 || dims.2 < 1 {
        return Err(Error::InvalidArgument(format!("dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One joint drawn uniformly from the simplex (flat Dirichlet) using
/// normalized exponential draws.
pub fn sample_joint<R: Rng + ?Sized>(rng: &mut R, dims: (usize, usize, usize)) -> Result<DiscreteJoint> {
    validate_dims(dims)?;
    let n = dims.0 * dims.1 * dims.2;
    let mut draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter_mut().for_each(|x| *x /= total);
    DiscreteJoint::new(Array3::from_shape_vec(dims, draws).expect("shape matches"))
}

/// The `index`-th joint of the stream determined by `seed`. Each index has its
/// own generator, so samples can be produced in any order.
pub fn sample_joint_at(seed: u64, index: u64, dims: (usize, usize, usize)) -> Result<DiscreteJoint> {
    sample_joint(&mut sample_rng(seed, index), dims)
}

pub fn sample_joints(n: usize, dims: (usize, usize, usize), seed: u64) -> Result<Vec<DiscreteJoint>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    (0..n as u64).map(|i| sample_joint_at(seed, i, dims)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub solver: SolverConfig,
    pub disagreement: DisagreementConfig,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            solver: SolverConfig::default(),
            disagreement: DisagreementConfig::default(),
            jobs: None,
        }
    }
}

/// Per-sample values. Failed samples carry NaN and an error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub idx: usize,
    pub s: f64,
    pub s_agree: f64,
    pub s_disagree: f64,
    pub s_upper: f64,
    pub alpha: f64,
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn s_lower(&self) -> f64 {
        self.s_agree.max(self.s_disagree)
    }

    fn failed(idx: usize, err: &Error) -> Self {
        SweepRecord {
            idx,
            s: f64::NAN,
            s_agree: f64::NAN,
            s_disagree: f64::NAN,
            s_upper: f64::NAN,
            alpha: f64::NAN,
            r: f64::NAN,
            u1: f64::NAN,
            u2: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub agree: usize,
    pub disagree: usize,
    pub lower_combined: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighSynergyStats {
    pub count: usize,
    pub mean_gap_upper: f64,
    pub mean_gap_lower: f64,
}

/// Least-squares fit over the near-tight points of one bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub points: usize,
    /// Slope of `S = k * bound` through the origin, or the mean offset
    /// `bound - S` for the upper bound.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub evaluated: usize,
    pub failed: usize,
    /// `mean(S - s_agree)`.
    pub mean_gap_agree: f64,
    /// `mean(S - s_disagree)`.
    pub mean_gap_disagree: f64,
    /// `mean(S - max(s_agree, s_disagree))`.
    pub mean_gap_lower: f64,
    /// `mean(s_upper - S)`.
    pub mean_gap_upper: f64,
    pub median_gap_agree: f64,
    pub median_gap_disagree: f64,
    pub median_gap_lower: f64,
    pub median_gap_upper: f64,
    pub mean_synergy: f64,
    pub max_synergy: f64,
    pub violations: ViolationCounts,
    /// Restricted to samples with `S > 0.6`; absent if there are none.
    pub high_synergy: Option<HighSynergyStats>,
    pub fit_agree: Option<BoundaryFit>,
    pub fit_disagree: Option<BoundaryFit>,
    pub fit_upper: Option<BoundaryFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_samples: usize,
    pub dims: (usize, usize, usize),
    pub seed: u64,
    pub sampling_law: String,
    pub c_effective: f64,
    pub summary: SweepSummary,
    pub records: Vec<SweepRecord>,
}

fn evaluate(idx: usize, seed: u64, dims: (usize, usize, usize), cfg: &SweepConfig) -> SweepRecord {
    let run = || -> Result<SweepRecord> {
        let j = sample_joint_at(seed, idx as u64, dims)?;
        let m = pairwise_marginals(&j);
        let sol = solve_q_star(m.m1(), m.m2(), &cfg.solver)?;
        let pid = full_from_solution(&j, &sol);
        let sb = bounds_with_rui(&m, &pid, &cfg.solver, &cfg.disagreement)?;
        Ok(SweepRecord {
            idx,
            s: pid.raw.s.expect("full joint has synergy"),
            s_agree: sb.s_agree,
            s_disagree: sb.s_disagree,
            s_upper: sb.s_upper,
            alpha: sb.alpha,
            r: pid.raw.r,
            u1: pid.raw.u1,
            u2: pid.raw.u2,
            error: None,
        })
    };
    run().unwrap_or_else(|e| {
        log::warn!("sample {idx} failed: {e}");
        SweepRecord::failed(idx, &e)
    })
}

pub fn run_sweep(n: usize, dims: (usize, usize, usize), cfg: &SweepConfig, seed: u64) -> Result<SweepReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    validate_dims(dims)?;
    cfg.solver.validate()?;
    cfg.disagreement.validate()?;
    let work = || (0..n).into_par_iter().map(|i| evaluate(i, seed, dims, cfg)).collect::<Vec<_>>();
    let records = match cfg.jobs {
        Some(0) => return Err(Error::InvalidArgument("jobs must be >= 1".into())),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(SweepReport {
        n_samples: n,
        dims,
        seed,
        sampling_law: "uniform_simplex".into(),
        c_effective: cfg.disagreement.c,
        summary: summarize(&records),
        records,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[mid - 1] + s[mid])
    } else {
        s[mid]
    }
}

fn near_tight(s: f64, bound: f64) -> bool {
    s > VIOLATION_SLACK && (bound - s).abs() <= NEAR_TIGHT_FRACTION * s
}

fn slope_fit(ok: &[&SweepRecord], bound: impl Fn(&SweepRecord) -> f64) -> Option<BoundaryFit> {
    let (mut sxy, mut sxx, mut points) = (0.0, 0.0, 0);
    for r in ok.iter().filter(|r| near_tight(r.s, bound(r))) {
        let x = bound(r);
        sxy += x * r.s;
        sxx += x * x;
        points += 1;
    }
    (points > 0 && sxx > 0.0).then(|| BoundaryFit { points, value: sxy / sxx })
}

pub fn summarize(records: &[SweepRecord]) -> SweepSummary {
    let ok: Vec<&SweepRecord> = records.iter().filter(|r| r.ok()).collect();
    let gaps = |f: &dyn Fn(&SweepRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let gap_agree = gaps(&|r| r.s - r.s_agree);
    let gap_disagree = gaps(&|r| r.s - r.s_disagree);
    let gap_lower = gaps(&|r| r.s - r.s_lower());
    let gap_upper = gaps(&|r| r.s_upper - r.s);
    let count = |v: &[f64]| v.iter().filter(|&&g| g < -VIOLATION_SLACK).count();

    let high: Vec<&&SweepRecord> = ok.iter().filter(|r| r.s > 0.6).collect();
    let high_synergy = (!high.is_empty()).then(|| HighSynergyStats {
        count: high.len(),
        mean_gap_upper: mean(&high.iter().map(|r| r.s_upper - r.s).collect::<Vec<_>>()),
        mean_gap_lower: mean(&high.iter().map(|r| r.s - r.s_lower()).collect::<Vec<_>>()),
    });

    let upper_tight: Vec<f64> = ok
        .iter()
        .filter(|r| near_tight(r.s, r.s_upper))
        .map(|r| r.s_upper - r.s)
        .collect();
    let synergies = gaps(&|r| r.s);

    SweepSummary {
        evaluated: ok.len(),
        failed: records.len() - ok.len(),
        mean_gap_agree: mean(&gap_agree),
        mean_gap_disagree: mean(&gap_disagree),
        mean_gap_lower: mean(&gap_lower),
        mean_gap_upper: mean(&gap_upper),
        median_gap_agree: median(&gap_agree),
        median_gap_disagree: median(&gap_disagree),
        median_gap_lower: median(&gap_lower),
        median_gap_upper: median(&gap_upper),
        mean_synergy: mean(&synergies),
        max_synergy: synergies.iter().copied().fold(f64::NAN, f64::max),
        violations: ViolationCounts {
            agree: count(&gap_agree),
            disagree: count(&gap_disagree),
            lower_combined: count(&gap_lower),
            upper: count(&gap_upper),
        },
        high_synergy,
        fit_agree: slope_fit(&ok, |r| r.s_agree),
        fit_disagree: slope_fit(&ok, |r| r.s_disagree),
        fit_upper: (!upper_tight.is_empty()).then(|| BoundaryFit {
            points: upper_tight.len(),
            value: mean(&upper_tight),
        }),
    }
}

/// Per-sample records as CSV: `idx,S,s_agree,s_disagree,s_upper,alpha,r,u1,u2`.
pub fn write_records_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["idx", "S", "s_agree", "s_disagree", "s_upper", "alpha", "r", "u1", "u2"])?;
    for r in records {
        let mut row = vec![r.idx.to_string()];
        row.extend([r.s, r.s_agree, r.s_disagree, r.s_upper, r.alpha, r.r, r.u1, r.u2].map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_tables() {
        let xor = canonical(CanonicalName::AgreementXor);
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(xor.get(a, b, a ^ b), 0.25);
                assert_eq!(xor.get(a, b, 1 - (a ^ b)), 0.0);
            }
        }
        let d = canonical(CanonicalName::DisagreementXor);
        for (p, w) in d.mass().iter().zip(DISAGREEMENT_XOR_TABLE) {
            assert!((p - w / 0.99).abs() < 1e-15);
        }
        let eq = canonical(CanonicalName::YEqX1EqX2);
        assert_eq!(eq.get(0, 0, 0), 0.5);
        assert_eq!(eq.get(1, 1, 1), 0.5);
        assert_eq!(eq.mass().iter().filter(|&&p| p > 0.0).count(), 2);
    }

    #[test]
    fn names_round_trip() {
        for n in CanonicalName::ALL {
            assert_eq!(n.as_str().parse::<CanonicalName>().unwrap(), n);
        }
        assert!(matches!("or_gate".parse::<CanonicalName>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sampling_is_deterministic_and_normalized() {
        let a = sample_joints(1, (2, 2, 2), 7).unwrap();
        let b = sample_joints(1, (2, 2, 2), 7).unwrap();
        assert_eq!(a, b);
        for j in sample_joints(1000, (2, 2, 2), 3).unwrap() {
            assert!((j.mass().sum() - 1.0).abs() <= 1e-12);
        }
        assert!(sample_joints(0, (2, 2, 2), 0).is_err());
    }

    #[test]
    fn atom_means_are_uniform() {
        let n = 100_000;
        let mut acc = Array3::<f64>::zeros((2, 2, 2));
        for i in 0..n {
            acc += sample_joint_at(11, i, (2, 2, 2)).unwrap().mass();
        }
        for m in acc.iter() {
            assert!((m / n as f64 - 0.125).abs() < 0.005);
        }
    }

    #[test]
    fn summary_statistics() {
        let rec = |idx, s: f64, lo: f64, up: f64| SweepRecord {
            idx,
            s,
            s_agree: lo,
            s_disagree: lo - 1.0,
            s_upper: up,
            alpha: 0.0,
            r: 0.0,
            u1: 0.0,
            u2: 0.0,
            error: None,
        };
        let mut records = vec![rec(0, 0.5, 0.5, 0.52), rec(1, 0.8, 0.4, 1.0), rec(2, 0.1, 0.2, 0.3)];
        records.push(SweepRecord::failed(3, &Error::InvalidArgument("x".into())));
        let s = summarize(&records);
        assert_eq!(s.evaluated, 3);
        assert_eq!(s.failed, 1);
        assert_eq!(s.violations.agree, 1);
        assert_eq!(s.violations.upper, 0);
        assert!((s.mean_gap_agree - (0.0 + 0.4 - 0.1) / 3.0).abs() < 1e-12);
        assert!((s.median_gap_upper - 0.2).abs() < 1e-12);
        let high = s.high_synergy.unwrap();
        assert_eq!(high.count, 1);
        assert!((high.mean_gap_upper - 0.2).abs() < 1e-12);
        let fit = s.fit_agree.unwrap();
        assert_eq!(fit.points, 1);
        assert!((fit.value - 1.0).abs() < 1e-12);
        assert_eq!(s.fit_upper.unwrap().points, 1);
    }

    #[test]
    fn small_sweep_is_reproducible() {
        let cfg = SweepConfig { jobs: Some(2), ..SweepConfig::default() };
        let a = run_sweep(12, (2, 2, 2), &cfg, 5).unwrap();
        let b = run_sweep(12, (2, 2, 2), &SweepConfig::default(), 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.records.len(), 12);
        assert_eq!(a.summary.failed, 0);
        let mut buf = Vec::new();
        write_records_csv(&a.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("idx,S,s_agree,s_disagree,s_upper,alpha,r,u1,u2\n"));
        assert_eq!(text.lines().count(), 13);
    }
}
