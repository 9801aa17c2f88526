//! Min-entropy coupling bounds.
//!
//! Every coupling of `p` and `q` has entropy at least `H(p ∧ q)`, where `∧` is
//! the greatest lower bound in the majorization lattice. The greedy coupling
//! comes within one bit of that bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dist::{entropy_bits, MarginalDistribution, PairwiseMarginals};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingResult {
    /// Rows follow the support of `p`, columns the support of `q`.
    pub matrix: Array2<f64>,
    pub entropy_bits: f64,
    pub glb_entropy_bits: f64,
    pub gap_bits: f64,
}

fn sorted_desc(p: &[f64]) -> Vec<f64> {
    let mut v = p.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `p ∧ q`: sort both non-increasingly, pad to a common length, then
/// `a_i = min(P_i, Q_i) - Σ_{j<i} a_j` where `P`, `Q` are prefix sums.
pub fn majorization_glb(p: &MarginalDistribution, q: &MarginalDistribution) -> MarginalDistribution {
    let n = p.len().max(q.len());
    let mut ps = sorted_desc(p.mass());
    let mut qs = sorted_desc(q.mass());
    ps.resize(n, 0.0);
    qs.resize(n, 0.0);

    let mut out = Vec::with_capacity(n);
    let (mut cp, mut cq) = (0.0, 0.0);
    for i in 0..n {
        let (prev_p, prev_q) = (cp, cq);
        cp += ps[i];
        cq += qs[i];
        // when the same sequence attains both minima the increment is exact
        let a = if cp <= cq && prev_p <= prev_q {
            ps[i]
        } else if cq <= cp && prev_q <= prev_p {
            qs[i]
        } else {
            f64::min(cp, cq) - f64::min(prev_p, prev_q)
        };
        out.push(a.max(0.0));
    }
    MarginalDistribution::new(out).expect("glb of two distributions is a distribution")
}

/// `H(p ∧ q)`, a lower bound on the entropy of any coupling of `p` and `q`.
pub fn glb_entropy(p: &MarginalDistribution, q: &MarginalDistribution) -> f64 {
    majorization_glb(p, q).entropy()
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Heap entry ordered by mass, ties going to the lowest index.
struct Entry(f64, usize);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn heap(v: &[f64]) -> BinaryHeap<Entry> {
    v.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| Entry(x, i)).collect()
}

/// Greedy coupling: repeatedly pair the largest remaining masses of `p` and
/// `q` and assign their minimum.
pub fn greedy_coupling(p: &MarginalDistribution, q: &MarginalDistribution) -> CouplingResult {
    let mut hp = heap(p.mass());
    let mut hq = heap(q.mass());
    let mut matrix = Array2::zeros((p.len(), q.len()));
    let mut cells = Vec::with_capacity(p.len() + q.len());
    while let (Some(Entry(a, i)), Some(Entry(b, j))) = (hp.pop(), hq.pop()) {
        let mass = a.min(b);
        matrix[[i, j]] += mass;
        cells.push((i, j));
        // the smaller side is exhausted; the other keeps its remainder
        if a <= b {
            if b - mass > 0.0 {
                hq.push(Entry(b - mass, j));
            }
        } else if a - mass > 0.0 {
            hp.push(Entry(a - mass, i));
        }
    }
    cells.sort_unstable();
    cells.dedup();
    let entropy = entropy_bits(cells.iter().map(|&(i, j)| &matrix[[i, j]]));
    let glb = glb_entropy(p, q);
    CouplingResult {
        matrix,
        entropy_bits: entropy,
        glb_entropy_bits: glb,
        gap_bits: entropy - glb,
    }
}

/// Which pair of marginals produced the largest coupling bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingTerm {
    /// `p(x1, x2)` coupled with `p(y)`.
    X1X2WithY,
    /// `p(x1, y)` coupled with `p(x2)`.
    X1YWithX2,
    /// `p(x2, y)` coupled with `p(x1)`.
    X2YWithX1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointEntropyBound {
    pub value: f64,
    /// Terms in the order of [`CouplingTerm`].
    pub terms: [f64; 3],
    pub winner: CouplingTerm,
}

/// Lower bound on `min H_r(X1, X2, Y)` over joints matching all three
/// pairwise marginals: the largest of the three glb entropies obtained by
/// treating one pair as a single variable and coupling it with the third.
pub fn min_joint_entropy_bound(m: &PairwiseMarginals) -> JointEntropyBound {
    let dist = |v: Vec<f64>| {
        // renormalize away rounding in the derived one-variable marginals
        let total: f64 = v.iter().sum();
        MarginalDistribution::new(v.into_iter().map(|x| x / total).collect()).expect("valid marginal")
    };
    let flat = |a: &Array2<f64>| dist(a.iter().copied().collect());
    let terms = [
        glb_entropy(&flat(m.m12()), &dist(m.p_y())),
        glb_entropy(&flat(m.m1()), &dist(m.p_x2())),
        glb_entropy(&flat(m.m2()), &dist(m.p_x1())),
    ];
    let kinds = [CouplingTerm::X1X2WithY, CouplingTerm::X1YWithX2, CouplingTerm::X2YWithX1];
    let best = argmax(&terms);
    JointEntropyBound {
        value: terms[best],
        terms,
        winner: kinds[best],
    }
}

pub fn min_joint_entropy_lower_bound(m: &PairwiseMarginals) -> f64 {
    min_joint_entropy_bound(m).value
}
