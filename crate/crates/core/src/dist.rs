//! Finite discrete distributions over `(X1, X2, Y)` and the Shannon
//! quantities built from them. Everything is measured in bits.

use ndarray::{Array2, Array3, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" on stored distributions.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Max-norm tolerance when checking that pairwise marginals share their
/// one-variable marginals.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// `-Σ p log2 p` with `0 log 0 = 0`.
pub fn entropy_bits<'a, I>(masses: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    masses
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

fn check_masses<'a, I>(what: &str, masses: I) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut total = 0.0;
    for &p in masses {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {p} is negative or not finite"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what}: total mass {total} differs from 1"
        )));
    }
    Ok(())
}

/// One of the three variables of a joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
    Y,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::Y => 2,
        }
    }
}

/// A probability vector over a single finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistribution {
    mass: Vec<f64>,
}

impl MarginalDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        check_masses("marginal", &mass)?;
        Ok(Self { mass })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Self {
            mass: vec![1.0 / n as f64; n],
        })
    }

    /// Flattens a matrix of probabilities (row-major).
    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        Self::new(m.iter().copied().collect())
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }
}

/// Shannon entropy in bits.
pub fn entropy(d: &MarginalDistribution) -> f64 {
    entropy_bits(d.mass())
}

/// A full joint `p(x1, x2, y)` stored as a dense `n1 × n2 × ny` array.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    mass: Array3<f64>,
    labels: Option<[Vec<String>; 3]>,
}

impl DiscreteJoint {
    pub fn new(mass: Array3<f64>) -> Result<Self> {
        let (n1, n2, ny) = mass.dim();
        if n1 == 0 || n2 == 0 || ny == 0 {
            return Err(Error::InvalidDistribution(format!(
                "joint dims must all be >= 1, got ({n1}, {n2}, {ny})"
            )));
        }
        check_masses("joint", mass.iter())?;
        Ok(Self { mass, labels: None })
    }

    /// Builds a joint from `(x1, x2, y, p)` atoms; unlisted atoms get zero mass.
    pub fn from_atoms(dims: (usize, usize, usize), atoms: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut mass = Array3::zeros(dims);
        for &(i, j, k, p) in atoms {
            if i >= dims.0 || j >= dims.1 || k >= dims.2 {
                return Err(Error::InvalidArgument(format!(
                    "atom ({i}, {j}, {k}) outside dims {dims:?}"
                )));
            }
            mass[[i, j, k]] += p;
        }
        Self::new(mass)
    }

    pub fn with_labels(mut self, labels: [Vec<String>; 3]) -> Result<Self> {
        let (n1, n2, ny) = self.dims();
        if labels[0].len() != n1 || labels[1].len() != n2 || labels[2].len() != ny {
            return Err(Error::InvalidArgument("label counts do not match dims".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[Vec<String>; 3]> {
        self.labels.as_ref()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.mass.dim()
    }

    pub fn mass(&self) -> &Array3<f64> {
        &self.mass
    }

    pub fn get(&self, x1: usize, x2: usize, y: usize) -> f64 {
        self.mass[[x1, x2, y]]
    }

    fn axis_len(&self, a: Axis) -> usize {
        self.mass.shape()[a.index()]
    }

    /// Entropy of the marginal over `axes` (duplicates ignored).
    pub fn entropy_of(&self, axes: &[Axis]) -> f64 {
        let keep = [
            axes.contains(&Axis::X1),
            axes.contains(&Axis::X2),
            axes.contains(&Axis::Y),
        ];
        if keep.iter().all(|&k| k) {
            return entropy_bits(self.mass.iter());
        }
        let sizes = [self.axis_len(Axis::X1), self.axis_len(Axis::X2), self.axis_len(Axis::Y)];
        let reduced_len: usize = (0..3).filter(|&a| keep[a]).map(|a| sizes[a]).product();
        let mut reduced = vec![0.0; reduced_len.max(1)];
        for ((i, j, k), &p) in self.mass.indexed_iter() {
            let idx = [i, j, k];
            let mut flat = 0;
            for a in 0..3 {
                if keep[a] {
                    flat = flat * sizes[a] + idx[a];
                }
            }
            reduced[flat] += p;
        }
        entropy_bits(&reduced)
    }

    /// `H(target | given)`.
    pub fn conditional_entropy(&self, target: &[Axis], given: &[Axis]) -> f64 {
        let mut all: Vec<Axis> = target.to_vec();
        all.extend_from_slice(given);
        self.entropy_of(&all) - self.entropy_of(given)
    }

    /// `p(x1, x2)`, `p(x1, y)` style two-axis marginal, rows indexed by `a`.
    pub fn marginal2(&self, a: Axis, b: Axis) -> Array2<f64> {
        assert_ne!(a, b);
        let other = Axis::ALL.iter().copied().find(|&c| c != a && c != b).unwrap();
        let summed = self.mass.sum_axis(NdAxis(other.index()));
        // remaining axes keep their relative order
        if a.index() < b.index() {
            summed
        } else {
            summed.reversed_axes().as_standard_layout().to_owned()
        }
    }

    pub fn marginal1(&self, a: Axis) -> Vec<f64> {
        let mut out = vec![0.0; self.axis_len(a)];
        for ((i, j, k), &p) in self.mass.indexed_iter() {
            out[[i, j, k][a.index()]] += p;
        }
        out
    }

    /// Exact Bayes accuracy of predicting `Y` from `(X1, X2)`.
    pub fn bayes_accuracy(&self) -> f64 {
        let (n1, n2, ny) = self.dims();
        let mut acc = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                acc += (0..ny).map(|k| self.mass[[i, j, k]]).fold(0.0, f64::max);
            }
        }
        acc
    }

    /// Applies a permutation to the support of one axis: index `i` moves to `perm[i]`.
    pub fn permute_axis(&self, axis: Axis, perm: &[usize]) -> Result<Self> {
        let n = self.axis_len(axis);
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the axis support".into()));
        }
        let mut mass = Array3::zeros(self.dims());
        for ((i, j, k), &p) in self.mass.indexed_iter() {
            let mut idx = [i, j, k];
            idx[axis.index()] = perm[idx[axis.index()]];
            mass[idx] = p;
        }
        Ok(Self { mass, labels: None })
    }
}

fn check_groups(a: &[Axis], b: &[Axis]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("axis groups must be nonempty".into()));
    }
    if a.iter().any(|x| b.contains(x)) {
        return Err(Error::InvalidArgument("axis groups overlap".into()));
    }
    Ok(())
}

/// `I(A; B)` between two disjoint groups of axes.
pub fn mutual_info(j: &DiscreteJoint, a: &[Axis], b: &[Axis]) -> Result<f64> {
    check_groups(a, b)?;
    let mut ab = a.to_vec();
    ab.extend_from_slice(b);
    Ok(j.entropy_of(a) + j.entropy_of(b) - j.entropy_of(&ab))
}

/// `I(a; b | given)`.
pub fn conditional_mutual_info(j: &DiscreteJoint, a: Axis, b: Axis, given: Axis) -> Result<f64> {
    if a == b || a == given || b == given {
        return Err(Error::InvalidArgument("conditional MI needs three distinct axes".into()));
    }
    Ok(j.entropy_of(&[a, given]) + j.entropy_of(&[b, given])
        - j.entropy_of(&[a, b, given])
        - j.entropy_of(&[given]))
}

/// Interaction information `I(X1; X2) - I(X1; X2 | Y)`. Signed.
pub fn interaction_info(j: &DiscreteJoint) -> f64 {
    // I(X1;X2) - I(X1;X2|Y) expanded into entropies; symmetric in all three axes.
    let h = |axes: &[Axis]| j.entropy_of(axes);
    h(&[Axis::X1]) + h(&[Axis::X2]) + h(&[Axis::Y])
        - h(&[Axis::X1, Axis::X2])
        - h(&[Axis::X1, Axis::Y])
        - h(&[Axis::X2, Axis::Y])
        + h(&Axis::ALL)
}

/// The three pairwise marginals `p(x1, y)`, `p(x2, y)`, `p(x1, x2)`.
///
/// This is the data available in the semi-supervised setting: labeled data
/// for each modality separately plus unlabeled paired data.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMarginals {
    m1: Array2<f64>,
    m2: Array2<f64>,
    m12: Array2<f64>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn row_sums(m: &Array2<f64>) -> Vec<f64> {
    m.sum_axis(NdAxis(1)).to_vec()
}

pub(crate) fn col_sums(m: &Array2<f64>) -> Vec<f64> {
    m.sum_axis(NdAxis(0)).to_vec()
}

impl PairwiseMarginals {
    pub fn new(m1: Array2<f64>, m2: Array2<f64>, m12: Array2<f64>) -> Result<Self> {
        for (name, m) in [("p(x1,y)", &m1), ("p(x2,y)", &m2), ("p(x1,x2)", &m12)] {
            if m.is_empty() {
                return Err(Error::InvalidDistribution(format!("{name} is empty")));
            }
            check_masses(name, m.iter())?;
        }
        if m1.ncols() != m2.ncols() {
            return Err(Error::InvalidArgument("p(x1,y) and p(x2,y) disagree on |Y|".into()));
        }
        if m1.nrows() != m12.nrows() || m2.nrows() != m12.ncols() {
            return Err(Error::InvalidArgument("p(x1,x2) shape does not match |X1| x |X2|".into()));
        }
        check_shared("p(y)", &col_sums(&m1), &col_sums(&m2))?;
        check_shared("p(x1)", &row_sums(&m1), &row_sums(&m12))?;
        check_shared("p(x2)", &row_sums(&m2), &col_sums(&m12))?;
        Ok(Self { m1, m2, m12 })
    }

    pub fn m1(&self) -> &Array2<f64> {
        &self.m1
    }

    pub fn m2(&self) -> &Array2<f64> {
        &self.m2
    }

    pub fn m12(&self) -> &Array2<f64> {
        &self.m12
    }

    /// `(n1, n2, ny)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m1.nrows(), self.m2.nrows(), self.m1.ncols())
    }

    pub fn p_y(&self) -> Vec<f64> {
        col_sums(&self.m1)
    }

    pub fn p_x1(&self) -> Vec<f64> {
        row_sums(&self.m1)
    }

    pub fn p_x2(&self) -> Vec<f64> {
        row_sums(&self.m2)
    }

    pub fn h_y(&self) -> f64 {
        entropy_bits(&self.p_y())
    }

    pub fn h_x1(&self) -> f64 {
        entropy_bits(&self.p_x1())
    }

    pub fn h_x2(&self) -> f64 {
        entropy_bits(&self.p_x2())
    }

    /// `H(X1, X2)` from the unlabeled paired data.
    pub fn h_x1x2(&self) -> f64 {
        entropy_bits(self.m12.iter())
    }

    /// `I(X1; Y)`.
    pub fn mi_x1_y(&self) -> f64 {
        self.h_x1() + self.h_y() - entropy_bits(self.m1.iter())
    }

    /// `I(X2; Y)`.
    pub fn mi_x2_y(&self) -> f64 {
        self.h_x2() + self.h_y() - entropy_bits(self.m2.iter())
    }

    /// `I(X1; X2)`.
    pub fn mi_x1_x2(&self) -> f64 {
        self.h_x1() + entropy_bits(&col_sums(&self.m12)) - self.h_x1x2()
    }

    /// The same marginals with the roles of `X1` and `X2` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            m1: self.m2.clone(),
            m2: self.m1.clone(),
            m12: self.m12.t().as_standard_layout().to_owned(),
        }
    }
}

fn check_shared(name: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    let gap = max_abs_diff(a, b);
    if gap > CONSISTENCY_TOLERANCE {
        return Err(Error::InfeasibleConstraints { marginal: name, gap });
    }
    Ok(())
}

pub fn pairwise_marginals(j: &DiscreteJoint) -> PairwiseMarginals {
    PairwiseMarginals {
        m1: j.marginal2(Axis::X1, Axis::Y),
        m2: j.marginal2(Axis::X2, Axis::Y),
        m12: j.marginal2(Axis::X1, Axis::X2),
    }
}

/// Row-stochastic `p(y | x)` with the rows that had no mass marked.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    pub rows: Array2<f64>,
    /// `true` where `p(x) = 0`; those rows are set to uniform.
    pub degenerate: Vec<bool>,
}

impl Conditionals {
    pub fn has_degenerate_rows(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Normalizes each row of a `p(x, y)` matrix into `p(y | x)`.
pub fn conditionals_from_marginal(m: &Array2<f64>) -> Conditionals {
    let (nx, ny) = m.dim();
    let mut rows = Array2::zeros((nx, ny));
    let mut degenerate = vec![false; nx];
    for (x, row) in m.outer_iter().enumerate() {
        let total: f64 = row.sum();
        if total > 0.0 {
            for (y, &p) in row.iter().enumerate() {
                rows[[x, y]] = p / total;
            }
        } else {
            degenerate[x] = true;
            rows.row_mut(x).fill(1.0 / ny as f64);
        }
    }
    Conditionals { rows, degenerate }
}
