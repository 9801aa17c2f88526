//! Exhaustive grid search over small marginal polytopes.
//!
//! Used to check the max-entropy solver on instances with at most 16 atoms
//! and at most 3 degrees of freedom. It shares nothing with the solver beyond
//! the entropy arithmetic: the feasible set is parameterized directly by
//! eliminating the linear constraints, then scanned on a grid which is
//! repeatedly refined around the best point.

use ndarray::{Array2, Array3};

use crate::dist::{Axis, DiscreteJoint};
use crate::error::{Error, Result};

pub const MAX_ATOMS: usize = 16;
pub const MAX_DIMENSION: usize = 3;

/// Which conditional entropy to maximize: `H(target | other two axes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleObjective {
    /// `H(Y | X1, X2)`, the `q*` program.
    YGivenX1X2,
    /// `H(X1 | X2, Y)`, the `r*` program.
    X1GivenX2Y,
}

impl OracleObjective {
    fn target(self) -> Axis {
        match self {
            OracleObjective::YGivenX1X2 => Axis::Y,
            OracleObjective::X1GivenX2Y => Axis::X1,
        }
    }
}

/// A fixed two-axis marginal: `Σ_{other} p = matrix`, rows indexed by the first axis.
#[derive(Debug, Clone)]
pub struct MarginalConstraint {
    pub rows: Axis,
    pub cols: Axis,
    pub matrix: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub objective_bits: f64,
    pub argmax: DiscreteJoint,
    /// Dimension of the feasible polytope.
    pub dimension: usize,
}

struct Parameterization {
    /// `atom = offset + Σ_f coef[f] * free[f]` for pivot atoms.
    pivots: Vec<(usize, f64, Vec<f64>)>,
    free: Vec<usize>,
    upper: Vec<f64>,
}

const FEASIBILITY_SLACK: f64 = 1e-12;

fn parameterize(dims: (usize, usize, usize), constraints: &[MarginalConstraint]) -> Result<Parameterization> {
    let (n1, n2, ny) = dims;
    let n = n1 * n2 * ny;
    let atom = |i: usize, j: usize, k: usize| (i * n2 + j) * ny + k;

    let mut rows: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; n], 1.0)];
    for c in constraints {
        if c.rows == c.cols {
            return Err(Error::InvalidArgument("constraint axes must differ".into()));
        }
        let sizes = [n1, n2, ny];
        if c.matrix.dim() != (sizes[c.rows.index()], sizes[c.cols.index()]) {
            return Err(Error::InvalidArgument("constraint matrix shape does not match dims".into()));
        }
        for ((r, s), &target) in c.matrix.indexed_iter() {
            let mut coef = vec![0.0; n];
            for i in 0..n1 {
                for j in 0..n2 {
                    for k in 0..ny {
                        let idx = [i, j, k];
                        if idx[c.rows.index()] == r && idx[c.cols.index()] == s {
                            coef[atom(i, j, k)] = 1.0;
                        }
                    }
                }
            }
            rows.push((coef, target));
        }
    }

    // every constraint row has 0/1 coefficients, so each atom is bounded by
    // the smallest right-hand side it appears in
    let mut upper = vec![1.0f64; n];
    for (coef, rhs) in &rows {
        for (u, &c) in upper.iter_mut().zip(coef) {
            if c != 0.0 {
                *u = u.min(rhs.max(0.0));
            }
        }
    }

    // reduced row echelon form with partial pivoting
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let Some(best) = (r..rows.len()).max_by(|&a, &b| rows[a].0[col].abs().total_cmp(&rows[b].0[col].abs())) else {
            break;
        };
        if rows[best].0[col].abs() < 1e-9 {
            continue;
        }
        rows.swap(r, best);
        let scale = rows[r].0[col];
        rows[r].0.iter_mut().for_each(|v| *v /= scale);
        rows[r].1 /= scale;
        let (pivot_coef, pivot_rhs) = rows[r].clone();
        for (other, (coef, rhs)) in rows.iter_mut().enumerate() {
            if other == r {
                continue;
            }
            let factor = coef[col];
            if factor != 0.0 {
                coef.iter_mut().zip(&pivot_coef).for_each(|(v, p)| *v -= factor * p);
                *rhs -= factor * pivot_rhs;
            }
        }
        pivot_cols.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    for (_, rhs) in &rows[r..] {
        if rhs.abs() > 1e-9 {
            return Err(Error::InfeasibleConstraints {
                marginal: "constraint system",
                gap: rhs.abs(),
            });
        }
    }

    let free: Vec<usize> = (0..n).filter(|c| !pivot_cols.contains(c)).collect();
    let pivots = pivot_cols
        .iter()
        .enumerate()
        .map(|(row, &col)| {
            let coefs = free.iter().map(|&f| -rows[row].0[f]).collect();
            (col, rows[row].1, coefs)
        })
        .collect();
    let upper = free.iter().map(|&f| upper[f]).collect();
    Ok(Parameterization { pivots, free, upper })
}

impl Parameterization {
    fn atoms(&self, n: usize, point: &[f64]) -> Option<Vec<f64>> {
        let mut atoms = vec![0.0; n];
        for (&f, &v) in self.free.iter().zip(point) {
            atoms[f] = v;
        }
        for (col, offset, coefs) in &self.pivots {
            let v = offset + coefs.iter().zip(point).map(|(c, x)| c * x).sum::<f64>();
            if v < -FEASIBILITY_SLACK {
                return None;
            }
            atoms[*col] = v.max(0.0);
        }
        Some(atoms)
    }
}

fn conditional_entropy(dims: (usize, usize, usize), atoms: &[f64], target: Axis) -> f64 {
    let (n1, n2, ny) = dims;
    let sizes = [n1, n2, ny];
    let rest: Vec<usize> = (0..3).filter(|&a| a != target.index()).collect();
    let mut given = vec![0.0; sizes[rest[0]] * sizes[rest[1]]];
    let mut h_all = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..ny {
                let p = atoms[(i * n2 + j) * ny + k];
                let idx = [i, j, k];
                given[idx[rest[0]] * sizes[rest[1]] + idx[rest[1]]] += p;
                if p > 0.0 {
                    h_all -= p * p.log2();
                }
            }
        }
    }
    let h_given: f64 = given.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h_all - h_given
}

/// Scans the grid spanned by `axes`; returns the best point and value.
fn scan(
    param: &Parameterization,
    n: usize,
    axes: &[Vec<f64>],
    eval: &dyn Fn(&[f64]) -> f64,
) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut index = vec![0usize; axes.len()];
    let mut point = vec![0.0; axes.len()];
    loop {
        for (d, &i) in index.iter().enumerate() {
            point[d] = axes[d][i];
        }
        if let Some(atoms) = param.atoms(n, &point) {
            let v = eval(&atoms);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((point.clone(), v));
            }
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d == axes.len() {
                return best;
            }
            index[d] += 1;
            if index[d] < axes[d].len() {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

fn axis_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let count = ((hi - lo) / step).ceil() as usize;
    let mut pts: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    pts.push(hi);
    pts
}

/// Maximizes `objective` over joints with the given dims satisfying every
/// marginal constraint, by grid search at `grid_resolution` followed by
/// zooming refinements down to a step of about `1e-10`.
pub fn brute_force_oracle(
    dims: (usize, usize, usize),
    constraints: &[MarginalConstraint],
    objective: OracleObjective,
    grid_resolution: f64,
) -> Result<OracleResult> {
    let n = dims.0 * dims.1 * dims.2;
    if n == 0 || n > MAX_ATOMS {
        return Err(Error::UnsupportedInstance(format!(
            "{n} atoms; the oracle handles 1..={MAX_ATOMS}"
        )));
    }
    if !(grid_resolution > 0.0 && grid_resolution <= 0.5) {
        return Err(Error::InvalidArgument("grid resolution must lie in (0, 0.5]".into()));
    }
    let param = parameterize(dims, constraints)?;
    let dimension = param.free.len();
    if dimension > MAX_DIMENSION {
        return Err(Error::UnsupportedInstance(format!(
            "feasible polytope has dimension {dimension}; the oracle handles at most {MAX_DIMENSION}"
        )));
    }
    let target = objective.target();
    let eval = move |atoms: &[f64]| conditional_entropy(dims, atoms, target);

    let axes: Vec<Vec<f64>> = param.upper.iter().map(|&u| axis_points(0.0, u, grid_resolution)).collect();
    let (mut center, mut value) = scan(&param, n, &axes, &eval).ok_or_else(|| {
        Error::UnsupportedInstance("no feasible grid point; refine the grid".into())
    })?;

    let mut step = grid_resolution;
    while step > 1e-10 && dimension > 0 {
        let fine = step / 10.0;
        // recenter until the window stops improving
        for _ in 0..100 {
            let axes: Vec<Vec<f64>> = center
                .iter()
                .zip(&param.upper)
                .map(|(&c, &u)| axis_points((c - 2.0 * step).max(0.0), (c + 2.0 * step).min(u), fine))
                .collect();
            match scan(&param, n, &axes, &eval) {
                Some((p, v)) if v > value => {
                    center = p;
                    value = v;
                }
                _ => break,
            }
        }
        step = fine;
    }

    let atoms = param.atoms(n, &center).expect("best point is feasible");
    let total: f64 = atoms.iter().sum();
    let mass = Array3::from_shape_vec(dims, atoms.iter().map(|a| a / total).collect())
        .expect("atom count matches dims");
    Ok(OracleResult {
        objective_bits: value,
        argmax: DiscreteJoint::new(mass)?,
        dimension,
    })
}

/// Oracle for the `q*` program given `p(x1, y)` and `p(x2, y)`.
pub fn q_star_oracle(m1: &Array2<f64>, m2: &Array2<f64>, grid_resolution: f64) -> Result<OracleResult> {
    let dims = (m1.nrows(), m2.nrows(), m1.ncols());
    let constraints = [
        MarginalConstraint { rows: Axis::X1, cols: Axis::Y, matrix: m1.clone() },
        MarginalConstraint { rows: Axis::X2, cols: Axis::Y, matrix: m2.clone() },
    ];
    brute_force_oracle(dims, &constraints, OracleObjective::YGivenX1X2, grid_resolution)
}

/// Oracle for the `r*` program given `p(x1, y)` and `p(x1, x2)`.
pub fn r_star_oracle(m1: &Array2<f64>, m12: &Array2<f64>, grid_resolution: f64) -> Result<OracleResult> {
    let dims = (m1.nrows(), m12.ncols(), m1.ncols());
    let constraints = [
        MarginalConstraint { rows: Axis::X1, cols: Axis::Y, matrix: m1.clone() },
        MarginalConstraint { rows: Axis::X1, cols: Axis::X2, matrix: m12.clone() },
    ];
    brute_force_oracle(dims, &constraints, OracleObjective::X1GivenX2Y, grid_resolution)
}
