//! Constrained maximum-entropy programs.
//!
//! Both programs used by the estimators have the same shape: a tensor
//! `t[a][b][c]` whose `(a, b)` and `(a, c)` marginals are fixed, and the
//! objective is the concave `H(A | B, C)`.
//!
//! * `q*` maximizes `H(Y | X1, X2)` with `p(x1, y)` and `p(x2, y)` fixed
//!   (`a = y`, `b = x1`, `c = x2`).
//! * `r*` maximizes `H(X1 | X2, Y)` with `p(x1, y)` and `p(x1, x2)` fixed
//!   (`a = x1`, `b = x2`, `c = y`).
//!
//! For each `a` the constraints only fix the row and column sums of the slice
//! `t[a]`, so the feasible set is a product of transportation polytopes. The
//! solver starts from the conditionally independent point, moves only along
//! the null space of the constraints (so every iterate is feasible up to
//! rounding) and follows the central path of a log barrier with damped Newton
//! steps.

use ndarray::{Array2, Array3};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{row_sums, Axis, DiscreteJoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Max-norm marginal residual required for convergence.
    pub marginal_tolerance: f64,
    /// Target duality gap, relative to `max(1, |objective|)` in nats.
    pub objective_tolerance: f64,
    /// Cap on barrier stages.
    pub max_outer_iterations: usize,
    /// Cap on Newton steps per barrier stage.
    pub max_inner_iterations: usize,
    /// Factor by which the barrier weight grows between stages.
    pub penalty_growth: f64,
    /// Objective weight relative to the barrier in the first stage.
    pub initial_penalty: f64,
    /// Seeds the perturbed restart used when the first attempt stalls.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            marginal_tolerance: 1e-9,
            objective_tolerance: 1e-10,
            max_outer_iterations: 200,
            max_inner_iterations: 500,
            penalty_growth: 10.0,
            initial_penalty: 1.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.marginal_tolerance) || !positive(self.objective_tolerance) {
            return Err(Error::InvalidArgument("solver tolerances must be > 0".into()));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        if !(self.penalty_growth > 1.0) || !self.penalty_growth.is_finite() {
            return Err(Error::InvalidArgument("penalty_growth must be > 1".into()));
        }
        if !positive(self.initial_penalty) {
            return Err(Error::InvalidArgument("initial_penalty must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSolution {
    /// The optimizing joint, always indexed `(x1, x2, y)`.
    pub q: DiscreteJoint,
    pub objective_bits: f64,
    /// Final max-norm violation of the marginal constraints.
    pub residual: f64,
    /// Newton steps taken over all stages and attempts.
    pub iterations: usize,
    pub converged: bool,
    /// Residual after each completed barrier stage.
    pub residual_history: Vec<f64>,
}

/// Maximizes `H_q(Y | X1, X2)` subject to `q(x1, y) = m1` and `q(x2, y) = m2`.
pub fn solve_q_star(m1: &Array2<f64>, m2: &Array2<f64>, cfg: &SolverConfig) -> Result<MaxEntSolution> {
    if m1.ncols() != m2.ncols() {
        return Err(Error::InvalidArgument("m1 and m2 must share |Y|".into()));
    }
    let p_ab = m1.t().as_standard_layout().to_owned(); // (y, x1)
    let p_ac = m2.t().as_standard_layout().to_owned(); // (y, x2)
    let problem = CondEntropyProblem::new(p_ab, p_ac, "p(y)", cfg.marginal_tolerance)?;
    let (n1, n2, ny) = (m1.nrows(), m2.nrows(), m1.ncols());
    solve(&problem, cfg, |t| {
        Array3::from_shape_fn((n1, n2, ny), |(i, j, k)| t[[k, i, j]])
    })
}

/// Maximizes `H_r(X1 | X2, Y)` subject to `r(x1, y) = m1` and `r(x1, x2) = m12`.
pub fn solve_r_star(m1: &Array2<f64>, m12: &Array2<f64>, cfg: &SolverConfig) -> Result<MaxEntSolution> {
    if m1.nrows() != m12.nrows() {
        return Err(Error::InvalidArgument("m1 and m12 must share |X1|".into()));
    }
    let problem = CondEntropyProblem::new(m12.clone(), m1.clone(), "p(x1)", cfg.marginal_tolerance)?;
    solve(&problem, cfg, |t| t.clone())
}

/// Sparse row of the null-space basis: `(basis index, coefficient)`.
type SparseRow = Vec<(usize, f64)>;

/// `max H(A | B, C)` over tensors with fixed `(a, b)` and `(a, c)` marginals.
struct CondEntropyProblem {
    na: usize,
    nb: usize,
    nc: usize,
    p_ab: Array2<f64>,
    p_ac: Array2<f64>,
    /// Entries `(a, b, c)` not forced to zero by a zero marginal cell.
    free: Vec<(usize, usize, usize)>,
    /// For each free entry, its coordinates in the null-space basis.
    basis_rows: Vec<SparseRow>,
    dim: usize,
    /// Free entries grouped by `(b, c)`.
    columns: Vec<Vec<usize>>,
}

impl CondEntropyProblem {
    fn new(p_ab: Array2<f64>, p_ac: Array2<f64>, shared: &'static str, tol: f64) -> Result<Self> {
        for m in [&p_ab, &p_ac] {
            if m.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::InvalidDistribution("constraint entries must be finite and >= 0".into()));
            }
            if (m.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution("constraint matrix does not sum to 1".into()));
            }
        }
        if p_ab.nrows() != p_ac.nrows() {
            return Err(Error::InvalidArgument("constraint matrices disagree on the shared axis".into()));
        }
        let gap = row_sums(&p_ab)
            .iter()
            .zip(row_sums(&p_ac))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap > tol {
            return Err(Error::InfeasibleConstraints { marginal: shared, gap });
        }
        let (na, nb) = p_ab.dim();
        let nc = p_ac.ncols();

        let mut index = vec![usize::MAX; na * nb * nc];
        let mut free = Vec::new();
        let mut columns = vec![Vec::new(); nb * nc];
        let mut basis_rows: Vec<SparseRow> = Vec::new();
        let mut dim = 0;
        for a in 0..na {
            let rows: Vec<usize> = (0..nb).filter(|&b| p_ab[[a, b]] > 0.0).collect();
            let cols: Vec<usize> = (0..nc).filter(|&c| p_ac[[a, c]] > 0.0).collect();
            for &b in &rows {
                for &c in &cols {
                    index[(a * nb + b) * nc + c] = free.len();
                    columns[b * nc + c].push(free.len());
                    free.push((a, b, c));
                    basis_rows.push(Vec::new());
                }
            }
            // adjacent 2x2 moves keep every row and column sum of the slice
            for i in 0..rows.len().saturating_sub(1) {
                for j in 0..cols.len().saturating_sub(1) {
                    for (b, c, coef) in [
                        (rows[i], cols[j], 1.0),
                        (rows[i], cols[j + 1], -1.0),
                        (rows[i + 1], cols[j], -1.0),
                        (rows[i + 1], cols[j + 1], 1.0),
                    ] {
                        basis_rows[index[(a * nb + b) * nc + c]].push((dim, coef));
                    }
                    dim += 1;
                }
            }
        }
        columns.retain(|g| !g.is_empty());
        Ok(Self {
            na,
            nb,
            nc,
            p_ab,
            p_ac,
            free,
            basis_rows,
            dim,
            columns,
        })
    }

    /// Conditionally independent point `p(a,b) p(a,c) / p(a)`: feasible and
    /// strictly positive on the free entries.
    fn initial_weights(&self) -> Vec<f64> {
        let p_a = row_sums(&self.p_ab);
        self.free
            .iter()
            .map(|&(a, b, c)| self.p_ab[[a, b]] * self.p_ac[[a, c]] / p_a[a])
            .collect()
    }

    fn tensor(&self, weights: &[f64]) -> Array3<f64> {
        let mut t = Array3::zeros((self.na, self.nb, self.nc));
        for (&(a, b, c), &w) in self.free.iter().zip(weights) {
            t[[a, b, c]] = w;
        }
        t
    }

    /// Max-norm of `(Σ_c t - p_ab, Σ_b t - p_ac)`.
    fn residual(&self, weights: &[f64]) -> f64 {
        let t = self.tensor(weights);
        let r_ab = t.sum_axis(ndarray::Axis(2)) - &self.p_ab;
        let r_ac = t.sum_axis(ndarray::Axis(1)) - &self.p_ac;
        r_ab.iter().chain(r_ac.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn column_mass(&self, weights: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|g| g.iter().map(|&i| weights[i]).sum()).collect()
    }

    /// `H(A | B, C)` in nats.
    fn objective_nats(&self, weights: &[f64]) -> f64 {
        let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
        self.column_mass(weights).into_iter().map(xlogx).sum::<f64>() - weights.iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    /// `t * H(A | B, C) + Σ ln w`, or `-inf` outside the positive orthant.
    fn barrier_objective(&self, weights: &[f64], t: f64) -> f64 {
        if weights.iter().any(|&w| !(w > 0.0)) {
            return f64::NEG_INFINITY;
        }
        t * self.objective_nats(weights) + weights.iter().map(|w| w.ln()).sum::<f64>()
    }

    /// Maps a null-space step to a step on the free entries.
    fn lift(&self, dz: &DVector<f64>) -> Vec<f64> {
        self.basis_rows
            .iter()
            .map(|row| row.iter().map(|&(k, c)| c * dz[k]).sum())
            .collect()
    }

    /// Newton direction for the barrier objective at weight `t`, with the
    /// squared Newton decrement.
    fn newton_step(&self, w: &[f64], t: f64) -> Option<(Vec<f64>, f64)> {
        let col = self.column_mass(w);
        let mut grad_w = vec![0.0; w.len()];
        for (g, members) in self.columns.iter().enumerate() {
            for &i in members {
                grad_w[i] = t * (col[g] / w[i]).ln() + 1.0 / w[i];
            }
        }
        let mut grad = DVector::zeros(self.dim);
        // negated Hessian: Σ d_i n_i n_iᵀ - t Σ_g (1/w_g) s_g s_gᵀ
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.basis_rows.iter().enumerate() {
            let d = t / w[i] + 1.0 / (w[i] * w[i]);
            for &(k, ck) in row {
                grad[k] += ck * grad_w[i];
                for &(l, cl) in row {
                    hess[(k, l)] += d * ck * cl;
                }
            }
        }
        let mut sum: Vec<f64> = vec![0.0; self.dim];
        let mut touched: Vec<usize> = Vec::new();
        for (g, members) in self.columns.iter().enumerate() {
            for &i in members {
                for &(k, c) in &self.basis_rows[i] {
                    if sum[k] == 0.0 {
                        touched.push(k);
                    }
                    sum[k] += c;
                }
            }
            let scale = t / col[g];
            for &k in &touched {
                for &l in &touched {
                    hess[(k, l)] -= scale * sum[k] * sum[l];
                }
            }
            for &k in &touched {
                sum[k] = 0.0;
            }
            touched.clear();
        }

        let max_diag = (0..self.dim).map(|k| hess[(k, k)]).fold(0.0f64, f64::max);
        let mut ridge = 0.0;
        for _ in 0..8 {
            let mut m = hess.clone();
            for k in 0..self.dim {
                m[(k, k)] += ridge;
            }
            if let Some(chol) = m.cholesky() {
                let dz = chol.solve(&grad);
                let decrement = grad.dot(&dz);
                return Some((self.lift(&dz), decrement));
            }
            ridge = if ridge == 0.0 { 1e-14 * max_diag.max(1e-300) } else { ridge * 100.0 };
        }
        None
    }
}

struct Attempt {
    weights: Vec<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Stop centering once half the squared Newton decrement is below this.
const CENTERING_TOLERANCE: f64 = 1e-12;

/// Largest step along `dir` keeping every weight strictly positive, capped at 1.
fn max_step(w: &[f64], dir: &[f64]) -> f64 {
    w.iter()
        .zip(dir)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&wi, &d)| -wi / d)
        .fold(f64::INFINITY, f64::min)
        .min(1.0 / 0.99)
        * 0.99
}

fn run_attempt(problem: &CondEntropyProblem, cfg: &SolverConfig, start: Vec<f64>) -> Attempt {
    let mut w = start;
    let m = w.len() as f64;
    let mut t = cfg.initial_penalty;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for _stage in 0..cfg.max_outer_iterations {
        let mut centered = false;
        for _ in 0..cfg.max_inner_iterations {
            let Some((dir, decrement)) = problem.newton_step(&w, t) else {
                break;
            };
            if !(decrement.is_finite()) {
                break;
            }
            if decrement / 2.0 <= CENTERING_TOLERANCE {
                centered = true;
                break;
            }
            // rounding floor of the barrier objective at this weight
            let base = problem.barrier_objective(&w, t);
            let noise = 1e-14 * (t * problem.objective_nats(&w).abs() + w.iter().map(|v| v.ln().abs()).sum::<f64>());
            if decrement / 2.0 <= noise {
                centered = true;
                break;
            }
            iterations += 1;
            let mut step = max_step(&w, &dir);
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                let value = problem.barrier_objective(&trial, t);
                if value >= base + 0.01 * step * decrement - noise {
                    w = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        history.push(problem.residual(&w));
        if !centered {
            break;
        }
        let objective = problem.objective_nats(&w);
        if m / t <= cfg.objective_tolerance * objective.abs().max(1.0) {
            converged = true;
            break;
        }
        t *= cfg.penalty_growth;
    }
    log::debug!("maxent attempt: {iterations} Newton steps, final barrier weight {t:.1e}, converged {converged}");
    Attempt {
        weights: w,
        iterations,
        converged,
        history,
    }
}

/// A strictly positive feasible point near `start`, moved along a random
/// null-space direction.
fn perturbed_start(problem: &CondEntropyProblem, start: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dz = DVector::from_fn(problem.dim, |_, _| rng.random::<f64>() - 0.5);
    let dir = problem.lift(&dz);
    let step = 0.5 * max_step(start, &dir);
    start.iter().zip(&dir).map(|(a, d)| a + step * d).collect()
}

fn solve<F>(problem: &CondEntropyProblem, cfg: &SolverConfig, to_joint: F) -> Result<MaxEntSolution>
where
    F: Fn(&Array3<f64>) -> Array3<f64>,
{
    cfg.validate()?;
    let start = problem.initial_weights();

    let attempt = if problem.dim == 0 {
        // the constraints pin down a single point
        Attempt {
            history: vec![problem.residual(&start)],
            weights: start,
            iterations: 0,
            converged: true,
        }
    } else {
        let first = run_attempt(problem, cfg, start.clone());
        if first.converged {
            first
        } else {
            log::debug!("maxent: restarting from a perturbed interior point");
            let retry = run_attempt(problem, cfg, perturbed_start(problem, &start, cfg.seed));
            let iterations = first.iterations + retry.iterations;
            if retry.converged || problem.objective_nats(&retry.weights) > problem.objective_nats(&first.weights) {
                Attempt { iterations, ..retry }
            } else {
                Attempt { iterations, ..first }
            }
        }
    };

    let residual = problem.residual(&attempt.weights);
    let objective = problem.objective_nats(&attempt.weights);
    let t = problem.tensor(&attempt.weights);
    let total: f64 = t.sum();
    let q = DiscreteJoint::new(to_joint(&(t / total)))?;
    let converged = attempt.converged && residual <= cfg.marginal_tolerance;
    let solution = MaxEntSolution {
        q,
        objective_bits: objective / std::f64::consts::LN_2,
        residual,
        iterations: attempt.iterations,
        converged,
        residual_history: attempt.history,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::NonConvergence { best: Box::new(solution) })
    }
}

/// Max-norm of `Σ_c t - p_ab` style residuals, exposed for checking solutions
/// against the constraints they were solved for.
pub fn marginal_residual(q: &DiscreteJoint, pairs: &[(Axis, Axis, &Array2<f64>)]) -> f64 {
    pairs
        .iter()
        .map(|(a, b, target)| {
            let m = q.marginal2(*a, *b);
            m.iter().zip(target.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::pairwise_marginals;
    use crate::oracle::{q_star_oracle, r_star_oracle};
    use crate::synthetic::{canonical, sample_joint_at, CanonicalName};
    use proptest::prelude::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn q_star_examples() {
        for (name, expected) in [
            (CanonicalName::AgreementXor, 1.0),
            (CanonicalName::YEqX1EqX2, 0.0),
            (CanonicalName::AndGate, 0.5),
        ] {
            let m = pairwise_marginals(&canonical(name));
            let sol = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
            assert!((sol.objective_bits - expected).abs() < 1e-8, "{name:?}: {}", sol.objective_bits);
            assert!(sol.converged && sol.residual <= 1e-9);
        }
    }

    #[test]
    fn r_star_examples() {
        let m = pairwise_marginals(&canonical(CanonicalName::AgreementXor));
        let sol = solve_r_star(m.m1(), m.m12(), &cfg()).unwrap();
        assert!((sol.objective_bits - 1.0).abs() < 1e-8);
        let m = pairwise_marginals(&canonical(CanonicalName::YEqX1EqX2));
        assert!(solve_r_star(m.m1(), m.m12(), &cfg()).unwrap().objective_bits.abs() < 1e-12);

        let m = pairwise_marginals(&canonical(CanonicalName::DisagreementXor));
        let sol = solve_r_star(m.m1(), m.m12(), &cfg()).unwrap();
        let oracle = r_star_oracle(m.m1(), m.m12(), 1e-2).unwrap();
        assert!((sol.objective_bits - oracle.objective_bits).abs() < 1e-4);
        assert!(sol.objective_bits >= oracle.objective_bits - 1e-9);
    }

    #[test]
    fn solution_reproduces_constraints() {
        let m = pairwise_marginals(&canonical(CanonicalName::DisagreementXor));
        let sol = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
        let r = marginal_residual(&sol.q, &[(Axis::X1, Axis::Y, m.m1()), (Axis::X2, Axis::Y, m.m2())]);
        assert!(r <= 1e-9, "{r}");
        let sol = solve_r_star(m.m1(), m.m12(), &cfg()).unwrap();
        let r = marginal_residual(&sol.q, &[(Axis::X1, Axis::Y, m.m1()), (Axis::X1, Axis::X2, m.m12())]);
        assert!(r <= 1e-9, "{r}");
    }

    #[test]
    fn inconsistent_constraints_are_infeasible() {
        let m1 = ndarray::array![[0.25, 0.25], [0.25, 0.25]];
        let m2 = ndarray::array![[0.4, 0.1], [0.4, 0.1]];
        assert!(matches!(
            solve_q_star(&m1, &m2, &cfg()),
            Err(Error::InfeasibleConstraints { marginal: "p(y)", .. })
        ));
    }

    #[test]
    fn config_is_validated() {
        let m = pairwise_marginals(&canonical(CanonicalName::AndGate));
        let bad = SolverConfig { penalty_growth: 1.0, ..cfg() };
        assert!(matches!(solve_q_star(m.m1(), m.m2(), &bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn iteration_caps_surface_the_best_iterate() {
        let m = pairwise_marginals(&canonical(CanonicalName::DisagreementXor));
        let tight = SolverConfig { max_outer_iterations: 1, ..cfg() };
        match solve_q_star(m.m1(), m.m2(), &tight) {
            Err(Error::NonConvergence { best }) => {
                assert!(!best.converged);
                assert!(best.residual <= 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn larger_supports_converge() {
        let j = sample_joint_at(9, 0, (5, 4, 3)).unwrap();
        let m = pairwise_marginals(&j);
        let q = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
        // the true joint is feasible, so the optimum is at least its objective
        assert!(q.objective_bits >= j.conditional_entropy(&[Axis::Y], &[Axis::X1, Axis::X2]) - 1e-9);
        let r = solve_r_star(m.m1(), m.m12(), &cfg()).unwrap();
        assert!(r.objective_bits >= j.conditional_entropy(&[Axis::X1], &[Axis::X2, Axis::Y]) - 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_oracle_on_binary_joints(seed in any::<u64>()) {
            let j = sample_joint_at(seed, 0, (2, 2, 2)).unwrap();
            let m = pairwise_marginals(&j);
            let q = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
            let oracle = q_star_oracle(m.m1(), m.m2(), 1e-3).unwrap();
            prop_assert!((q.objective_bits - oracle.objective_bits).abs() <= 1e-4,
                "q*: solver {} oracle {}", q.objective_bits, oracle.objective_bits);
            let r = solve_r_star(m.m1(), m.m12(), &cfg()).unwrap();
            let oracle = r_star_oracle(m.m1(), m.m12(), 1e-2).unwrap();
            prop_assert!((r.objective_bits - oracle.objective_bits).abs() <= 1e-4,
                "r*: solver {} oracle {}", r.objective_bits, oracle.objective_bits);
        }

        #[test]
        fn residual_history_is_non_increasing(seed in any::<u64>()) {
            let m = pairwise_marginals(&sample_joint_at(seed, 1, (3, 2, 2)).unwrap());
            let sol = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
            for pair in sol.residual_history.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12, "{:?}", sol.residual_history);
            }
        }

        #[test]
        fn solves_are_deterministic(seed in any::<u64>()) {
            let m = pairwise_marginals(&sample_joint_at(seed, 2, (2, 3, 2)).unwrap());
            let a = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
            let b = solve_q_star(m.m1(), m.m2(), &cfg()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
