//! From real-valued features to discrete pairwise marginals.
//!
//! Each modality is reduced with PCA and clustered with k-means; cluster
//! indices then play the role of `x1` and `x2`. Marginals are tabulated from
//! labeled unimodal rows and unlabeled pairs, and [`reconcile`] makes the
//! three tables agree on their shared one-variable marginals.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{col_sums, row_sums, PairwiseMarginals};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_PCA_DIM: usize = 16;
/// Extra k-means++ starts tried after the farthest-first start.
pub const KMEANS_RESTARTS: usize = 9;
const KMEANS_MAX_ITERATIONS: usize = 300;
const IPF_TOLERANCE: f64 = 1e-13;
const IPF_MAX_ITERATIONS: usize = 10_000;

/// Fitted PCA projection and k-means centroids for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub mean: Vec<f64>,
    /// Orthonormal rows spanning the retained principal subspace.
    pub components: Vec<Vec<f64>>,
    /// Cluster centers in the projected space.
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    pub seed: u64,
    pub inertia: f64,
}

impl Discretizer {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn pca_dim(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "feature vector has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x.iter().zip(&self.mean)).map(|(w, (v, m))| w * (v - m)).sum())
            .collect())
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        Ok(nearest(&self.project(x)?, &self.centroids).0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Principal axes sorted by decreasing variance, with the sign fixed so the
/// largest-magnitude coordinate of each axis is positive.
fn principal_axes(features: &[Vec<f64>], pca_dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = features.len();
    let d = features[0].len();
    let mut mean = vec![0.0; d];
    for x in features {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components = order
        .into_iter()
        .take(pca_dim.min(d))
        .map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (mean, components)
}

/// Farthest-first: a seeded first center, then repeatedly the point farthest
/// from all chosen centers.
fn farthest_first(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let next = (0..points.len()).fold(0, |best, i| if dist[i] > dist[best] { i } else { best });
        centers.push(points[next].clone());
        dist.iter_mut().zip(points).for_each(|(d, p)| *d = d.min(sq_dist(p, &points[next])));
    }
    centers
}

/// k-means++: later centers drawn with probability proportional to squared
/// distance from the chosen ones.
fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut next = dist.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in dist.iter().enumerate() {
            if d > 0.0 && target < d {
                next = i;
                break;
            }
            target -= d;
        }
        centers.push(points[next].clone());
        dist.iter_mut().zip(points).for_each(|(d, p)| *d = d.min(sq_dist(p, &points[next])));
    }
    centers
}

/// Lloyd iterations until assignments stop changing. Empty clusters are
/// refilled with the member of the largest cluster farthest from its center.
fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers);
            changed |= *l != c;
            *l = c;
        }
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let mut repaired = false;
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let largest = (0..k).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
            let far = (0..points.len())
                .filter(|&i| labels[i] == largest)
                .fold(None::<(usize, f64)>, |best, i| {
                    let d = sq_dist(&points[i], &centers[largest]);
                    match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((i, d)),
                    }
                })
                .expect("largest cluster is nonempty")
                .0;
            labels[far] = empty;
            sizes[largest] -= 1;
            sizes[empty] = 1;
            repaired = true;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (c, (s, &n)) in centers.iter_mut().zip(sums.iter().zip(&sizes)) {
            *c = s.iter().map(|v| v / n as f64).collect();
        }
        if !changed && !repaired {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (centers, labels, inertia)
}

/// PCA to `pca_dim` (capped at the input dimension) followed by k-means.
///
/// The first k-means start is farthest-first; [`KMEANS_RESTARTS`] seeded
/// k-means++ starts follow and the lowest-inertia result is kept.
pub fn fit_discretizer(features: &[Vec<f64>], k: usize, pca_dim: usize, seed: u64) -> Result<Discretizer> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if pca_dim < 1 {
        return Err(Error::InvalidArgument("pca_dim must be >= 1".into()));
    }
    let d = features.first().map(Vec::len).ok_or_else(|| Error::InvalidArgument("no feature vectors".into()))?;
    if d == 0 {
        return Err(Error::InvalidArgument("feature vectors are empty".into()));
    }
    if let Some(i) = features.iter().position(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument(format!("feature vector {i} has the wrong length or a non-finite value")));
    }
    let distinct = count_distinct(features);
    if distinct < k {
        return Err(Error::InvalidArgument(format!("{distinct} distinct feature vectors, need at least k = {k}")));
    }

    let (mean, components) = principal_axes(features, pca_dim);
    let mut disc = Discretizer {
        mean,
        components,
        centroids: Vec::new(),
        k,
        seed,
        inertia: f64::INFINITY,
    };
    let points = features.iter().map(|x| disc.project(x)).collect::<Result<Vec<_>>>()?;
    let projected_distinct = count_distinct(&points);
    if projected_distinct < k {
        return Err(Error::InvalidArgument(format!(
            "{projected_distinct} distinct points after projecting to {} dimensions, need at least k = {k}",
            disc.pca_dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for start in 0..=KMEANS_RESTARTS {
        let init = if start == 0 {
            farthest_first(&points, k, &mut rng)
        } else {
            kmeans_plus_plus(&points, k, &mut rng)
        };
        let (centroids, _, inertia) = lloyd(&points, init);
        if inertia < disc.inertia {
            disc.centroids = centroids;
            disc.inertia = inertia;
        }
    }
    Ok(disc)
}

/// Normalized marginal tables before reconciliation, with the raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginals {
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
    pub m12: Array2<f64>,
    pub counts1: Array2<u64>,
    pub counts2: Array2<u64>,
    pub counts12: Array2<u64>,
    /// `(|D1|, |D2|, |DM|)`.
    pub sizes: (usize, usize, usize),
    pub smoothing: f64,
}

fn normalized(counts: &Array2<u64>, smoothing: f64) -> Array2<f64> {
    let m = counts.mapv(|c| c as f64 + smoothing);
    let total = m.sum();
    m / total
}

/// Tabulates already discretized rows into marginals over
/// `n1 × ny`, `n2 × ny` and `n1 × n2`, adding `smoothing` to every cell.
pub fn tabulate_marginals(
    x1y: &[(usize, usize)],
    x2y: &[(usize, usize)],
    x1x2: &[(usize, usize)],
    dims: (usize, usize, usize),
    smoothing: f64,
) -> Result<EmpiricalMarginals> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing must be >= 0, got {smoothing}")));
    }
    for (name, rows) in [("D1", x1y), ("D2", x2y), ("DM", x1x2)] {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} is empty")));
        }
    }
    let labels = |rows: &[(usize, usize)]| rows.iter().map(|r| r.1).collect::<BTreeSet<_>>();
    if labels(x1y) != labels(x2y) {
        return Err(Error::InvalidArgument("label sets of D1 and D2 differ".into()));
    }
    let (n1, n2, ny) = dims;
    let tally = |rows: &[(usize, usize)], shape: (usize, usize)| -> Result<Array2<u64>> {
        let mut c = Array2::zeros(shape);
        for &(a, b) in rows {
            if a >= shape.0 || b >= shape.1 {
                return Err(Error::InvalidArgument(format!("cell ({a}, {b}) outside {shape:?}")));
            }
            c[[a, b]] += 1;
        }
        Ok(c)
    };
    let counts1 = tally(x1y, (n1, ny))?;
    let counts2 = tally(x2y, (n2, ny))?;
    let counts12 = tally(x1x2, (n1, n2))?;
    Ok(EmpiricalMarginals {
        m1: normalized(&counts1, smoothing),
        m2: normalized(&counts2, smoothing),
        m12: normalized(&counts12, smoothing),
        counts1,
        counts2,
        counts12,
        sizes: (x1y.len(), x2y.len(), x1x2.len()),
        smoothing,
    })
}

/// Discretizes labeled unimodal rows and unlabeled pairs and tabulates them.
/// Labels are integer codes; the label alphabet is `0..=max label`.
pub fn build_marginals(
    d1: &[(Vec<f64>, usize)],
    d2: &[(Vec<f64>, usize)],
    dm: &[(Vec<f64>, Vec<f64>)],
    disc1: &Discretizer,
    disc2: &Discretizer,
    smoothing: f64,
) -> Result<EmpiricalMarginals> {
    let x1y = d1.iter().map(|(x, y)| Ok((disc1.assign(x)?, *y))).collect::<Result<Vec<_>>>()?;
    let x2y = d2.iter().map(|(x, y)| Ok((disc2.assign(x)?, *y))).collect::<Result<Vec<_>>>()?;
    let x1x2 = dm
        .iter()
        .map(|(a, b)| Ok((disc1.assign(a)?, disc2.assign(b)?)))
        .collect::<Result<Vec<_>>>()?;
    let ny = d1.iter().chain(d2).map(|r| r.1 + 1).max().unwrap_or(0);
    tabulate_marginals(&x1y, &x2y, &x1x2, (disc1.k, disc2.k, ny), smoothing)
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Total-variation gaps between the two estimates of each shared marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyGaps {
    pub p_y: f64,
    pub p_x1: f64,
    pub p_x2: f64,
}

pub fn consistency_gaps(em: &EmpiricalMarginals) -> ConsistencyGaps {
    ConsistencyGaps {
        p_y: tv(&col_sums(&em.m1), &col_sums(&em.m2)),
        p_x1: tv(&row_sums(&em.m1), &row_sums(&em.m12)),
        p_x2: tv(&row_sums(&em.m2), &col_sums(&em.m12)),
    }
}

fn average(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterative proportional fitting of `m` to the given row and column sums.
/// Returns `None` if the zero pattern keeps it from converging.
fn ipf(m: &Array2<f64>, rows: &[f64], cols: &[f64]) -> Option<Array2<f64>> {
    let mut m = m.clone();
    for _ in 0..IPF_MAX_ITERATIONS {
        for (mut row, &t) in m.rows_mut().into_iter().zip(rows) {
            let s = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v * t / s);
            }
        }
        for (mut col, &t) in m.columns_mut().into_iter().zip(cols) {
            let s = col.sum();
            if s > 0.0 {
                col.mapv_inplace(|v| v * t / s);
            }
        }
        if max_gap(&row_sums(&m), rows) <= IPF_TOLERANCE && max_gap(&col_sums(&m), cols) <= IPF_TOLERANCE {
            return Some(m);
        }
    }
    None
}

/// Fits `m` to the targets, first seeding rows and columns that have target
/// mass but no observations with the product of the targets. If the zero
/// pattern still blocks convergence, the table is blended with that product
/// in growing proportions.
fn fit_to_targets(m: &Array2<f64>, rows: &[f64], cols: &[f64]) -> Array2<f64> {
    let product = Array2::from_shape_fn(m.raw_dim(), |(i, j)| rows[i] * cols[j]);
    let mut seeded = m.clone();
    for (i, &t) in rows.iter().enumerate() {
        if t > 0.0 && seeded.row(i).sum() == 0.0 {
            seeded.row_mut(i).assign(&product.row(i));
        }
    }
    for (j, &t) in cols.iter().enumerate() {
        if t > 0.0 && seeded.column(j).sum() == 0.0 {
            seeded.column_mut(j).assign(&product.column(j));
        }
    }
    if let Some(fit) = ipf(&seeded, rows, cols) {
        return fit;
    }
    for lambda in [1e-6, 1e-4, 1e-2, 0.1, 0.5] {
        log::warn!("marginal fitting stalled; blending {lambda} of the product distribution");
        if let Some(fit) = ipf(&(&seeded * (1.0 - lambda) + &product * lambda), rows, cols) {
            return fit;
        }
    }
    product
}

/// Consistent pairwise marginals from empirical tables whose shared marginals
/// disagree by at most `tolerance` in total variation. Tables that are
/// already consistent are returned as they are; otherwise each table is
/// fitted to the averaged shared marginals.
pub fn reconcile(em: &EmpiricalMarginals, tolerance: f64) -> Result<PairwiseMarginals> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tolerance}")));
    }
    if let Ok(m) = PairwiseMarginals::new(em.m1.clone(), em.m2.clone(), em.m12.clone()) {
        return Ok(m);
    }
    let gaps = consistency_gaps(em);
    for (marginal, gap) in [("p(y)", gaps.p_y), ("p(x1)", gaps.p_x1), ("p(x2)", gaps.p_x2)] {
        if gap > tolerance {
            return Err(Error::InconsistentData {
                marginal,
                tv_gap: gap,
                tolerance,
            });
        }
    }
    let p_y = average(&col_sums(&em.m1), &col_sums(&em.m2));
    let p_x1 = average(&row_sums(&em.m1), &row_sums(&em.m12));
    let p_x2 = average(&row_sums(&em.m2), &col_sums(&em.m12));
    PairwiseMarginals::new(
        fit_to_targets(&em.m1, &p_x1, &p_y),
        fit_to_targets(&em.m2, &p_x2, &p_y),
        fit_to_targets(&em.m12, &p_x1, &p_x2),
    )
}

/// Rows of `features*.csv`: an id column followed by `f0..fd`.
pub fn read_features<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(Error::Parse("feature table needs an id column and at least one feature".into()));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: bad feature {v:?}: {e}", line + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((record[0].to_owned(), values));
    }
    Ok(rows)
}

/// Rows of `labels*.csv`: `id,y` with integer labels.
pub fn read_labels<R: Read>(input: R) -> Result<Vec<(String, usize)>> {
    read_pairs(input)?
        .into_iter()
        .enumerate()
        .map(|(line, (id, y))| {
            y.parse::<usize>()
                .map(|y| (id, y))
                .map_err(|e| Error::Parse(format!("row {}: bad label {y:?}: {e}", line + 1)))
        })
        .collect()
}

/// Two-column rows such as `pairs.csv` (`id1,id2`).
pub fn read_pairs<R: Read>(input: R) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    if reader.headers()?.len() != 2 {
        return Err(Error::Parse("expected two columns".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push((record[0].to_owned(), record[1].to_owned()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub k: usize,
    pub pca_dim: usize,
    pub seed: u64,
    pub smoothing: f64,
    /// Largest total-variation gap between shared marginals that reconciliation accepts.
    pub tolerance: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            k: DEFAULT_K,
            pca_dim: DEFAULT_PCA_DIM,
            seed: 0,
            smoothing: 0.0,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub k: usize,
    /// Requested projection dimension.
    pub pca_dim: usize,
    /// Projection dimension actually used per modality.
    pub pca_dim_effective: (usize, usize),
    pub seed: u64,
    pub smoothing: f64,
    pub tolerance: f64,
    pub consistency_tv_gaps: ConsistencyGaps,
    pub sizes: (usize, usize, usize),
    pub inertia: (f64, f64),
}

/// The in-memory tables of one ingestion run.
pub struct IngestTables {
    pub features1: Vec<(String, Vec<f64>)>,
    pub features2: Vec<(String, Vec<f64>)>,
    pub labels1: Vec<(String, usize)>,
    pub labels2: Vec<(String, usize)>,
    pub pairs: Vec<(String, String)>,
}

impl IngestTables {
    /// Reads `features1.csv`, `features2.csv`, `labels1.csv`, `labels2.csv`
    /// and `pairs.csv` from `dir`.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let open = |name: &str| {
            let path = dir.join(name);
            std::fs::File::open(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
        };
        Ok(IngestTables {
            features1: read_features(open("features1.csv")?)?,
            features2: read_features(open("features2.csv")?)?,
            labels1: read_labels(open("labels1.csv")?)?,
            labels2: read_labels(open("labels2.csv")?)?,
            pairs: read_pairs(open("pairs.csv")?)?,
        })
    }
}

fn index_rows<'a>(rows: &'a [(String, Vec<f64>)], table: &str) -> Result<HashMap<&'a str, &'a Vec<f64>>> {
    let mut map = HashMap::with_capacity(rows.len());
    for (id, x) in rows {
        if map.insert(id.as_str(), x).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate id {id:?} in {table}")));
        }
    }
    Ok(map)
}

fn lookup<'a>(index: &HashMap<&str, &'a Vec<f64>>, id: &str, table: &str) -> Result<&'a Vec<f64>> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("id {id:?} not found in {table}")))
}

/// Fits one discretizer per modality on all of its feature rows, tabulates
/// the labeled rows and the pairs, and reconciles the result.
pub fn run_pipeline(tables: &IngestTables, opts: &IngestOptions) -> Result<(PairwiseMarginals, IngestManifest)> {
    let f1 = index_rows(&tables.features1, "features1")?;
    let f2 = index_rows(&tables.features2, "features2")?;
    let all1: Vec<Vec<f64>> = tables.features1.iter().map(|r| r.1.clone()).collect();
    let all2: Vec<Vec<f64>> = tables.features2.iter().map(|r| r.1.clone()).collect();
    let disc1 = fit_discretizer(&all1, opts.k, opts.pca_dim, opts.seed)?;
    let disc2 = fit_discretizer(&all2, opts.k, opts.pca_dim, opts.seed)?;

    let d1 = tables
        .labels1
        .iter()
        .map(|(id, y)| Ok((lookup(&f1, id, "features1")?.clone(), *y)))
        .collect::<Result<Vec<_>>>()?;
    let d2 = tables
        .labels2
        .iter()
        .map(|(id, y)| Ok((lookup(&f2, id, "features2")?.clone(), *y)))
        .collect::<Result<Vec<_>>>()?;
    let dm = tables
        .pairs
        .iter()
        .map(|(a, b)| Ok((lookup(&f1, a, "features1")?.clone(), lookup(&f2, b, "features2")?.clone())))
        .collect::<Result<Vec<_>>>()?;

    let em = build_marginals(&d1, &d2, &dm, &disc1, &disc2, opts.smoothing)?;
    let gaps = consistency_gaps(&em);
    let m = reconcile(&em, opts.tolerance)?;
    let manifest = IngestManifest {
        k: opts.k,
        pca_dim: opts.pca_dim,
        pca_dim_effective: (disc1.pca_dim(), disc2.pca_dim()),
        seed: opts.seed,
        smoothing: opts.smoothing,
        tolerance: opts.tolerance,
        consistency_tv_gaps: gaps,
        sizes: em.sizes,
        inertia: (disc1.inertia, disc2.inertia),
    };
    Ok((m, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn square() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
    }

    #[test]
    fn square_corners_split_evenly() {
        let pts = square();
        for seed in [0, 1, 2, 42] {
            let disc = fit_discretizer(&pts, 2, 2, seed).unwrap();
            let labels: Vec<usize> = pts.iter().map(|p| disc.assign(p).unwrap()).collect();
            assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 2, "seed {seed}: {labels:?}");
            assert!((disc.inertia - 1.0).abs() < 1e-12);
            assert_eq!(fit_discretizer(&pts, 2, 2, seed).unwrap(), disc);
        }
    }

    #[test]
    fn projection_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let disc = fit_discretizer(&pts, 5, 4, 0).unwrap();
        assert_eq!(disc.pca_dim(), 4);
        for (i, a) in disc.components.iter().enumerate() {
            for (j, b) in disc.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert_eq!(fit_discretizer(&pts, 5, 64, 0).unwrap().pca_dim(), 6);
    }

    #[test]
    fn degenerate_inputs_fail() {
        let same = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(fit_discretizer(&same, 2, 2, 0), Err(Error::InvalidArgument(_))));
        assert!(fit_discretizer(&square(), 1, 2, 0).is_err());
        assert!(fit_discretizer(&[], 2, 2, 0).is_err());
        assert!(fit_discretizer(&square(), 5, 2, 0).is_err());
    }

    #[test]
    fn empty_clusters_are_repaired() {
        // all initial centers on one point: the other clusters start empty
        let pts = square();
        let (centers, labels, _) = lloyd(&pts, vec![pts[0].clone(); 3]);
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        assert_eq!(used.len(), 3);
        assert_eq!(centers.len(), 3);
    }

    #[test]
    fn identity_marginal() {
        let disc = fit_discretizer(&[vec![0.0], vec![10.0]], 2, 1, 0).unwrap();
        let a = disc.assign(&[0.0]).unwrap();
        let d1 = vec![(vec![0.0], a), (vec![10.0], 1 - a)];
        let dm = vec![(vec![0.0], vec![0.0]), (vec![10.0], vec![10.0])];
        let em = build_marginals(&d1, &d1, &dm, &disc, &disc, 0.0).unwrap();
        assert_eq!(em.m1, array![[0.5, 0.0], [0.0, 0.5]]);
        assert!(build_marginals(&d1, &d1, &[], &disc, &disc, 0.0).is_err());
        let d2 = vec![(vec![0.0], 0), (vec![10.0], 0)];
        assert!(build_marginals(&d1, &d2, &dm, &disc, &disc, 0.0).is_err());
    }

    #[test]
    fn smoothing_adds_to_every_cell() {
        let em = tabulate_marginals(&[(0, 0)], &[(0, 0)], &[(0, 0)], (2, 2, 2), 1.0).unwrap();
        assert_eq!(em.m1, array![[0.4, 0.2], [0.2, 0.2]]);
        assert_eq!(em.counts1, array![[1, 0], [0, 0]]);
    }

    fn with_py(py: [f64; 2], other: [f64; 2]) -> EmpiricalMarginals {
        let m1 = array![[py[0] / 2.0, py[1] / 2.0], [py[0] / 2.0, py[1] / 2.0]];
        let m2 = array![[other[0] / 2.0, other[1] / 2.0], [other[0] / 2.0, other[1] / 2.0]];
        EmpiricalMarginals {
            m1,
            m2,
            m12: Array2::from_elem((2, 2), 0.25),
            counts1: Array2::zeros((2, 2)),
            counts2: Array2::zeros((2, 2)),
            counts12: Array2::zeros((2, 2)),
            sizes: (1, 1, 1),
            smoothing: 0.0,
        }
    }

    #[test]
    fn reconcile_fixed_point() {
        let em = with_py([0.3, 0.7], [0.3, 0.7]);
        let m = reconcile(&em, 0.05).unwrap();
        assert!(m.m1().iter().zip(em.m1.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn reconcile_averages_small_gaps() {
        let m = reconcile(&with_py([0.5, 0.5], [0.51, 0.49]), 0.05).unwrap();
        assert!(max_gap(&m.p_y(), &[0.505, 0.495]) < 1e-9);
    }

    #[test]
    fn reconcile_rejects_large_gaps() {
        match reconcile(&with_py([0.5, 0.5], [0.7, 0.3]), 0.05) {
            Err(Error::InconsistentData { marginal, tv_gap, .. }) => {
                assert_eq!(marginal, "p(y)");
                assert!((tv_gap - 0.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reconcile_handles_unobserved_rows() {
        // x1 = 1 never appears in D1 but does in DM
        let mut em = with_py([0.5, 0.5], [0.5, 0.5]);
        em.m12 = array![[0.49, 0.49], [0.01, 0.01]];
        em.m1 = array![[0.5, 0.5], [0.0, 0.0]];
        let m = reconcile(&em, 0.05).unwrap();
        assert!(m.m1()[[1, 0]] > 0.0 && m.m1()[[1, 1]] > 0.0);
    }
}
