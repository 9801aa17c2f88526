//! CSV formats for joints (`x1,x2,y,p`), pairwise marginals (`x1,y,p`,
//! `x2,y,p`, `x1,x2,p`) and one-variable distributions (`x,p`).
//!
//! Indices are zero-based; omitted cells have probability zero. Sizes are
//! inferred from the largest index present. Totals within
//! [`INPUT_SUM_TOLERANCE`] of one are renormalized exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::dist::{DiscreteJoint, MarginalDistribution, PairwiseMarginals};
use crate::error::{Error, Result};

pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;

/// Parsed rows: index tuple plus probability.
fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Parse(format!("expected header {:?}, found {:?}", header.join(","), found.join(","))));
    }
    let arity = header.len() - 1;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!("row {}: expected {} fields, found {}", line + 1, header.len(), record.len())));
        }
        let idx = (0..arity)
            .map(|c| {
                record[c]
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("row {}: bad index {:?}: {e}", line + 1, &record[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        let p: f64 = record[arity]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: bad probability {:?}: {e}", line + 1, &record[arity])))?;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("row {}: probability {p} out of range", line + 1)));
        }
        rows.push((idx, p));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(rows)
}

fn shape(rows: &[(Vec<usize>, f64)], arity: usize) -> Vec<usize> {
    (0..arity).map(|c| rows.iter().map(|(i, _)| i[c] + 1).max().unwrap_or(0)).collect()
}

fn normalize(values: &mut [f64]) -> Result<()> {
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > INPUT_SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Dense row-major cells of the given shape; listed cells must be unique.
fn dense(rows: &[(Vec<usize>, f64)], shape: &[usize]) -> Result<Vec<f64>> {
    let mut cells = vec![0.0; shape.iter().product()];
    let mut seen = std::collections::HashSet::new();
    for (idx, p) in rows {
        if !seen.insert(idx.clone()) {
            return Err(Error::Parse(format!("duplicate cell {idx:?}")));
        }
        let flat = idx.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i);
        cells[flat] = *p;
    }
    normalize(&mut cells)?;
    Ok(cells)
}

fn matrix_from_rows(rows: &[(Vec<usize>, f64)], dims: (usize, usize)) -> Result<Array2<f64>> {
    Ok(Array2::from_shape_vec(dims, dense(rows, &[dims.0, dims.1])?).expect("shape matches"))
}

pub fn read_joint<R: Read>(input: R) -> Result<DiscreteJoint> {
    let rows = read_rows(input, &["x1", "x2", "y", "p"])?;
    let s = shape(&rows, 3);
    DiscreteJoint::new(Array3::from_shape_vec((s[0], s[1], s[2]), dense(&rows, &s)?).expect("shape matches"))
}

/// Reads a two-variable marginal with the given column names.
pub fn read_matrix<R: Read>(input: R, names: [&str; 2]) -> Result<Array2<f64>> {
    let rows = read_rows(input, &[names[0], names[1], "p"])?;
    let s = shape(&rows, 2);
    matrix_from_rows(&rows, (s[0], s[1]))
}

pub fn read_distribution<R: Read>(input: R) -> Result<MarginalDistribution> {
    let rows = read_rows(input, &["x", "p"])?;
    let n = shape(&rows, 1)[0];
    MarginalDistribution::new(dense(&rows, &[n])?)
}

/// Reads the three marginals and pads them to common sizes, so that a value
/// whose cells are all zero in one file does not change the shape.
pub fn read_pairwise<R1: Read, R2: Read, R3: Read>(m1: R1, m2: R2, m12: R3) -> Result<PairwiseMarginals> {
    let r1 = read_rows(m1, &["x1", "y", "p"])?;
    let r2 = read_rows(m2, &["x2", "y", "p"])?;
    let r12 = read_rows(m12, &["x1", "x2", "p"])?;
    let (s1, s2, s12) = (shape(&r1, 2), shape(&r2, 2), shape(&r12, 2));
    let n1 = s1[0].max(s12[0]);
    let n2 = s2[0].max(s12[1]);
    let ny = s1[1].max(s2[1]);
    PairwiseMarginals::new(
        matrix_from_rows(&r1, (n1, ny))?,
        matrix_from_rows(&r2, (n2, ny))?,
        matrix_from_rows(&r12, (n1, n2))?,
    )
}

/// Reads `p(x1, y)` and `p(x2, y)` alone, padding both to a common `|Y|`.
pub fn read_labeled<R1: Read, R2: Read>(m1: R1, m2: R2) -> Result<(Array2<f64>, Array2<f64>)> {
    let r1 = read_rows(m1, &["x1", "y", "p"])?;
    let r2 = read_rows(m2, &["x2", "y", "p"])?;
    let (s1, s2) = (shape(&r1, 2), shape(&r2, 2));
    let ny = s1[1].max(s2[1]);
    Ok((matrix_from_rows(&r1, (s1[0], ny))?, matrix_from_rows(&r2, (s2[0], ny))?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_joint_file(path: &Path) -> Result<DiscreteJoint> {
    read_joint(open(path)?)
}

pub fn read_distribution_file(path: &Path) -> Result<MarginalDistribution> {
    read_distribution(open(path)?)
}

pub fn read_labeled_files(m1: &Path, m2: &Path) -> Result<(Array2<f64>, Array2<f64>)> {
    read_labeled(open(m1)?, open(m2)?)
}

pub fn read_pairwise_files(m1: &Path, m2: &Path, m12: &Path) -> Result<PairwiseMarginals> {
    read_pairwise(open(m1)?, open(m2)?, open(m12)?)
}

/// Writes every cell, zeros included, so the shape survives a round trip.
pub fn write_joint<W: Write>(j: &DiscreteJoint, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "y", "p"])?;
    for ((a, b, c), p) in j.mass().indexed_iter() {
        w.write_record([a.to_string(), b.to_string(), c.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(m: &Array2<f64>, names: [&str; 2], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([names[0], names[1], "p"])?;
    for ((a, b), p) in m.indexed_iter() {
        w.write_record([a.to_string(), b.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_distribution<W: Write>(d: &MarginalDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "p"])?;
    for (i, p) in d.mass().iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `m1.csv`, `m2.csv` and `m12.csv` into `dir`.
pub fn write_pairwise_dir(m: &PairwiseMarginals, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(m.m1(), ["x1", "y"], File::create(dir.join("m1.csv"))?)?;
    write_matrix(m.m2(), ["x2", "y"], File::create(dir.join("m2.csv"))?)?;
    write_matrix(m.m12(), ["x1", "x2"], File::create(dir.join("m12.csv"))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::pairwise_marginals;
    use crate::synthetic::{canonical, CanonicalName};

    #[test]
    fn joint_round_trip() {
        for name in CanonicalName::ALL {
            let j = canonical(name);
            let mut buf = Vec::new();
            write_joint(&j, &mut buf).unwrap();
            let back = read_joint(buf.as_slice()).unwrap();
            assert!(back.mass().iter().zip(j.mass()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn omitted_cells_are_zero() {
        let text = "x1,x2,y,p\n0,0,0,0.5\n1,1,1,0.5\n";
        let j = read_joint(text.as_bytes()).unwrap();
        assert_eq!(j.dims(), (2, 2, 2));
        assert_eq!(j.get(0, 1, 0), 0.0);
    }

    #[test]
    fn pairwise_round_trip() {
        let m = pairwise_marginals(&canonical(CanonicalName::DisagreementXor));
        let dir = tempfile::tempdir().unwrap();
        write_pairwise_dir(&m, dir.path()).unwrap();
        let back = read_pairwise_files(&dir.path().join("m1.csv"), &dir.path().join("m2.csv"), &dir.path().join("m12.csv")).unwrap();
        for (a, b) in [(back.m1(), m.m1()), (back.m2(), m.m2()), (back.m12(), m.m12())] {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15));
        }
    }

    #[test]
    fn pairwise_pads_missing_values() {
        // x1 = 2 never occurs in m1 but is listed with zero mass in m12
        let m1 = "x1,y,p\n0,0,0.5\n1,1,0.5\n";
        let m2 = "x2,y,p\n0,0,0.5\n1,1,0.5\n";
        let m12 = "x1,x2,p\n0,0,0.5\n1,1,0.5\n2,0,0\n";
        let m = read_pairwise(m1.as_bytes(), m2.as_bytes(), m12.as_bytes()).unwrap();
        assert_eq!(m.dims(), (3, 2, 2));
    }

    #[test]
    fn labeled_pair_pads_y() {
        let (m1, m2) = read_labeled("x1,y,p\n0,0,0.5\n1,1,0.5\n".as_bytes(), "x2,y,p\n0,0,1\n1,1,0\n".as_bytes()).unwrap();
        assert_eq!(m1.dim(), (2, 2));
        assert_eq!(m2.dim(), (2, 2));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_joint("a,b,c\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_joint("x1,x2,y,p\n0,0,zero,1\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_joint("x1,x2,y,p\n0,0,0,0.5\n0,0,0,0.5\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_joint("x1,x2,y,p\n0,0,0,0.5\n".as_bytes()), Err(Error::InvalidDistribution(_))));
        assert!(matches!(read_joint("x1,x2,y,p\n0,0,0,-0.5\n1,0,0,1.5\n".as_bytes()), Err(Error::InvalidDistribution(_))));
        assert!(matches!(read_joint("x1,x2,y,p\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn distribution_renormalizes_small_drift() {
        let d = read_distribution("x,p\n0,0.3333333\n1,0.6666667\n".as_bytes()).unwrap();
        assert!((d.mass().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
