//! Agreement between partitions (Rand index, NMI, matched accuracy) and curve
//! recovery error.

use std::collections::HashMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Assignment of `n` items to groups `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabels arbitrary group ids to `0..k` in order of first appearance.
    pub fn new(raw: &[usize]) -> Self {
        let mut map = HashMap::new();
        let labels = raw
            .iter()
            .map(|g| {
                let next = map.len();
                *map.entry(*g).or_insert(next)
            })
            .collect();
        Self {
            labels,
            k: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.labels.iter().for_each(|&g| s[g] += 1);
        s
    }
}

fn contingency(p: &Partition, q: &Partition) -> Result<Vec<Vec<u64>>> {
    if p.len() != q.len() {
        return Err(Error::PartitionMismatch(p.len(), q.len()));
    }
    let mut table = vec![vec![0u64; q.n_groups()]; p.n_groups()];
    for (&a, &b) in p.labels.iter().zip(&q.labels) {
        table[a][b] += 1;
    }
    Ok(table)
}

fn choose2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

/// Fraction of item pairs on which the two partitions agree.
pub fn rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    let table = contingency(p, q)?;
    let n = p.len() as u64;
    if n < 2 {
        return Err(Error::Data("Rand index needs at least two items".into()));
    }
    let total = choose2(n);
    let both: u64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: u64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: u64 = (0..q.n_groups())
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    // pairs together in both + pairs apart in both
    let agree = total + 2 * both - rows - cols;
    Ok(agree as f64 / total as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `I(p; q) / sqrt(H(p) H(q))` in nats. Two single-group partitions score 1;
/// exactly one single-group partition scores 0.
pub fn nmi(p: &Partition, q: &Partition) -> Result<f64> {
    let table = contingency(p, q)?;
    let n = p.len() as f64;
    if p.is_empty() {
        return Err(Error::Data("NMI of empty partitions".into()));
    }
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..q.n_groups())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let hp = entropy(rows.iter().copied(), n);
    let hq = entropy(cols.iter().copied(), n);
    if hp == 0.0 && hq == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || hq == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * hq).sqrt()).clamp(0.0, 1.0))
}

/// Largest fraction of items correctly labelled under a one-to-one matching
/// of estimated groups to true groups.
pub fn accuracy(estimated: &Partition, truth: &Partition) -> Result<f64> {
    let table = contingency(estimated, truth)?;
    if estimated.is_empty() {
        return Err(Error::Data("accuracy of empty partitions".into()));
    }
    let (r, c) = (estimated.n_groups(), truth.n_groups());
    // kuhn_munkres needs rows <= columns
    let weights = if r <= c {
        Matrix::from_fn(r, c, |(i, j)| table[i][j] as i64)
    } else {
        Matrix::from_fn(c, r, |(j, i)| table[i][j] as i64)
    };
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / estimated.len() as f64)
}

/// Optimal matching of estimated to true labels (`None` for
/// unmatched estimated groups).
pub fn match_labels(estimated: &Partition, truth: &Partition) -> Result<Vec<Option<usize>>> {
    let table = contingency(estimated, truth)?;
    let (r, c) = (estimated.n_groups(), truth.n_groups());
    let mut out = vec![None; r];
    if r <= c {
        let w = Matrix::from_fn(r, c, |(i, j)| table[i][j] as i64);
        let (_, assign) = kuhn_munkres(&w);
        for (i, j) in assign.into_iter().enumerate() {
            out[i] = Some(j);
        }
    } else {
        let w = Matrix::from_fn(c, r, |(j, i)| table[i][j] as i64);
        let (_, assign) = kuhn_munkres(&w);
        for (j, i) in assign.into_iter().enumerate() {
            out[i] = Some(j);
        }
    }
    Ok(out)
}

/// `sqrt(mean_h (a_hat(t_h) - a(t_h))^2)`
pub fn rmse_curve<T: Scalar>(
    estimate: impl Fn(T) -> T,
    truth: impl Fn(T) -> T,
    grid: &[T],
) -> Result<T> {
    if grid.is_empty() {
        return Err(Error::Config("RMSE grid is empty".into()));
    }
    let ss = grid.iter().fold(T::zero(), |acc, &t| {
        let e = estimate(t) - truth(t);
        acc + e * e
    });
    Ok((ss / T::from_usize_lossy(grid.len())).sqrt())
}

/// `h` equally spaced points on `[a, b]`, endpoints included.
pub fn uniform_grid<T: Scalar>(a: T, b: T, h: usize) -> Vec<T> {
    if h == 1 {
        return vec![a];
    }
    let last = T::from_usize_lossy(h - 1);
    (0..h)
        .map(|k| {
            if k + 1 == h {
                b
            } else {
                a + (b - a) * T::from_usize_lossy(k) / last
            }
        })
        .collect()
}
