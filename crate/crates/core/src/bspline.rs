//! Normalized B-spline bases on clamped knot vectors and per-subject design
//! matrices.
//!
//! Basis values are computed with the triangular Cox–de Boor scheme, so only
//! the `order` functions that are nonzero on the knot span containing `t` are
//! ever touched.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotRule {
    #[default]
    EquallySpaced,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig<T> {
    /// Spline order (degree + 1); quadratic splines have order 3.
    pub order: usize,
    pub interior_knots: usize,
    pub a: T,
    pub b: T,
    pub knot_rule: KnotRule,
}

impl<T: Scalar> SplineConfig<T> {
    pub fn new(order: usize, interior_knots: usize, a: T, b: T) -> Self {
        Self {
            order,
            interior_knots,
            a,
            b,
            knot_rule: KnotRule::EquallySpaced,
        }
    }

    pub fn with_rule(mut self, rule: KnotRule) -> Self {
        self.knot_rule = rule;
        self
    }

    /// Number of basis functions, `interior_knots + order`.
    pub fn dim(&self) -> usize {
        self.interior_knots + self.order
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Config(format!(
                "spline order must be at least 2, got {}",
                self.order
            )));
        }
        if !(self.a < self.b) || !self.a.is_finite_value() || !self.b.is_finite_value() {
            return Err(Error::Config(format!(
                "spline domain must satisfy a < b, got [{}, {}]",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Builds the full clamped knot vector: `order` copies of each boundary with
/// the interior knots in between.
pub fn make_knots<T: Scalar>(config: &SplineConfig<T>, times: &[T]) -> Result<Vec<T>> {
    config.validate()?;
    if times.is_empty() {
        return Err(Error::Data(
            "cannot place knots without observation times".into(),
        ));
    }
    for &t in times {
        if t < config.a || t > config.b {
            return Err(Error::Domain {
                t: t.as_f64(),
                a: config.a.as_f64(),
                b: config.b.as_f64(),
                context: String::new(),
            });
        }
    }

    let j = config.interior_knots;
    let denom = T::from_usize_lossy(j + 1);
    let interior: Vec<T> = match config.knot_rule {
        KnotRule::EquallySpaced => (1..=j)
            .map(|s| config.a + (config.b - config.a) * T::from_usize_lossy(s) / denom)
            .collect(),
        KnotRule::Quantile => {
            let mut sorted = times.to_vec();
            sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite times"));
            let mut out = Vec::with_capacity(j);
            let mut prev = config.a;
            for s in 1..=j {
                let p = s as f64 / (j + 1) as f64;
                let value = empirical_quantile(&sorted, p);
                if value <= prev || value >= config.b {
                    return Err(Error::DuplicateKnot {
                        quantile: p,
                        value: value.as_f64(),
                    });
                }
                out.push(value);
                prev = value;
            }
            out
        }
    };

    let mut knots = Vec::with_capacity(j + 2 * config.order);
    knots.extend(std::iter::repeat_n(config.a, config.order));
    knots.extend(interior);
    knots.extend(std::iter::repeat_n(config.b, config.order));
    Ok(knots)
}

/// Linear-interpolation quantile of sorted data.
fn empirical_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Evaluates all `knots.len() - q` basis functions at `t`.
pub fn eval_basis<T: Scalar>(knots: &[T], q: usize, t: T) -> Result<DVector<T>> {
    let dim = knots
        .len()
        .checked_sub(q)
        .filter(|&d| d >= q)
        .ok_or_else(|| {
            Error::Config(format!(
                "knot vector of length {} too short for order {q}",
                knots.len()
            ))
        })?;
    let mut out = DVector::zeros(dim);
    let mut work = vec![T::zero(); 3 * q];
    let first = eval_nonzero(knots, q, t, &mut work)?;
    for (r, v) in work[..q].iter().enumerate() {
        out[first + r] = *v;
    }
    Ok(out)
}

/// Writes the `q` possibly-nonzero basis values at `t` into `work[..q]` and
/// returns the index of the first one. `work` must hold at least `3q` scalars.
fn eval_nonzero<T: Scalar>(knots: &[T], q: usize, t: T, work: &mut [T]) -> Result<usize> {
    let a = knots[0];
    let b = knots[knots.len() - 1];
    if !(t >= a && t <= b) {
        return Err(Error::Domain {
            t: t.as_f64(),
            a: a.as_f64(),
            b: b.as_f64(),
            context: String::new(),
        });
    }
    let dim = knots.len() - q;
    let p = q - 1;
    // span s with knots[s] <= t < knots[s+1]; the right boundary belongs to the last span
    let span = (knots.partition_point(|&k| k <= t) - 1).min(dim - 1);

    let (n, rest) = work.split_at_mut(q);
    let (left, right) = rest.split_at_mut(q);
    n[0] = T::one();
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = T::zero();
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    Ok(span - p)
}

/// An immutable B-spline basis: configuration plus its clamped knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    config: SplineConfig<T>,
    knots: Vec<T>,
}

impl<T: Scalar> SplineBasis<T> {
    pub fn new(config: SplineConfig<T>, times: &[T]) -> Result<Self> {
        let knots = make_knots(&config, times)?;
        Ok(Self { config, knots })
    }

    pub fn config(&self) -> &SplineConfig<T> {
        &self.config
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.config.order..self.knots.len() - self.config.order]
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn domain(&self) -> (T, T) {
        (self.config.a, self.config.b)
    }

    pub fn eval(&self, t: T) -> Result<DVector<T>> {
        eval_basis(&self.knots, self.config.order, t)
    }

    /// Evaluates `sum_l coef_l B_l(t)`.
    pub fn eval_curve(&self, coef: &[T], t: T) -> Result<T> {
        let q = self.config.order;
        let mut work = vec![T::zero(); 3 * q];
        let first = eval_nonzero(&self.knots, q, t, &mut work)?;
        Ok(work[..q]
            .iter()
            .zip(&coef[first..first + q])
            .fold(T::zero(), |acc, (b, c)| acc + *b * *c))
    }

    /// Ratio of the largest to the smallest gap between consecutive distinct
    /// knots (boundary knots included).
    pub fn mesh_ratio(&self) -> T {
        let mut breaks = vec![self.config.a];
        breaks.extend_from_slice(self.interior_knots());
        breaks.push(self.config.b);
        let gaps: Vec<T> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
        let max = gaps.iter().copied().fold(T::zero(), T::max);
        let min = gaps.iter().copied().fold(gaps[0], T::min);
        max / min
    }
}

/// Per-subject basis matrices `X_i`, row `j` holding `B(t_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T: Scalar> {
    blocks: Vec<DMatrix<T>>,
    dim: usize,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn from_blocks(blocks: Vec<DMatrix<T>>, dim: usize) -> Result<Self> {
        if let Some(bad) = blocks.iter().position(|x| x.ncols() != dim) {
            return Err(Error::Config(format!(
                "block {bad} has {} columns, expected {dim}",
                blocks[bad].ncols()
            )));
        }
        Ok(Self { blocks, dim })
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<T> {
        &self.blocks[i]
    }

    pub fn n_subjects(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(|x| x.nrows()).sum()
    }

    /// Dense block-diagonal `X`. Only sensible for small problems.
    pub fn stacked(&self) -> DMatrix<T> {
        let rows = self.total_rows();
        let mut x = DMatrix::zeros(rows, self.dim * self.blocks.len());
        let mut r0 = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            x.view_mut((r0, i * self.dim), (b.nrows(), self.dim))
                .copy_from(b);
            r0 += b.nrows();
        }
        x
    }
}

pub fn design_matrix<T: Scalar>(
    basis: &SplineBasis<T>,
    dataset: &LongitudinalDataset<T>,
) -> Result<DesignMatrix<T>> {
    let d = basis.dim();
    let q = basis.order();
    let mut work = vec![T::zero(); 3 * q];
    let mut blocks = Vec::with_capacity(dataset.n_subjects());
    for subject in dataset.subjects() {
        let mut x = DMatrix::zeros(subject.times.len(), d);
        for (j, &t) in subject.times.iter().enumerate() {
            let first = eval_nonzero(basis.knots(), q, t, &mut work).map_err(|e| match e {
                Error::Domain { t, a, b, .. } => Error::Domain {
                    t,
                    a,
                    b,
                    context: format!(" (subject {}, observation {j})", subject.id),
                },
                other => other,
            })?;
            for r in 0..q {
                x[(j, first + r)] = work[r];
            }
        }
        blocks.push(x);
    }
    DesignMatrix::from_blocks(blocks, d)
}
