//! Tuning-parameter selection along a solution path: modified BIC,
//! Calinski–Harabasz index on the initial estimates, or a known group count.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::DesignMatrix;
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::path::SolutionPoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SelectionCriterion<T> {
    /// Minimize BIC with `C_n = c log(log(n d))`.
    Bic { c: T },
    /// Maximize the Calinski–Harabasz index.
    Ch,
    /// Smallest lambda whose estimate has exactly `k` groups.
    KnownK { k: usize },
}

impl<T: Scalar> SelectionCriterion<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            SelectionCriterion::Bic { c } if !(c > T::zero()) => Err(Error::Config(format!(
                "BIC constant c must be positive, got {c}"
            ))),
            SelectionCriterion::KnownK { k } if k == 0 || k > n => Err(Error::Config(format!(
                "known K must lie in [1, {n}], got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Precomputed inverse correlation blocks for repeated BIC evaluation.
pub struct BicContext<T: Scalar> {
    xs: Vec<DMatrix<T>>,
    ys: Vec<DVector<T>>,
    r_inv: Vec<DMatrix<T>>,
    d: usize,
    total_obs: usize,
}

impl<T: Scalar> BicContext<T> {
    pub fn new(
        design: &DesignMatrix<T>,
        r_blocks: &[DMatrix<T>],
        dataset: &LongitudinalDataset<T>,
    ) -> Result<Self> {
        let r_inv = r_blocks
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
                    Error::NotPositiveDefinite(format!("correlation block of subject {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            xs: design.blocks().to_vec(),
            ys: dataset
                .subjects()
                .iter()
                .map(|s| DVector::from_column_slice(&s.values))
                .collect(),
            r_inv,
            d: design.dim(),
            total_obs: dataset.n_observations(),
        })
    }

    /// `log[sum_i r_i^T R_i^-1 r_i / N] + C_n (log N / N) K d`
    pub fn score(&self, gamma: &[T], k_hat: usize, c: T) -> Result<T> {
        let d = self.d;
        let n = self.xs.len();
        let mut quad = T::zero();
        for i in 0..n {
            let g = DVector::from_column_slice(&gamma[i * d..(i + 1) * d]);
            let r = &self.ys[i] - &self.xs[i] * g;
            quad += r.dot(&(&self.r_inv[i] * &r));
        }
        if !(quad > T::zero()) {
            return Err(Error::Degenerate(
                "BIC residual sum is zero; the fit interpolates the data".into(),
            ));
        }
        let big_n = T::from_usize_lossy(self.total_obs);
        let cn = c * T::from_usize_lossy(n * d).ln().ln();
        Ok((quad / big_n).ln() + cn * big_n.ln() / big_n * T::from_usize_lossy(k_hat * d))
    }
}

pub fn bic_score<T: Scalar>(
    design: &DesignMatrix<T>,
    r_blocks: &[DMatrix<T>],
    dataset: &LongitudinalDataset<T>,
    gamma: &[T],
    k_hat: usize,
    c: T,
) -> Result<T> {
    BicContext::new(design, r_blocks, dataset)?.score(gamma, k_hat, c)
}

/// Calinski–Harabasz value; `Unbounded` when the within-group scatter is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChValue<T> {
    Finite(T),
    Unbounded,
}

impl<T: Scalar> ChValue<T> {
    pub fn as_f64(&self) -> f64 {
        match self {
            ChValue::Finite(v) => v.as_f64(),
            ChValue::Unbounded => f64::INFINITY,
        }
    }
}

/// `[B/(K-1)] / [W/(n-K)]` with B, W the between/within sums of squared
/// distances of the rows of `points` about group and global centroids.
pub fn ch_score<T: Scalar>(
    points: &DMatrix<T>,
    membership: &[usize],
    k_hat: usize,
) -> Result<ChValue<T>> {
    let n = points.nrows();
    if membership.len() != n {
        return Err(Error::PartitionMismatch(membership.len(), n));
    }
    if k_hat < 2 {
        return Err(Error::Selection(
            "Calinski-Harabasz index undefined for a single group".into(),
        ));
    }
    if k_hat >= n {
        // W = 0 with n - K = 0 degrees of freedom
        return Ok(ChValue::Unbounded);
    }
    let d = points.ncols();
    let mut centroids = DMatrix::<T>::zeros(k_hat, d);
    let mut sizes = vec![0usize; k_hat];
    for (i, &g) in membership.iter().enumerate() {
        if g >= k_hat {
            return Err(Error::Config(format!(
                "label {g} out of range for {k_hat} groups"
            )));
        }
        let row = points.row(i).into_owned();
        let mut c = centroids.row_mut(g);
        c += row;
        sizes[g] += 1;
    }
    for g in 0..k_hat {
        if sizes[g] == 0 {
            return Err(Error::Config(format!("group {g} is empty")));
        }
        let s = T::from_usize_lossy(sizes[g]);
        centroids.row_mut(g).iter_mut().for_each(|x| *x /= s);
    }
    let global = points.row_mean();
    let mut between = T::zero();
    for g in 0..k_hat {
        let diff = centroids.row(g) - &global;
        between += T::from_usize_lossy(sizes[g]) * diff.norm_squared();
    }
    let mut within = T::zero();
    for (i, &g) in membership.iter().enumerate() {
        within += (points.row(i) - centroids.row(g)).norm_squared();
    }
    if within == T::zero() {
        return Ok(ChValue::Unbounded);
    }
    let k = T::from_usize_lossy(k_hat);
    let nn = T::from_usize_lossy(n);
    Ok(ChValue::Finite(
        (between / (k - T::one())) / (within / (nn - k)),
    ))
}

/// Criterion values for one path point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathScore<T> {
    pub bic: Option<T>,
    pub ch: Option<ChValue<T>>,
}

/// BIC of the fused fit and CH of `gamma0` under each point's membership.
pub fn score_path<T: Scalar>(
    path: &[SolutionPoint<T>],
    bic: &BicContext<T>,
    gamma0: &DMatrix<T>,
    c: T,
) -> Vec<PathScore<T>> {
    path.iter()
        .map(|p| PathScore {
            bic: bic.score(&p.state.gamma, p.k_hat, c).ok(),
            ch: if p.k_hat >= 2 {
                ch_score(gamma0, &p.membership, p.k_hat).ok()
            } else {
                None
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub index: usize,
    /// Other qualifying indices (KnownK mode) in increasing lambda order.
    pub alternatives: Vec<usize>,
    /// Points skipped because ADMM hit its iteration cap.
    pub excluded_nonconverged: Vec<usize>,
}

/// Picks a path point. Ties go to the smaller lambda; non-converged points
/// are skipped. CH ignores `K = n` points, whose index is `0/0`.
pub fn select_lambda<T: Scalar>(
    path: &[SolutionPoint<T>],
    scores: &[PathScore<T>],
    criterion: &SelectionCriterion<T>,
) -> Result<Selection> {
    if path.is_empty() {
        return Err(Error::Selection("empty solution path".into()));
    }
    if scores.len() != path.len() {
        return Err(Error::Config("one score per path point required".into()));
    }
    criterion.validate(path[0].state.n)?;
    let excluded: Vec<usize> = (0..path.len()).filter(|&i| !path[i].converged()).collect();
    let usable = |i: &usize| path[*i].converged();

    let mut order: Vec<usize> = (0..path.len()).collect();
    order.sort_by(|&a, &b| {
        path[a]
            .lambda
            .partial_cmp(&path[b].lambda)
            .expect("finite lambda")
    });

    let pick = |key: &dyn Fn(usize) -> Option<f64>, minimize: bool| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &i in order.iter().filter(|i| usable(i)) {
            if let Some(v) = key(i) {
                let better = match best {
                    None => true,
                    Some((_, b)) => {
                        if minimize {
                            v < b
                        } else {
                            v > b
                        }
                    }
                };
                if better {
                    best = Some((i, v));
                }
            }
        }
        best.map(|b| b.0)
    };

    let index = match *criterion {
        SelectionCriterion::Bic { .. } => pick(&|i| scores[i].bic.map(|b| b.as_f64()), true)
            .ok_or_else(|| Error::Selection("no converged path point has a finite BIC".into()))?,
        SelectionCriterion::Ch => {
            let n = path[0].state.n;
            pick(
                &|i| {
                    if path[i].k_hat >= 2 && path[i].k_hat < n {
                        scores[i].ch.map(|c| c.as_f64())
                    } else {
                        None
                    }
                },
                false,
            )
            .ok_or_else(|| {
                Error::Selection("no converged path point has 2 <= K < n groups".into())
            })?
        }
        SelectionCriterion::KnownK { k } => {
            let hits: Vec<usize> = order
                .iter()
                .copied()
                .filter(|i| usable(i) && path[*i].k_hat == k)
                .collect();
            match hits.split_first() {
                Some((&first, rest)) => {
                    return Ok(Selection {
                        index: first,
                        alternatives: rest.to_vec(),
                        excluded_nonconverged: excluded,
                    })
                }
                None => {
                    let mut seen: Vec<usize> = path.iter().map(|p| p.k_hat).collect();
                    seen.sort_unstable();
                    seen.dedup();
                    return Err(Error::Selection(format!(
                        "no path point with K = {k}; attained K values: {seen:?}"
                    )));
                }
            }
        }
    };
    Ok(Selection {
        index,
        alternatives: Vec::new(),
        excluded_nonconverged: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::AdmmState;
    use proptest::prelude::*;

    fn point(lambda: f64, k: usize, n: usize, converged: bool) -> SolutionPoint<f64> {
        let mut state = AdmmState::from_gamma(vec![0.0; n], n, 1).unwrap();
        state.converged = converged;
        SolutionPoint {
            lambda,
            state,
            k_hat: k,
            membership: (0..n).map(|i| i % k).collect(),
        }
    }

    fn scored(bic: &[f64]) -> Vec<PathScore<f64>> {
        bic.iter()
            .map(|&b| PathScore {
                bic: Some(b),
                ch: None,
            })
            .collect()
    }

    #[test]
    fn ch_one_dimensional_example() {
        let pts = DMatrix::from_column_slice(4, 1, &[0.0f64, 1.0, 10.0, 11.0]);
        match ch_score(&pts, &[0, 0, 1, 1], 2).unwrap() {
            ChValue::Finite(v) => assert!((v - 200.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ch_degenerate_cases() {
        let pts = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 5.0, 5.0]);
        assert_eq!(
            ch_score(&pts, &[0, 0, 1, 1], 2).unwrap(),
            ChValue::Unbounded
        );
        assert!(ch_score(&pts, &[0, 0, 0, 0], 1).is_err());
        assert_eq!(
            ch_score(&pts, &[0, 1, 2, 3], 4).unwrap(),
            ChValue::Unbounded
        );
    }

    #[test]
    fn ch_random_split_is_small() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let blob = DMatrix::from_fn(200, 3, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let random = ch_score(&blob, &labels, 2).unwrap().as_f64();
        let mut sep = blob.clone();
        for i in (1..200).step_by(2) {
            sep[(i, 0)] += 10.0;
        }
        let separated = ch_score(&sep, &labels, 2).unwrap().as_f64();
        assert!(
            random < 15.0 && separated > 100.0 * random,
            "{random} {separated}"
        );
    }

    #[test]
    fn bic_direct_formula() {
        use crate::bspline::DesignMatrix;
        use crate::data::SubjectRecord;
        let x0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
        let x1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let design = DesignMatrix::from_blocks(vec![x0, x1], 2).unwrap();
        let ds = LongitudinalDataset::from_subjects(vec![
            SubjectRecord::new("a", vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0]),
            SubjectRecord::new("b", vec![0.0, 1.0], vec![0.5, -1.0]),
        ])
        .unwrap();
        let r0 = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.09, 0.3, 1.0, 0.3, 0.09, 0.3, 1.0]);
        let r1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let gamma = [1.0, 3.0, 0.0, -0.5];
        let got = bic_score(&design, &[r0.clone(), r1.clone()], &ds, &gamma, 2, 0.6).unwrap();

        // residuals: a = (0, 0, 1), b = (0.5, -0.5)
        let ra = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let rb = DVector::from_vec(vec![0.5, -0.5]);
        let q =
            ra.dot(&(r0.try_inverse().unwrap() * &ra)) + rb.dot(&(r1.try_inverse().unwrap() * &rb));
        let n_obs = 5.0f64;
        let expect = (q / n_obs).ln() + 0.6 * (4.0f64).ln().ln() * n_obs.ln() / n_obs * 4.0;
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn bic_zero_residual_errors() {
        use crate::bspline::DesignMatrix;
        use crate::data::SubjectRecord;
        let design = DesignMatrix::from_blocks(vec![DMatrix::identity(2, 2)], 2).unwrap();
        let ds = LongitudinalDataset::from_subjects(vec![SubjectRecord::new(
            "a",
            vec![0.0, 1.0],
            vec![1.0, 2.0],
        )])
        .unwrap();
        let r = vec![DMatrix::identity(2, 2)];
        assert!(bic_score(&design, &r, &ds, &[1.0, 2.0], 1, 0.6).is_err());
    }

    #[test]
    fn bic_mode_picks_minimum_with_ties_to_small_lambda() {
        let path: Vec<_> = (0..4)
            .map(|k| point(0.1 * (k + 1) as f64, 4 - k, 4, true))
            .collect();
        let sel = select_lambda(
            &path,
            &scored(&[3.0, 1.0, 2.0, 5.0]),
            &SelectionCriterion::Bic { c: 0.6 },
        )
        .unwrap();
        assert_eq!(sel.index, 1);
        let sel = select_lambda(
            &path,
            &scored(&[3.0, 1.0, 1.0, 5.0]),
            &SelectionCriterion::Bic { c: 0.6 },
        )
        .unwrap();
        assert_eq!(sel.index, 1);
    }

    #[test]
    fn nonconverged_points_are_skipped() {
        let mut path: Vec<_> = (0..3)
            .map(|k| point(0.1 * (k + 1) as f64, 3 - k, 3, true))
            .collect();
        path[0].state.converged = false;
        let sel = select_lambda(
            &path,
            &scored(&[0.0, 1.0, 2.0]),
            &SelectionCriterion::Bic { c: 0.6 },
        )
        .unwrap();
        assert_eq!(sel.index, 1);
        assert_eq!(sel.excluded_nonconverged, vec![0]);
    }

    #[test]
    fn known_k_mode() {
        let ks = [6, 4, 3, 3, 3, 1];
        let path: Vec<_> = ks
            .iter()
            .enumerate()
            .map(|(i, &k)| point(0.1 * (i + 1) as f64, k, 6, true))
            .collect();
        let scores = scored(&[0.0; 6]);
        let sel = select_lambda(&path, &scores, &SelectionCriterion::KnownK { k: 3 }).unwrap();
        assert_eq!(sel.index, 2);
        assert_eq!(sel.alternatives, vec![3, 4]);
        let err = select_lambda(&path, &scores, &SelectionCriterion::KnownK { k: 2 }).unwrap_err();
        assert!(err.to_string().contains("[1, 3, 4, 6]"), "{err}");
    }

    #[test]
    fn ch_mode_requires_two_groups() {
        let path = vec![point(0.1, 1, 4, true), point(0.2, 1, 4, true)];
        let scores = vec![
            PathScore {
                bic: None,
                ch: None
            };
            2
        ];
        assert!(select_lambda(&path, &scores, &SelectionCriterion::Ch).is_err());
    }

    proptest! {
        #[test]
        fn ch_invariant_to_similarity_transforms(
            pts in prop::collection::vec(-5.0f64..5.0, 24),
            shift in prop::collection::vec(-10.0f64..10.0, 2),
            angle in 0.0f64..std::f64::consts::TAU, scale in 0.1f64..10.0
        ) {
            let m = DMatrix::from_row_slice(12, 2, &pts);
            let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
            let base = ch_score(&m, &labels, 3).unwrap().as_f64();
            let rot = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
            let mut moved = &m * rot.transpose() * scale;
            for mut row in moved.row_iter_mut() {
                row[0] += shift[0];
                row[1] += shift[1];
            }
            let other = ch_score(&moved, &labels, 3).unwrap().as_f64();
            prop_assert!((base - other).abs() <= 1e-8 * base.abs().max(1.0));
        }

        #[test]
        fn bic_increases_with_groups(k in 1usize..10) {
            use crate::bspline::DesignMatrix;
            use crate::data::SubjectRecord;
            // n d = 3 keeps log(log(n d)) positive
            let design = DesignMatrix::from_blocks(vec![DMatrix::identity(4, 3)], 3).unwrap();
            let ds = LongitudinalDataset::from_subjects(vec![SubjectRecord::new("a", vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0])]).unwrap();
            let r = vec![DMatrix::identity(4, 4)];
            let ctx = BicContext::new(&design, &r, &ds).unwrap();
            let g = [0.5, 1.0, 2.0];
            prop_assert!(ctx.score(&g, k + 1, 0.6).unwrap() > ctx.score(&g, k, 0.6).unwrap());
        }
    }
}
