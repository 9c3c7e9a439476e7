//! Initial estimates, warm-started solution paths over a lambda grid, group
//! extraction from exact-zero pair differences, and group refits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::{DesignMatrix, SplineBasis};
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::penalty::PenaltyConfig;
use crate::scalar::Scalar;
use crate::solver::{AdmmConfig, AdmmState, FusionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig<T> {
    pub lambda_min: T,
    pub lambda_max: T,
    pub grid_size: usize,
    pub spacing: GridSpacing,
}

impl Default for PathConfig<f64> {
    fn default() -> Self {
        Self {
            lambda_min: 0.05,
            lambda_max: 2.0,
            grid_size: 40,
            spacing: GridSpacing::Log,
        }
    }
}

impl<T: Scalar> PathConfig<T> {
    pub fn new(
        lambda_min: T,
        lambda_max: T,
        grid_size: usize,
        spacing: GridSpacing,
    ) -> Result<Self> {
        let cfg = Self {
            lambda_min,
            lambda_max,
            grid_size,
            spacing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min >= T::zero() && self.lambda_min < self.lambda_max) {
            return Err(Error::Config(format!(
                "lambda grid needs 0 <= lambda_min < lambda_max, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("lambda grid needs at least 2 points".into()));
        }
        if self.spacing == GridSpacing::Log && self.lambda_min == T::zero() {
            return Err(Error::Config("log-spaced grid needs lambda_min > 0".into()));
        }
        Ok(())
    }

    /// Increasing grid from `lambda_min` to `lambda_max` inclusive.
    pub fn grid(&self) -> Vec<T> {
        let last = T::from_usize_lossy(self.grid_size - 1);
        (0..self.grid_size)
            .map(|k| {
                let f = T::from_usize_lossy(k) / last;
                if k == 0 {
                    return self.lambda_min;
                }
                if k + 1 == self.grid_size {
                    return self.lambda_max;
                }
                match self.spacing {
                    GridSpacing::Linear => {
                        self.lambda_min + (self.lambda_max - self.lambda_min) * f
                    }
                    GridSpacing::Log => {
                        let (lo, hi) = (self.lambda_min.ln(), self.lambda_max.ln());
                        (lo + (hi - lo) * f).exp()
                    }
                }
            })
            .collect()
    }
}

/// Fused fit at one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPoint<T> {
    pub lambda: T,
    pub state: AdmmState<T>,
    pub k_hat: usize,
    /// Group labels `0..k_hat`, numbered by smallest member index.
    pub membership: Vec<usize>,
}

impl<T: Scalar> SolutionPoint<T> {
    pub fn converged(&self) -> bool {
        self.state.converged
    }

    pub fn gamma_hat(&self) -> DMatrix<T> {
        self.state.gamma_matrix()
    }
}

/// Per-subject OLS `gamma_i^0`, `delta^0 = A gamma^0`, `upsilon^0 = 0`.
pub fn initial_estimates<T: Scalar>(
    design: &DesignMatrix<T>,
    dataset: &LongitudinalDataset<T>,
) -> Result<AdmmState<T>> {
    let d = design.dim();
    let n = design.n_subjects();
    let mut gamma = Vec::with_capacity(n * d);
    for (x, s) in design.blocks().iter().zip(dataset.subjects()) {
        if x.nrows() < d {
            return Err(Error::TooFewObservations {
                subject: s.id.clone(),
                m: x.nrows(),
                d,
            });
        }
        let y = DVector::from_column_slice(&s.values);
        let coef = (x.transpose() * x)
            .cholesky()
            .ok_or_else(|| Error::RankDeficient {
                subject: s.id.clone(),
            })?
            .solve(&(x.transpose() * y));
        gamma.extend(coef.iter().copied());
    }
    AdmmState::from_gamma(gamma, n, d)
}

/// Connected components of the graph whose edges are the pairs with
/// `delta_ij` exactly zero. Labels are ordered by smallest member index.
pub fn extract_groups<T: Scalar>(state: &AdmmState<T>) -> (usize, Vec<usize>) {
    let n = state.n;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (p, (i, j)) in state.pairs().iter().enumerate() {
        if state.delta_block(p).iter().all(|v| *v == T::zero()) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut k = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = k;
            k += 1;
        }
        labels[i] = label_of_root[r];
    }
    (k, labels)
}

/// Warm-started path: the first grid value starts from `init`, every later
/// one from the previous solution.
pub fn solve_path<T: Scalar>(
    problem: &FusionProblem<T>,
    path_cfg: &PathConfig<T>,
    penalty: &PenaltyConfig<T>,
    admm_cfg: &AdmmConfig<T>,
    init: AdmmState<T>,
) -> Result<Vec<SolutionPoint<T>>> {
    path_cfg.validate()?;
    let mut points = Vec::with_capacity(path_cfg.grid_size);
    let mut current = init;
    for lambda in path_cfg.grid() {
        let pen = penalty.with_lambda(lambda);
        let state = problem.run(&pen, admm_cfg, current)?;
        let (k_hat, membership) = extract_groups(&state);
        current = state.clone();
        points.push(SolutionPoint {
            lambda,
            state,
            k_hat,
            membership,
        });
    }
    Ok(points)
}

/// Refit group curves: pooled GLS within each estimated group.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult<T: Scalar> {
    pub lambda: Option<T>,
    pub k_hat: usize,
    pub membership: Vec<usize>,
    /// Row k holds the refit coefficients of group k.
    pub theta: DMatrix<T>,
}

impl<T: Scalar> ClusterResult<T> {
    pub fn group_members(&self, k: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&i| self.membership[i] == k)
            .collect()
    }

    pub fn group_coefficients(&self, k: usize) -> Vec<T> {
        self.theta.row(k).iter().copied().collect()
    }

    /// Fitted group curve `B(t)^T theta_k`.
    pub fn curve(&self, basis: &SplineBasis<T>, k: usize, t: T) -> Result<T> {
        basis.eval_curve(&self.group_coefficients(k), t)
    }

    pub fn curve_fn<'a>(
        &'a self,
        basis: &'a SplineBasis<T>,
        k: usize,
    ) -> impl Fn(T) -> Result<T> + 'a {
        let coef = self.group_coefficients(k);
        move |t| basis.eval_curve(&coef, t)
    }
}

/// Checks labels are `0..k` with every label used; returns `k`.
pub fn validate_membership(membership: &[usize]) -> Result<usize> {
    let k = membership.iter().max().map_or(0, |m| m + 1);
    let mut used = vec![false; k];
    membership.iter().for_each(|&g| used[g] = true);
    if let Some(missing) = used.iter().position(|u| !u) {
        return Err(Error::Config(format!(
            "membership labels skip group {missing}"
        )));
    }
    Ok(k)
}

/// `theta_k = (sum X_i^T V_i^-1 X_i)^-1 sum X_i^T V_i^-1 Y_i` over `i` in group k.
pub fn refit_groups<T: Scalar>(
    design: &DesignMatrix<T>,
    v: &[DMatrix<T>],
    dataset: &LongitudinalDataset<T>,
    membership: &[usize],
) -> Result<ClusterResult<T>> {
    let n = design.n_subjects();
    if membership.len() != n || v.len() != n || dataset.n_subjects() != n {
        return Err(Error::Config(format!(
            "membership has {} entries for {n} subjects",
            membership.len()
        )));
    }
    let k = validate_membership(membership)?;
    let d = design.dim();
    let mut bread = vec![DMatrix::<T>::zeros(d, d); k];
    let mut score = vec![DVector::<T>::zeros(d); k];
    let mut rows = vec![0usize; k];
    for i in 0..n {
        let g = membership[i];
        let x = design.block(i);
        let vinv = v[i]
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::NotPositiveDefinite(format!("working covariance of subject {i}"))
            })?
            .inverse();
        let xt_vinv = x.transpose() * vinv;
        bread[g] += &xt_vinv * x;
        score[g] += xt_vinv * DVector::from_column_slice(&dataset.subjects()[i].values);
        rows[g] += x.nrows();
    }
    let mut theta = DMatrix::zeros(k, d);
    for g in 0..k {
        if rows[g] < d {
            return Err(Error::GroupTooSmall {
                group: g,
                rows: rows[g],
                d,
            });
        }
        let coef = bread[g]
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("pooled GLS system of group {g}")))?
            .solve(&score[g]);
        theta.row_mut(g).copy_from(&coef.transpose());
    }
    Ok(ClusterResult {
        lambda: None,
        k_hat: k,
        membership: membership.to_vec(),
        theta,
    })
}
