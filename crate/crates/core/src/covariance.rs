//! Working covariance `V_i(t, s) = sigma^2 rho^(kappa |t - s|)` estimated from
//! leverage-corrected within-subject OLS residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::DesignMatrix;
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Residual variance floor; keeps `V_i` invertible on near-noiseless data.
pub const SIGMA2_FLOOR: f64 = 1e-8;
pub const RHO_MAX: f64 = 0.99;
/// Default relative tolerance for "scaled distance equals 1".
pub const ADJACENCY_TOL: f64 = 1e-6;
const LEVERAGE_LIMIT: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingCovariance<T> {
    pub sigma2: T,
    pub rho: T,
    pub kappa: T,
}

impl<T: Scalar> WorkingCovariance<T> {
    pub fn new(sigma2: T, rho: T, kappa: T) -> Result<Self> {
        let wc = Self { sigma2, rho, kappa };
        wc.validate()?;
        Ok(wc)
    }

    pub fn independence(sigma2: T) -> Self {
        Self {
            sigma2,
            rho: T::zero(),
            kappa: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > T::zero()) {
            return Err(Error::Config(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.rho > -T::one() && self.rho < T::one()) {
            return Err(Error::Config(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.kappa > T::zero()) {
            return Err(Error::Config(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Working correlation between two observation times.
    pub fn correlation(&self, t: T, s: T) -> T {
        let lag = self.kappa * (t - s).abs();
        if lag == T::zero() {
            T::one()
        } else {
            self.rho.powf(lag)
        }
    }
}

/// Per-subject leverage-corrected OLS residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet<T> {
    /// `e*_ij = e_ij / (1 - h_ij)`
    pub modified: Vec<Vec<T>>,
    pub raw: Vec<Vec<T>>,
    pub leverages: Vec<Vec<T>>,
}

impl<T: Scalar> ResidualSet<T> {
    pub fn from_modified(modified: Vec<Vec<T>>) -> Self {
        let raw = modified.clone();
        let leverages = modified.iter().map(|r| vec![T::zero(); r.len()]).collect();
        Self {
            modified,
            raw,
            leverages,
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.modified.len()
    }
}

pub fn ols_residuals<T: Scalar>(
    design: &DesignMatrix<T>,
    dataset: &LongitudinalDataset<T>,
) -> Result<ResidualSet<T>> {
    let d = design.dim();
    let n = dataset.n_subjects();
    let mut out = ResidualSet {
        modified: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        leverages: Vec::with_capacity(n),
    };
    for (x, subject) in design.blocks().iter().zip(dataset.subjects()) {
        let m = x.nrows();
        if m <= d {
            return Err(Error::TooFewObservations {
                subject: subject.id.clone(),
                m,
                d,
            });
        }
        let chol = (x.transpose() * x)
            .cholesky()
            .ok_or_else(|| Error::RankDeficient {
                subject: subject.id.clone(),
            })?;
        let y = DVector::from_column_slice(&subject.values);
        let coef = chol.solve(&(x.transpose() * &y));
        let resid = &y - x * coef;
        // h_j = x_j^T (X^T X)^{-1} x_j
        let xt_inv = chol.solve(&x.transpose());
        let mut modified = Vec::with_capacity(m);
        let mut lev = Vec::with_capacity(m);
        for j in 0..m {
            let h = x.row(j).dot(&xt_inv.column(j).transpose());
            if h.as_f64() >= LEVERAGE_LIMIT {
                return Err(Error::SaturatedFit {
                    subject: subject.id.clone(),
                    obs: j,
                    leverage: h.as_f64(),
                });
            }
            modified.push(resid[j] / (T::one() - h));
            lev.push(h);
        }
        out.raw.push(resid.iter().copied().collect());
        out.modified.push(modified);
        out.leverages.push(lev);
    }
    Ok(out)
}

/// Mean over subjects of `(1/m_i) sum_j e*_ij^2`.
pub fn estimate_sigma2<T: Scalar>(residuals: &ResidualSet<T>) -> T {
    let per: Vec<T> = residuals
        .modified
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| r.iter().fold(T::zero(), |a, &e| a + e * e) / T::from_usize_lossy(r.len()))
        .collect();
    if per.is_empty() {
        return T::zero();
    }
    per.iter().fold(T::zero(), |a, &s| a + s) / T::from_usize_lossy(per.len())
}

/// `1 / |t_(1) - t_(2)|` from the two smallest distinct pooled times.
pub fn kappa_from_times<T: Scalar>(dataset: &LongitudinalDataset<T>) -> Result<T> {
    let t = dataset.distinct_times();
    if t.len() < 2 {
        return Err(Error::Degenerate(
            "need at least two distinct time points to scale the AR(1) lag".into(),
        ));
    }
    Ok(T::one() / (t[1] - t[0]))
}

/// Averages `e*_ij e*_i,j+1 / sigma2` over consecutive observations whose
/// scaled gap is 1 within `tol`, clamped to `[0, 0.99]`.
pub fn estimate_rho<T: Scalar>(
    residuals: &ResidualSet<T>,
    dataset: &LongitudinalDataset<T>,
    sigma2: T,
    kappa: T,
    tol: T,
) -> Result<T> {
    let mut sum = T::zero();
    let mut count = 0usize;
    for (r, subject) in residuals.modified.iter().zip(dataset.subjects()) {
        for j in 1..subject.times.len() {
            let scaled = kappa * (subject.times[j] - subject.times[j - 1]);
            if (scaled - T::one()).abs() <= tol {
                sum += r[j - 1] * r[j];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoAdjacentPairs {
            kappa: kappa.as_f64(),
            tol: tol.as_f64(),
        });
    }
    if !(sigma2 > T::zero()) {
        return Ok(T::zero());
    }
    let rho = sum / (T::from_usize_lossy(count) * sigma2);
    Ok(rho.max(T::zero()).min(T::lit(RHO_MAX)))
}

/// Full estimation: OLS residuals, then `sigma2` (floored), `kappa`, `rho`.
pub fn estimate_working_covariance<T: Scalar>(
    design: &DesignMatrix<T>,
    dataset: &LongitudinalDataset<T>,
    tol: T,
) -> Result<WorkingCovariance<T>> {
    let residuals = ols_residuals(design, dataset)?;
    let sigma2 = estimate_sigma2(&residuals).max(T::lit(SIGMA2_FLOOR));
    let kappa = kappa_from_times(dataset)?;
    let rho = estimate_rho(&residuals, dataset, sigma2, kappa, tol)?;
    WorkingCovariance::new(sigma2, rho, kappa)
}

/// Correlation block `R_i` for one subject's times.
pub fn correlation_matrix<T: Scalar>(times: &[T], wc: &WorkingCovariance<T>) -> DMatrix<T> {
    let m = times.len();
    DMatrix::from_fn(m, m, |j, k| wc.correlation(times[j], times[k]))
}

/// Per-subject working covariances `V_i = sigma2 R_i`, each verified by Cholesky.
pub fn build_v<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    wc: &WorkingCovariance<T>,
) -> Result<Vec<DMatrix<T>>> {
    wc.validate()?;
    dataset
        .subjects()
        .iter()
        .map(|s| {
            let mut v = correlation_matrix(&s.times, wc) * wc.sigma2;
            if v.clone().cholesky().is_none() {
                let jitter = wc.sigma2 * T::lit(1e-10);
                for j in 0..v.nrows() {
                    v[(j, j)] += jitter;
                }
                if v.clone().cholesky().is_none() {
                    return Err(Error::NotPositiveDefinite(format!(
                        "working covariance of subject {}",
                        s.id
                    )));
                }
            }
            Ok(v)
        })
        .collect()
}

pub fn correlation_blocks<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    wc: &WorkingCovariance<T>,
) -> Vec<DMatrix<T>> {
    dataset
        .subjects()
        .iter()
        .map(|s| correlation_matrix(&s.times, wc))
        .collect()
}
