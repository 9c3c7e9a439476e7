//! Pointwise sandwich standard errors and confidence bands for refit group
//! curves, conditional on the estimated membership.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bspline::{DesignMatrix, SplineBasis};
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::path::ClusterResult;
use crate::scalar::Scalar;

/// How the unknown true covariance is plugged into the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SandwichMode {
    /// `Sigma_i = e_i e_i^T` from refit residuals.
    #[default]
    Robust,
    /// `Sigma_i = V_i`, giving the model-based variance.
    ModelBased,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand<T> {
    pub group: usize,
    pub level: T,
    pub times: Vec<T>,
    pub estimate: Vec<T>,
    pub se: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// `z` with `P(Z <= z) = p` for a standard normal.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Coefficient covariance stored as `F F^T`, so quadratic forms are sums of
/// squares and never negative.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCovariance<T: Scalar> {
    factor: DMatrix<T>,
}

impl<T: Scalar> CoefficientCovariance<T> {
    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    pub fn matrix(&self) -> DMatrix<T> {
        &self.factor * self.factor.transpose()
    }

    /// `b^T Cov b`
    pub fn quadratic_form(&self, b: &DVector<T>) -> T {
        (self.factor.transpose() * b).norm_squared()
    }
}

/// Square root of a symmetric PSD matrix's spectrum: `S` with `S S^T = A`,
/// negative eigenvalues from rounding set to zero.
fn psd_factor<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let sym = (a + a.transpose()) / T::lit(2.0);
    let eig = sym.symmetric_eigen();
    let mut s = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let w = lam.max(T::zero()).sqrt();
        s.column_mut(j).scale_mut(w);
    }
    s
}

/// `(X^T V^-1 X)^-1 (X^T V^-1 Sigma V^-1 X) (X^T V^-1 X)^-1` over the given
/// subject blocks. `sigmas = None` uses `Sigma = V`.
pub fn coefficient_covariance<T: Scalar>(
    xs: &[&DMatrix<T>],
    vs: &[&DMatrix<T>],
    sigmas: Option<&[DMatrix<T>]>,
) -> Result<CoefficientCovariance<T>> {
    let d = xs
        .first()
        .map(|x| x.ncols())
        .ok_or_else(|| Error::Data("empty group".into()))?;
    if vs.len() != xs.len() || sigmas.is_some_and(|s| s.len() != xs.len()) {
        return Err(Error::Config(
            "one covariance block per design block required".into(),
        ));
    }
    let mut bread = DMatrix::<T>::zeros(d, d);
    let mut xt_vinvs = Vec::with_capacity(xs.len());
    for (idx, (x, v)) in xs.iter().zip(vs).enumerate() {
        let xt_vinv = (*v)
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("working covariance block {idx}")))?
            .solve(*x)
            .transpose();
        bread += &xt_vinv * *x;
        xt_vinvs.push(xt_vinv);
    }
    let chol = bread
        .cholesky()
        .ok_or_else(|| Error::Singular("sandwich bread matrix X^T V^-1 X".into()))?;
    let factor = match sigmas {
        // bread^-1 = L^-T L^-1
        None => {
            let l_inv = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| Error::Singular("sandwich bread matrix X^T V^-1 X".into()))?;
            l_inv.transpose()
        }
        Some(s) => {
            let blocks: Vec<DMatrix<T>> = xt_vinvs
                .iter()
                .zip(s)
                .map(|(xv, sig)| chol.solve(&(xv * psd_factor(sig))))
                .collect();
            let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
            let mut f = DMatrix::zeros(d, cols);
            let mut c0 = 0;
            for b in blocks {
                f.columns_mut(c0, b.ncols()).copy_from(&b);
                c0 += b.ncols();
            }
            f
        }
    };
    Ok(CoefficientCovariance { factor })
}

/// `B(t)^T Cov B(t)`
pub fn pointwise_variance<T: Scalar>(
    cov: &CoefficientCovariance<T>,
    basis_at_t: &DVector<T>,
) -> Result<T> {
    if basis_at_t.len() != cov.factor.nrows() {
        return Err(Error::Config(format!(
            "basis vector has length {}, covariance is {}x{}",
            basis_at_t.len(),
            cov.factor.nrows(),
            cov.factor.nrows()
        )));
    }
    Ok(cov.quadratic_form(basis_at_t))
}

/// Sandwich variance of the group curve at one basis vector.
pub fn sandwich_variance<T: Scalar>(
    xs: &[&DMatrix<T>],
    vs: &[&DMatrix<T>],
    sigmas: Option<&[DMatrix<T>]>,
    basis_at_t: &DVector<T>,
) -> Result<T> {
    pointwise_variance(&coefficient_covariance(xs, vs, sigmas)?, basis_at_t)
}

/// Pointwise `estimate +/- z_{(1+level)/2} se` bands on `grid`, one per group.
pub fn confidence_band<T: Scalar>(
    result: &ClusterResult<T>,
    basis: &SplineBasis<T>,
    design: &DesignMatrix<T>,
    v: &[DMatrix<T>],
    dataset: &LongitudinalDataset<T>,
    level: T,
    grid: &[T],
    mode: SandwichMode,
) -> Result<Vec<ConfidenceBand<T>>> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = T::lit(normal_quantile((1.0 + level.as_f64()) / 2.0));
    let basis_grid = grid
        .iter()
        .map(|&t| basis.eval(t))
        .collect::<Result<Vec<_>>>()?;

    let mut bands = Vec::with_capacity(result.k_hat);
    for k in 0..result.k_hat {
        let members = result.group_members(k);
        let xs: Vec<&DMatrix<T>> = members.iter().map(|&i| design.block(i)).collect();
        let vs: Vec<&DMatrix<T>> = members.iter().map(|&i| &v[i]).collect();
        let coef = DVector::from_row_slice(&result.group_coefficients(k));
        let sigmas: Option<Vec<DMatrix<T>>> = match mode {
            SandwichMode::ModelBased => None,
            SandwichMode::Robust => Some(
                members
                    .iter()
                    .map(|&i| {
                        let e = DVector::from_column_slice(&dataset.subjects()[i].values)
                            - design.block(i) * &coef;
                        &e * e.transpose()
                    })
                    .collect(),
            ),
        };
        let cov = coefficient_covariance(&xs, &vs, sigmas.as_deref())?;

        let mut band = ConfidenceBand {
            group: k,
            level,
            times: grid.to_vec(),
            estimate: Vec::with_capacity(grid.len()),
            se: Vec::with_capacity(grid.len()),
            lower: Vec::with_capacity(grid.len()),
            upper: Vec::with_capacity(grid.len()),
        };
        for b in &basis_grid {
            let est = b.dot(&coef);
            let se = pointwise_variance(&cov, b)?.sqrt();
            band.estimate.push(est);
            band.se.push(se);
            band.lower.push(est - z * se);
            band.upper.push(est + z * se);
        }
        bands.push(band);
    }
    Ok(bands)
}
