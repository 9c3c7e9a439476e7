//! Minimax concave penalty and the groupwise thresholding used by the
//! pairwise-difference update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fusion penalty family. Only MCP is provided; the enum leaves room for more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    #[default]
    Mcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig<T> {
    pub kind: Penalty,
    pub lambda: T,
    /// Concavity; must exceed `1 / theta`.
    pub tau: T,
    /// ADMM augmentation parameter.
    pub theta: T,
}

impl<T: Scalar> PenaltyConfig<T> {
    pub fn mcp(lambda: T, tau: T, theta: T) -> Result<Self> {
        let cfg = Self {
            kind: Penalty::Mcp,
            lambda,
            tau,
            theta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tau > T::one()) {
            return Err(Error::Config(format!(
                "tau must exceed 1, got {}",
                self.tau
            )));
        }
        if !(self.theta > T::zero()) {
            return Err(Error::Config(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !(self.tau * self.theta > T::one()) {
            return Err(Error::Config(format!(
                "MCP update needs tau * theta > 1, got tau = {}, theta = {}",
                self.tau, self.theta
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: T) -> T {
        match self.kind {
            Penalty::Mcp => mcp_value(t, self.lambda, self.tau),
        }
    }
}

impl Default for PenaltyConfig<f64> {
    fn default() -> Self {
        Self {
            kind: Penalty::Mcp,
            lambda: 0.0,
            tau: 3.0,
            theta: 1.0,
        }
    }
}

/// `lambda * int_0^|t| (1 - x / (tau lambda))_+ dx`
pub fn mcp_value<T: Scalar>(t: T, lambda: T, tau: T) -> T {
    let t = t.abs();
    let knee = tau * lambda;
    if t <= knee {
        lambda * t - t * t / (T::lit(2.0) * tau)
    } else {
        knee * lambda / T::lit(2.0)
    }
}

/// `S(z, t) = (1 - t / ||z||)_+ z`, written into `out`.
pub fn group_soft_threshold_into<T: Scalar>(z: &[T], t: T, out: &mut [T]) {
    let norm = norm2(z);
    if norm <= t || norm == T::zero() {
        out.iter_mut().for_each(|o| *o = T::zero());
    } else {
        let factor = T::one() - t / norm;
        for (o, &v) in out.iter_mut().zip(z) {
            *o = factor * v;
        }
    }
}

pub fn group_soft_threshold<T: Scalar>(z: &[T], t: T) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    group_soft_threshold_into(z, t, &mut out);
    out
}

/// Minimizer of `(theta/2) ||zeta - delta||^2 + p(||delta||, lambda)`, written
/// into `out`. The `||zeta|| <= tau lambda` knife edge takes the thresholded branch.
pub fn mcp_delta_update_into<T: Scalar>(zeta: &[T], cfg: &PenaltyConfig<T>, out: &mut [T]) {
    let norm = norm2(zeta);
    if norm > cfg.tau * cfg.lambda {
        out.copy_from_slice(zeta);
        return;
    }
    let shrink = T::one() - T::one() / (cfg.tau * cfg.theta);
    let cut = cfg.lambda / cfg.theta;
    if norm <= cut {
        out.iter_mut().for_each(|o| *o = T::zero());
    } else {
        let factor = (T::one() - cut / norm) / shrink;
        for (o, &v) in out.iter_mut().zip(zeta) {
            *o = factor * v;
        }
    }
}

pub fn mcp_delta_update<T: Scalar>(zeta: &[T], cfg: &PenaltyConfig<T>) -> Result<Vec<T>> {
    cfg.validate()?;
    let mut out = vec![T::zero(); zeta.len()];
    mcp_delta_update_into(zeta, cfg, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    fn mcp_by_quadrature(t: f64, lambda: f64, tau: f64) -> f64 {
        // split at the kink so Simpson integrates smooth pieces
        let knee = (tau * lambda).min(t);
        let g = |x: f64| lambda * (1.0 - x / (tau * lambda)).max(0.0);
        simpson(g, 0.0, knee, 2000)
            + if t > knee {
                simpson(g, knee, t, 2000)
            } else {
                0.0
            }
    }

    fn prox_objective(zeta: &[f64], delta: &[f64], cfg: &PenaltyConfig<f64>) -> f64 {
        let diff: f64 = zeta.iter().zip(delta).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * cfg.theta * diff + cfg.value(norm2(delta))
    }

    /// Minimum of the prox objective over `delta = s zeta/||zeta||`, s on a grid in [0, ||zeta||].
    fn radial_grid_min(zeta: &[f64], cfg: &PenaltyConfig<f64>, points: usize) -> (f64, f64) {
        let nz = norm2(zeta);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=points {
            let s = nz * k as f64 / points as f64;
            let delta: Vec<f64> = zeta
                .iter()
                .map(|z| if nz > 0.0 { z * s / nz } else { 0.0 })
                .collect();
            let g = prox_objective(zeta, &delta, cfg);
            if g < best.0 {
                best = (g, s);
            }
        }
        best
    }

    #[test]
    fn mcp_values() {
        assert_eq!(mcp_value(0.0f64, 1.0, 3.0), 0.0);
        assert!((mcp_value(1.0, 1.0, 3.0) - mcp_by_quadrature(1.0, 1.0, 3.0)).abs() < 1e-12);
        assert!((mcp_value(1.0f64, 1.0, 3.0) - 5.0 / 6.0).abs() < 1e-15);
        for t in [3.0, 3.5, 10.0] {
            assert_eq!(mcp_value(t, 1.0, 3.0), 1.5);
            assert!((mcp_by_quadrature(t, 1.0, 3.0) - 1.5).abs() < 1e-12);
        }
        assert!((mcp_value(0.7, 0.4, 2.2) - mcp_by_quadrature(0.7, 0.4, 2.2)).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(group_soft_threshold(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        let s = group_soft_threshold(&[3.0f64, 4.0], 2.5);
        assert!((s[0] - 1.5).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
        assert_eq!(group_soft_threshold(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
        assert_eq!(group_soft_threshold(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn delta_update_branches_match_grid_minimizer() {
        let cfg = PenaltyConfig::mcp(1.0, 3.0, 1.0).unwrap();
        for (zeta, expect) in [
            ([3.0, 4.0], [3.0f64, 4.0]),
            ([0.6, 0.8], [0.0, 0.0]),
            ([1.2, 1.6], [0.9, 1.2]),
        ] {
            let got = mcp_delta_update(&zeta, &cfg).unwrap();
            assert!((got[0] - expect[0]).abs() < 1e-12 && (got[1] - expect[1]).abs() < 1e-12);
            let (gmin, smin) = radial_grid_min(&zeta, &cfg, 200_000);
            assert!(prox_objective(&zeta, &got, &cfg) <= gmin + 1e-9);
            assert!((norm2(&got) - smin).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_small_tau_theta() {
        assert!(PenaltyConfig::mcp(1.0, 1.5, 0.5).is_err());
        assert!(PenaltyConfig::mcp(1.0, 0.9, 5.0).is_err());
        assert!(PenaltyConfig::mcp(-1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn zero_lambda_is_identity() {
        let cfg = PenaltyConfig::mcp(0.0, 3.0, 1.0).unwrap();
        let z = [0.3, -1e-6, 2.0];
        assert_eq!(mcp_delta_update(&z, &cfg).unwrap(), z.to_vec());
    }

    #[test]
    fn continuous_at_knee() {
        let cfg = PenaltyConfig::mcp(0.8, 3.0, 1.0).unwrap();
        let dir = [0.6, -0.8];
        let at = |r: f64| mcp_delta_update(&[dir[0] * r, dir[1] * r], &cfg).unwrap();
        let lo = at(2.4 - 1e-9);
        let hi = at(2.4 + 1e-9);
        assert!(norm2(&[lo[0] - hi[0], lo[1] - hi[1]]) < 1e-6);
    }

    proptest! {
        #[test]
        fn mcp_nondecreasing_concave_below_lasso(
            lambda in 0.01f64..5.0, tau in 1.01f64..10.0, a in 0.0f64..20.0, b in 0.0f64..20.0
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(mcp_value(lo, lambda, tau) <= mcp_value(hi, lambda, tau) + 1e-12);
            prop_assert!(mcp_value(a, lambda, tau) <= lambda * a + 1e-12);
            let mid = 0.5 * (lo + hi);
            let chord = 0.5 * (mcp_value(lo, lambda, tau) + mcp_value(hi, lambda, tau));
            prop_assert!(mcp_value(mid, lambda, tau) >= chord - 1e-12);
        }

        #[test]
        fn prox_is_radial_minimizer(
            z in prop::collection::vec(-4.0f64..4.0, 1..5),
            lambda in 0.0f64..3.0, theta in 0.2f64..4.0, slack in 0.05f64..5.0
        ) {
            let tau = (1.0 + slack) / theta;
            prop_assume!(tau > 1.0);
            let cfg = PenaltyConfig::mcp(lambda, tau, theta).unwrap();
            let got = mcp_delta_update(&z, &cfg).unwrap();
            let (gmin, _) = radial_grid_min(&z, &cfg, 20_000);
            prop_assert!(prox_objective(&z, &got, &cfg) <= gmin + 1e-8);
        }
    }
}
