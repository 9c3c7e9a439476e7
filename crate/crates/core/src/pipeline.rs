//! End-to-end fit: basis, working covariance, initial estimates, lambda
//! path, selection, refit and confidence bands.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bspline::{design_matrix, DesignMatrix, KnotRule, SplineBasis, SplineConfig};
use crate::covariance::{
    build_v, correlation_blocks, estimate_working_covariance, WorkingCovariance, ADJACENCY_TOL,
};
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::inference::{confidence_band, ConfidenceBand, SandwichMode};
use crate::metrics::uniform_grid;
use crate::path::{
    initial_estimates, refit_groups, solve_path, ClusterResult, GridSpacing, PathConfig,
    SolutionPoint,
};
use crate::penalty::PenaltyConfig;
use crate::scalar::Scalar;
use crate::selection::{
    score_path, select_lambda, BicContext, PathScore, Selection, SelectionCriterion,
};
use crate::solver::{AdmmConfig, AdmmState, FusionProblem};

/// BIC constant used for data analyses and for reporting BIC when another
/// criterion drives selection.
pub const DEFAULT_BIC_C: f64 = 1.5;
/// BIC constant used in the simulation designs.
pub const SIMULATION_BIC_C: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig<T> {
    pub order: usize,
    pub interior_knots: usize,
    pub knot_rule: KnotRule,
    /// Spline domain; `None` uses the pooled time range.
    pub domain: Option<(T, T)>,
    pub tau: T,
    pub theta: T,
    pub path: PathConfig<T>,
    pub admm: AdmmConfig<T>,
    pub criterion: SelectionCriterion<T>,
    pub adjacency_tol: T,
    /// Skip estimation and use this working covariance.
    pub covariance: Option<WorkingCovariance<T>>,
    pub level: T,
    pub sandwich: SandwichMode,
    /// Number of evaluation points for the bands.
    pub band_points: usize,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            order: 3,
            interior_knots: 1,
            knot_rule: KnotRule::EquallySpaced,
            domain: None,
            tau: T::lit(3.0),
            theta: T::one(),
            path: PathConfig {
                lambda_min: T::lit(0.05),
                lambda_max: T::lit(2.0),
                grid_size: 40,
                spacing: GridSpacing::Log,
            },
            admm: AdmmConfig::default(),
            criterion: SelectionCriterion::Bic {
                c: T::lit(DEFAULT_BIC_C),
            },
            adjacency_tol: T::lit(ADJACENCY_TOL),
            covariance: None,
            level: T::lit(0.95),
            sandwich: SandwichMode::Robust,
            band_points: 100,
        }
    }
}

impl<T: Scalar> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        self.admm.validate()?;
        PenaltyConfig::mcp(self.path.lambda_min, self.tau, self.theta)?;
        if !(self.level > T::zero() && self.level < T::one()) {
            return Err(Error::Config(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.band_points == 0 {
            return Err(Error::Config("band_points must be at least 1".into()));
        }
        if let Some(wc) = &self.covariance {
            wc.validate()?;
        }
        Ok(())
    }

    pub fn spline(&self, dataset: &LongitudinalDataset<T>) -> Result<SplineConfig<T>> {
        let (a, b) = match self.domain {
            Some(ab) => ab,
            None => dataset
                .time_range()
                .ok_or_else(|| Error::Data("dataset has no observations".into()))?,
        };
        let cfg =
            SplineConfig::new(self.order, self.interior_knots, a, b).with_rule(self.knot_rule);
        cfg.validate()?;
        Ok(cfg)
    }

    /// BIC constant used when scoring the path.
    pub fn bic_c(&self) -> T {
        match self.criterion {
            SelectionCriterion::Bic { c } => c,
            _ => T::lit(DEFAULT_BIC_C),
        }
    }
}

/// Everything needed before the path is solved.
#[derive(Debug, Clone)]
pub struct Prepared<T: Scalar> {
    pub basis: SplineBasis<T>,
    pub design: DesignMatrix<T>,
    pub covariance: WorkingCovariance<T>,
    pub v: Vec<DMatrix<T>>,
    pub initial: AdmmState<T>,
}

pub fn prepare<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    cfg: &FitConfig<T>,
) -> Result<Prepared<T>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("dataset has no subjects".into()));
    }
    let basis = SplineBasis::new(cfg.spline(dataset)?, &dataset.pooled_times())?;
    let design = design_matrix(&basis, dataset)?;
    let covariance = match cfg.covariance {
        Some(wc) => wc,
        None => estimate_working_covariance(&design, dataset, cfg.adjacency_tol)?,
    };
    let v = build_v(dataset, &covariance)?;
    let initial = initial_estimates(&design, dataset)?;
    Ok(Prepared {
        basis,
        design,
        covariance,
        v,
        initial,
    })
}

/// Path fit without selection or inference.
#[derive(Debug, Clone)]
pub struct PathOutput<T: Scalar> {
    pub prepared: Prepared<T>,
    pub points: Vec<SolutionPoint<T>>,
    pub scores: Vec<PathScore<T>>,
}

pub fn fit_path<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    cfg: &FitConfig<T>,
) -> Result<PathOutput<T>> {
    let prepared = prepare(dataset, cfg)?;
    let problem = FusionProblem::new(
        &prepared.design,
        dataset,
        &prepared.v,
        cfg.theta,
        cfg.admm.structured_solve,
    )?;
    let penalty = PenaltyConfig::mcp(cfg.path.lambda_min, cfg.tau, cfg.theta)?;
    let points = solve_path(
        &problem,
        &cfg.path,
        &penalty,
        &cfg.admm,
        prepared.initial.clone(),
    )?;
    let bic = BicContext::new(
        &prepared.design,
        &correlation_blocks(dataset, &prepared.covariance),
        dataset,
    )?;
    let scores = score_path(&points, &bic, &prepared.initial.gamma_matrix(), cfg.bic_c());
    for (p, s) in points.iter().zip(&scores) {
        log::debug!(
            "lambda {} k_hat {} iterations {} converged {} bic {:?}",
            p.lambda,
            p.k_hat,
            p.state.iterations,
            p.converged(),
            s.bic.map(|b| b.as_f64())
        );
    }
    Ok(PathOutput {
        prepared,
        points,
        scores,
    })
}

#[derive(Debug, Clone)]
pub struct FitOutput<T: Scalar> {
    pub config: FitConfig<T>,
    pub path: PathOutput<T>,
    pub selection: Selection,
    pub clusters: ClusterResult<T>,
    pub bands: Vec<ConfidenceBand<T>>,
}

impl<T: Scalar> FitOutput<T> {
    pub fn basis(&self) -> &SplineBasis<T> {
        &self.path.prepared.basis
    }

    pub fn covariance(&self) -> &WorkingCovariance<T> {
        &self.path.prepared.covariance
    }

    pub fn selected(&self) -> &SolutionPoint<T> {
        &self.path.points[self.selection.index]
    }

    pub fn k_hat(&self) -> usize {
        self.clusters.k_hat
    }

    pub fn lambda(&self) -> T {
        self.selected().lambda
    }
}

/// Refit and bands for a given membership on a prepared problem.
pub fn refit_with_bands<T: Scalar>(
    prepared: &Prepared<T>,
    dataset: &LongitudinalDataset<T>,
    membership: &[usize],
    cfg: &FitConfig<T>,
) -> Result<(ClusterResult<T>, Vec<ConfidenceBand<T>>)> {
    let clusters = refit_groups(&prepared.design, &prepared.v, dataset, membership)?;
    let (a, b) = prepared.basis.domain();
    let grid = uniform_grid(a, b, cfg.band_points);
    let bands = confidence_band(
        &clusters,
        &prepared.basis,
        &prepared.design,
        &prepared.v,
        dataset,
        cfg.level,
        &grid,
        cfg.sandwich,
    )?;
    Ok((clusters, bands))
}

pub fn fit<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    cfg: &FitConfig<T>,
) -> Result<FitOutput<T>> {
    let path = fit_path(dataset, cfg)?;
    let selection = select_lambda(&path.points, &path.scores, &cfg.criterion)?;
    if !selection.excluded_nonconverged.is_empty() {
        log::warn!(
            "{} path points hit the iteration cap and were excluded from selection",
            selection.excluded_nonconverged.len()
        );
    }
    let chosen = &path.points[selection.index];
    let (mut clusters, bands) = refit_with_bands(&path.prepared, dataset, &chosen.membership, cfg)?;
    clusters.lambda = Some(chosen.lambda);
    Ok(FitOutput {
        config: *cfg,
        path,
        selection,
        clusters,
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_groups(n: usize, noise: f64, seed: u64) -> LongitudinalDataset<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..12).map(|j| 1.2 * j as f64 / 11.0).collect();
        let subjects = (0..n)
            .map(|i| {
                let y = t
                    .iter()
                    .map(|&t| {
                        let mean = if i % 2 == 0 {
                            -0.5 * t * t + 1.25 * t
                        } else {
                            -2.5 * t * t + 6.25 * t
                        };
                        mean + noise
                            * <StandardNormal as Distribution<f64>>::sample(
                                &StandardNormal,
                                &mut rng,
                            )
                    })
                    .collect();
                SubjectRecord::new(format!("s{i}"), t.clone(), y)
            })
            .collect();
        LongitudinalDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn recovers_two_separated_groups() {
        let ds = two_groups(16, 0.5, 3);
        let cfg = FitConfig {
            criterion: SelectionCriterion::Bic {
                c: SIMULATION_BIC_C,
            },
            ..FitConfig::default()
        };
        let out = fit(&ds, &cfg).unwrap();
        assert_eq!(out.k_hat(), 2);
        for i in 0..16 {
            assert_eq!(out.clusters.membership[i], i % 2);
        }
        assert_eq!(out.bands.len(), 2);
        assert_eq!(out.bands[0].times.len(), 100);
        assert!(out.lambda() > 0.0);
    }

    #[test]
    fn fixed_covariance_is_used_verbatim() {
        let ds = two_groups(6, 0.2, 4);
        let wc = WorkingCovariance::new(0.04, 0.0, 1.0).unwrap();
        let cfg = FitConfig {
            covariance: Some(wc),
            ..FitConfig::default()
        };
        let prep = prepare(&ds, &cfg).unwrap();
        assert_eq!(prep.covariance, wc);
        assert_eq!(prep.v[0][(0, 1)], 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let ds = two_groups(4, 0.2, 5);
        let cfg = FitConfig::<f64> {
            level: 1.5,
            ..FitConfig::default()
        };
        assert!(matches!(fit(&ds, &cfg), Err(Error::Config(_))));
        let cfg = FitConfig::<f64> {
            tau: 0.5,
            ..FitConfig::default()
        };
        assert!(fit(&ds, &cfg).is_err());
    }

    #[test]
    fn f32_fit_runs() {
        let ds: LongitudinalDataset<f32> = LongitudinalDataset::from_f64(&two_groups(8, 0.1, 6));
        let cfg = FitConfig::<f32> {
            admm: AdmmConfig {
                tolerance: Some(1e-3),
                ..AdmmConfig::default()
            },
            ..FitConfig::default()
        };
        let out = fit(&ds, &cfg).unwrap();
        assert!(out.k_hat() >= 1 && out.k_hat() <= 8);
    }
}
