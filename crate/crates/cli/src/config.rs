//! Run configuration: defaults, overlaid by an optional TOML file, overlaid
//! by command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use trajfuse::bspline::KnotRule;
use trajfuse::inference::SandwichMode;
use trajfuse::path::{GridSpacing, PathConfig};
use trajfuse::pipeline::{FitConfig, DEFAULT_BIC_C, SIMULATION_BIC_C};
use trajfuse::selection::SelectionCriterion;
use trajfuse::simulate::{GroupAssignment, ScenarioConfig, Separation};
use trajfuse::solver::AdmmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub input: Option<PathBuf>,
    pub id_column: String,
    pub time_column: String,
    pub value_column: String,
    /// Z-score the responses before fitting.
    pub standardize: bool,
    /// Drop subjects with fewer visits; 0 keeps everyone.
    pub min_visits: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            input: None,
            id_column: "id".into(),
            time_column: "time".into(),
            value_column: "value".into(),
            standardize: false,
            min_visits: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSection {
    pub order: usize,
    pub interior_knots: usize,
    pub knot_rule: KnotRule,
    pub domain: Option<[f64; 2]>,
}

impl Default for SplineSection {
    fn default() -> Self {
        Self {
            order: 3,
            interior_knots: 1,
            knot_rule: KnotRule::EquallySpaced,
            domain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub tau: f64,
    pub theta: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            tau: 3.0,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid_size: usize,
    pub spacing: GridSpacing,
}

impl Default for PathSection {
    fn default() -> Self {
        let p = PathConfig::default();
        Self {
            lambda_min: p.lambda_min,
            lambda_max: p.lambda_max,
            grid_size: p.grid_size,
            spacing: p.spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmSection {
    /// Absolute primal tolerance; unset means `1e-4 sqrt(n d)`.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Stop on the primal residual alone.
    pub primal_only: bool,
    pub dual_gate: f64,
    pub structured_solve: bool,
    /// Keep per-iteration residuals and write iterations.csv.
    pub record_trace: bool,
}

impl Default for AdmmSection {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_iterations: 2000,
            primal_only: false,
            dual_gate: 1.0,
            structured_solve: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    #[default]
    Bic,
    Ch,
    KnownK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub criterion: CriterionKind,
    /// BIC constant; unset means 1.5 for `fit`/`path` and 0.6 for `simulate`.
    pub bic_c: Option<f64>,
    pub k: Option<usize>,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            criterion: CriterionKind::Bic,
            bic_c: None,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub level: f64,
    pub sandwich: SandwichMode,
    pub band_points: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            level: 0.95,
            sandwich: SandwichMode::Robust,
            band_points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub groups: usize,
    pub separation: Separation,
    pub n: usize,
    pub t_points: usize,
    pub sigma: f64,
    pub rho: f64,
    pub balanced: bool,
    pub missing_fractions: Vec<f64>,
    pub missing_share: f64,
    pub assignment: GroupAssignment,
    pub reps: usize,
    pub rmse_points: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            groups: s.groups,
            separation: s.separation,
            n: s.n,
            t_points: s.t_points,
            sigma: s.sigma,
            rho: s.rho,
            balanced: s.balanced,
            missing_fractions: s.missing_fractions,
            missing_share: s.missing_share,
            assignment: s.assignment,
            reps: 10,
            rmse_points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub seed: u64,
    /// Worker threads for replications; unset means physical cores.
    pub threads: Option<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("trajfuse-out"),
            seed: ScenarioConfig::default().seed,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub spline: SplineSection,
    pub penalty: PenaltySection,
    pub path: PathSection,
    pub admm: AdmmSection,
    pub selection: SelectionSection,
    pub inference: InferenceSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn criterion(&self, default_c: f64) -> SelectionCriterion<f64> {
        match self.selection.criterion {
            CriterionKind::Bic => SelectionCriterion::Bic {
                c: self.selection.bic_c.unwrap_or(default_c),
            },
            CriterionKind::Ch => SelectionCriterion::Ch,
            // validated later against n; 0 is rejected there
            CriterionKind::KnownK => SelectionCriterion::KnownK {
                k: self.selection.k.unwrap_or(0),
            },
        }
    }

    fn fit_config(&self, default_c: f64) -> FitConfig<f64> {
        FitConfig {
            order: self.spline.order,
            interior_knots: self.spline.interior_knots,
            knot_rule: self.spline.knot_rule,
            domain: self.spline.domain.map(|[a, b]| (a, b)),
            tau: self.penalty.tau,
            theta: self.penalty.theta,
            path: PathConfig {
                lambda_min: self.path.lambda_min,
                lambda_max: self.path.lambda_max,
                grid_size: self.path.grid_size,
                spacing: self.path.spacing,
            },
            admm: AdmmConfig {
                tolerance: self.admm.tolerance,
                max_iterations: self.admm.max_iterations,
                dual_gate: if self.admm.primal_only {
                    None
                } else {
                    Some(self.admm.dual_gate)
                },
                structured_solve: self.admm.structured_solve,
                record_trace: self.admm.record_trace,
            },
            criterion: self.criterion(default_c),
            covariance: None,
            level: self.inference.level,
            sandwich: self.inference.sandwich,
            band_points: self.inference.band_points,
            ..FitConfig::default()
        }
    }

    /// Pipeline settings for `fit` and `path`.
    pub fn data_fit_config(&self) -> FitConfig<f64> {
        self.fit_config(DEFAULT_BIC_C)
    }

    /// Pipeline settings for `simulate`.
    pub fn simulation_fit_config(&self) -> FitConfig<f64> {
        self.fit_config(SIMULATION_BIC_C)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let s = &self.simulate;
        ScenarioConfig {
            groups: s.groups,
            separation: s.separation,
            n: s.n,
            t_points: s.t_points,
            sigma: s.sigma,
            rho: s.rho,
            balanced: s.balanced,
            missing_fractions: s.missing_fractions.clone(),
            missing_share: s.missing_share,
            assignment: s.assignment,
            seed: self.output.seed,
            min_visits: self.spline.order + self.spline.interior_knots + 1,
            ..ScenarioConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            [spline]
            knot_rule = "quantile"
            domain = [0.0, 2.0]
            [selection]
            criterion = "known-k"
            k = 3
            [simulate]
            separation = "middle"
            groups = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.spline.knot_rule, KnotRule::Quantile);
        assert_eq!(cfg.criterion(1.5), SelectionCriterion::KnownK { k: 3 });
        assert_eq!(cfg.scenario().separation, Separation::Middle);
        assert_eq!(cfg.data_fit_config().domain, Some((0.0, 2.0)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[penalty]\nlamda = 1.0\n").is_err());
    }

    #[test]
    fn bic_constant_depends_on_command() {
        let cfg = RunConfig::default();
        assert_eq!(
            cfg.data_fit_config().criterion,
            SelectionCriterion::Bic { c: 1.5 }
        );
        assert_eq!(
            cfg.simulation_fit_config().criterion,
            SelectionCriterion::Bic { c: 0.6 }
        );
    }
}
