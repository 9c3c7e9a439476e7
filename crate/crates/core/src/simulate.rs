//! Synthetic two- and three-group designs with AR(1) errors, and replicated
//! experiments over them.
//!
//! Each replication draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `replication index`, so results do not depend on thread scheduling.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, LongitudinalDataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, match_labels, nmi, rand_index, rmse_curve, uniform_grid, Partition,
};
use crate::pipeline::{fit, prepare, refit_with_bands, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Separation {
    Close,
    Middle,
    Far,
}

/// `a t^2 + b t + c`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }
}

/// Group mean curves for a design with `groups` (2 or 3) subgroups.
pub fn true_functions(groups: usize, separation: Separation) -> Result<Vec<Quadratic>> {
    use Separation::*;
    let q = Quadratic::new;
    Ok(match (groups, separation) {
        (2, Close) => vec![q(-0.5, 1.25, 0.0), q(-1.0, 2.5, 0.0)],
        (2, Middle) => vec![q(-0.5, 1.25, 0.0), q(-1.3, 3.25, 0.0)],
        (2, Far) => vec![q(-0.5, 1.25, 0.0), q(-2.5, 6.25, 0.0)],
        (3, Close) => vec![q(-0.6, 1.5, 0.0), q(-1.3, 3.25, 0.2), q(-2.2, 5.5, 0.1)],
        (3, Middle) => vec![q(-0.4, 1.0, 0.0), q(-1.3, 3.25, 0.2), q(-2.4, 6.0, 0.1)],
        (3, Far) => vec![q(-0.3, 0.75, 0.0), q(-4.0, 10.0, 0.2), q(-8.5, 21.25, 0.3)],
        (g, _) => {
            return Err(Error::Config(format!(
                "designs exist for 2 or 3 groups, got {g}"
            )))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupAssignment {
    /// Subject `i` belongs to group `i mod K`.
    #[default]
    RoundRobin,
    /// Consecutive blocks of nearly equal size.
    Contiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub groups: usize,
    pub separation: Separation,
    pub n: usize,
    /// Occasions per subject before any are dropped.
    pub t_points: usize,
    pub sigma: f64,
    pub rho: f64,
    pub domain: (f64, f64),
    pub balanced: bool,
    /// Fractions of occasions an unbalanced subject may miss.
    pub missing_fractions: Vec<f64>,
    /// Share of subjects that lose occasions in the unbalanced design.
    pub missing_share: f64,
    pub assignment: GroupAssignment,
    /// Smallest visit count a subject may be left with.
    pub min_visits: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            groups: 2,
            separation: Separation::Far,
            n: 60,
            t_points: 20,
            sigma: 0.5,
            rho: 0.3,
            domain: (0.0, 1.2),
            balanced: true,
            missing_fractions: vec![0.3, 0.4, 0.5],
            missing_share: 0.5,
            assignment: GroupAssignment::RoundRobin,
            // cubic basis with one interior knot has d = 4; OLS residuals need m > d
            min_visits: 5,
            seed: 20240917,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        true_functions(self.groups, self.separation)?;
        if self.n < self.groups {
            return Err(Error::Config(format!(
                "n = {} is below the group count {}",
                self.n, self.groups
            )));
        }
        if self.t_points < self.min_visits {
            return Err(Error::Config(format!(
                "T = {} is below the minimum visit count {}",
                self.t_points, self.min_visits
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Config(format!(
                "|rho| must be below 1, got {}",
                self.rho
            )));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::Config("time domain must have a < b".into()));
        }
        if !self.balanced {
            if !(0.0..=1.0).contains(&self.missing_share) {
                return Err(Error::Config("missing_share must lie in [0, 1]".into()));
            }
            if self.missing_fractions.is_empty()
                || self
                    .missing_fractions
                    .iter()
                    .any(|f| !(0.0..1.0).contains(f))
            {
                return Err(Error::Config("missing fractions must lie in [0, 1)".into()));
            }
            if self
                .missing_fractions
                .iter()
                .all(|&f| self.t_points - self.dropped(f) < self.min_visits)
            {
                return Err(Error::Config(format!(
                    "every missing fraction leaves fewer than {} of {} occasions",
                    self.min_visits, self.t_points
                )));
            }
        }
        Ok(())
    }

    fn dropped(&self, fraction: f64) -> usize {
        ((fraction * self.t_points as f64).round() as usize).min(self.t_points)
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.domain.0, self.domain.1, self.t_points)
    }

    pub fn truth(&self) -> Vec<usize> {
        let (n, k) = (self.n, self.groups);
        match self.assignment {
            GroupAssignment::RoundRobin => (0..n).map(|i| i % k).collect(),
            GroupAssignment::Contiguous => (0..n).map(|i| i * k / n).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: LongitudinalDataset<f64>,
    pub membership: Vec<usize>,
    pub curves: Vec<Quadratic>,
}

/// Stationary AR(1) sequence with marginal sd `sigma` and lag-one correlation `rho`.
pub fn ar1_errors<R: Rng + ?Sized>(len: usize, sigma: f64, rho: f64, rng: &mut R) -> Vec<f64> {
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut prev = 0.0;
    for j in 0..len {
        let z: f64 = StandardNormal.sample(rng);
        prev = if j == 0 {
            sigma * z
        } else {
            rho * prev + innov * z
        };
        out.push(prev);
    }
    out
}

pub fn generate<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<SimulatedData> {
    cfg.validate()?;
    let curves = true_functions(cfg.groups, cfg.separation)?;
    let membership = cfg.truth();
    let times = cfg.times();
    let t_len = times.len();

    let mut keep: Vec<Vec<bool>> = vec![vec![true; t_len]; cfg.n];
    let mut full: Vec<Vec<f64>> = Vec::with_capacity(cfg.n);
    for &g in &membership {
        let eps = ar1_errors(t_len, cfg.sigma, cfg.rho, rng);
        full.push(
            times
                .iter()
                .zip(eps)
                .map(|(&t, e)| curves[g].eval(t) + e)
                .collect(),
        );
    }
    if !cfg.balanced {
        let affected = ((cfg.n as f64) * cfg.missing_share).floor() as usize;
        for i in sample(rng, cfg.n, affected).into_iter() {
            // redraw the fraction until enough occasions survive
            let drop = loop {
                let f = cfg.missing_fractions[rng.random_range(0..cfg.missing_fractions.len())];
                let k = cfg.dropped(f);
                if t_len - k >= cfg.min_visits {
                    break k;
                }
            };
            for j in sample(rng, t_len, drop).into_iter() {
                keep[i][j] = false;
            }
        }
    }
    let subjects = (0..cfg.n)
        .map(|i| {
            let (t, y): (Vec<f64>, Vec<f64>) = times
                .iter()
                .zip(&full[i])
                .zip(&keep[i])
                .filter(|(_, k)| **k)
                .map(|((&t, &y), _)| (t, y))
                .unzip();
            SubjectRecord::new(format!("{}", i + 1), t, y)
        })
        .collect();
    Ok(SimulatedData {
        dataset: LongitudinalDataset::from_subjects(subjects)?,
        membership,
        curves,
    })
}

/// RNG for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub k_hat: Option<usize>,
    pub lambda: Option<f64>,
    pub ri: Option<f64>,
    pub nmi: Option<f64>,
    pub accuracy: Option<f64>,
    /// Per true group, using the matched estimated group; only when `K_hat = K`.
    pub rmse: Vec<Option<f64>>,
    /// Per true group, refitting with the true membership.
    pub oracle_rmse: Vec<Option<f64>>,
    /// Every path point converged.
    pub converged: bool,
    /// Largest final primal and dual residual norms over converged path points,
    /// relative to the stopping tolerance.
    pub max_primal_ratio: Option<f64>,
    pub max_dual_ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self {
                mean: None,
                median: None,
                count: 0,
            };
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self {
            mean: Some(v.iter().sum::<f64>() / n as f64),
            median: Some(median),
            count: n,
        }
    }
}

/// Aggregates; partition metrics and RMSE are conditioned on `K_hat = K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replications: usize,
    pub failures: usize,
    pub k_hat: Summary,
    /// Fraction of replications with `K_hat = K`.
    pub per: f64,
    pub ri: Summary,
    pub nmi: Summary,
    pub accuracy: Summary,
    pub rmse: Vec<Summary>,
    pub oracle_rmse: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub scenario: ScenarioConfig,
    pub generator: String,
    pub rows: Vec<ReplicationRow>,
    pub aggregate: Aggregate,
}

fn curve_rmse(fit: impl Fn(f64) -> Result<f64>, truth: &Quadratic, grid: &[f64]) -> Option<f64> {
    let fitted: Vec<f64> = grid.iter().map(|&t| fit(t)).collect::<Result<_>>().ok()?;
    let truth: Vec<f64> = grid.iter().map(|&t| truth.eval(t)).collect();
    let idx: Vec<f64> = (0..grid.len()).map(|h| h as f64).collect();
    rmse_curve(|h| fitted[h as usize], |h| truth[h as usize], &idx).ok()
}

/// Full pipeline plus metrics for one replication.
pub fn run_one(
    scenario: &ScenarioConfig,
    fit_cfg: &FitConfig<f64>,
    rep: usize,
    rmse_points: usize,
) -> ReplicationRow {
    let mut row = ReplicationRow {
        replication: rep,
        k_hat: None,
        lambda: None,
        ri: None,
        nmi: None,
        accuracy: None,
        rmse: vec![None; scenario.groups],
        oracle_rmse: vec![None; scenario.groups],
        converged: false,
        max_primal_ratio: None,
        max_dual_ratio: None,
        error: None,
    };
    if let Err(e) = fill_row(scenario, fit_cfg, rep, rmse_points, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_row(
    scenario: &ScenarioConfig,
    fit_cfg: &FitConfig<f64>,
    rep: usize,
    rmse_points: usize,
    row: &mut ReplicationRow,
) -> Result<()> {
    let mut rng = replication_rng(scenario.seed, rep);
    let sim = generate(scenario, &mut rng)?;
    let grid = uniform_grid(scenario.domain.0, scenario.domain.1, rmse_points);
    let cfg = FitConfig {
        domain: Some(fit_cfg.domain.unwrap_or(scenario.domain)),
        ..*fit_cfg
    };

    // oracle refit first: it does not depend on the path
    let prepared = prepare(&sim.dataset, &cfg)?;
    let (oracle, _) = refit_with_bands(&prepared, &sim.dataset, &sim.membership, &cfg)?;
    for (g, truth) in sim.curves.iter().enumerate() {
        row.oracle_rmse[g] = curve_rmse(|t| oracle.curve(&prepared.basis, g, t), truth, &grid);
    }

    let out = fit(&sim.dataset, &cfg)?;
    let k = out.k_hat();
    row.k_hat = Some(k);
    row.lambda = Some(out.lambda());
    row.converged = out.path.points.iter().all(|p| p.converged());
    let eps = cfg
        .admm
        .tolerance_for(sim.dataset.n_subjects(), out.basis().dim());
    let conv: Vec<_> = out.path.points.iter().filter(|p| p.converged()).collect();
    if !conv.is_empty() {
        row.max_primal_ratio = Some(
            conv.iter()
                .map(|p| p.state.primal_norm / eps)
                .fold(0.0, f64::max),
        );
        row.max_dual_ratio = Some(
            conv.iter()
                .map(|p| p.state.dual_norm / eps)
                .fold(0.0, f64::max),
        );
    }
    if k == scenario.groups {
        let est = Partition::new(&out.clusters.membership);
        let truth = Partition::new(&sim.membership);
        row.ri = Some(rand_index(&est, &truth)?);
        row.nmi = Some(nmi(&est, &truth)?);
        row.accuracy = Some(accuracy(&est, &truth)?);
        // Partition::new relabels in order of first appearance; so does the refit
        let matching = match_labels(&est, &truth)?;
        for (e, t) in matching.iter().enumerate() {
            if let Some(t) = *t {
                row.rmse[t] = curve_rmse(
                    |x| out.clusters.curve(out.basis(), e, x),
                    &sim.curves[t],
                    &grid,
                );
            }
        }
    }
    Ok(())
}

pub fn aggregate(groups: usize, rows: &[ReplicationRow]) -> Aggregate {
    let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.k_hat.is_some()).collect();
    let hit: Vec<&ReplicationRow> = ok
        .iter()
        .copied()
        .filter(|r| r.k_hat == Some(groups))
        .collect();
    Aggregate {
        replications: rows.len(),
        failures: rows.len() - ok.len(),
        k_hat: Summary::of(ok.iter().map(|r| r.k_hat.unwrap_or(0) as f64)),
        per: if rows.is_empty() {
            0.0
        } else {
            hit.len() as f64 / rows.len() as f64
        },
        ri: Summary::of(hit.iter().filter_map(|r| r.ri)),
        nmi: Summary::of(hit.iter().filter_map(|r| r.nmi)),
        accuracy: Summary::of(hit.iter().filter_map(|r| r.accuracy)),
        rmse: (0..groups)
            .map(|g| Summary::of(hit.iter().filter_map(|r| r.rmse[g])))
            .collect(),
        oracle_rmse: (0..groups)
            .map(|g| Summary::of(rows.iter().filter_map(|r| r.oracle_rmse[g])))
            .collect(),
    }
}

/// Runs `reps` replications in parallel on the current rayon pool.
pub fn run_replications(
    scenario: &ScenarioConfig,
    reps: usize,
    fit_cfg: &FitConfig<f64>,
    rmse_points: usize,
) -> Result<ReplicationReport> {
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    scenario.validate()?;
    fit_cfg.validate()?;
    let rows: Vec<ReplicationRow> = (0..reps)
        .into_par_iter()
        .map(|rep| run_one(scenario, fit_cfg, rep, rmse_points))
        .collect();
    Ok(ReplicationReport {
        scenario: scenario.clone(),
        generator: "ChaCha8Rng::seed_from_u64(seed), stream = replication index".into(),
        aggregate: aggregate(scenario.groups, &rows),
        rows,
    })
}

impl ReplicationReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let k = self.scenario.groups;
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["replication", "k_hat", "lambda", "ri", "nmi", "accuracy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=k).map(|g| format!("rmse_{g}")));
        header.extend((1..=k).map(|g| format!("oracle_rmse_{g}")));
        header.extend(["converged", "error"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                r.replication.to_string(),
                r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
                opt(r.lambda),
                opt(r.ri),
                opt(r.nmi),
                opt(r.accuracy),
            ];
            rec.extend(r.rmse.iter().map(|x| opt(*x)));
            rec.extend(r.oracle_rmse.iter().map(|x| opt(*x)));
            rec.push(r.converged.to_string());
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Aggregate block with the scenario and generator.
    pub fn aggregate_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario,
            "generator": self.generator,
            "aggregate": self.aggregate,
        })
    }

    pub fn save_aggregate_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &self.aggregate_json())?;
        writeln!(f)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_values() {
        let far = true_functions(2, Separation::Far).unwrap();
        assert!((far[1].eval(1.2) - 3.9).abs() < 1e-12);
        for f in true_functions(2, Separation::Close).unwrap() {
            assert_eq!(f.eval(0.0), 0.0);
        }
        assert_eq!(
            true_functions(3, Separation::Middle).unwrap()[1].eval(0.0),
            0.2
        );
        assert!(true_functions(4, Separation::Far).is_err());
    }

    #[test]
    fn noiseless_data_lies_on_curves() {
        let cfg = ScenarioConfig {
            sigma: 0.0,
            n: 6,
            t_points: 7,
            ..ScenarioConfig::default()
        };
        let sim = generate(&cfg, &mut replication_rng(1, 0)).unwrap();
        for (s, &g) in sim.dataset.subjects().iter().zip(&sim.membership) {
            for (&t, &y) in s.times.iter().zip(&s.values) {
                assert!((y - sim.curves[g].eval(t)).abs() < 1e-15);
            }
        }
        assert_eq!(sim.membership, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn group_sizes_differ_by_at_most_one() {
        for assignment in [GroupAssignment::RoundRobin, GroupAssignment::Contiguous] {
            for n in 3..20 {
                let cfg = ScenarioConfig {
                    groups: 3,
                    n,
                    assignment,
                    ..ScenarioConfig::default()
                };
                let sizes = Partition::new(&cfg.truth()).sizes();
                assert_eq!(sizes.len(), 3);
                assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn ar1_moments_match_analytic_covariance() {
        // 10^5 draws of a length-4 sequence: sample covariances vs sigma^2 rho^|j-k|
        let (sigma, rho, n) = (0.5, 0.3, 100_000);
        let mut rng = replication_rng(9, 0);
        let mut acc = [[0.0; 4]; 4];
        for _ in 0..n {
            let e = ar1_errors(4, sigma, rho, &mut rng);
            for j in 0..4 {
                for k in 0..4 {
                    acc[j][k] += e[j] * e[k];
                }
            }
        }
        for j in 0..4 {
            for k in 0..4 {
                let c = sigma * sigma * rho.powi((j as i32 - k as i32).abs());
                let est = acc[j][k] / n as f64;
                // var(e_j e_k) = s^4 (1 + rho^(2|j-k|)) for jointly normal pairs
                let se = (sigma.powi(4) * (1.0 + rho.powi(2 * (j as i32 - k as i32).abs()))
                    / n as f64)
                    .sqrt();
                assert!((est - c).abs() < 3.0 * se, "({j},{k}) {est} vs {c}");
            }
        }
    }

    #[test]
    fn independent_errors_when_rho_zero() {
        let mut rng = replication_rng(10, 0);
        let e = ar1_errors(10_000, 1.0, 0.0, &mut rng);
        let lag: f64 = e.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / 9_999.0;
        let var: f64 = e.iter().map(|x| x * x).sum::<f64>() / 10_000.0;
        assert!((lag / var).abs() < 0.1);
    }

    #[test]
    fn unbalanced_drops_half_the_subjects() {
        let cfg = ScenarioConfig {
            balanced: false,
            n: 40,
            ..ScenarioConfig::default()
        };
        let sim = generate(&cfg, &mut replication_rng(3, 2)).unwrap();
        let counts = sim.dataset.visit_counts();
        assert_eq!(counts.iter().filter(|&&m| m < 20).count(), 20);
        for m in counts {
            assert!([20, 14, 12, 10].contains(&m), "{m}");
        }
    }

    #[test]
    fn unbalanced_respects_minimum_visits() {
        let cfg = ScenarioConfig {
            balanced: false,
            t_points: 8,
            min_visits: 5,
            n: 30,
            ..ScenarioConfig::default()
        };
        // 0.4 and 0.5 would leave 5 and 4 occasions: only 0.3 and 0.4 are usable
        let sim = generate(&cfg, &mut replication_rng(4, 0)).unwrap();
        assert!(sim.dataset.visit_counts().iter().all(|&m| m >= 5));
        let bad = ScenarioConfig {
            missing_fractions: vec![0.5],
            t_points: 8,
            balanced: false,
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic_per_stream() {
        let cfg = ScenarioConfig::default();
        let a = generate(&cfg, &mut replication_rng(5, 1)).unwrap();
        let b = generate(&cfg, &mut replication_rng(5, 1)).unwrap();
        let c = generate(&cfg, &mut replication_rng(5, 2)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn summary_median() {
        let s = Summary::of([3.0, 1.0, 2.0, 10.0]);
        assert_eq!(s.median, Some(2.5));
        assert_eq!(s.mean, Some(4.0));
        assert_eq!(Summary::of([]).mean, None);
    }

    #[test]
    fn invalid_scenarios() {
        let base = ScenarioConfig::default();
        assert!(ScenarioConfig {
            n: 1,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            rho: 1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            t_points: 3,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            sigma: -1.0,
            ..base
        }
        .validate()
        .is_err());
    }
}
