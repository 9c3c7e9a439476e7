//! Plot-ready CSV tables and the JSON run summary.
//!
//! Schemas (headers are fixed):
//! - membership: `id,group`
//! - curves: `group,t,estimate,se,lower,upper`
//! - path: `lambda,k_hat,bic,ch,converged`
//! - trace: `lambda,subject,coef,value`
//! - iterations: `lambda,iteration,primal,dual,objective`

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::data::{format_f64, LongitudinalDataset};
use crate::error::Result;
use crate::inference::ConfidenceBand;
use crate::path::SolutionPoint;
use crate::pipeline::FitOutput;
use crate::scalar::Scalar;
use crate::selection::{ChValue, PathScore};

fn num<T: Scalar>(x: T) -> String {
    format_f64(x.as_f64())
}

pub fn write_membership<T: Scalar, W: Write>(
    dataset: &LongitudinalDataset<T>,
    membership: &[usize],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "group"])?;
    for (s, g) in dataset.subjects().iter().zip(membership) {
        w.write_record([s.id.as_str(), &g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves<T: Scalar, W: Write>(bands: &[ConfidenceBand<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "t", "estimate", "se", "lower", "upper"])?;
    for b in bands {
        for h in 0..b.times.len() {
            w.write_record([
                b.group.to_string(),
                num(b.times[h]),
                num(b.estimate[h]),
                num(b.se[h]),
                num(b.lower[h]),
                num(b.upper[h]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Unbounded CH values are written as `inf`; missing scores as empty fields.
pub fn write_path<T: Scalar, W: Write>(
    points: &[SolutionPoint<T>],
    scores: &[PathScore<T>],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "k_hat", "bic", "ch", "converged"])?;
    for (p, s) in points.iter().zip(scores) {
        let ch = match s.ch {
            Some(ChValue::Finite(v)) => num(v),
            Some(ChValue::Unbounded) => "inf".into(),
            None => String::new(),
        };
        w.write_record([
            num(p.lambda),
            p.k_hat.to_string(),
            s.bic.map(num).unwrap_or_default(),
            ch,
            p.converged().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (lambda, subject, coefficient); `subject` is the dataset id.
pub fn write_trace<T: Scalar, W: Write>(
    dataset: &LongitudinalDataset<T>,
    points: &[SolutionPoint<T>],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "subject", "coef", "value"])?;
    for p in points {
        let lambda = num(p.lambda);
        for (i, s) in dataset.subjects().iter().enumerate() {
            for (l, v) in p.state.gamma_block(i).iter().enumerate() {
                w.write_record([
                    lambda.as_str(),
                    s.id.as_str(),
                    &(l + 1).to_string(),
                    &num(*v),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration ADMM diagnostics; empty unless tracing was enabled.
pub fn write_iterations<T: Scalar, W: Write>(points: &[SolutionPoint<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "iteration", "primal", "dual", "objective"])?;
    for p in points {
        for r in &p.state.trace {
            w.write_record([
                num(p.lambda),
                r.iteration.to_string(),
                num(r.primal),
                num(r.dual),
                num(r.objective),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub k_hat: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub kappa: f64,
    pub criterion: serde_json::Value,
    pub seed: Option<u64>,
    pub n_subjects: usize,
    pub n_observations: usize,
    pub group_sizes: Vec<usize>,
    pub knots: Vec<f64>,
    pub selected_index: usize,
    pub alternatives: Vec<f64>,
    pub nonconverged_lambdas: Vec<f64>,
    pub config: serde_json::Value,
}

impl FitSummary {
    pub fn new<T: Scalar>(
        fit: &FitOutput<T>,
        dataset: &LongitudinalDataset<T>,
        seed: Option<u64>,
        config: serde_json::Value,
    ) -> Result<Self> {
        let wc = fit.covariance();
        let lambdas = |idx: &[usize]| {
            idx.iter()
                .map(|&i| fit.path.points[i].lambda.as_f64())
                .collect()
        };
        let mut group_sizes = vec![0; fit.k_hat()];
        fit.clusters
            .membership
            .iter()
            .for_each(|&g| group_sizes[g] += 1);
        Ok(Self {
            k_hat: fit.k_hat(),
            lambda: fit.lambda().as_f64(),
            sigma2: wc.sigma2.as_f64(),
            rho: wc.rho.as_f64(),
            kappa: wc.kappa.as_f64(),
            criterion: serde_json::to_value(fit.config.criterion)?,
            seed,
            n_subjects: dataset.n_subjects(),
            n_observations: dataset.n_observations(),
            group_sizes,
            knots: fit.basis().knots().iter().map(|k| k.as_f64()).collect(),
            selected_index: fit.selection.index,
            alternatives: lambdas(&fit.selection.alternatives),
            nonconverged_lambdas: lambdas(&fit.selection.excluded_nonconverged),
            config,
        })
    }
}

/// Writes membership.csv, curves.csv, path.csv and summary.json into `dir`.
pub fn write_fit_artifacts<T: Scalar>(
    dir: &Path,
    fit: &FitOutput<T>,
    dataset: &LongitudinalDataset<T>,
    summary: &FitSummary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_membership(
        dataset,
        &fit.clusters.membership,
        File::create(dir.join("membership.csv"))?,
    )?;
    write_curves(&fit.bands, File::create(dir.join("curves.csv"))?)?;
    write_path(
        &fit.path.points,
        &fit.path.scores,
        File::create(dir.join("path.csv"))?,
    )?;
    let mut f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    Ok(())
}
