//! Synthetic price-optimization study comparing FS and CF selection.
//!
//! Work is split into units `(trial, alpha)`. Each unit derives every random
//! stream from `derive_seed(master_seed, [trial])`, so the emitted tables do
//! not depend on how many threads run the units.
//!
//! Per unit, one network and SEM are drawn (shared across `alpha` values of
//! the same trial), one training sample of the largest size is drawn and
//! truncated to each `D`, and a held-out sample scores predictions.

mod chart;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{evaluate_true, optimize, true_optimum, OptimizeOptions, PriceBox, RobustProblem};
use crate::regression::{fit, LinearModel};
use crate::seed::derive_seed;
use crate::selection::{select, Method, Scaling, Selection, SelectionOptions};
use crate::sem::{generate_network, generate_sem, Dataset, LinearSem, SemConfig};

pub use chart::{line_chart, Panel, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub products: usize,
    pub features: usize,
    pub alphas: Vec<f64>,
    /// Group-lasso strengths for the prediction study.
    pub mus: Vec<f64>,
    /// Group-lasso strength for the optimization study.
    pub opt_mu: f64,
    pub lambdas: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub z_draws: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    /// Records in the held-out sample scoring predictions.
    pub holdout: usize,
    pub prediction_study: bool,
    pub optimization_study: bool,
    pub scaling: Scaling,
    pub selection_threshold: f64,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub starts: usize,
    pub noise_var: f64,
    pub edge_prob_zx: f64,
    pub edge_prob_zy: f64,
    pub discount_step: f64,
    pub master_seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            products: 10,
            features: 10,
            alphas: vec![0.1, 0.5],
            mus: vec![100.0, 200.0, 300.0],
            opt_mu: 200.0,
            lambdas: vec![0.0, 3.0, 10.0],
            sample_sizes: vec![40, 80, 120, 160, 200],
            trials: 50,
            z_draws: 10,
            box_lo: 0.5,
            box_hi: 1.0,
            holdout: 1000,
            prediction_study: true,
            optimization_study: true,
            scaling: Scaling::Raw,
            selection_threshold: 1e-6,
            lasso_tol: 1e-8,
            lasso_max_iter: 100_000,
            starts: 16,
            noise_var: 100.0,
            edge_prob_zx: 0.1,
            edge_prob_zy: 0.5,
            discount_step: 0.1,
            master_seed: 0,
            output_dir: "results".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.into()));
        if self.alphas.is_empty() || self.sample_sizes.is_empty() || self.lambdas.is_empty() {
            return bad("alphas, sample_sizes and lambdas must be nonempty");
        }
        if self.prediction_study && self.mus.is_empty() {
            return bad("mus must be nonempty");
        }
        if !self.prediction_study && !self.optimization_study {
            return bad("enable at least one study");
        }
        if self.trials == 0 || self.z_draws == 0 || self.holdout == 0 || self.starts == 0 {
            return bad("trials, z_draws, holdout and starts must be at least 1");
        }
        if self.sample_sizes.iter().any(|&d| d < 2) {
            return bad("sample sizes must be at least 2");
        }
        if self.mus.iter().chain([&self.opt_mu]).any(|mu| !(*mu >= 0.0 && mu.is_finite())) {
            return bad("mu values must be finite and >= 0");
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda values must be finite and >= 0");
        }
        PriceBox::uniform(self.products, self.box_lo, self.box_hi)?;
        for &alpha in &self.alphas {
            self.sem_config(alpha, 0).validate()?;
        }
        Ok(())
    }

    fn sem_config(&self, alpha: f64, seed: u64) -> SemConfig {
        SemConfig {
            products: self.products,
            features: self.features,
            edge_prob_zx: self.edge_prob_zx,
            edge_prob_zy: self.edge_prob_zy,
            alpha,
            noise_var: self.noise_var,
            discount_step: self.discount_step,
            seed,
            ..SemConfig::default()
        }
    }

    fn selection_options(&self, mu: f64) -> SelectionOptions {
        SelectionOptions {
            mu,
            threshold: self.selection_threshold,
            scaling: self.scaling,
            tol: self.lasso_tol,
            max_iter: self.lasso_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Prediction,
    Optimization,
}

/// One row of `results.csv`. Fields that do not apply to a study are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub study: Study,
    pub trial: usize,
    pub method: Method,
    #[serde(rename = "D")]
    pub d: usize,
    pub alpha: f64,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub z_index: Option<usize>,
    pub true_value: Option<f64>,
    pub true_optimum: Option<f64>,
    pub normalized_value: Option<f64>,
    /// Mean squared error per target and record on the held-out sample.
    pub pred_mse: f64,
    pub n_selected: usize,
    pub selection_converged: bool,
    pub solver_converged: Option<bool>,
    pub seed: u64,
}

/// One row of `summary.csv`: a metric averaged within each trial, then
/// summarized across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: Study,
    pub method: Method,
    pub alpha: f64,
    #[serde(rename = "D")]
    pub d: usize,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub metric: String,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

/// Seed of trial `t`; every stream of the trial is derived from it.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[trial as u64])
}

fn holdout_mse(model: &LinearModel, holdout: &Dataset) -> Result<f64> {
    let kappa = model.kappa();
    let mut total = 0.0;
    for d in 0..holdout.len() {
        let x = holdout.x().row(d).transpose();
        let z = DVector::from_iterator(kappa.len(), kappa.iter().map(|&k| holdout.z()[(d, k)]));
        let y = holdout.y().row(d).transpose();
        total += (y - model.predict(&x, &z)?).norm_squared();
    }
    Ok(total / (holdout.len() * holdout.targets()) as f64)
}

struct Fitted {
    selection: Selection,
    model: LinearModel,
    pred_mse: f64,
}

struct Unit<'a> {
    cfg: &'a ExperimentConfig,
    trial: usize,
    alpha: f64,
    alpha_index: u64,
    seed: u64,
    sem: LinearSem,
    train: Dataset,
    holdout: Dataset,
    fitted: HashMap<(Method, usize, u64), Fitted>,
}

impl<'a> Unit<'a> {
    fn new(cfg: &'a ExperimentConfig, trial: usize, alpha_index: usize) -> Result<Self> {
        let seed = trial_seed(cfg.master_seed, trial);
        let alpha = cfg.alphas[alpha_index];
        let sem_cfg = cfg.sem_config(alpha, seed);
        let sem = generate_sem(&generate_network(&sem_cfg)?, &sem_cfg)?;
        let a = alpha_index as u64;
        let largest = *cfg.sample_sizes.iter().max().expect("validated nonempty");
        let train = sem.sample(largest, derive_seed(seed, &[a, 1]))?;
        let holdout = sem.sample(cfg.holdout, derive_seed(seed, &[a, 2]))?;
        Ok(Unit {
            cfg,
            trial,
            alpha,
            alpha_index: a,
            seed,
            sem,
            train,
            holdout,
            fitted: HashMap::new(),
        })
    }

    fn fitted(&mut self, method: Method, d: usize, mu: f64) -> Result<&Fitted> {
        let key = (method, d, mu.to_bits());
        if !self.fitted.contains_key(&key) {
            let data = self.train.head(d);
            let selection = select(&data, method, &self.cfg.selection_options(mu))?;
            let model = fit(&data, &selection.kappa)?;
            let pred_mse = holdout_mse(&model, &self.holdout)?;
            self.fitted.insert(key, Fitted { selection, model, pred_mse });
        }
        Ok(&self.fitted[&key])
    }

    fn row(&self, study: Study, method: Method, d: usize, mu: f64, f: &Fitted) -> TrialResult {
        TrialResult {
            study,
            trial: self.trial,
            method,
            d,
            alpha: self.alpha,
            mu,
            lambda: None,
            z_index: None,
            true_value: None,
            true_optimum: None,
            normalized_value: None,
            pred_mse: f.pred_mse,
            n_selected: f.selection.kappa.len(),
            selection_converged: f.selection.converged,
            solver_converged: None,
            seed: self.seed,
        }
    }

    fn run(mut self) -> Result<Vec<TrialResult>> {
        let cfg = self.cfg;
        let methods = [Method::Fs, Method::Cf];
        let mut rows = Vec::new();
        if cfg.prediction_study {
            for &d in &cfg.sample_sizes {
                for &mu in &cfg.mus {
                    for method in methods {
                        self.fitted(method, d, mu)?;
                        let f = &self.fitted[&(method, d, mu.to_bits())];
                        rows.push(self.row(Study::Prediction, method, d, mu, f));
                    }
                }
            }
        }
        if cfg.optimization_study {
            let bounds = PriceBox::uniform(cfg.products, cfg.box_lo, cfg.box_hi)?;
            let draws: Vec<DVector<f64>> = (0..cfg.z_draws)
                .map(|j| self.sem.sample_features(derive_seed(self.seed, &[self.alpha_index, 3, j as u64])))
                .collect();
            let optima = draws
                .iter()
                .map(|z| true_optimum(&self.sem, z, &bounds))
                .collect::<Result<Vec<_>>>()?;
            let mu = cfg.opt_mu;
            for &d in &cfg.sample_sizes {
                let data = self.train.head(d);
                for method in methods {
                    self.fitted(method, d, mu)?;
                    let f = &self.fitted[&(method, d, mu.to_bits())];
                    let base = RobustProblem::from_data(f.model.clone(), &data, 0.0, bounds.clone())?;
                    for (j, z) in draws.iter().enumerate() {
                        let z_kappa =
                            DVector::from_iterator(f.model.kappa().len(), f.model.kappa().iter().map(|&k| z[k]));
                        let opts = OptimizeOptions {
                            starts: cfg.starts,
                            seed: derive_seed(self.seed, &[self.alpha_index, 4, j as u64]),
                            ..OptimizeOptions::default()
                        };
                        for &lambda in &cfg.lambdas {
                            let strategy = optimize(&base.with_lambda(lambda)?, &z_kappa, &opts)?;
                            let x = DVector::from_vec(strategy.x.clone());
                            let true_value = evaluate_true(&self.sem, &x, z)?;
                            let mut row = self.row(Study::Optimization, method, d, mu, f);
                            row.lambda = Some(lambda);
                            row.z_index = Some(j);
                            row.true_value = Some(true_value);
                            row.true_optimum = Some(optima[j].value);
                            row.normalized_value = Some(true_value / optima[j].value);
                            row.solver_converged = Some(strategy.status.converged);
                            rows.push(row);
                        }
                    }
                }
            }
        }
        Ok(rows)
    }
}

/// Runs every `(trial, alpha)` unit on a pool of `jobs` threads and
/// collects rows in unit order.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let units: Vec<(usize, usize)> = (0..cfg.trials)
        .flat_map(|t| (0..cfg.alphas.len()).map(move |a| (t, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let per_unit = pool.install(|| {
        units
            .par_iter()
            .map(|&(t, a)| Unit::new(cfg, t, a)?.run())
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<TrialResult> = per_unit.into_iter().flatten().collect();
    let summary = summarize(cfg, &rows);
    Ok(ExperimentOutput { rows, summary })
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups rows by every grid coordinate in config order; within a group the
/// metric is first averaged per trial.
pub fn summarize(cfg: &ExperimentConfig, rows: &[TrialResult]) -> Vec<SummaryRow> {
    let mut cells: Vec<(Study, f64, Option<f64>, &str)> = Vec::new();
    if cfg.prediction_study {
        cells.extend(cfg.mus.iter().map(|&mu| (Study::Prediction, mu, None, "pred_mse")));
    }
    if cfg.optimization_study {
        cells.extend(cfg.lambdas.iter().map(|&l| (Study::Optimization, cfg.opt_mu, Some(l), "normalized_value")));
    }
    let mut out = Vec::new();
    for &(study, mu, lambda, metric) in &cells {
        for &alpha in &cfg.alphas {
            for &d in &cfg.sample_sizes {
                for method in [Method::Fs, Method::Cf] {
                    let mut per_trial: Vec<(f64, usize)> = vec![(0.0, 0); cfg.trials];
                    for r in rows.iter().filter(|r| {
                        r.study == study
                            && r.method == method
                            && r.alpha.to_bits() == alpha.to_bits()
                            && r.d == d
                            && r.mu.to_bits() == mu.to_bits()
                            && r.lambda.map(f64::to_bits) == lambda.map(f64::to_bits)
                    }) {
                        let v = match study {
                            Study::Prediction => r.pred_mse,
                            Study::Optimization => r.normalized_value.unwrap_or(f64::NAN),
                        };
                        per_trial[r.trial].0 += v;
                        per_trial[r.trial].1 += 1;
                    }
                    let means: Vec<f64> = per_trial.iter().filter(|p| p.1 > 0).map(|p| p.0 / p.1 as f64).collect();
                    if means.is_empty() {
                        continue;
                    }
                    let (mean, stderr) = mean_and_stderr(&means);
                    out.push(SummaryRow {
                        study,
                        method,
                        alpha,
                        d,
                        mu,
                        lambda,
                        metric: metric.into(),
                        trials: means.len(),
                        mean,
                        stderr,
                    });
                }
            }
        }
    }
    out
}

pub fn write_results_csv<W: std::io::Write>(rows: &[TrialResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<TrialResult>> {
    let mut input = csv::Reader::from_reader(r);
    input
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn study_chart(cfg: &ExperimentConfig, summary: &[SummaryRow], study: Study) -> String {
    let panels = cfg
        .alphas
        .iter()
        .map(|&alpha| {
            let mut series: Vec<Series> = Vec::new();
            for r in summary.iter().filter(|r| r.study == study && r.alpha.to_bits() == alpha.to_bits()) {
                let name = match r.lambda {
                    Some(l) => format!("{} lambda={l}", r.method),
                    None => format!("{} mu={}", r.method, r.mu),
                };
                match series.iter_mut().find(|s| s.name == name) {
                    Some(s) => s.points.push((r.d as f64, r.mean, r.stderr)),
                    None => series.push(Series {
                        name,
                        points: vec![(r.d as f64, r.mean, r.stderr)],
                    }),
                }
            }
            Panel {
                title: format!("alpha = {alpha}"),
                series,
            }
        })
        .collect::<Vec<_>>();
    let (title, y_label) = match study {
        Study::Prediction => ("Held-out prediction error", "mean squared error"),
        Study::Optimization => ("True value of optimized prices", "value / true optimum"),
    };
    line_chart(title, "training records D", y_label, &panels)
}

/// Writes `results.csv`, `summary.csv`, `config.toml` and one SVG chart per
/// enabled study into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results_csv(&out.rows, fs::File::create(dir.join("results.csv"))?)?;
    write_summary_csv(&out.summary, fs::File::create(dir.join("summary.csv"))?)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    if cfg.prediction_study {
        fs::write(dir.join("prediction.svg"), study_chart(cfg, &out.summary, Study::Prediction))?;
    }
    if cfg.optimization_study {
        fs::write(dir.join("optimization.svg"), study_chart(cfg, &out.summary, Study::Optimization))?;
    }
    Ok(())
}
