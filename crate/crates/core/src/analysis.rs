//! Monte-Carlo decomposition of the interventional prediction error
//!
//! ```text
//! E|Y - f_hat|^2 = noise + confounding bias + prediction bias + variance (+ cross term)
//! ```
//!
//! at a fixed price `x` and feature state `z`, with `Y` drawn under `do(X = x)`.
//! The estimator is centered at its Monte-Carlo mean `f_bar` over datasets.
//! The cross term `2 <E_do - E_cond, E_cond - f_bar>` does not vanish in
//! general and is reported separately.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::fit;
use crate::seed::{derive_seed, rng_from_seed};
use crate::sem::LinearSem;

/// How the variance and prediction-bias terms are centered.
pub const CENTERING: &str = "monte-carlo mean of the fitted predictor";

fn project(z: &DVector<f64>, kappa: &[usize]) -> Result<DVector<f64>> {
    if let Some(&bad) = kappa.iter().find(|&&k| k >= z.len()) {
        return Err(Error::InvalidInput(format!("feature {bad} out of range")));
    }
    Ok(DVector::from_iterator(kappa.len(), kappa.iter().map(|&k| z[k])))
}

/// A price/feature pair with positive probability: the first record of a
/// fresh observational sample.
pub fn reachable_point(sem: &LinearSem, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
    let data = sem.sample(1, seed)?;
    Ok((data.x().row(0).transpose(), data.z().row(0).transpose()))
}

/// `|E[Y | do(x), z] - E[Y | x, z_kappa]|^2`.
pub fn confounding_bias(sem: &LinearSem, kappa: &[usize], x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    let z_kappa = project(z, kappa)?;
    let e_do = sem.expected_y_do(x, z)?;
    let e_cond = sem.expected_y_cond(x, kappa, z_kappa.as_slice())?;
    Ok((e_do - e_cond).norm_squared())
}

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    /// Mean of `|f_r - f_bar|^2` over replications.
    pub variance: f64,
    /// `|f_bar - E[Y | x, z_kappa]|^2`.
    pub prediction_bias: f64,
    pub f_bar: DVector<f64>,
    /// Same variance estimated by resampling the first replication's dataset.
    pub bootstrap_variance: f64,
    /// Prediction of every replication, in replication order.
    pub predictions: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloOptions {
    pub sample_size: usize,
    pub replications: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            sample_size: 200,
            replications: 200,
            bootstrap: 200,
            seed: 0,
        }
    }
}

fn spread(preds: &[DVector<f64>]) -> (DVector<f64>, f64) {
    let r = preds.len() as f64;
    let mut mean = DVector::zeros(preds[0].len());
    for p in preds {
        mean += p;
    }
    mean /= r;
    let var = preds.iter().map(|p| (p - &mean).norm_squared()).sum::<f64>() / r;
    (mean, var)
}

/// Fits the model on `replications` independent datasets of size
/// `sample_size` and evaluates each fit at `(x, z_kappa)`.
pub fn variance_and_bias(
    sem: &LinearSem,
    kappa: &[usize],
    x: &DVector<f64>,
    z: &DVector<f64>,
    opts: &MonteCarloOptions,
) -> Result<VarianceEstimate> {
    if opts.replications < 2 {
        return Err(Error::InvalidInput("need at least two replications".into()));
    }
    let z_kappa = project(z, kappa)?;
    let e_cond = sem.expected_y_cond(x, kappa, z_kappa.as_slice())?;

    let predictions = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let data = sem.sample(opts.sample_size, derive_seed(opts.seed, &[0, r as u64]))?;
            fit(&data, kappa)?.predict(x, &z_kappa)
        })
        .collect::<Result<Vec<_>>>()?;
    let (f_bar, variance) = spread(&predictions);

    let bootstrap_variance = if opts.bootstrap >= 2 {
        let base = sem.sample(opts.sample_size, derive_seed(opts.seed, &[0, 0]))?;
        let d = base.len();
        let boot = (0..opts.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_from_seed(derive_seed(opts.seed, &[2, b as u64]));
                let rows: Vec<usize> = (0..d).map(|_| rng.random_range(0..d)).collect();
                fit(&base.select_rows(&rows), kappa)?.predict(x, &z_kappa)
            })
            .collect::<Result<Vec<_>>>()?;
        spread(&boot).1
    } else {
        f64::NAN
    };

    Ok(VarianceEstimate {
        variance,
        prediction_bias: (&f_bar - e_cond).norm_squared(),
        f_bar,
        bootstrap_variance,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub kappa: Vec<usize>,
    pub sample_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub centering: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// Trace of the demand-noise covariance.
    pub noise: f64,
    pub confounding_bias: f64,
    pub prediction_bias: f64,
    pub variance: f64,
    /// `confounding_bias + variance`.
    pub c_sum: f64,
    /// `2 <E_do - E_cond, E_cond - f_bar>`.
    pub bias_cross: f64,
    /// Mean of `|Y_r - f_r|^2` with a fresh interventional draw per replication.
    pub total_mse_mc: f64,
    pub total_mse_se: f64,
    pub bootstrap_variance: f64,
    pub settings: ReportSettings,
}

impl DecompositionReport {
    /// `noise + confounding_bias + prediction_bias + variance`.
    pub fn decomposed_total(&self) -> f64 {
        self.noise + self.confounding_bias + self.prediction_bias + self.variance
    }

    /// Whether every reported number matches `other` bit for bit.
    pub fn same_numbers(&self, other: &DecompositionReport) -> bool {
        let bits = |r: &DecompositionReport| {
            [
                r.noise,
                r.confounding_bias,
                r.prediction_bias,
                r.variance,
                r.c_sum,
                r.bias_cross,
                r.total_mse_mc,
                r.total_mse_se,
                r.bootstrap_variance,
            ]
            .map(f64::to_bits)
        };
        bits(self) == bits(other)
    }
}

/// Full decomposition at `(x, z)` for feature set `kappa`.
pub fn c_sum(
    sem: &LinearSem,
    kappa: &[usize],
    x: &DVector<f64>,
    z: &DVector<f64>,
    opts: &MonteCarloOptions,
) -> Result<DecompositionReport> {
    let est = variance_and_bias(sem, kappa, x, z, opts)?;
    let z_kappa = project(z, kappa)?;
    let e_do = sem.expected_y_do(x, z)?;
    let e_cond = sem.expected_y_cond(x, kappa, z_kappa.as_slice())?;
    let confounding = (&e_do - &e_cond).norm_squared();
    let bias_cross = 2.0 * (&e_do - &e_cond).dot(&(&e_cond - &est.f_bar));

    let errors = est
        .predictions
        .par_iter()
        .enumerate()
        .map(|(r, f)| {
            let y = sem.sample_intervention(x, z, derive_seed(opts.seed, &[1, r as u64]))?;
            Ok((y - f).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / r;
    let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();

    Ok(DecompositionReport {
        noise: sem.targets() as f64 * sem.noise_var(),
        confounding_bias: confounding,
        prediction_bias: est.prediction_bias,
        variance: est.variance,
        c_sum: confounding + est.variance,
        bias_cross,
        total_mse_mc: mean,
        total_mse_se: sd / r.sqrt(),
        bootstrap_variance: est.bootstrap_variance,
        settings: ReportSettings {
            x: x.iter().copied().collect(),
            z: z.iter().copied().collect(),
            kappa: kappa.to_vec(),
            sample_size: opts.sample_size,
            replications: opts.replications,
            seed: opts.seed,
            centering: CENTERING.into(),
        },
    })
}
