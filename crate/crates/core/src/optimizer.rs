//! Robust revenue maximization over a price box.
//!
//! ```text
//! maximize_x  x^T (A_hat x + b_hat + C_hat z)  -  lambda * g(x, z)
//! g(x, z) = (|Sigma x|^2 + eps^2)^(1/4) * (|Sigma' v|^2 + eps^2)^(1/4),   v = (x, z, 1)
//! ```
//!
//! `g` is neither convex nor concave, so the solver is multi-start projected
//! gradient ascent and only the best point found is reported.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::LinearModel;
use crate::seed::{derive_seed, rng_from_seed};
use crate::sem::{Dataset, LinearSem};

/// Smoothing inside the fourth roots of `g`.
pub const G_SMOOTHING: f64 = 1e-12;

/// Per-coordinate price bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PriceBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<PriceBox> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
            return Err(Error::InvalidInput("box needs finite lo <= hi".into()));
        }
        Ok(PriceBox { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<PriceBox> {
        PriceBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| v >= self.lo[i] - tol && v <= self.hi[i] + tol)
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)))
    }
}

/// Sample covariance of the targets (denominator `D - 1`), with negative
/// eigenvalues clipped to zero.
pub fn estimate_sigma(data: &Dataset) -> DMatrix<f64> {
    let n = data.targets();
    let d = data.len();
    if d < 2 {
        return DMatrix::zeros(n, n);
    }
    let y = data.y();
    let mean = y.row_mean();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (d as f64 - 1.0);
    clip_psd((&cov + cov.transpose()) * 0.5)
}

fn clip_psd(sym: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.min() >= 0.0 {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// `(D' D'^T + eps I)^-1` with `D'` stacking the rows of `x`, `z_kappa` and a
/// row of ones, and `eps = 1e-9 * trace(D' D'^T) / dim`.
pub fn estimate_sigma_prime(data: &Dataset, kappa: &[usize]) -> Result<DMatrix<f64>> {
    let design = crate::regression::design_matrix(data, kappa)?;
    let gram = design.transpose() * &design;
    Ok(ridge_inverse(gram))
}

fn ridge_inverse(gram: DMatrix<f64>) -> DMatrix<f64> {
    let dim = gram.nrows();
    let eps = 1e-9 * gram.trace() / dim as f64;
    let eps = if eps > 0.0 { eps } else { 1e-9 };
    let regularized = gram + DMatrix::identity(dim, dim) * eps;
    let inv = match regularized.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => clip_psd(regularized).pseudo_inverse(0.0).unwrap_or_else(|_| DMatrix::zeros(dim, dim)),
    };
    (&inv + inv.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct RobustProblem {
    model: LinearModel,
    sigma: DMatrix<f64>,
    sigma_prime: DMatrix<f64>,
    lambda: f64,
    bounds: PriceBox,
    // cached quadratic pieces
    a_sym: DMatrix<f64>,
    sigma_sq: DMatrix<f64>,
    sigma_prime_sq: DMatrix<f64>,
}

fn is_psd(mat: &DMatrix<f64>, tol: f64) -> bool {
    let asym = (mat - mat.transpose()).amax();
    let scale = mat.amax().max(1.0);
    asym <= tol * scale && SymmetricEigen::new((mat + mat.transpose()) * 0.5).eigenvalues.min() >= -tol * scale
}

impl RobustProblem {
    pub fn new(
        model: LinearModel,
        sigma: DMatrix<f64>,
        sigma_prime: DMatrix<f64>,
        lambda: f64,
        bounds: PriceBox,
    ) -> Result<RobustProblem> {
        let (n, m) = (model.targets(), model.products());
        let p = m + model.kappa().len() + 1;
        if n != m {
            return Err(Error::Dimension(format!("revenue needs as many targets as prices, got {n} and {m}")));
        }
        if sigma.shape() != (n, n) || sigma_prime.shape() != (p, p) || bounds.dim() != m {
            return Err(Error::Dimension(format!(
                "expected Sigma {n}x{n}, Sigma' {p}x{p} and a box of dimension {m}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} must be >= 0")));
        }
        if !is_psd(&sigma, 1e-8) || !is_psd(&sigma_prime, 1e-8) {
            return Err(Error::InvalidInput("Sigma and Sigma' must be symmetric PSD".into()));
        }
        let a_sym = model.a_hat() + model.a_hat().transpose();
        let sigma_sq = sigma.transpose() * &sigma;
        let sigma_prime_sq = sigma_prime.transpose() * &sigma_prime;
        Ok(RobustProblem {
            model,
            sigma,
            sigma_prime,
            lambda,
            bounds,
            a_sym,
            sigma_sq,
            sigma_prime_sq,
        })
    }

    /// Builds `Sigma` and `Sigma'` from the training data of `model`.
    pub fn from_data(model: LinearModel, data: &Dataset, lambda: f64, bounds: PriceBox) -> Result<RobustProblem> {
        let sigma = estimate_sigma(data);
        let sigma_prime = estimate_sigma_prime(data, model.kappa())?;
        RobustProblem::new(model, sigma, sigma_prime, lambda, bounds)
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_prime(&self) -> &DMatrix<f64> {
        &self.sigma_prime
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bounds(&self) -> &PriceBox {
        &self.bounds
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<RobustProblem> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} must be >= 0")));
        }
        Ok(RobustProblem { lambda, ..self.clone() })
    }

    fn v(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let (m, k) = (x.len(), z.len());
        DVector::from_fn(m + k + 1, |i, _| if i < m { x[i] } else if i < m + k { z[i - m] } else { 1.0 })
    }

    fn check(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        if x.len() != self.model.products() || z.len() != self.model.kappa().len() {
            return Err(Error::Dimension(format!(
                "expected x of length {} and z_kappa of length {}",
                self.model.products(),
                self.model.kappa().len()
            )));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite price or feature".into()));
        }
        Ok(())
    }

    /// Regularizer value `g(x, z_kappa)`.
    pub fn regularizer(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check(x, z)?;
        Ok(self.g_parts(x, z).0)
    }

    fn g_parts(&self, x: &DVector<f64>, z: &DVector<f64>) -> (f64, f64, f64) {
        let e2 = G_SMOOTHING * G_SMOOTHING;
        let u = (&self.sigma * x).norm_squared() + e2;
        let w = (&self.sigma_prime * self.v(x, z)).norm_squared() + e2;
        (u.sqrt().sqrt() * w.sqrt().sqrt(), u, w)
    }

    fn g_gradient(&self, x: &DVector<f64>, z: &DVector<f64>, u: f64, w: f64) -> DVector<f64> {
        let m = x.len();
        let du = &self.sigma_sq * x * 2.0;
        let dw_full = &self.sigma_prime_sq * self.v(x, z) * 2.0;
        let dw = dw_full.rows(0, m);
        let (u4, w4) = (u.sqrt().sqrt(), w.sqrt().sqrt());
        du * (0.25 * w4 / (u4 * u4 * u4)) + dw * (0.25 * u4 / (w4 * w4 * w4))
    }

    /// Hessian of the objective in `x`, using
    /// `hess g = g [ (a/u + b/w)(a/u + b/w)^T / 16 - a a^T / (4u^2) - b b^T / (4w^2) + S / (2u) + S'_xx / (2w) ]`
    /// with `a = grad u`, `b = grad w`, `S = Sigma^T Sigma`, `S' = Sigma'^T Sigma'`.
    fn hessian(&self, x: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        if self.lambda == 0.0 {
            return self.a_sym.clone();
        }
        let m = x.len();
        let (g, u, w) = self.g_parts(x, z);
        let a = &self.sigma_sq * x * 2.0;
        let b = (&self.sigma_prime_sq * self.v(x, z) * 2.0).rows(0, m).into_owned();
        let mixed = &a / u + &b / w;
        let hg = (&mixed * mixed.transpose() / 16.0 - &a * a.transpose() / (4.0 * u * u)
            - &b * b.transpose() / (4.0 * w * w)
            + &self.sigma_sq / (2.0 * u)
            + self.sigma_prime_sq.view((0, 0), (m, m)) / (2.0 * w))
            * g;
        &self.a_sym - hg * self.lambda
    }

    /// Predicted revenue `x^T (A_hat x + b_hat + C_hat z)`.
    pub fn predicted_revenue(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check(x, z)?;
        Ok(x.dot(&self.model.predict(x, z)?))
    }

    fn value_and_gradient(&self, x: &DVector<f64>, z: &DVector<f64>, lin: &DVector<f64>) -> (f64, DVector<f64>) {
        let revenue = x.dot(&(self.model.a_hat() * x + lin));
        let mut grad = &self.a_sym * x + lin;
        if self.lambda == 0.0 {
            return (revenue, grad);
        }
        let (g, u, w) = self.g_parts(x, z);
        grad -= self.g_gradient(x, z, u, w) * self.lambda;
        (revenue - self.lambda * g, grad)
    }

    pub fn objective(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        Ok(self.predicted_revenue(x, z)? - self.lambda * self.regularizer(x, z)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStatus {
    pub converged: bool,
    pub iterations: usize,
}

/// Best strategy found by [`optimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub x: Vec<f64>,
    pub objective: f64,
    pub predicted_revenue: f64,
    #[serde(rename = "g")]
    pub regularizer_value: f64,
    pub lambda: f64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the projected-gradient norm is at most `tol * (1 + |f|)`.
    pub tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            starts: 16,
            seed: 0,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

/// Outcome of a single projected-gradient ascent run.
#[derive(Debug, Clone)]
pub struct Ascent {
    pub x: DVector<f64>,
    pub value: f64,
    /// Final projected-gradient norm `|P(x + grad) - x|`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral projected gradient ascent. Each step moves along the projected
/// Barzilai-Borwein direction and backtracks until a nonmonotone Armijo test
/// against the lowest of the last few values holds. The best iterate is
/// returned. Converged when the projected-gradient norm drops to
/// `abs_tol + rel_tol * |f|`.
pub fn projected_ascent<F>(
    f: F,
    bounds: &PriceBox,
    x0: DVector<f64>,
    abs_tol: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Ascent
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    const ARMIJO: f64 = 1e-4;
    const MEMORY: usize = 10;
    const STEP_RANGE: (f64, f64) = (1e-12, 1e12);
    let residual_of = |x: &DVector<f64>, grad: &DVector<f64>| {
        let mut probe = x + grad;
        bounds.project(&mut probe);
        (probe - x).norm()
    };
    let done = |residual: f64, val: f64| residual <= abs_tol + rel_tol * val.abs();

    let mut x = x0;
    bounds.project(&mut x);
    let (mut val, mut grad) = f(&x);
    let mut residual = residual_of(&x, &grad);
    let mut best = (x.clone(), val, residual);
    let mut recent = std::collections::VecDeque::from([val]);
    let mut step = if residual > 0.0 { (1.0 / grad.amax()).clamp(STEP_RANGE.0, STEP_RANGE.1) } else { 1.0 };
    let mut iterations = 0;

    while !done(residual, val) && iterations < max_iter {
        iterations += 1;
        let mut target = &x + &grad * step;
        bounds.project(&mut target);
        let dir = target - &x;
        let slope = grad.dot(&dir);
        if slope <= 0.0 {
            break;
        }
        let floor = recent.iter().copied().fold(f64::INFINITY, f64::min);
        let mut t = 1.0;
        let accepted = loop {
            let trial = &x + &dir * t;
            let (tv, tg) = f(&trial);
            if tv.is_finite() && tv >= floor + ARMIJO * t * slope {
                break Some((trial, tv, tg));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((next, next_val, next_grad)) = accepted else {
            break;
        };
        let s = &next - &x;
        let y = &next_grad - &grad;
        let curvature = -s.dot(&y);
        step = if curvature > 0.0 {
            (s.norm_squared() / curvature).clamp(STEP_RANGE.0, STEP_RANGE.1)
        } else {
            STEP_RANGE.1
        };
        x = next;
        val = next_val;
        grad = next_grad;
        residual = residual_of(&x, &grad);
        if recent.len() == MEMORY {
            recent.pop_front();
        }
        recent.push_back(val);
        if val > best.1 || (val == best.1 && residual < best.2) {
            best = (x.clone(), val, residual);
        }
    }
    let (x, value, residual) = if done(residual, val) && val >= best.1 { (x, val, residual) } else { best };
    Ascent {
        converged: done(residual, value),
        x,
        value,
        residual,
        iterations,
    }
}

/// Projected Newton ascent. Coordinates at a bound whose gradient points
/// outward are held fixed. The others move along the Newton direction of the
/// negated Hessian, shifted until positive definite. Steps backtrack along the
/// projection arc under an Armijo test, and a plain gradient step is tried
/// when Newton backtracking fails. A step whose value change is below
/// roundoff is accepted when it shrinks the projected-gradient norm.
pub fn projected_newton<F, H>(
    f: F,
    hess: H,
    bounds: &PriceBox,
    x0: DVector<f64>,
    abs_tol: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Ascent
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
    H: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    const ARMIJO: f64 = 1e-4;
    let residual_of = |x: &DVector<f64>, grad: &DVector<f64>| {
        let mut probe = x + grad;
        bounds.project(&mut probe);
        (probe - x).norm()
    };
    let done = |residual: f64, val: f64| residual <= abs_tol + rel_tol * val.abs();
    let n = bounds.dim();

    let mut x = x0;
    bounds.project(&mut x);
    let (mut val, mut grad) = f(&x);
    let mut residual = residual_of(&x, &grad);
    let mut iterations = 0;

    while !done(residual, val) && iterations < max_iter {
        iterations += 1;
        let eps = residual.min(1e-6);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = x[i] <= bounds.lo[i] + eps && grad[i] < 0.0;
                let at_hi = x[i] >= bounds.hi[i] - eps && grad[i] > 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let mut newton = grad.clone();
        if !free.is_empty() {
            let h = hess(&x);
            let neg = DMatrix::from_fn(free.len(), free.len(), |i, j| -h[(free[i], free[j])]);
            let g_free = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
            let scale = neg.amax().max(1e-12);
            let mut shift = 0.0;
            let dir = loop {
                let shifted = &neg + DMatrix::identity(free.len(), free.len()) * shift;
                if let Some(ch) = shifted.cholesky() {
                    break Some(ch.solve(&g_free));
                }
                shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
                if shift > 1e10 * scale {
                    break None;
                }
            };
            if let Some(d) = dir {
                for (i, &k) in free.iter().enumerate() {
                    newton[k] = d[i];
                }
            }
        }

        let mut accepted = None;
        for (dir, first) in [(newton, 1.0), (grad.clone(), 1.0 / grad.amax().max(1e-300))] {
            let mut t = first;
            while t > 1e-14 * first {
                let mut trial = &x + &dir * t;
                bounds.project(&mut trial);
                let gain = grad.dot(&(&trial - &x));
                if gain <= 0.0 {
                    t *= 0.5;
                    continue;
                }
                let (tv, tg) = f(&trial);
                if tv.is_finite() && tv >= val + ARMIJO * gain {
                    accepted = Some((trial, tv, tg));
                    break;
                }
                let noise = 1e-13 * (1.0 + val.abs());
                if tv.is_finite() && gain <= noise && tv >= val - noise && residual_of(&trial, &tg) < residual {
                    accepted = Some((trial, tv, tg));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((next, next_val, next_grad)) = accepted else {
            break;
        };
        x = next;
        val = next_val;
        grad = next_grad;
        residual = residual_of(&x, &grad);
    }
    Ascent {
        converged: done(residual, val),
        x,
        value: val,
        residual,
        iterations,
    }
}

/// Start points: the box center, then alternately a random corner and a
/// uniform interior point, all drawn from per-start derived seeds.
pub fn start_points(bounds: &PriceBox, starts: usize, seed: u64) -> Vec<DVector<f64>> {
    (0..starts)
        .map(|s| {
            if s == 0 {
                return bounds.center();
            }
            let mut rng = rng_from_seed(derive_seed(seed, &[s as u64]));
            let corner = s % 2 == 1;
            DVector::from_iterator(
                bounds.dim(),
                bounds.lo.iter().zip(&bounds.hi).map(|(&l, &h)| {
                    if corner {
                        if rng.random_bool(0.5) { h } else { l }
                    } else {
                        l + (h - l) * rng.random::<f64>()
                    }
                }),
            )
        })
        .collect()
}

/// Multi-start maximization of the robust objective at features `z_kappa`.
pub fn optimize(p: &RobustProblem, z_kappa: &DVector<f64>, opts: &OptimizeOptions) -> Result<Strategy> {
    p.check(&p.bounds.center(), z_kappa)?;
    if opts.starts == 0 {
        return Err(Error::InvalidInput("need at least one start".into()));
    }
    let lin = p.model.b_hat() + p.model.c_hat() * z_kappa;
    let f = |x: &DVector<f64>| p.value_and_gradient(x, z_kappa, &lin);
    let hess = |x: &DVector<f64>| p.hessian(x, z_kappa);
    let mut best: Option<Ascent> = None;
    let mut iterations = 0;
    for x0 in start_points(&p.bounds, opts.starts, opts.seed) {
        let run = projected_newton(f, hess, &p.bounds, x0, opts.tol, opts.tol, opts.max_iter);
        iterations += run.iterations;
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let predicted_revenue = p.predicted_revenue(&best.x, z_kappa)?;
    let regularizer_value = p.regularizer(&best.x, z_kappa)?;
    Ok(Strategy {
        x: best.x.iter().copied().collect(),
        objective: predicted_revenue - p.lambda * regularizer_value,
        predicted_revenue,
        regularizer_value,
        lambda: p.lambda,
        status: SolverStatus {
            converged: best.converged,
            iterations,
        },
    })
}

/// Certified maximizer of the true revenue `x^T (A x + b + C z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueOptimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Final projected-gradient norm.
    pub certificate: f64,
    /// The symmetric part of `A` is negative definite, so `x` is the unique global maximizer.
    pub concave: bool,
}

pub fn true_optimum(sem: &LinearSem, z: &DVector<f64>, bounds: &PriceBox) -> Result<TrueOptimum> {
    let m = sem.products();
    if sem.targets() != m || bounds.dim() != m {
        return Err(Error::Dimension("box and SEM dimensions differ".into()));
    }
    let zero = DVector::zeros(m);
    let lin = sem.expected_y_do(&zero, z)?;
    let a = sem.price_effects();
    let a_sym = a + a.transpose();
    let f = |x: &DVector<f64>| (x.dot(&(a * x + &lin)), &a_sym * x + &lin);
    let run = projected_ascent(f, bounds, bounds.center(), 1e-7, 0.0, 100_000);
    let concave = sem.max_symmetric_eigenvalue() < 0.0;
    let (x, certificate) = if concave {
        polish_concave(&a_sym, &lin, bounds, run.x, 1e-9)
    } else {
        (run.x, run.residual)
    };
    Ok(TrueOptimum {
        value: evaluate_true(sem, &x, z)?,
        x: x.iter().copied().collect(),
        certificate,
        concave,
    })
}

/// Fixed-step projected gradient on `x^T Q x / 2 + lin^T x` with `Q` negative
/// definite. Step `1 / |Q|` never decreases the value, and no function values
/// are compared, so the residual can be driven below roundoff of the value.
fn polish_concave(
    q: &DMatrix<f64>,
    lin: &DVector<f64>,
    bounds: &PriceBox,
    mut x: DVector<f64>,
    tol: f64,
) -> (DVector<f64>, f64) {
    let lipschitz = -SymmetricEigen::new(q.clone()).eigenvalues.min();
    let step = 1.0 / lipschitz;
    let residual_of = |x: &DVector<f64>| {
        let mut probe = x + (q * x + lin);
        bounds.project(&mut probe);
        (probe - x).norm()
    };
    let mut residual = residual_of(&x);
    for _ in 0..1_000_000 {
        if residual <= tol {
            break;
        }
        x += (q * &x + lin) * step;
        bounds.project(&mut x);
        residual = residual_of(&x);
    }
    (x, residual)
}

/// True expected revenue `x^T E[Y | do(X = x), Z = z]`.
pub fn evaluate_true(sem: &LinearSem, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    Ok(x.dot(&sem.expected_y_do(x, z)?))
}
