//! Group-sparse Markov blanket approximation and the two selection policies.
//!
//! `MB(U)` regresses the rows of the nodes in `U` on every other node with a
//! column-group penalty and keeps the candidates whose weight column is
//! nonzero:
//!
//! ```text
//! minimize_W  1/2 ||D_U - W D_V||_F^2 + mu * sum_v ||W[:, v]||_2
//! ```
//!
//! FS keeps `MB(Y)`; CF keeps `MB(X ∪ Y)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeClass;
use crate::sem::Dataset;

#[derive(Debug, Clone)]
pub struct GroupLassoProblem {
    /// `|U| x D` rows to be explained.
    pub target: DMatrix<f64>,
    /// `|V| x D` candidate rows.
    pub candidates: DMatrix<f64>,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl GroupLassoProblem {
    pub fn new(target: DMatrix<f64>, candidates: DMatrix<f64>, mu: f64) -> Self {
        GroupLassoProblem {
            target,
            candidates,
            mu,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupLassoSolution {
    /// `|U| x |V|`; column `v` is the weight group of candidate `v`.
    pub weights: DMatrix<f64>,
    /// Objective after each full sweep, starting with the zero matrix.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: KktResiduals,
}

/// Group-wise optimality residuals, scaled by `max(mu, 1)`.
///
/// For an inactive group the excess of the gradient norm over `mu`, for an
/// active one the norm of the gradient plus `mu` times the unit direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub inactive: f64,
    pub active: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.inactive.max(self.active)
    }
}

/// Value of the group-lasso objective at `weights`.
pub fn group_lasso_objective(
    target: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    mu: f64,
) -> f64 {
    let resid = target - weights * candidates;
    let penalty: f64 = weights.column_iter().map(|c| c.norm()).sum();
    0.5 * resid.norm_squared() + mu * penalty
}

struct Gram {
    /// `V x V` candidate Gram matrix.
    g: DMatrix<f64>,
    /// `U x V` cross products.
    h: DMatrix<f64>,
    target_sq: f64,
}

impl Gram {
    fn objective(&self, w: &DMatrix<f64>, mu: f64) -> f64 {
        let cross = w.dot(&self.h);
        let quad = (w * &self.g).dot(w);
        let penalty: f64 = w.column_iter().map(|c| c.norm()).sum();
        0.5 * (self.target_sq - 2.0 * cross + quad) + mu * penalty
    }

    /// `H[:, v] - W G[:, v]`, the negative gradient for group `v`.
    fn neg_gradient(&self, w: &DMatrix<f64>, v: usize) -> DVector<f64> {
        self.h.column(v) - w * self.g.column(v)
    }

    fn kkt(&self, w: &DMatrix<f64>, mu: f64) -> KktResiduals {
        let scale = mu.max(1.0);
        let mut out = KktResiduals::default();
        for v in 0..w.ncols() {
            let neg = self.neg_gradient(w, v);
            let col = w.column(v);
            let norm = col.norm();
            if norm == 0.0 {
                out.inactive = out.inactive.max((neg.norm() - mu).max(0.0) / scale);
            } else {
                let r = (col * (mu / norm) - neg).norm();
                out.active = out.active.max(r / scale);
            }
        }
        out
    }
}

/// Cyclic block coordinate descent with exact group soft-thresholding,
/// started from zero. Stops once the scaled optimality residuals drop
/// below `tol`; runs that hit `max_iter` are returned with `converged = false`.
pub fn solve_group_lasso(p: &GroupLassoProblem) -> Result<GroupLassoSolution> {
    if p.target.ncols() != p.candidates.ncols() {
        return Err(Error::Dimension(format!(
            "target has {} columns, candidates {}",
            p.target.ncols(),
            p.candidates.ncols()
        )));
    }
    if p.target.ncols() == 0 {
        return Err(Error::InvalidInput("need at least one record".into()));
    }
    if !(p.mu >= 0.0 && p.mu.is_finite()) {
        return Err(Error::InvalidInput(format!("mu = {} must be >= 0", p.mu)));
    }
    let finite = p.target.iter().chain(p.candidates.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidInput("non-finite data".into()));
    }

    let gram = Gram {
        g: &p.candidates * p.candidates.transpose(),
        h: &p.target * p.candidates.transpose(),
        target_sq: p.target.norm_squared(),
    };
    let (nu, nv) = (p.target.nrows(), p.candidates.nrows());
    let mut w = DMatrix::zeros(nu, nv);
    let mut trace = vec![gram.objective(&w, p.mu)];
    let mut kkt = gram.kkt(&w, p.mu);
    let mut iterations = 0;
    let mut converged = kkt.max() <= p.tol;

    while !converged && iterations < p.max_iter {
        for v in 0..nv {
            let gvv = gram.g[(v, v)];
            if gvv <= 0.0 {
                continue;
            }
            // partial residual correlation with group v removed
            let r = gram.neg_gradient(&w, v) + w.column(v) * gvv;
            let norm = r.norm();
            if norm <= p.mu {
                w.column_mut(v).fill(0.0);
            } else {
                w.column_mut(v).copy_from(&(r * ((1.0 - p.mu / norm) / gvv)));
            }
        }
        iterations += 1;
        trace.push(gram.objective(&w, p.mu));
        kkt = gram.kkt(&w, p.mu);
        converged = kkt.max() <= p.tol;
    }

    Ok(GroupLassoSolution {
        weights: w,
        objective_trace: trace,
        iterations,
        converged,
        kkt,
    })
}

/// How node rows are preprocessed before the group lasso.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Rows are used as observed.
    #[default]
    Raw,
    /// Rows are centered and scaled to unit variance; constant candidate rows
    /// are dropped and never selected.
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionOptions {
    pub mu: f64,
    /// A candidate is selected when its weight norm exceeds this fraction of
    /// the largest weight norm.
    pub threshold: f64,
    pub scaling: Scaling,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            mu: 200.0,
            threshold: 1e-6,
            scaling: Scaling::Raw,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Markov blanket of the targets.
    #[serde(rename = "FS")]
    Fs,
    /// Markov blanket of the decisions and targets together.
    #[serde(rename = "CF")]
    Cf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fs => "FS",
            Method::Cf => "CF",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fs" => Ok(Method::Fs),
            "cf" => Ok(Method::Cf),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub method: Option<Method>,
    pub mu: f64,
    /// Selected external features, as zero-based feature indices.
    pub kappa: Vec<usize>,
    /// Every selected node index.
    pub blanket: Vec<usize>,
    /// Node index of each weight column.
    pub candidates: Vec<usize>,
    pub weights: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: KktResiduals,
}

/// JSON form of a [`Selection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub method: Option<Method>,
    pub mu: f64,
    pub kappa: Vec<usize>,
    pub blanket: Vec<usize>,
    pub residuals: KktResiduals,
    pub converged: bool,
    pub iterations: usize,
}

impl Selection {
    pub fn record(&self) -> SelectionRecord {
        SelectionRecord {
            method: self.method,
            mu: self.mu,
            kappa: self.kappa.clone(),
            blanket: self.blanket.clone(),
            residuals: self.kkt,
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

fn standardize_rows(mat: &mut DMatrix<f64>) -> Vec<bool> {
    let d = mat.ncols() as f64;
    let mut constant = Vec::with_capacity(mat.nrows());
    for mut row in mat.row_iter_mut() {
        let mean = row.sum() / d;
        row.add_scalar_mut(-mean);
        let sd = (row.norm_squared() / d).sqrt();
        if sd > 0.0 {
            row /= sd;
            constant.push(false);
        } else {
            row.fill(0.0);
            constant.push(true);
        }
    }
    constant
}

/// Approximate Markov blanket of the nodes `u`.
pub fn markov_blanket(data: &Dataset, u: &[usize], opts: &SelectionOptions) -> Result<Selection> {
    if data.len() < 2 {
        return Err(Error::InvalidInput("need at least two records".into()));
    }
    if u.is_empty() {
        return Err(Error::InvalidInput("blanket target set is empty".into()));
    }
    let total = data.node_count();
    if let Some(&v) = u.iter().find(|&&v| v >= total) {
        return Err(Error::UnknownNode(v));
    }
    let mut candidates: Vec<usize> = (0..total).filter(|v| !u.contains(v)).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate nodes remain".into()));
    }

    let mut target = data.node_matrix(u);
    let mut cand = data.node_matrix(&candidates);
    if opts.scaling == Scaling::Standardized {
        standardize_rows(&mut target);
        let constant = standardize_rows(&mut cand);
        let keep: Vec<usize> = (0..candidates.len()).filter(|&i| !constant[i]).collect();
        cand = DMatrix::from_fn(keep.len(), cand.ncols(), |i, j| cand[(keep[i], j)]);
        candidates = keep.iter().map(|&i| candidates[i]).collect();
    }

    let problem = GroupLassoProblem {
        target,
        candidates: cand,
        mu: opts.mu,
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let sol = solve_group_lasso(&problem)?;
    let norms: Vec<f64> = sol.weights.column_iter().map(|c| c.norm()).collect();
    let largest = norms.iter().copied().fold(0.0, f64::max);
    let blanket: Vec<usize> = if largest > 0.0 {
        candidates
            .iter()
            .zip(&norms)
            .filter(|&(_, &nrm)| nrm > opts.threshold * largest)
            .map(|(&v, _)| v)
            .collect()
    } else {
        Vec::new()
    };
    let first_feature = data.feature_node(0);
    let kappa = blanket
        .iter()
        .filter(|&&v| data.class_of(v) == NodeClass::External)
        .map(|&v| v - first_feature)
        .collect();
    Ok(Selection {
        method: None,
        mu: opts.mu,
        kappa,
        blanket,
        candidates,
        weights: sol.weights,
        objective_trace: sol.objective_trace,
        iterations: sol.iterations,
        converged: sol.converged,
        kkt: sol.kkt,
    })
}

/// Baseline selection: the blanket of the targets.
pub fn select_fs(data: &Dataset, opts: &SelectionOptions) -> Result<Selection> {
    let mut s = markov_blanket(data, &data.nodes_of(NodeClass::Target), opts)?;
    s.method = Some(Method::Fs);
    Ok(s)
}

/// Causally admissible selection: the blanket of decisions and targets.
pub fn select_cf(data: &Dataset, opts: &SelectionOptions) -> Result<Selection> {
    let mut u = data.nodes_of(NodeClass::Decision);
    u.extend(data.nodes_of(NodeClass::Target));
    let mut s = markov_blanket(data, &u, opts)?;
    s.method = Some(Method::Cf);
    Ok(s)
}

pub fn select(data: &Dataset, method: Method, opts: &SelectionOptions) -> Result<Selection> {
    match method {
        Method::Fs => select_fs(data, opts),
        Method::Cf => select_cf(data, opts),
    }
}
