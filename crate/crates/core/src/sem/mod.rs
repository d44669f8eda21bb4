//! Synthetic price/demand networks and their linear structural equations.
//!
//! Node layout of every generated graph: decisions `x1..xM` at indices
//! `0..M`, targets `y1..yN` at `M..M+N`, external features `z1..zK` after.
//!
//! ```text
//! z_k ~ Bernoulli(p_k)
//! x_m = 1 - s * sum_{k: z_k -> x_m} z_k - s * eps_m,     eps_m ~ Bernoulli(alpha)
//! y   = A x + b + C z + delta,                         delta ~ N(0, noise_var I)
//! ```

mod dataset;

pub use dataset::Dataset;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalDag, NodeClass};
use crate::seed::{derive_seed, rng_from_seed};

/// Largest number of independent features the exact conditional oracle enumerates.
pub const MAX_ENUMERATED_FEATURES: usize = 20;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemConfig {
    /// Number of products M (decision and target variables each).
    pub products: usize,
    /// Number of external features K.
    pub features: usize,
    pub edge_prob_zx: f64,
    pub edge_prob_zy: f64,
    /// Mean of the Bernoulli pricing noise.
    pub alpha: f64,
    /// Variance of the demand noise.
    pub noise_var: f64,
    /// Price discount per active feature and per noise event.
    pub discount_step: f64,
    /// Range of the off-diagonal price effects.
    pub offdiag_range: (f64, f64),
    /// Extra margin subtracted from each own-price effect beyond diagonal dominance.
    pub diag_margin: (f64, f64),
    pub intercept_range: (f64, f64),
    pub feature_effect_range: (f64, f64),
    pub seed: u64,
}

impl Default for SemConfig {
    fn default() -> Self {
        SemConfig {
            products: 10,
            features: 10,
            edge_prob_zx: 0.1,
            edge_prob_zy: 0.5,
            alpha: 0.1,
            noise_var: 100.0,
            discount_step: 0.1,
            offdiag_range: (-1.0, 1.0),
            diag_margin: (1.0, 3.0),
            intercept_range: (5.0, 15.0),
            feature_effect_range: (-1.0, 1.0),
            seed: 0,
        }
    }
}

impl SemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.products == 0 || self.features == 0 {
            return bad("products and features must be at least 1".into());
        }
        for (name, p) in [
            ("edge_prob_zx", self.edge_prob_zx),
            ("edge_prob_zy", self.edge_prob_zy),
            ("alpha", self.alpha),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad(format!("noise_var = {} must be >= 0", self.noise_var));
        }
        if !self.discount_step.is_finite() {
            return bad("discount_step must be finite".into());
        }
        for (name, (lo, hi)) in [
            ("offdiag_range", self.offdiag_range),
            ("diag_margin", self.diag_margin),
            ("intercept_range", self.intercept_range),
            ("feature_effect_range", self.feature_effect_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} = ({lo}, {hi}) is not a range"));
            }
        }
        if self.diag_margin.0 <= 0.0 {
            return bad("diag_margin must be positive".into());
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn layout_labels(m: usize, n: usize, k: usize) -> Vec<(NodeClass, String)> {
    (1..=m)
        .map(|i| (NodeClass::Decision, format!("x{i}")))
        .chain((1..=n).map(|i| (NodeClass::Target, format!("y{i}"))))
        .chain((1..=k).map(|i| (NodeClass::External, format!("z{i}"))))
        .collect()
}

/// Random price/demand network: every price affects every demand, and each
/// feature points at each price and each demand with the configured
/// probabilities. There are no edges inside the price, demand or feature groups.
pub fn generate_network(cfg: &SemConfig) -> Result<CausalDag> {
    cfg.validate()?;
    let (m, k) = (cfg.products, cfg.features);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[1]));
    let z0 = 2 * m;
    let mut edges = Vec::new();
    for xm in 0..m {
        for yn in 0..m {
            edges.push((xm, m + yn));
        }
    }
    for zk in 0..k {
        for xm in 0..m {
            if rng.random::<f64>() < cfg.edge_prob_zx {
                edges.push((z0 + zk, xm));
            }
        }
    }
    for zk in 0..k {
        for yn in 0..m {
            if rng.random::<f64>() < cfg.edge_prob_zy {
                edges.push((z0 + zk, m + yn));
            }
        }
    }
    CausalDag::new(layout_labels(m, m, k), &edges)
}

/// Draws SEM parameters on a network from [`generate_network`].
///
/// Own-price effects are set to minus half the absolute row and column sums
/// of the cross effects, minus a positive margin, so the symmetric part of
/// `A` is strictly diagonally dominant with negative diagonal.
pub fn generate_sem(dag: &CausalDag, cfg: &SemConfig) -> Result<LinearSem> {
    cfg.validate()?;
    let layout = Layout::of(dag)?;
    if layout.m != layout.n {
        return Err(Error::InvalidInput(
            "generated SEMs need as many targets as decisions".into(),
        ));
    }
    let (m, k) = (layout.m, layout.k);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[2]));

    let p = DVector::from_fn(k, |_, _| rng.random::<f64>());
    let mut a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.0
        } else {
            uniform(&mut rng, cfg.offdiag_range)
        }
    });
    for i in 0..m {
        let row: f64 = (0..m).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        let col: f64 = (0..m).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
        a[(i, i)] = -(row + col) / 2.0 - uniform(&mut rng, cfg.diag_margin);
    }
    let b = DVector::from_fn(m, |_, _| uniform(&mut rng, cfg.intercept_range));
    let mut c = DMatrix::from_fn(m, k, |_, _| uniform(&mut rng, cfg.feature_effect_range));
    for n in 0..m {
        for kk in 0..k {
            if !dag.has_edge(layout.z(kk), layout.y(n)) {
                c[(n, kk)] = 0.0;
            }
        }
    }
    LinearSem::assemble(
        dag.clone(),
        p,
        a,
        b,
        c,
        vec![None; k],
        cfg.alpha,
        cfg.noise_var,
        cfg.discount_step,
    )
}

/// Index layout of a price/demand network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    m: usize,
    n: usize,
    k: usize,
}

impl Layout {
    fn of(dag: &CausalDag) -> Result<Layout> {
        let m = dag.nodes_of(NodeClass::Decision).len();
        let n = dag.nodes_of(NodeClass::Target).len();
        let k = dag.nodes_of(NodeClass::External).len();
        let ordered = dag.nodes().iter().all(|node| {
            let want = if node.index < m {
                NodeClass::Decision
            } else if node.index < m + n {
                NodeClass::Target
            } else {
                NodeClass::External
            };
            node.class == want
        });
        if !ordered {
            return Err(Error::InvalidInput(
                "graph nodes must be ordered decisions, targets, externals".into(),
            ));
        }
        Ok(Layout { m, n, k })
    }

    fn y(&self, n: usize) -> usize {
        self.m + n
    }

    fn z(&self, k: usize) -> usize {
        self.m + self.n + k
    }
}

/// Serializable parameter record of a [`LinearSem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub p: Vec<f64>,
    /// Rows of `A` (targets by decisions).
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Rows of `C` (targets by features).
    pub c: Vec<Vec<f64>>,
    /// `(feature, decision)` pairs, zero-based.
    pub zx_edges: Vec<(usize, usize)>,
    /// `(feature, target)` pairs, zero-based.
    pub zy_edges: Vec<(usize, usize)>,
    /// For each feature, the feature it copies, if any.
    #[serde(default)]
    pub feature_source: Vec<Option<usize>>,
    pub alpha: f64,
    pub noise_var: f64,
    pub discount_step: f64,
}

/// Linear SEM over a price/demand network.
#[derive(Debug, Clone)]
pub struct LinearSem {
    dag: CausalDag,
    p: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    zx_parents: Vec<Vec<usize>>,
    feature_source: Vec<Option<usize>>,
    alpha: f64,
    noise_var: f64,
    discount_step: f64,
}

impl LinearSem {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dag: CausalDag,
        p: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DMatrix<f64>,
        feature_source: Vec<Option<usize>>,
        alpha: f64,
        noise_var: f64,
        discount_step: f64,
    ) -> Result<LinearSem> {
        let layout = Layout::of(&dag)?;
        let (m, n, k) = (layout.m, layout.n, layout.k);
        if a.shape() != (n, m) || b.len() != n || c.shape() != (n, k) || p.len() != k {
            return Err(Error::Dimension(format!(
                "expected A {n}x{m}, b {n}, C {n}x{k}, p {k}"
            )));
        }
        if feature_source.len() != k {
            return Err(Error::Dimension("feature_source length".into()));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("feature means must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&alpha) || !(noise_var >= 0.0) {
            return Err(Error::InvalidInput("alpha or noise_var out of range".into()));
        }
        let finite = a.iter().chain(b.iter()).chain(c.iter()).all(|v| v.is_finite());
        if !finite || !discount_step.is_finite() {
            return Err(Error::InvalidInput("non-finite SEM parameter".into()));
        }
        for (kk, src) in feature_source.iter().enumerate() {
            if let Some(s) = *src {
                if s >= k || feature_source[s].is_some() {
                    return Err(Error::InvalidInput(format!(
                        "feature {kk} copies {s}, which is not an independent feature"
                    )));
                }
            }
        }
        for nn in 0..n {
            for kk in 0..k {
                if c[(nn, kk)] != 0.0 && !dag.has_edge(layout.z(kk), layout.y(nn)) {
                    return Err(Error::InvalidInput(format!(
                        "c[{nn}][{kk}] is nonzero without a feature-to-target edge"
                    )));
                }
            }
        }
        let zx_parents = (0..m)
            .map(|xm| {
                dag.parents(xm)
                    .iter()
                    .filter(|&&v| v >= m + n)
                    .map(|&v| v - m - n)
                    .collect()
            })
            .collect();
        Ok(LinearSem {
            dag,
            p,
            a,
            b,
            c,
            zx_parents,
            feature_source,
            alpha,
            noise_var,
            discount_step,
        })
    }

    pub fn from_params(params: &SemParams) -> Result<LinearSem> {
        let n = params.a.len();
        let m = params.a.first().map_or(0, Vec::len);
        let k = params.p.len();
        let matrix = |rows: &[Vec<f64>], cols: usize, name: &str| -> Result<DMatrix<f64>> {
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Dimension(format!("ragged rows in {name}")));
            }
            Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
        };
        let a = matrix(&params.a, m, "A")?;
        let c = matrix(&params.c, k, "C")?;
        if params.c.len() != n {
            return Err(Error::Dimension("C must have one row per target".into()));
        }
        let feature_source = if params.feature_source.is_empty() {
            vec![None; k]
        } else {
            params.feature_source.clone()
        };
        let mut edges = Vec::new();
        for xm in 0..m {
            for yn in 0..n {
                edges.push((xm, m + yn));
            }
        }
        for &(kk, xm) in &params.zx_edges {
            if kk >= k || xm >= m {
                return Err(Error::InvalidInput(format!("bad z->x edge ({kk}, {xm})")));
            }
            edges.push((m + n + kk, xm));
        }
        for &(kk, yn) in &params.zy_edges {
            if kk >= k || yn >= n {
                return Err(Error::InvalidInput(format!("bad z->y edge ({kk}, {yn})")));
            }
            edges.push((m + n + kk, m + yn));
        }
        for (kk, src) in feature_source.iter().enumerate() {
            if let Some(s) = *src {
                if s < k {
                    edges.push((m + n + s, m + n + kk));
                }
            }
        }
        let dag = CausalDag::new(layout_labels(m, n, k), &edges)?;
        LinearSem::assemble(
            dag,
            DVector::from_vec(params.p.clone()),
            a,
            DVector::from_vec(params.b.clone()),
            c,
            feature_source,
            params.alpha,
            params.noise_var,
            params.discount_step,
        )
    }

    pub fn to_params(&self) -> SemParams {
        let rows = |mat: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..mat.nrows())
                .map(|i| mat.row(i).iter().copied().collect())
                .collect()
        };
        let (m, n) = (self.products(), self.targets());
        let mut zx_edges = Vec::new();
        for (xm, parents) in self.zx_parents.iter().enumerate() {
            zx_edges.extend(parents.iter().map(|&kk| (kk, xm)));
        }
        zx_edges.sort_unstable();
        let zy_edges = self
            .dag
            .edges()
            .into_iter()
            .filter(|&(p, ch)| p >= m + n && (m..m + n).contains(&ch))
            .map(|(p, ch)| (p - m - n, ch - m))
            .collect();
        SemParams {
            p: self.p.iter().copied().collect(),
            a: rows(&self.a),
            b: self.b.iter().copied().collect(),
            c: rows(&self.c),
            zx_edges,
            zy_edges,
            feature_source: self.feature_source.clone(),
            alpha: self.alpha,
            noise_var: self.noise_var,
            discount_step: self.discount_step,
        }
    }

    /// Same SEM plus one extra feature that is an exact copy of `source` and
    /// has no effect of its own.
    pub fn with_feature_copy(&self, source: usize) -> Result<LinearSem> {
        let k = self.features();
        if source >= k {
            return Err(Error::InvalidInput(format!("feature {source} out of range")));
        }
        let base = self.feature_source[source].unwrap_or(source);
        let mut params = self.to_params();
        params.p.push(self.p[base]);
        for row in &mut params.c {
            row.push(0.0);
        }
        params.feature_source.push(Some(base));
        LinearSem::from_params(&params)
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn products(&self) -> usize {
        self.a.ncols()
    }

    pub fn targets(&self) -> usize {
        self.a.nrows()
    }

    pub fn features(&self) -> usize {
        self.p.len()
    }

    pub fn feature_means(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn price_effects(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn intercepts(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn feature_effects(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Features pointing at decision `m`.
    pub fn price_drivers(&self, m: usize) -> &[usize] {
        &self.zx_parents[m]
    }

    pub fn feature_source(&self) -> &[Option<usize>] {
        &self.feature_source
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn discount_step(&self) -> f64 {
        self.discount_step
    }

    /// Largest eigenvalue of the symmetric part of `A`.
    pub fn max_symmetric_eigenvalue(&self) -> f64 {
        let sym = (&self.a + self.a.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.max()
    }

    fn independent_features(&self) -> Vec<usize> {
        (0..self.features())
            .filter(|&k| self.feature_source[k].is_none())
            .collect()
    }

    fn fill_copies(&self, z: &mut [f64]) {
        for (k, src) in self.feature_source.iter().enumerate() {
            if let Some(s) = *src {
                z[k] = z[s];
            }
        }
    }

    fn check_xz(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        if x.len() != self.products() || z.len() != self.features() {
            return Err(Error::Dimension(format!(
                "expected x of length {} and z of length {}",
                self.products(),
                self.features()
            )));
        }
        Ok(())
    }

    /// Draws `d` i.i.d. observational records.
    pub fn sample(&self, d: usize, seed: u64) -> Result<Dataset> {
        if d == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        let (m, n, k) = (self.products(), self.targets(), self.features());
        let mut rng = rng_from_seed(seed);
        let sd = self.noise_var.sqrt();
        let mut xs = DMatrix::zeros(d, m);
        let mut ys = DMatrix::zeros(d, n);
        let mut zs = DMatrix::zeros(d, k);
        let mut z = vec![0.0; k];
        for row in 0..d {
            for kk in 0..k {
                if self.feature_source[kk].is_none() {
                    z[kk] = if rng.random::<f64>() < self.p[kk] { 1.0 } else { 0.0 };
                }
            }
            self.fill_copies(&mut z);
            for xm in 0..m {
                let active: f64 = self.zx_parents[xm].iter().map(|&kk| z[kk]).sum();
                let eps = if rng.random::<f64>() < self.alpha { 1.0 } else { 0.0 };
                xs[(row, xm)] = 1.0 - self.discount_step * active - self.discount_step * eps;
            }
            for yn in 0..n {
                let mut mean = self.b[yn];
                for xm in 0..m {
                    mean += self.a[(yn, xm)] * xs[(row, xm)];
                }
                for kk in 0..k {
                    mean += self.c[(yn, kk)] * z[kk];
                }
                let noise: f64 = rng.sample(StandardNormal);
                ys[(row, yn)] = mean + sd * noise;
            }
            for kk in 0..k {
                zs[(row, kk)] = z[kk];
            }
        }
        Dataset::new(xs, ys, zs)
    }

    /// Draws `k`-vectors of features from their marginal distribution.
    pub fn sample_features(&self, seed: u64) -> DVector<f64> {
        let mut rng = rng_from_seed(seed);
        let mut z = vec![0.0; self.features()];
        for kk in 0..self.features() {
            if self.feature_source[kk].is_none() {
                z[kk] = if rng.random::<f64>() < self.p[kk] { 1.0 } else { 0.0 };
            }
        }
        self.fill_copies(&mut z);
        DVector::from_vec(z)
    }

    /// `E[Y | do(X = x), Z = z] = A x + b + C z`.
    pub fn expected_y_do(&self, x: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_xz(x, z)?;
        Ok(&self.a * x + &self.b + &self.c * z)
    }

    /// One draw of `Y` under `do(X = x)` with features fixed at `z`.
    pub fn sample_intervention(
        &self,
        x: &DVector<f64>,
        z: &DVector<f64>,
        seed: u64,
    ) -> Result<DVector<f64>> {
        let mean = self.expected_y_do(x, z)?;
        let mut rng = rng_from_seed(seed);
        let sd = self.noise_var.sqrt();
        Ok(mean.map(|mu| {
            let noise: f64 = rng.sample(StandardNormal);
            mu + sd * noise
        }))
    }

    /// Probability that decision `m` takes the value `x` when `active` of its
    /// driving features are on.
    fn price_mass(&self, x: f64, active: f64) -> f64 {
        let list = 1.0 - self.discount_step * active;
        let mut mass = 0.0;
        if (x - list).abs() <= GRID_TOL {
            mass += 1.0 - self.alpha;
        }
        if (x - (list - self.discount_step)).abs() <= GRID_TOL {
            mass += self.alpha;
        }
        mass
    }

    /// Exact `E[Y | X = x, Z_kappa = z_kappa]` by enumerating every feature state.
    ///
    /// Fails with [`Error::Unconditionable`] when the event has probability
    /// zero, e.g. when `x` is not on the reachable price grid.
    pub fn expected_y_cond(
        &self,
        x: &DVector<f64>,
        kappa: &[usize],
        z_kappa: &[f64],
    ) -> Result<DVector<f64>> {
        let k = self.features();
        if x.len() != self.products() || kappa.len() != z_kappa.len() {
            return Err(Error::Dimension(
                "x or z_kappa has the wrong length".into(),
            ));
        }
        if let Some(&bad) = kappa.iter().find(|&&kk| kk >= k) {
            return Err(Error::InvalidInput(format!("feature {bad} out of range")));
        }
        let free = self.independent_features();
        if free.len() > MAX_ENUMERATED_FEATURES {
            return Err(Error::TooManyFeatures(free.len(), MAX_ENUMERATED_FEATURES));
        }

        let mut total = 0.0;
        let mut z_mean = vec![0.0; k];
        let mut z = vec![0.0; k];
        'states: for mask in 0..1u64 << free.len() {
            let mut weight = 1.0;
            for (bit, &kk) in free.iter().enumerate() {
                let on = mask >> bit & 1 == 1;
                z[kk] = if on { 1.0 } else { 0.0 };
                weight *= if on { self.p[kk] } else { 1.0 - self.p[kk] };
            }
            self.fill_copies(&mut z);
            for (&kk, &v) in kappa.iter().zip(z_kappa) {
                if (z[kk] - v).abs() > GRID_TOL {
                    continue 'states;
                }
            }
            for (xm, parents) in self.zx_parents.iter().enumerate() {
                let active: f64 = parents.iter().map(|&kk| z[kk]).sum();
                weight *= self.price_mass(x[xm], active);
            }
            if weight > 0.0 {
                total += weight;
                for (acc, &v) in z_mean.iter_mut().zip(&z) {
                    *acc += weight * v;
                }
            }
        }
        if total <= 0.0 {
            return Err(Error::Unconditionable);
        }
        let z_mean = DVector::from_iterator(k, z_mean.into_iter().map(|v| v / total));
        Ok(&self.a * x + &self.b + &self.c * z_mean)
    }
}
