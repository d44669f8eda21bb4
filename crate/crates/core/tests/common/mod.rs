//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the routines it checks: d-separation is decided by
//! enumerating simple paths, and the group lasso is minimized support by
//! support with accelerated proximal gradient.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cafs::graph::{CausalDag, NodeClass};
use cafs::seed::rng_from_seed;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random DAG on `n` nodes with a random topological order, all nodes external.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> CausalDag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((order[i], order[j]));
            }
        }
    }
    let nodes = (0..n).map(|v| (NodeClass::External, format!("v{v}"))).collect();
    CausalDag::new(nodes, &edges).unwrap()
}

/// Three disjoint node sets; source and sink are nonempty.
pub fn random_query(rng: &mut ChaCha8Rng, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (mut a, mut b, mut s) = (vec![idx[0]], vec![idx[1]], Vec::new());
    for &v in &idx[2..] {
        match rng.random_range(0..4) {
            0 => a.push(v),
            1 => b.push(v),
            2 => s.push(v),
            _ => {}
        }
    }
    (a, b, s)
}

fn descendants_or_self(dag: &CausalDag, v: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([v]);
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        for &c in dag.children(u) {
            if out.insert(c) {
                stack.push(c);
            }
        }
    }
    out
}

/// A path is blocked by `s` when some interior noncollider is in `s`, or some
/// interior collider has neither itself nor a descendant in `s`.
fn path_blocked(dag: &CausalDag, path: &[usize], s: &BTreeSet<usize>) -> bool {
    path.windows(3).any(|w| {
        let (a, v, b) = (w[0], w[1], w[2]);
        let collider = dag.has_edge(a, v) && dag.has_edge(b, v);
        if collider {
            descendants_or_self(dag, v).is_disjoint(s)
        } else {
            s.contains(&v)
        }
    })
}

/// d-separation by enumerating every simple path of the skeleton.
pub fn naive_d_separated(dag: &CausalDag, a: &[usize], b: &[usize], s: &[usize]) -> bool {
    let s: BTreeSet<usize> = s.iter().copied().collect();
    let neighbours = |v: usize| -> Vec<usize> {
        let mut out: Vec<usize> = dag.parents(v).iter().chain(dag.children(v)).copied().collect();
        out.sort_unstable();
        out
    };
    fn walk(
        dag: &CausalDag,
        path: &mut Vec<usize>,
        sinks: &[usize],
        s: &BTreeSet<usize>,
        neighbours: &dyn Fn(usize) -> Vec<usize>,
    ) -> bool {
        let last = *path.last().unwrap();
        if path.len() > 1 && sinks.contains(&last) && !path_blocked(dag, path, s) {
            return true;
        }
        for w in neighbours(last) {
            if path.contains(&w) {
                continue;
            }
            path.push(w);
            let open = walk(dag, path, sinks, s, neighbours);
            path.pop();
            if open {
                return true;
            }
        }
        false
    }
    for &x in a {
        let mut path = vec![x];
        if walk(dag, &mut path, b, &s, &neighbours) {
            return false;
        }
    }
    true
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random group-lasso instance: `(target, candidates, mu)` with at most
/// `max_v` candidates and a strength placed between zero and the level that
/// switches every group off.
pub fn lasso_instance(seed: u64, max_v: usize) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let mut rng = rng_from_seed(seed);
    let nv = rng.random_range(1..=max_v);
    let nu = rng.random_range(1..=3);
    let d = rng.random_range(12..40);
    let candidates = gaussian(&mut rng, nv, d);
    let mut w = gaussian(&mut rng, nu, nv);
    for mut col in w.column_iter_mut() {
        if rng.random_bool(0.5) {
            col.fill(0.0);
        }
    }
    let target = &w * &candidates + gaussian(&mut rng, nu, d) * 0.7;
    let h = &target * candidates.transpose();
    let top = h.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mu = top * rng.random_range(0.05..0.9);
    (target, candidates, mu)
}

fn objective(t: &DMatrix<f64>, c: &DMatrix<f64>, w: &DMatrix<f64>, mu: f64) -> f64 {
    let penalty: f64 = w.column_iter().map(|col| col.norm()).sum();
    0.5 * (t - w * c).norm_squared() + mu * penalty
}

/// Minimum of the objective with every group outside `support` fixed at
/// zero, by FISTA with group soft-thresholding.
fn restricted_minimum(t: &DMatrix<f64>, c: &DMatrix<f64>, mu: f64, support: &[usize]) -> f64 {
    if support.is_empty() {
        return 0.5 * t.norm_squared();
    }
    let cs = DMatrix::from_fn(support.len(), c.ncols(), |i, j| c[(support[i], j)]);
    let gram = &cs * cs.transpose();
    let lip = SymmetricEigen::new(gram.clone()).eigenvalues.max().max(1e-12);
    let tc = t * cs.transpose();
    let prox = |w: &mut DMatrix<f64>| {
        for mut col in w.column_iter_mut() {
            let n = col.norm();
            let shrink = if n > mu / lip { 1.0 - mu / (lip * n) } else { 0.0 };
            col *= shrink;
        }
    };
    let mut w = DMatrix::zeros(t.nrows(), support.len());
    let mut y = w.clone();
    let mut step = 1.0_f64;
    for _ in 0..200_000 {
        let grad = &y * &gram - &tc;
        let mut next = &y - grad / lip;
        prox(&mut next);
        // adaptive restart keeps the iteration monotone enough to converge linearly
        if (&y - &next).dot(&(&next - &w)) > 0.0 {
            step = 1.0;
        }
        let next_step = 0.5 * (1.0 + (1.0 + 4.0 * step * step).sqrt());
        let moved = (&next - &w).norm();
        y = &next + (&next - &w) * ((step - 1.0) / next_step);
        w = next;
        step = next_step;
        if moved <= 1e-14 * (1.0 + w.norm()) {
            break;
        }
    }
    objective(t, &cs, &w, mu)
}

/// Support of the global minimizer: the support whose restricted minimum is
/// lowest, preferring the smaller support when two agree to `rel_tol`.
pub fn brute_force_support(t: &DMatrix<f64>, c: &DMatrix<f64>, mu: f64, rel_tol: f64) -> (Vec<usize>, f64) {
    let nv = c.nrows();
    let mut masks: Vec<usize> = (0..1usize << nv).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in masks {
        let support: Vec<usize> = (0..nv).filter(|v| mask >> v & 1 == 1).collect();
        let value = restricted_minimum(t, c, mu, &support);
        let better = match &best {
            None => true,
            Some((_, b)) => value < b - rel_tol * (1.0 + b.abs()),
        };
        if better {
            best = Some((support, value));
        }
    }
    best.unwrap()
}
