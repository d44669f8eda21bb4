//! Random DAGs and binary networks for brute-force verification sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{CausalDag, DiscreteBayesNet, NodeClass};
use crate::error::Result;

/// Random DAG over `classes.len()` nodes: a random topological order is drawn
/// and each forward pair becomes an edge with probability `edge_prob`.
pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, classes: &[NodeClass], edge_prob: f64) -> CausalDag {
    let n = classes.len();
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
    CausalDag::new(labelled(classes), &edges).expect("forward edges are acyclic")
}

/// Random DAG in which external nodes precede decision nodes, which precede
/// target nodes, so no external node descends from a decision node and no
/// decision or external node descends from a target.
///
/// Every node is observed, hence the external set is an adjustment set.
pub fn random_admissible_dag<R: Rng + ?Sized>(rng: &mut R, n: usize, edge_prob: f64) -> CausalDag {
    assert!(n >= 3, "need at least one node of each class");
    let mut counts = [1usize; 3];
    for _ in 3..n {
        counts[rng.random_range(0..3)] += 1;
    }
    let mut classes = Vec::with_capacity(n);
    classes.extend(std::iter::repeat_n(NodeClass::External, counts[0]));
    classes.extend(std::iter::repeat_n(NodeClass::Decision, counts[1]));
    classes.extend(std::iter::repeat_n(NodeClass::Target, counts[2]));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    CausalDag::new(labelled(&classes), &edges).expect("forward edges are acyclic")
}

/// Binary network on `dag` with table entries drawn uniformly and each row
/// normalized.
pub fn random_binary_net<R: Rng + ?Sized>(rng: &mut R, dag: CausalDag) -> DiscreteBayesNet {
    let cards = vec![2; dag.len()];
    let cpts = (0..dag.len())
        .map(|v| {
            let rows = 1usize << dag.parents(v).len();
            (0..rows)
                .flat_map(|_| {
                    let a: f64 = rng.random();
                    let b: f64 = rng.random();
                    let s = a + b;
                    [a / s, b / s]
                })
                .collect()
        })
        .collect();
    DiscreteBayesNet::new(dag, cards, cpts).expect("normalized rows")
}

fn labelled(classes: &[NodeClass]) -> Vec<(NodeClass, String)> {
    let mut counters = [0usize; 3];
    classes
        .iter()
        .map(|&c| {
            let (slot, prefix) = match c {
                NodeClass::Decision => (0, "x"),
                NodeClass::Target => (1, "y"),
                NodeClass::External => (2, "z"),
            };
            counters[slot] += 1;
            (c, format!("{prefix}{}", counters[slot]))
        })
        .collect()
}

/// Outcome of a brute-force sweep over random networks.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepReport {
    pub networks: usize,
    pub sets_checked: usize,
    pub sets_admitted: usize,
    pub violations: usize,
    pub max_admitted_gap: f64,
}

/// For `trials` random networks whose external set is admissible, checks every
/// external subset passing [`CausalDag::check_thm10_premise`] against exact
/// enumeration of the adjustment identity.
pub fn theorem10_sweep<R: Rng + ?Sized>(
    rng: &mut R,
    nodes: usize,
    trials: usize,
    tol: f64,
) -> Result<SweepReport> {
    let mut report = SweepReport::default();
    for _ in 0..trials {
        let edge_prob = rng.random_range(0.2..0.8);
        let dag = random_admissible_dag(rng, nodes, edge_prob);
        let net = random_binary_net(rng, dag);
        let x = net.dag().nodes_of(NodeClass::Decision);
        let y = net.dag().nodes_of(NodeClass::Target);
        let z = net.dag().nodes_of(NodeClass::External);
        report.networks += 1;
        for mask in 0..1usize << z.len() {
            let kappa: Vec<usize> = subset(&z, mask);
            report.sets_checked += 1;
            if net.dag().check_thm10_premise(&kappa)? {
                report.sets_admitted += 1;
                let gap = net.adjustment_gap(&x, &y, &kappa)?;
                report.max_admitted_gap = report.max_admitted_gap.max(gap);
                if gap > tol {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

/// For `trials` random networks, picks a random decision/target pair and
/// checks every set passing the back-door criterion against enumeration.
pub fn backdoor_sweep<R: Rng + ?Sized>(
    rng: &mut R,
    nodes: usize,
    trials: usize,
    tol: f64,
) -> Result<SweepReport> {
    let mut report = SweepReport::default();
    for _ in 0..trials {
        let edge_prob = rng.random_range(0.2..0.8);
        let mut classes = vec![NodeClass::External; nodes];
        let mut idx: Vec<usize> = (0..nodes).collect();
        idx.shuffle(rng);
        classes[idx[0]] = NodeClass::Decision;
        classes[idx[1]] = NodeClass::Target;
        let dag = random_dag(rng, &classes, edge_prob);
        let net = random_binary_net(rng, dag);
        let (x, y) = ([idx[0]], [idx[1]]);
        let rest = &idx[2..];
        report.networks += 1;
        for mask in 0..1usize << rest.len() {
            let s = subset(rest, mask);
            report.sets_checked += 1;
            if net.dag().satisfies_backdoor(&x, &y, &s)? {
                report.sets_admitted += 1;
                let gap = net.adjustment_gap(&x, &y, &s)?;
                report.max_admitted_gap = report.max_admitted_gap.max(gap);
                if gap > tol {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

fn subset(items: &[usize], mask: usize) -> Vec<usize> {
    let mut out: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, &v)| v)
        .collect();
    out.sort_unstable();
    out
}
