use super::{CausalDag, NodeClass};
use crate::error::{Error, Result};

/// Upper bound on the number of joint states enumerated by exact queries.
pub const MAX_JOINT_STATES: usize = 1 << 22;

const ROW_SUM_TOL: f64 = 1e-12;

/// Discrete Bayesian network with one conditional probability table per node.
///
/// The table of node `v` is stored row-major: the row index is the mixed-radix
/// encoding of the parent states (parents in ascending index order, first
/// parent most significant) and `cpt[row * card(v) + state]` is
/// `p(v = state | parents)`.
#[derive(Debug, Clone)]
pub struct DiscreteBayesNet {
    dag: CausalDag,
    cards: Vec<usize>,
    cpts: Vec<Vec<f64>>,
}

impl DiscreteBayesNet {
    pub fn new(dag: CausalDag, cards: Vec<usize>, cpts: Vec<Vec<f64>>) -> Result<Self> {
        let n = dag.len();
        if cards.len() != n || cpts.len() != n {
            return Err(Error::Dimension(format!(
                "{n} nodes but {} cardinalities and {} tables",
                cards.len(),
                cpts.len()
            )));
        }
        let mut states: usize = 1;
        for (v, &c) in cards.iter().enumerate() {
            if c < 2 {
                return Err(Error::InvalidCpt {
                    node: v,
                    reason: format!("cardinality {c} is below 2"),
                });
            }
            states = states.saturating_mul(c);
        }
        if states > MAX_JOINT_STATES {
            return Err(Error::InvalidInput(format!(
                "{states} joint states exceed the enumeration limit"
            )));
        }
        for v in 0..n {
            let rows: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
            let table = &cpts[v];
            if table.len() != rows * cards[v] {
                return Err(Error::InvalidCpt {
                    node: v,
                    reason: format!("expected {} entries, got {}", rows * cards[v], table.len()),
                });
            }
            if let Some(p) = table.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidCpt {
                    node: v,
                    reason: format!("probability {p} outside [0, 1]"),
                });
            }
            for (r, row) in table.chunks(cards[v]).enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidCpt {
                        node: v,
                        reason: format!("row {r} sums to {sum}"),
                    });
                }
            }
        }
        Ok(DiscreteBayesNet { dag, cards, cpts })
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn cpt(&self, v: usize) -> &[f64] {
        &self.cpts[v]
    }

    fn factor(&self, v: usize, assignment: &[usize]) -> f64 {
        let row = self
            .dag
            .parents(v)
            .iter()
            .fold(0, |acc, &p| acc * self.cards[p] + assignment[p]);
        self.cpts[v][row * self.cards[v] + assignment[v]]
    }

    fn check_assignment(&self, pairs: &[(usize, usize)]) -> Result<()> {
        for &(v, s) in pairs {
            if v >= self.dag.len() {
                return Err(Error::UnknownNode(v));
            }
            if s >= self.cards[v] {
                return Err(Error::InvalidState { node: v, state: s });
            }
        }
        Ok(())
    }

    /// Probability of a complete assignment: the product of one table entry per node.
    pub fn joint_prob(&self, assignment: &[usize]) -> Result<f64> {
        if assignment.len() != self.dag.len() {
            return Err(Error::Dimension(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                self.dag.len()
            )));
        }
        let pairs: Vec<(usize, usize)> = assignment.iter().copied().enumerate().collect();
        self.check_assignment(&pairs)?;
        Ok((0..self.dag.len())
            .map(|v| self.factor(v, assignment))
            .product())
    }

    /// Visits every complete assignment that agrees with `clamp`, together
    /// with its truncated-factorization weight (factors of intervened nodes
    /// are dropped).
    fn enumerate(
        &self,
        clamp: &[Option<usize>],
        intervened: &[bool],
        mut visit: impl FnMut(&[usize], f64),
    ) {
        let n = self.dag.len();
        let free: Vec<usize> = (0..n).filter(|&v| clamp[v].is_none()).collect();
        let mut assignment: Vec<usize> = clamp.iter().map(|c| c.unwrap_or(0)).collect();
        loop {
            let weight: f64 = (0..n)
                .filter(|&v| !intervened[v])
                .map(|v| self.factor(v, &assignment))
                .product();
            visit(&assignment, weight);
            // odometer over the free nodes, last node fastest
            let mut i = free.len();
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                let v = free[i];
                assignment[v] += 1;
                if assignment[v] < self.cards[v] {
                    break;
                }
                assignment[v] = 0;
            }
        }
    }

    /// Number of joint states of `nodes`.
    pub fn state_count(&self, nodes: &[usize]) -> usize {
        nodes.iter().map(|&v| self.cards[v]).product()
    }

    /// Decodes a mixed-radix state index over `nodes` (first node most significant).
    pub fn decode_state(&self, nodes: &[usize], mut index: usize) -> Vec<usize> {
        let mut out = vec![0; nodes.len()];
        for (slot, &v) in out.iter_mut().zip(nodes).rev() {
            *slot = index % self.cards[v];
            index /= self.cards[v];
        }
        out
    }

    fn encode_state(&self, nodes: &[usize], assignment: &[usize]) -> usize {
        nodes
            .iter()
            .fold(0, |acc, &v| acc * self.cards[v] + assignment[v])
    }

    /// `p(target | do(intervention), evidence)` by truncated factorization and
    /// exact marginalization.
    ///
    /// The result is indexed by the mixed-radix state of `target` in the order
    /// given. Fails with [`Error::Unconditionable`] when the evidence has
    /// probability zero under the intervention.
    pub fn do_conditional(
        &self,
        target: &[usize],
        intervention: &[(usize, usize)],
        evidence: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        self.check_assignment(intervention)?;
        self.check_assignment(evidence)?;
        let n = self.dag.len();
        if let Some(&v) = target.iter().find(|&&v| v >= n) {
            return Err(Error::UnknownNode(v));
        }
        let mut clamp = vec![None; n];
        let mut intervened = vec![false; n];
        for &(v, s) in intervention {
            if clamp[v].is_some() {
                return Err(Error::OverlappingSets);
            }
            clamp[v] = Some(s);
            intervened[v] = true;
        }
        for &(v, s) in evidence {
            if clamp[v].is_some() {
                return Err(Error::OverlappingSets);
            }
            clamp[v] = Some(s);
        }
        let mut seen = vec![false; n];
        for &v in target {
            if clamp[v].is_some() || seen[v] {
                return Err(Error::OverlappingSets);
            }
            seen[v] = true;
        }

        let mut dist = vec![0.0; self.state_count(target)];
        self.enumerate(&clamp, &intervened, |a, w| {
            dist[self.encode_state(target, a)] += w;
        });
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            return Err(Error::Unconditionable);
        }
        dist.iter_mut().for_each(|p| *p /= total);
        Ok(dist)
    }

    /// Observational conditional `p(target | evidence)`.
    pub fn conditional(&self, target: &[usize], evidence: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.do_conditional(target, &[], evidence)
    }

    /// Largest absolute gap between `p(y | do(x), s)` and `p(y | x, s)` over
    /// every state of `x` and `s` where both sides are defined.
    pub fn adjustment_gap(&self, x: &[usize], y: &[usize], s: &[usize]) -> Result<f64> {
        let n = self.dag.len();
        let mut owner = vec![0u8; n];
        for (tag, set) in [(1u8, x), (2, y), (3, s)] {
            for &v in set {
                if v >= n {
                    return Err(Error::UnknownNode(v));
                }
                if owner[v] != 0 {
                    return Err(Error::OverlappingSets);
                }
                owner[v] = tag;
            }
        }
        let mut gap: f64 = 0.0;
        for xi in 0..self.state_count(x) {
            let xs: Vec<(usize, usize)> = x
                .iter()
                .copied()
                .zip(self.decode_state(x, xi))
                .collect();
            for si in 0..self.state_count(s) {
                let ss: Vec<(usize, usize)> = s
                    .iter()
                    .copied()
                    .zip(self.decode_state(s, si))
                    .collect();
                let interventional = match self.do_conditional(y, &xs, &ss) {
                    Ok(d) => d,
                    Err(Error::Unconditionable) => continue,
                    Err(e) => return Err(e),
                };
                let evidence: Vec<(usize, usize)> = xs.iter().chain(&ss).copied().collect();
                let observational = match self.conditional(y, &evidence) {
                    Ok(d) => d,
                    Err(Error::Unconditionable) => continue,
                    Err(e) => return Err(e),
                };
                for (a, b) in interventional.iter().zip(&observational) {
                    gap = gap.max((a - b).abs());
                }
            }
        }
        Ok(gap)
    }

    /// True iff `s` is an adjustment set for (decision nodes, target nodes)
    /// up to `tol`, checked by exhaustive enumeration.
    pub fn verify_adjustment(&self, s: &[usize], tol: f64) -> Result<bool> {
        let x = self.dag.nodes_of(NodeClass::Decision);
        let y = self.dag.nodes_of(NodeClass::Target);
        Ok(self.adjustment_gap(&x, &y, s)? <= tol)
    }

    /// Checks `a ⊥ b | given` by enumeration over every positive-probability
    /// state of `given`.
    pub fn conditional_independence(
        &self,
        a: &[usize],
        b: &[usize],
        given: &[usize],
        tol: f64,
    ) -> Result<bool> {
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        let nb = self.state_count(b);
        for gi in 0..self.state_count(given) {
            let gs: Vec<(usize, usize)> = given
                .iter()
                .copied()
                .zip(self.decode_state(given, gi))
                .collect();
            let joint = match self.conditional(&ab, &gs) {
                Ok(d) => d,
                Err(Error::Unconditionable) => continue,
                Err(e) => return Err(e),
            };
            let pa: Vec<f64> = joint.chunks(nb).map(|row| row.iter().sum()).collect();
            let mut pb = vec![0.0; nb];
            for row in joint.chunks(nb) {
                for (acc, p) in pb.iter_mut().zip(row) {
                    *acc += p;
                }
            }
            for (i, row) in joint.chunks(nb).enumerate() {
                for (j, p) in row.iter().enumerate() {
                    if (p - pa[i] * pb[j]).abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(cs: &[NodeClass]) -> Vec<(NodeClass, String)> {
        cs.iter()
            .enumerate()
            .map(|(i, &c)| (c, format!("v{i}")))
            .collect()
    }

    /// X=0, Y=1, Z=2 with Z->X, Z->Y, X->Y, all binary.
    fn umbrella(pz: f64, px_given_z: [f64; 2], py_given_xz: [[f64; 2]; 2]) -> DiscreteBayesNet {
        use NodeClass::*;
        let dag =
            CausalDag::new(classes(&[Decision, Target, External]), &[(0, 1), (2, 0), (2, 1)])
                .unwrap();
        let row = |p: f64| [1.0 - p, p];
        let cpt_x: Vec<f64> = px_given_z.iter().flat_map(|&p| row(p)).collect();
        // parents of Y are [0, 2]: row = x * 2 + z
        let cpt_y: Vec<f64> = (0..4)
            .flat_map(|r| row(py_given_xz[r / 2][r % 2]))
            .collect();
        DiscreteBayesNet::new(dag, vec![2, 2, 2], vec![cpt_x, cpt_y, row(pz).to_vec()]).unwrap()
    }

    fn example() -> DiscreteBayesNet {
        umbrella(0.4, [0.2, 0.9], [[0.1, 0.7], [0.3, 0.8]])
    }

    #[test]
    fn rejects_bad_tables() {
        let dag = CausalDag::new(classes(&[NodeClass::External]), &[]).unwrap();
        assert!(DiscreteBayesNet::new(dag.clone(), vec![2], vec![vec![0.5, 0.6]]).is_err());
        assert!(DiscreteBayesNet::new(dag.clone(), vec![2], vec![vec![1.5, -0.5]]).is_err());
        assert!(DiscreteBayesNet::new(dag.clone(), vec![2], vec![vec![1.0]]).is_err());
        assert!(DiscreteBayesNet::new(dag, vec![1], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn joint_prob_examples() {
        let single = DiscreteBayesNet::new(
            CausalDag::new(classes(&[NodeClass::External]), &[]).unwrap(),
            vec![2],
            vec![vec![0.7, 0.3]],
        )
        .unwrap();
        assert!((single.joint_prob(&[1]).unwrap() - 0.3).abs() < 1e-15);

        let pair = DiscreteBayesNet::new(
            CausalDag::new(classes(&[NodeClass::External; 2]), &[]).unwrap(),
            vec![2, 2],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        assert!((pair.joint_prob(&[0, 0]).unwrap() - 0.25).abs() < 1e-15);

        let net = example();
        // x=1, y=0, z=1: p(z=1) p(x=1|z=1) p(y=0|x=1,z=1)
        let expected = 0.4 * 0.9 * (1.0 - 0.8);
        assert!((net.joint_prob(&[1, 0, 1]).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(
            net.joint_prob(&[2, 0, 0]),
            Err(Error::InvalidState { node: 0, state: 2 })
        ));
    }

    #[test]
    fn do_conditional_matches_hand_adjustment() {
        let net = example();
        for x in 0..2 {
            let got = net.do_conditional(&[1], &[(0, x)], &[]).unwrap();
            let py1 = [0.1, 0.7, 0.3, 0.8];
            // sum_z p(y=1|x,z) p(z)
            let want = py1[x * 2] * 0.6 + py1[x * 2 + 1] * 0.4;
            assert!((got[1] - want).abs() < 1e-14);
            assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn intervention_on_descendant_leaves_ancestor_untouched() {
        let dag = CausalDag::new(classes(&[NodeClass::External; 2]), &[(0, 1)]).unwrap();
        let net = DiscreteBayesNet::new(
            dag,
            vec![2, 2],
            vec![vec![0.35, 0.65], vec![0.9, 0.1, 0.2, 0.8]],
        )
        .unwrap();
        let got = net.do_conditional(&[0], &[(1, 1)], &[]).unwrap();
        assert!((got[1] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn parentless_decision_has_no_gap() {
        use NodeClass::*;
        let dag = CausalDag::new(classes(&[Decision, Target, External]), &[(0, 1), (2, 1)]).unwrap();
        let net = DiscreteBayesNet::new(
            dag,
            vec![2, 2, 2],
            vec![
                vec![0.3, 0.7],
                vec![0.9, 0.1, 0.6, 0.4, 0.5, 0.5, 0.2, 0.8],
                vec![0.55, 0.45],
            ],
        )
        .unwrap();
        for x in 0..2 {
            let a = net.do_conditional(&[1], &[(0, x)], &[]).unwrap();
            let b = net.conditional(&[1], &[(0, x)]).unwrap();
            assert!((a[1] - b[1]).abs() < 1e-14);
        }
        assert!(net.verify_adjustment(&[], 1e-9).unwrap());
    }

    #[test]
    fn adjustment_on_umbrella() {
        let net = example();
        assert!(net.verify_adjustment(&[2], 1e-9).unwrap());
        assert!(!net.verify_adjustment(&[], 1e-9).unwrap());
    }

    #[test]
    fn zero_probability_evidence() {
        // X is a deterministic copy of Z
        let net = umbrella(0.5, [0.0, 1.0], [[0.2, 0.6], [0.1, 0.5]]);
        assert!(matches!(
            net.conditional(&[1], &[(0, 0), (2, 1)]),
            Err(Error::Unconditionable)
        ));
        assert!(matches!(
            net.do_conditional(&[1], &[(0, 0)], &[(0, 1)]),
            Err(Error::OverlappingSets)
        ));
    }

    #[test]
    fn independence_by_enumeration() {
        let net = umbrella(0.5, [0.0, 1.0], [[0.2, 0.6], [0.1, 0.5]]);
        // Y ⊥ Z | X holds because X copies Z
        assert!(net.conditional_independence(&[1], &[2], &[0], 1e-12).unwrap());
        assert!(!example().conditional_independence(&[1], &[2], &[0], 1e-12).unwrap());
    }
}
