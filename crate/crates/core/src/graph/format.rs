//! Plain-text edge-list format for [`CausalDag`].
//!
//! ```text
//! # umbrella example
//! decision: price
//! target: demand
//! external: rain
//! rain -> price
//! rain -> demand
//! price -> demand
//! ```
//!
//! Node-class lines must precede the edges. Nodes are indexed in the order
//! they are declared; `#` starts a comment.

use std::fmt::Write as _;

use super::{CausalDag, NodeClass};
use crate::error::{Error, Result};

pub fn parse_dag(text: &str) -> Result<CausalDag> {
    let mut nodes: Vec<(NodeClass, String)> = Vec::new();
    let mut edges = Vec::new();
    let index_of = |nodes: &[(NodeClass, String)], label: &str, line: usize| {
        nodes
            .iter()
            .position(|(_, l)| l == label)
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("undeclared node `{label}`"),
            })
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some((lhs, rhs)) = content.split_once("->") {
            let (p, c) = (lhs.trim(), rhs.trim());
            if p.is_empty() || c.is_empty() || c.contains("->") {
                return Err(Error::Parse {
                    line,
                    msg: "expected `parent -> child`".into(),
                });
            }
            edges.push((index_of(&nodes, p, line)?, index_of(&nodes, c, line)?));
        } else if let Some((head, labels)) = content.split_once(':') {
            if !edges.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "node declarations must precede edges".into(),
                });
            }
            let class = match head.trim() {
                "decision" => NodeClass::Decision,
                "target" => NodeClass::Target,
                "external" => NodeClass::External,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown node class `{other}`"),
                    })
                }
            };
            for label in labels.split_whitespace() {
                if nodes.iter().any(|(_, l)| l == label) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("node `{label}` declared twice"),
                    });
                }
                nodes.push((class, label.to_string()));
            }
        } else {
            return Err(Error::Parse {
                line,
                msg: format!("unrecognized line `{content}`"),
            });
        }
    }
    CausalDag::new(nodes, &edges)
}

pub fn write_dag(dag: &CausalDag) -> String {
    let mut out = String::new();
    for class in [NodeClass::Decision, NodeClass::Target, NodeClass::External] {
        let labels: Vec<&str> = dag
            .nodes()
            .iter()
            .filter(|n| n.class == class)
            .map(|n| n.label.as_str())
            .collect();
        if !labels.is_empty() {
            let _ = writeln!(out, "{class}: {}", labels.join(" "));
        }
    }
    for (p, c) in dag.edges() {
        let _ = writeln!(out, "{} -> {}", dag.nodes()[p].label, dag.nodes()[c].label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const UMBRELLA: &str = "# umbrella\ndecision: price\ntarget: demand\nexternal: rain\n\
                            rain -> price\nrain -> demand\nprice -> demand\n";

    #[test]
    fn parses_umbrella() {
        let g = parse_dag(UMBRELLA).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges(), vec![(0, 1), (2, 0), (2, 1)]);
        assert_eq!(g.nodes()[2].class, NodeClass::External);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let g = parse_dag(UMBRELLA).unwrap();
        let again = parse_dag(&write_dag(&g)).unwrap();
        assert_eq!(g.edges(), again.edges());
        assert_eq!(g.nodes(), again.nodes());
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_dag("decision: x\nx -> y\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_dag("mediator: m\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(
            parse_dag("decision: a b\na -> b\nb -> a\n"),
            Err(Error::Cycle)
        ));
    }
}
