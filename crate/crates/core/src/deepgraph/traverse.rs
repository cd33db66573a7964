use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kgraph::{typed_step, Direction, EdgeType, KnowledgeGraph, NodeType};

use super::DeepGraphError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartFilter {
    Type(NodeType),
    Ids(Vec<String>),
}

/// Typed walk template: a start set, a chain of (edge type, direction) and
/// the required type of the final node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPattern {
    pub start: StartFilter,
    pub steps: Vec<(EdgeType, Direction)>,
    pub end: NodeType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathHit {
    pub node: String,
    /// Node ids from the start node to `node`, one per hop plus the start.
    pub path: Vec<String>,
}

impl PathPattern {
    pub fn new(start: StartFilter, steps: Vec<(EdgeType, Direction)>, end: NodeType) -> Self {
        Self { start, steps, end }
    }

    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    /// Checks the chain against the schema starting from `start_types`.
    pub fn validate_from(&self, start_types: &BTreeSet<NodeType>) -> Result<(), DeepGraphError> {
        if self.steps.is_empty() {
            return Err(DeepGraphError::InvalidPattern("pattern has no steps".into()));
        }
        let mut cur = start_types.clone();
        for (k, &(t, dir)) in self.steps.iter().enumerate() {
            let next: BTreeSet<NodeType> = NodeType::ALL
                .iter()
                .copied()
                .filter(|&o| {
                    cur.iter().any(|&c| match dir {
                        Direction::Forward => t.allows(c, o),
                        Direction::Reverse => t.allows(o, c),
                    })
                })
                .collect();
            if next.is_empty() {
                return Err(DeepGraphError::InvalidPattern(format!(
                    "step {} ({} {:?}) cannot follow {:?}",
                    k + 1,
                    t,
                    dir,
                    cur
                )));
            }
            cur = next;
        }
        if !cur.contains(&self.end) {
            return Err(DeepGraphError::InvalidPattern(format!(
                "chain ends at {:?}, not {}",
                cur, self.end
            )));
        }
        Ok(())
    }

    fn start_nodes(&self, graph: &KnowledgeGraph) -> Result<(BTreeSet<NodeType>, Vec<usize>), DeepGraphError> {
        match &self.start {
            StartFilter::Type(t) => {
                let nodes = (0..graph.node_count())
                    .filter(|&i| graph.node_at(i).node_type == *t)
                    .collect();
                Ok((BTreeSet::from([*t]), nodes))
            }
            StartFilter::Ids(ids) => {
                let mut nodes = Vec::new();
                for id in ids {
                    nodes.push(
                        graph
                            .index_of(id)
                            .ok_or_else(|| DeepGraphError::UnknownNode(id.clone()))?,
                    );
                }
                nodes.sort_unstable();
                nodes.dedup();
                let types = nodes.iter().map(|&i| graph.node_at(i).node_type).collect();
                Ok((types, nodes))
            }
        }
    }
}

/// Every node reachable through the pattern, sorted by id, each with the
/// lexicographically smallest witness walk.
pub fn traverse_path(graph: &KnowledgeGraph, pattern: &PathPattern) -> Result<Vec<PathHit>, DeepGraphError> {
    let (types, starts) = pattern.start_nodes(graph)?;
    if types.is_empty() {
        return Ok(Vec::new());
    }
    pattern.validate_from(&types)?;
    let mut frontier: BTreeMap<usize, Vec<usize>> = starts.into_iter().map(|s| (s, vec![s])).collect();
    for &(t, dir) in &pattern.steps {
        let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&node, path) in &frontier {
            for j in typed_step(graph, node, t, dir) {
                let better = next.get(&j).map_or(true, |p| path.as_slice() < &p[..p.len() - 1]);
                if better {
                    let mut p = path.clone();
                    p.push(j);
                    next.insert(j, p);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(frontier
        .into_iter()
        .filter(|(n, _)| graph.node_at(*n).node_type == pattern.end)
        .map(|(n, p)| PathHit {
            node: graph.node_at(n).id.clone(),
            path: p.into_iter().map(|i| graph.node_at(i).id.clone()).collect(),
        })
        .collect())
}
