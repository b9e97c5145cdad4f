//! Query-graph construction: mentions are anchored in the semantic structure
//! and connected by a depth-first traversal that starts at the target node
//! and never crosses another node's anchor.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{MentionCandidate, MentionKind};
use crate::relation::PredicateCandidate;
use crate::structure::SemanticStructure;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("no mentions to build a query graph from")]
    NoNodes,
    #[error("mention {surface:?} at {start}..{end} covers no token")]
    UnanchoredMention {
        surface: String,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryNode {
    pub id: usize,
    pub kind: MentionKind,
    pub mention: MentionCandidate,
    /// Head-most token of the mention span.
    pub anchor: usize,
    pub is_target: bool,
    /// True for the target created when the question has no wh-word.
    #[serde(default)]
    pub synthesized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEdge {
    pub id: usize,
    pub endpoints: (usize, usize),
    /// Tokens strictly between the two anchors on the tree path.
    pub phrase_tokens: Vec<usize>,
    #[serde(default)]
    pub candidates: Vec<PredicateCandidate>,
}

impl QueryEdge {
    pub fn other(&self, node: usize) -> usize {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub question: String,
    pub nodes: Vec<QueryNode>,
    pub edges: Vec<QueryEdge>,
    pub target: usize,
}

impl QueryGraph {
    pub fn target_node(&self) -> &QueryNode {
        &self.nodes[self.target]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&QueryEdge> {
        self.edges
            .iter()
            .find(|e| e.endpoints == (a, b) || e.endpoints == (b, a))
    }

    pub fn incident_edges(&self, node: usize) -> impl Iterator<Item = &QueryEdge> {
        self.edges
            .iter()
            .filter(move |e| e.endpoints.0 == node || e.endpoints.1 == node)
    }
}

/// Index into `mentions` of the leftmost Variable, or `None` when a target
/// has to be synthesized at the root token.
pub fn select_target(mentions: &[MentionCandidate]) -> Option<usize> {
    mentions
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == MentionKind::Variable)
        .min_by_key(|(_, m)| m.span.0)
        .map(|(i, _)| i)
}

/// Builds the query graph from the mentions of a question.
///
/// Starting from the target, each dequeued node runs a depth-first search
/// over the undirected head tree from its anchor, visiting neighbours in
/// ascending token order and stopping at other nodes' anchors. Every node
/// reached that way is connected to the dequeued node (at most one edge per
/// pair) and enqueued the first time it is seen.
pub fn build_query_graph(
    structure: &SemanticStructure,
    mentions: &[MentionCandidate],
) -> Result<QueryGraph, GraphError> {
    if mentions.is_empty() {
        return Err(GraphError::NoNodes);
    }
    let mut nodes = Vec::with_capacity(mentions.len() + 1);
    for (id, mention) in mentions.iter().enumerate() {
        let covered = structure.tokens_in(mention.span.0, mention.span.1);
        let anchor = structure
            .head_most(&covered)
            .ok_or_else(|| GraphError::UnanchoredMention {
                surface: mention.surface.clone(),
                start: mention.span.0,
                end: mention.span.1,
            })?;
        nodes.push(QueryNode {
            id,
            kind: mention.kind,
            mention: mention.clone(),
            anchor,
            is_target: false,
            synthesized: false,
        });
    }
    let target = match select_target(mentions) {
        Some(index) => index,
        None => {
            let root = structure.root();
            let token = &structure.tokens[root];
            let id = nodes.len();
            nodes.push(QueryNode {
                id,
                kind: MentionKind::Variable,
                mention: MentionCandidate::variable((token.start, token.start), ""),
                anchor: root,
                is_target: false,
                synthesized: true,
            });
            id
        }
    };
    nodes[target].is_target = true;

    let mut anchored: Vec<Vec<usize>> = vec![Vec::new(); structure.len()];
    for node in &nodes {
        anchored[node.anchor].push(node.id);
    }

    let mut edges: Vec<QueryEdge> = Vec::new();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut enqueued = vec![false; nodes.len()];
    let mut queue = VecDeque::from([target]);
    enqueued[target] = true;
    while let Some(u) = queue.pop_front() {
        let start = nodes[u].anchor;
        for v in reachable_nodes(structure, &anchored, u, start) {
            let pair = (u.min(v), u.max(v));
            if pairs.insert(pair) {
                let path = structure.tree_path(start, nodes[v].anchor);
                let phrase_tokens = if path.len() > 2 {
                    path[1..path.len() - 1].to_vec()
                } else {
                    Vec::new()
                };
                edges.push(QueryEdge {
                    id: edges.len(),
                    endpoints: (u, v),
                    phrase_tokens,
                    candidates: Vec::new(),
                });
            }
            if !enqueued[v] {
                enqueued[v] = true;
                queue.push_back(v);
            }
        }
    }

    Ok(QueryGraph {
        question: structure.question.clone(),
        nodes,
        edges,
        target,
    })
}

/// Nodes whose anchors the DFS from `start` reaches first, in visit order.
fn reachable_nodes(
    structure: &SemanticStructure,
    anchored: &[Vec<usize>],
    from: usize,
    start: usize,
) -> Vec<usize> {
    let mut found: Vec<usize> = anchored[start].iter().copied().filter(|&v| v != from).collect();
    let mut visited = vec![false; structure.len()];
    visited[start] = true;
    // Explicit stack of (token, next neighbour position).
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(start, structure.neighbors(start), 0)];
    while let Some((_, neighbors, cursor)) = stack.last_mut() {
        let Some(&next) = neighbors.get(*cursor) else {
            stack.pop();
            continue;
        };
        *cursor += 1;
        if visited[next] {
            continue;
        }
        visited[next] = true;
        let owners: Vec<usize> = anchored[next].iter().copied().filter(|&v| v != from).collect();
        if owners.is_empty() {
            stack.push((next, structure.neighbors(next), 0));
        } else {
            found.extend(owners);
        }
    }
    found
}
