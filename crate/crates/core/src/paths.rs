//! Linearly independent path approximation.
//!
//! Paths are grown breadth-first from the start node. A path that reaches
//! the end node is kept only when it traverses at least one edge no earlier
//! kept path used, and exploration stops as soon as every edge has been
//! visited. A path never repeats an edge, which bounds path length by the
//! edge count while still letting loops be entered once.

use std::cell::Cell;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{build_method_cfg, cyclomatic_complexity, BranchLabel, MethodCfg, NodeId, NodeKind};
use crate::minilang::{identify_muts, Line, SourceUnit};

/// Hard cap on partial paths enqueued during one exploration.
pub const MAX_ENQUEUED: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("no start-to-end path exists in the graph of `{0}`")]
    UnreachableEnd(String),
    #[error("path exploration for `{0}` exceeded {MAX_ENQUEUED} queued paths")]
    QueueOverflow(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub node_ids: Vec<NodeId>,
    /// Indices into the method graph's edge list, in traversal order.
    pub edge_ids: Vec<usize>,
    pub key: String,
}

impl Path {
    fn from_edges(cfg: &MethodCfg, edge_ids: Vec<usize>) -> Path {
        let mut node_ids = vec![cfg.start];
        node_ids.extend(edge_ids.iter().map(|&e| cfg.edges[e].to));
        let key = path_key(cfg, &edge_ids);
        Path { node_ids, edge_ids, key }
    }

    /// Executable source lines touched by the path.
    pub fn lines(&self, cfg: &MethodCfg) -> Vec<Line> {
        let mut lines: Vec<Line> = self.node_ids.iter().flat_map(|&n| cfg.node(n).lines.iter().copied()).collect();
        lines.sort_unstable();
        lines.dedup();
        lines
    }

    /// `(condition line, outcome)` for every branch edge the path takes.
    pub fn branch_outcomes(&self, cfg: &MethodCfg) -> Vec<(Line, bool)> {
        let mut out: Vec<(Line, bool)> = self
            .edge_ids
            .iter()
            .filter_map(|&e| {
                let edge = cfg.edges[e];
                let outcome = edge.label.outcome()?;
                Some((cfg.node(edge.from).span.0, outcome))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Node ids joined by `-`; branch nodes carry `t`/`f` for the edge taken,
/// which keeps keys unique when both outcomes reach the same node.
pub fn path_key(cfg: &MethodCfg, edge_ids: &[usize]) -> String {
    let mut parts = vec![cfg.start.to_string()];
    for &e in edge_ids {
        let edge = cfg.edges[e];
        match edge.label {
            BranchLabel::True => parts.last_mut().expect("nonempty").push('t'),
            BranchLabel::False => parts.last_mut().expect("nonempty").push('f'),
            BranchLabel::None => {}
        }
        parts.push(edge.to.to_string());
    }
    parts.join("-")
}

thread_local! {
    static EXPLORE_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`explore_paths`] calls made on the current thread.
pub fn explore_call_count() -> usize {
    EXPLORE_CALLS.with(Cell::get)
}

pub fn explore_paths(cfg: &MethodCfg) -> Result<Vec<Path>, PathError> {
    EXPLORE_CALLS.with(|c| c.set(c.get() + 1));

    struct Partial {
        last: NodeId,
        edges: Vec<usize>,
        used: Vec<bool>,
    }

    let total = cfg.edges.len();
    let mut visited = vec![false; total];
    let mut visited_count = 0;
    let mut kept = Vec::new();
    let mut queue = VecDeque::new();
    let mut enqueued = 1usize;
    queue.push_back(Partial { last: cfg.start, edges: Vec::new(), used: vec![false; total] });

    while let Some(current) = queue.pop_front() {
        for e in cfg.out_edges(current.last) {
            if current.used[e] {
                continue;
            }
            let mut edges = current.edges.clone();
            edges.push(e);
            let successor = cfg.edges[e].to;
            if successor != cfg.end {
                let mut used = current.used.clone();
                used[e] = true;
                enqueued += 1;
                if enqueued > MAX_ENQUEUED {
                    return Err(PathError::QueueOverflow(cfg.method.clone()));
                }
                queue.push_back(Partial { last: successor, edges, used });
                continue;
            }
            if edges.iter().any(|&x| !visited[x]) {
                for &x in &edges {
                    if !visited[x] {
                        visited[x] = true;
                        visited_count += 1;
                    }
                }
                kept.push(Path::from_edges(cfg, edges));
            }
            if visited_count == total {
                return Ok(kept);
            }
        }
    }
    if kept.is_empty() {
        return Err(PathError::UnreachableEnd(cfg.method.clone()));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodPaths {
    pub method: String,
    pub cyc: usize,
    pub cfg: MethodCfg,
    pub paths: Vec<Path>,
}

impl MethodPaths {
    /// `{method, cyc, paths: [[node ids], ...]}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "cyc": self.cyc,
            "paths": self.paths.iter().map(|p| p.node_ids.clone()).collect::<Vec<_>>(),
        })
    }
}

/// Per-method-under-test graph, complexity and paths, in source order.
pub type MethodDict = Vec<MethodPaths>;

pub fn approximate(unit: &SourceUnit) -> Result<MethodDict, PathError> {
    identify_muts(unit)
        .into_iter()
        .map(|f| {
            let cfg = build_method_cfg(f);
            let cyc = cyclomatic_complexity(&cfg);
            let paths = explore_paths(&cfg)?;
            Ok(MethodPaths { method: f.name.clone(), cyc, cfg, paths })
        })
        .collect()
}

/// True when consecutive nodes are joined by the recorded edges and the
/// path runs start to end without reusing an edge.
pub fn is_well_formed(cfg: &MethodCfg, path: &Path) -> bool {
    if path.node_ids.first() != Some(&cfg.start) || path.node_ids.last() != Some(&cfg.end) {
        return false;
    }
    if path.node_ids.len() != path.edge_ids.len() + 1 {
        return false;
    }
    let mut seen = std::collections::HashSet::new();
    path.edge_ids.iter().enumerate().all(|(i, &e)| {
        let edge = cfg.edges[e];
        seen.insert(e) && edge.from == path.node_ids[i] && edge.to == path.node_ids[i + 1]
    }) && path.node_ids[1..path.node_ids.len() - 1].iter().all(|&n| cfg.node(n).kind != NodeKind::End)
}
