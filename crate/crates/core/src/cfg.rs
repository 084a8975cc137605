//! Per-method control-flow graphs.
//!
//! Straight-line statement runs collapse into one block node; every `if`,
//! `while` and `for` condition is a branch node with a `true` and a `false`
//! edge. Each graph has a synthetic start node (id 0) and a synthetic end
//! node (highest id) that every `return` and fall-through exit reaches.
//!
//! `for (init; cond; step)` lowers to: init joins the preceding block, the
//! condition is a branch node, the body follows the `true` edge, and the
//! step is its own block that loops back to the condition.

use serde::{Deserialize, Serialize};

use crate::minilang::{Function, Line, SourceUnit, Stmt, StmtKind};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Start,
    End,
    Block,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    True,
    False,
    None,
}

impl BranchLabel {
    pub fn outcome(self) -> Option<bool> {
        match self {
            BranchLabel::True => Some(true),
            BranchLabel::False => Some(false),
            BranchLabel::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub span: (Line, Line),
    /// Executable source lines grouped in this node; empty for start/end.
    pub lines: Vec<Line>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CfgEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub label: BranchLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCfg {
    pub method: String,
    pub nodes: Vec<CfgNode>,
    pub edges: Vec<CfgEdge>,
    pub start: NodeId,
    pub end: NodeId,
}

impl MethodCfg {
    pub fn node(&self, id: NodeId) -> &CfgNode {
        &self.nodes[id]
    }

    /// Outgoing edge indices: `true` before `false`, then by target id.
    pub fn out_edges(&self, id: NodeId) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.edges.len()).filter(|&i| self.edges[i].from == id).collect();
        out.sort_by_key(|&i| (self.edges[i].label, self.edges[i].to));
        out
    }

    pub fn branch_nodes(&self) -> impl Iterator<Item = &CfgNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Branch)
    }

    /// Node and edge counts with the synthetic start/end nodes and their
    /// incident edges left out.
    pub fn internal_counts(&self) -> (usize, usize) {
        let synthetic = |id: NodeId| id == self.start || id == self.end;
        let nodes = self.nodes.iter().filter(|n| !synthetic(n.id)).count();
        let edges = self.edges.iter().filter(|e| !synthetic(e.from) && !synthetic(e.to)).count();
        (nodes, edges)
    }

    /// Checks the structural invariants: unique start/end, per-kind
    /// out-edge labels, reachability from start and co-reachability of end.
    pub fn validate(&self) -> Result<(), String> {
        let starts = self.nodes.iter().filter(|n| n.kind == NodeKind::Start).count();
        let ends = self.nodes.iter().filter(|n| n.kind == NodeKind::End).count();
        if starts != 1 || ends != 1 {
            return Err(format!("expected one start and one end, found {starts}/{ends}"));
        }
        for node in &self.nodes {
            let labels: Vec<BranchLabel> = self.out_edges(node.id).iter().map(|&i| self.edges[i].label).collect();
            let ok = match node.kind {
                NodeKind::Branch => labels == [BranchLabel::True, BranchLabel::False],
                NodeKind::End => labels.is_empty(),
                NodeKind::Start | NodeKind::Block => labels == [BranchLabel::None],
            };
            if !ok {
                return Err(format!("node {} ({:?}) has out-labels {labels:?}", node.id, node.kind));
            }
        }
        let forward = self.reach(self.start, |e| (e.from, e.to));
        let backward = self.reach(self.end, |e| (e.to, e.from));
        for node in &self.nodes {
            if !forward[node.id] {
                return Err(format!("node {} unreachable from start", node.id));
            }
            if !backward[node.id] {
                return Err(format!("end unreachable from node {}", node.id));
            }
        }
        Ok(())
    }

    fn reach(&self, from: NodeId, dir: impl Fn(&CfgEdge) -> (NodeId, NodeId)) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(n) = stack.pop() {
            for e in &self.edges {
                let (a, b) = dir(e);
                if a == n && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }

    /// Graphviz rendering; branch nodes are pentagons, start/end octagons.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n", self.method);
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Start | NodeKind::End => "octagon",
                NodeKind::Branch => "pentagon",
                NodeKind::Block => "circle",
            };
            out.push_str(&format!("  n{} [label=\"{}\", shape={shape}];\n", n.id, n.label));
        }
        for e in &self.edges {
            match e.label {
                BranchLabel::None => out.push_str(&format!("  n{} -> n{};\n", e.from, e.to)),
                BranchLabel::True => out.push_str(&format!("  n{} -> n{} [label=\"T\"];\n", e.from, e.to)),
                BranchLabel::False => out.push_str(&format!("  n{} -> n{} [label=\"F\"];\n", e.from, e.to)),
            }
        }
        out.push_str("}\n");
        out
    }
}

/// McCabe complexity `E - N + 2`.
///
/// Counted over the whole graph including the synthetic start/end nodes.
/// For a method with a single edge into the end node this equals the count
/// with start/end excluded; with several exits the excluded count would
/// fall below the number of independent paths, while this form always
/// equals `1 + #branch nodes`.
pub fn cyclomatic_complexity(cfg: &MethodCfg) -> usize {
    (cfg.edges.len() + 2).saturating_sub(cfg.nodes.len()).max(1)
}

/// Every function's graph, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCfg {
    pub methods: Vec<MethodCfg>,
}

impl FileCfg {
    pub fn method(&self, name: &str) -> Option<&MethodCfg> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub fn build_file_cfg(unit: &SourceUnit) -> FileCfg {
    FileCfg { methods: unit.functions.iter().map(build_method_cfg).collect() }
}

const PENDING_END: NodeId = usize::MAX;

pub fn build_method_cfg(f: &Function) -> MethodCfg {
    let mut b = Builder { nodes: Vec::new(), edges: Vec::new(), open: None, pending: Vec::new() };
    let start = b.new_node(NodeKind::Start, Vec::new());
    b.nodes[start].span = (f.span.0, f.span.0);
    b.nodes[start].label = format!("{}:start", f.span.0);
    b.pending = vec![(start, BranchLabel::None)];
    b.stmts(&f.body);
    b.connect(PENDING_END);

    let end = b.nodes.len();
    b.nodes.push(CfgNode {
        id: end,
        kind: NodeKind::End,
        span: (f.span.1, f.span.1),
        lines: Vec::new(),
        label: format!("{}:end", f.span.1),
    });
    for e in &mut b.edges {
        if e.to == PENDING_END {
            e.to = end;
        }
    }
    for n in &mut b.nodes {
        if n.kind == NodeKind::Block {
            n.label = match n.span {
                (a, z) if a == z => a.to_string(),
                (a, z) => format!("{a}-{z}"),
            };
        }
    }
    MethodCfg { method: f.name.clone(), nodes: b.nodes, edges: b.edges, start, end }
}

struct Builder {
    nodes: Vec<CfgNode>,
    edges: Vec<CfgEdge>,
    /// Block still accepting straight-line statements.
    open: Option<NodeId>,
    /// Dangling edges waiting for the next node.
    pending: Vec<(NodeId, BranchLabel)>,
}

impl Builder {
    fn new_node(&mut self, kind: NodeKind, lines: Vec<Line>) -> NodeId {
        let id = self.nodes.len();
        let span = (lines.iter().copied().min().unwrap_or(0), lines.iter().copied().max().unwrap_or(0));
        let label = match kind {
            NodeKind::Branch => span.0.to_string(),
            _ => String::new(),
        };
        self.nodes.push(CfgNode { id, kind, span, lines, label });
        self.connect(id);
        id
    }

    fn connect(&mut self, to: NodeId) {
        for (from, label) in self.pending.drain(..) {
            self.edges.push(CfgEdge { from, to, label });
        }
    }

    fn straight(&mut self, line: Line) {
        match self.open {
            Some(id) => {
                let node = &mut self.nodes[id];
                if !node.lines.contains(&line) {
                    node.lines.push(line);
                }
                node.span = (node.span.0.min(line), node.span.1.max(line));
            }
            None => {
                let id = self.new_node(NodeKind::Block, vec![line]);
                self.open = Some(id);
                self.pending = vec![(id, BranchLabel::None)];
            }
        }
    }

    fn branch(&mut self, line: Line) -> NodeId {
        self.open = None;
        let id = self.new_node(NodeKind::Branch, vec![line]);
        self.pending = vec![(id, BranchLabel::True)];
        id
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for stmt in stmts {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::VarDecl { .. } | StmtKind::Assign { .. } | StmtKind::Call(_) | StmtKind::Assert(_) => {
                self.straight(stmt.line)
            }
            StmtKind::Return(_) => {
                self.straight(stmt.line);
                self.connect(PENDING_END);
                self.open = None;
            }
            StmtKind::If { then_body, else_body, .. } => {
                let cond = self.branch(stmt.line);
                self.stmts(then_body);
                let mut exits = std::mem::take(&mut self.pending);
                self.open = None;
                self.pending = vec![(cond, BranchLabel::False)];
                if let Some(else_body) = else_body {
                    self.stmts(else_body);
                }
                self.open = None;
                exits.append(&mut self.pending);
                self.pending = exits;
            }
            StmtKind::While { body, .. } => {
                let cond = self.branch(stmt.line);
                self.stmts(body);
                self.connect(cond);
                self.open = None;
                self.pending = vec![(cond, BranchLabel::False)];
            }
            StmtKind::For { init, step, body, .. } => {
                self.straight(init.line);
                let cond = self.branch(stmt.line);
                self.stmts(body);
                self.open = None;
                // a body that always returns never reaches the step
                if !self.pending.is_empty() {
                    let step_node = self.new_node(NodeKind::Block, vec![step.line]);
                    self.pending = vec![(step_node, BranchLabel::None)];
                    self.connect(cond);
                }
                self.pending = vec![(cond, BranchLabel::False)];
            }
        }
    }
}
