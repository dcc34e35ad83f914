//! Directed weighted graphs, the DST instance format, metric closure and
//! Steiner solution checking.
//!
//! Costs are exact rationals everywhere. An edge `(head, tail)` runs from
//! `head` to `tail`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::{self, Write as _};

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::{format_rational, parse_rational, Rational};

pub type Vertex = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub head: Vertex,
    pub tail: Vertex,
    pub cost: Rational,
}

impl Edge {
    pub fn new(head: Vertex, tail: Vertex, cost: Rational) -> Self {
        Edge { head, tail, cost }
    }

    pub fn key(&self) -> (Vertex, Vertex) {
        (self.head, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("vertex {0} out of range")]
    VertexOutOfRange(Vertex),
    #[error("root is terminal")]
    RootIsTerminal,
    #[error("negative cost on edge {0}->{1}")]
    NegativeCost(Vertex, Vertex),
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("terminal {0} unreachable from root")]
    Unreachable(Vertex),
    #[error("edge {0}->{1} is not in the instance")]
    NotAnEdge(Vertex, Vertex),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("vertex-id {0} out of range")]
    VertexOutOfRange(Vertex),
    #[error("root is terminal")]
    RootIsTerminal,
    #[error("negative cost")]
    NegativeCost,
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("missing `{0}` line")]
    Missing(&'static str),
}

/// A Directed Steiner Tree instance: digraph, root and terminal set.
///
/// Edges are kept sorted by `(head, tail)`; parallel edges collapse to the
/// cheapest one on construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DstInstance {
    n: usize,
    edges: Vec<Edge>,
    index: BTreeMap<(Vertex, Vertex), usize>,
    root: Vertex,
    terminals: Vec<Vertex>,
}

impl DstInstance {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = Edge>,
        root: Vertex,
        terminals: impl IntoIterator<Item = Vertex>,
    ) -> Result<Self, GraphError> {
        if root >= n {
            return Err(GraphError::VertexOutOfRange(root));
        }
        let terminals: BTreeSet<Vertex> = terminals.into_iter().collect();
        for &t in &terminals {
            if t >= n {
                return Err(GraphError::VertexOutOfRange(t));
            }
            if t == root {
                return Err(GraphError::RootIsTerminal);
            }
        }
        let mut best: BTreeMap<(Vertex, Vertex), Rational> = BTreeMap::new();
        for e in edges {
            if e.head >= n {
                return Err(GraphError::VertexOutOfRange(e.head));
            }
            if e.tail >= n {
                return Err(GraphError::VertexOutOfRange(e.tail));
            }
            if e.head == e.tail {
                return Err(GraphError::SelfLoop(e.head));
            }
            if e.cost.is_negative() {
                return Err(GraphError::NegativeCost(e.head, e.tail));
            }
            best.entry(e.key())
                .and_modify(|c| {
                    if e.cost < *c {
                        *c = e.cost.clone();
                    }
                })
                .or_insert(e.cost);
        }
        let edges: Vec<Edge> = best
            .into_iter()
            .map(|((h, t), c)| Edge::new(h, t, c))
            .collect();
        let index = edges.iter().enumerate().map(|(i, e)| (e.key(), i)).collect();
        Ok(DstInstance {
            n,
            edges,
            index,
            root,
            terminals: terminals.into_iter().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn k(&self) -> usize {
        self.terminals.len()
    }

    pub fn root(&self) -> Vertex {
        self.root
    }

    pub fn terminals(&self) -> &[Vertex] {
        &self.terminals
    }

    pub fn is_terminal(&self, v: Vertex) -> bool {
        self.terminals.binary_search(&v).is_ok()
    }

    /// Position of `v` in the sorted terminal list.
    pub fn terminal_index(&self, v: Vertex) -> Option<usize> {
        self.terminals.binary_search(&v).ok()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_cost(&self, head: Vertex, tail: Vertex) -> Option<&Rational> {
        self.index.get(&(head, tail)).map(|&i| &self.edges[i].cost)
    }

    pub fn out_edges(&self, v: Vertex) -> impl Iterator<Item = &Edge> {
        let lo = self.edges.partition_point(|e| e.head < v);
        self.edges[lo..].iter().take_while(move |e| e.head == v)
    }

    /// Same graph with a different terminal set.
    pub fn with_terminals(
        &self,
        terminals: impl IntoIterator<Item = Vertex>,
    ) -> Result<Self, GraphError> {
        DstInstance::new(self.n, self.edges.clone(), self.root, terminals)
    }

    /// Canonical text form; `parse_dst` of the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dst {} {}", self.n, self.edges.len());
        let _ = writeln!(out, "root {}", self.root);
        out.push_str("terminals");
        for t in &self.terminals {
            let _ = write!(out, " {t}");
        }
        out.push('\n');
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {}", e.head, e.tail, format_rational(&e.cost));
        }
        out
    }

    /// Vertices reachable from `from` using only `edges`.
    fn reachable_within(&self, from: Vertex, edges: &BTreeSet<(Vertex, Vertex)>) -> Vec<bool> {
        let mut adj: Vec<Vec<Vertex>> = vec![Vec::new(); self.n];
        for &(h, t) in edges {
            adj[h].push(t);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }
}

impl fmt::Display for DstInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses the line-oriented DST format (`dst`, `root`, `terminals`, then
/// `edge` lines; `#` starts a comment).
pub fn parse_dst(text: &str) -> Result<DstInstance, ParseError> {
    let err = |line: usize, kind: ParseErrorKind| ParseError { line, kind };
    let mut header: Option<(usize, usize, usize)> = None;
    let mut root: Option<(Vertex, usize)> = None;
    let mut terminals: Option<(Vec<Vertex>, usize)> = None;
    let mut edges: Vec<Edge> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let keyword = tokens.next().unwrap_or("");
        let rest: Vec<&str> = tokens.collect();
        let malformed = || err(line_no, ParseErrorKind::Malformed(content.to_string()));
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| malformed());
        match keyword {
            "dst" => {
                if header.is_some() || rest.len() != 2 {
                    return Err(malformed());
                }
                header = Some((parse_usize(rest[0])?, parse_usize(rest[1])?, line_no));
            }
            "root" => {
                if header.is_none() || root.is_some() || rest.len() != 1 {
                    return Err(malformed());
                }
                root = Some((parse_usize(rest[0])?, line_no));
            }
            "terminals" => {
                if header.is_none() || terminals.is_some() {
                    return Err(malformed());
                }
                let ts = rest.iter().map(|s| parse_usize(s)).collect::<Result<Vec<_>, _>>()?;
                terminals = Some((ts, line_no));
            }
            "edge" => {
                let Some((n, _, _)) = header else {
                    return Err(malformed());
                };
                if rest.len() != 3 {
                    return Err(malformed());
                }
                let head = parse_usize(rest[0])?;
                let tail = parse_usize(rest[1])?;
                let cost = parse_rational(rest[2]).ok_or_else(malformed)?;
                for v in [head, tail] {
                    if v >= n {
                        return Err(err(line_no, ParseErrorKind::VertexOutOfRange(v)));
                    }
                }
                if head == tail {
                    return Err(err(line_no, ParseErrorKind::SelfLoop(head)));
                }
                if cost.is_negative() {
                    return Err(err(line_no, ParseErrorKind::NegativeCost));
                }
                edges.push(Edge::new(head, tail, cost));
            }
            _ => return Err(malformed()),
        }
    }

    let (n, m, _) = header.ok_or_else(|| err(1, ParseErrorKind::Missing("dst")))?;
    let (root, root_line) = root.ok_or_else(|| err(last_line, ParseErrorKind::Missing("root")))?;
    let (terminals, term_line) =
        terminals.ok_or_else(|| err(last_line, ParseErrorKind::Missing("terminals")))?;
    if root >= n {
        return Err(err(root_line, ParseErrorKind::VertexOutOfRange(root)));
    }
    for &t in &terminals {
        if t >= n {
            return Err(err(term_line, ParseErrorKind::VertexOutOfRange(t)));
        }
        if t == root {
            return Err(err(term_line, ParseErrorKind::RootIsTerminal));
        }
    }
    if edges.len() != m {
        return Err(err(
            last_line,
            ParseErrorKind::EdgeCount { expected: m, found: edges.len() },
        ));
    }
    DstInstance::new(n, edges, root, terminals).map_err(|e| {
        // Every invariant was checked above with a line number.
        err(last_line, ParseErrorKind::Malformed(e.to_string()))
    })
}

/// All-pairs shortest distances with next-hop table for path recovery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricClosure {
    dist: Vec<Vec<Option<Rational>>>,
    next: Vec<Vec<Option<Vertex>>>,
}

impl MetricClosure {
    /// Floyd-Warshall; ties keep the earlier path.
    pub fn compute(inst: &DstInstance) -> Self {
        let n = inst.n();
        let mut dist: Vec<Vec<Option<Rational>>> = vec![vec![None; n]; n];
        let mut next: Vec<Vec<Option<Vertex>>> = vec![vec![None; n]; n];
        for v in 0..n {
            dist[v][v] = Some(Rational::zero());
            next[v][v] = Some(v);
        }
        for e in inst.edges() {
            dist[e.head][e.tail] = Some(e.cost.clone());
            next[e.head][e.tail] = Some(e.tail);
        }
        for mid in 0..n {
            for i in 0..n {
                let Some(d_im) = dist[i][mid].clone() else { continue };
                for j in 0..n {
                    let Some(d_mj) = &dist[mid][j] else { continue };
                    let through = &d_im + d_mj;
                    let better = match &dist[i][j] {
                        None => true,
                        Some(cur) => through < *cur,
                    };
                    if better {
                        dist[i][j] = Some(through);
                        next[i][j] = next[i][mid];
                    }
                }
            }
        }
        MetricClosure { dist, next }
    }

    pub fn dist(&self, u: Vertex, v: Vertex) -> Option<&Rational> {
        self.dist[u][v].as_ref()
    }

    /// Vertex sequence of the recorded shortest `u -> v` path.
    pub fn path(&self, u: Vertex, v: Vertex) -> Option<Vec<Vertex>> {
        self.dist[u][v].as_ref()?;
        let mut path = vec![u];
        let mut cur = u;
        while cur != v {
            cur = self.next[cur][v]?;
            path.push(cur);
        }
        Some(path)
    }
}

/// Completes `inst` to its metric closure. Fails if a terminal is
/// unreachable from the root.
pub fn metric_closure(inst: &DstInstance) -> Result<(DstInstance, MetricClosure), GraphError> {
    let mc = MetricClosure::compute(inst);
    for &t in inst.terminals() {
        if mc.dist(inst.root(), t).is_none() {
            return Err(GraphError::Unreachable(t));
        }
    }
    let n = inst.n();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v {
                if let Some(d) = mc.dist(u, v) {
                    edges.push(Edge::new(u, v, d.clone()));
                }
            }
        }
    }
    let closed = DstInstance::new(n, edges, inst.root(), inst.terminals().iter().copied())?;
    Ok((closed, mc))
}

/// An edge subset of some instance together with its total cost.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SteinerSolution {
    pub edges: BTreeSet<(Vertex, Vertex)>,
    pub cost: Rational,
}

impl SteinerSolution {
    pub fn from_edges(
        inst: &DstInstance,
        edges: impl IntoIterator<Item = (Vertex, Vertex)>,
    ) -> Result<Self, GraphError> {
        let edges: BTreeSet<(Vertex, Vertex)> = edges.into_iter().collect();
        let mut cost = Rational::zero();
        for &(h, t) in &edges {
            cost += inst.edge_cost(h, t).ok_or(GraphError::NotAnEdge(h, t))?;
        }
        Ok(SteinerSolution { edges, cost })
    }

    pub fn edge_list(&self) -> Vec<(Vertex, Vertex)> {
        self.edges.iter().copied().collect()
    }
}

/// Checks that every terminal is reachable from the root inside `sol` and
/// returns its cost.
pub fn validate_solution(inst: &DstInstance, sol: &SteinerSolution) -> Result<Rational, GraphError> {
    let mut cost = Rational::zero();
    for &(h, t) in &sol.edges {
        cost += inst.edge_cost(h, t).ok_or(GraphError::NotAnEdge(h, t))?;
    }
    let seen = inst.reachable_within(inst.root(), &sol.edges);
    if let Some(&t) = inst.terminals().iter().find(|&&t| !seen[t]) {
        return Err(GraphError::Unreachable(t));
    }
    Ok(cost)
}

/// Reduces a connecting subgraph to an out-arborescence: shortest-path tree
/// inside `sol`, restricted to the root-terminal paths.
pub fn prune_to_arborescence(
    inst: &DstInstance,
    sol: &SteinerSolution,
) -> Result<SteinerSolution, GraphError> {
    validate_solution(inst, sol)?;
    let n = inst.n();
    let mut adj: Vec<Vec<(Vertex, Rational)>> = vec![Vec::new(); n];
    for &(h, t) in &sol.edges {
        let c = inst.edge_cost(h, t).ok_or(GraphError::NotAnEdge(h, t))?;
        adj[h].push((t, c.clone()));
    }
    let mut dist: Vec<Option<Rational>> = vec![None; n];
    let mut pred: Vec<Option<Vertex>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[inst.root()] = Some(Rational::zero());
    heap.push(Reverse((Rational::zero(), inst.root())));
    while let Some(Reverse((d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for (w, c) in &adj[u] {
            let nd = &d + c;
            let better = match &dist[*w] {
                None => true,
                Some(cur) => nd < *cur,
            };
            if better && !done[*w] {
                dist[*w] = Some(nd.clone());
                pred[*w] = Some(u);
                heap.push(Reverse((nd, *w)));
            }
        }
    }
    let mut keep = BTreeSet::new();
    for &t in inst.terminals() {
        let mut cur = t;
        while let Some(p) = pred[cur] {
            if !keep.insert((p, cur)) {
                break;
            }
            cur = p;
        }
    }
    SteinerSolution::from_edges(inst, keep)
}

/// Replaces every closure edge of `closure_sol` by its recorded shortest
/// path in `inst`, then prunes.
pub fn expand_to_original(
    inst: &DstInstance,
    mc: &MetricClosure,
    closure_sol: &SteinerSolution,
) -> Result<SteinerSolution, GraphError> {
    let mut edges = BTreeSet::new();
    for &(u, v) in &closure_sol.edges {
        let path = mc.path(u, v).ok_or(GraphError::NotAnEdge(u, v))?;
        for w in path.windows(2) {
            edges.insert((w[0], w[1]));
        }
    }
    let expanded = SteinerSolution::from_edges(inst, edges)?;
    prune_to_arborescence(inst, &expanded)
}
