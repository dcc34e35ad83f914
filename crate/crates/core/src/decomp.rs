//! Balanced tree partition and decomposition trees.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

use crate::graph::{prune_to_arborescence, DstInstance, Edge, GraphError, SteinerSolution, Vertex};
use crate::rational::{format_rational, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecompError {
    #[error("not a rooted tree: {0}")]
    NotATree(String),
    #[error("tree has no edges")]
    EmptyTree,
    #[error("balanced partition needs at least 3 vertices, got {0}")]
    TooSmall(usize),
    #[error("terminal {0} is not involved in the decomposition tree")]
    TerminalNotInvolved(Vertex),
    #[error("invalid decomposition tree: {0}")]
    Invalid(#[from] Violation),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An out-arborescence over vertex ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    root: Vertex,
    parent: BTreeMap<Vertex, Vertex>,
    children: BTreeMap<Vertex, Vec<Vertex>>,
}

impl RootedTree {
    pub fn singleton(root: Vertex) -> Self {
        RootedTree { root, parent: BTreeMap::new(), children: BTreeMap::new() }
    }

    pub fn from_edges(
        root: Vertex,
        edges: impl IntoIterator<Item = (Vertex, Vertex)>,
    ) -> Result<Self, DecompError> {
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for (h, t) in edges {
            if t == root {
                return Err(DecompError::NotATree(format!("edge into root {root}")));
            }
            if parent.insert(t, h).is_some() {
                return Err(DecompError::NotATree(format!("vertex {t} has two parents")));
            }
            children.entry(h).or_default().push(t);
        }
        for ch in children.values_mut() {
            ch.sort_unstable();
        }
        let tree = RootedTree { root, parent, children };
        let reached = tree.preorder().len();
        if reached != tree.size() {
            return Err(DecompError::NotATree("not connected to the root".into()));
        }
        Ok(tree)
    }

    /// Tree from a parent array; `None` marks the root.
    pub fn from_parents(parents: &[Option<Vertex>]) -> Result<Self, DecompError> {
        let roots: Vec<Vertex> = (0..parents.len()).filter(|&v| parents[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(DecompError::NotATree(format!("{} roots", roots.len())));
        }
        Self::from_edges(
            roots[0],
            parents.iter().enumerate().filter_map(|(v, p)| p.map(|p| (p, v))),
        )
    }

    pub fn from_solution(inst: &DstInstance, sol: &SteinerSolution) -> Result<Self, DecompError> {
        Self::from_edges(inst.root(), sol.edges.iter().copied())
    }

    pub fn root(&self) -> Vertex {
        self.root
    }

    pub fn size(&self) -> usize {
        self.parent.len() + 1
    }

    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        self.parent.get(&v).copied()
    }

    pub fn children(&self, v: Vertex) -> &[Vertex] {
        self.children.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v == self.root || self.parent.contains_key(&v)
    }

    pub fn vertices(&self) -> BTreeSet<Vertex> {
        std::iter::once(self.root).chain(self.parent.keys().copied()).collect()
    }

    /// Edges sorted by `(head, tail)`.
    pub fn edges(&self) -> Vec<(Vertex, Vertex)> {
        let mut e: Vec<_> = self.parent.iter().map(|(&t, &h)| (h, t)).collect();
        e.sort_unstable();
        e
    }

    pub fn preorder(&self) -> Vec<Vertex> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children(v).iter().rev());
        }
        out
    }

    /// Subtree sizes keyed by vertex.
    fn subtree_sizes(&self) -> BTreeMap<Vertex, usize> {
        let mut size = BTreeMap::new();
        for &v in self.preorder().iter().rev() {
            let s = 1 + self.children(v).iter().map(|c| size[c]).sum::<usize>();
            size.insert(v, s);
        }
        size
    }

    /// Vertices of the subtree rooted at `v`.
    fn subtree_vertices(&self, v: Vertex) -> Vec<Vertex> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children(u).iter().copied());
        }
        out
    }
}

/// Lowest-id vertex whose removal leaves components of at most `n/2`
/// vertices.
pub fn tree_separator(t: &RootedTree) -> Vertex {
    let n = t.size();
    let size = t.subtree_sizes();
    for v in t.vertices() {
        let upper = n - size[&v];
        let largest = t.children(v).iter().map(|c| size[c]).max().unwrap_or(0).max(upper);
        if 2 * largest <= n {
            return v;
        }
    }
    unreachable!("every tree has a separator")
}

/// Splits the edges of `t` into two trees sharing exactly one vertex `v`:
/// `T1` rooted at the root of `t`, `T2` rooted at `v`, each with fewer than
/// `2n/3 + 1` vertices.
///
/// The components of `t - v` are packed greedily while the packed size stays
/// below `2n/3`, smallest first, with the component holding the root of `t`
/// considered after all others of equal size, remaining ties by root id.
pub fn balanced_partition(t: &RootedTree) -> Result<(RootedTree, RootedTree, Vertex), DecompError> {
    let n = t.size();
    if n < 3 {
        return Err(DecompError::TooSmall(n));
    }
    let v = tree_separator(t);

    // Components of t - v, each given by its vertices and the vertex
    // adjacent to v.
    struct Component {
        vertices: Vec<Vertex>,
        holds_root: bool,
        anchor: Vertex,
    }
    let mut comps: Vec<Component> = t
        .children(v)
        .iter()
        .map(|&c| Component { vertices: t.subtree_vertices(c), holds_root: false, anchor: c })
        .collect();
    if v != t.root() {
        let below: BTreeSet<Vertex> = t.subtree_vertices(v).into_iter().collect();
        let vertices: Vec<Vertex> = t.vertices().into_iter().filter(|u| !below.contains(u)).collect();
        comps.push(Component { vertices, holds_root: true, anchor: t.root() });
    }
    comps.sort_by_key(|c| (c.vertices.len(), c.holds_root, c.anchor));

    // Pack while |T'| + |H| < 2n/3, i.e. 3(|T'| + |H|) < 2n.
    let mut packed = vec![false; comps.len()];
    let mut packed_size = 0;
    loop {
        let next = (0..comps.len())
            .find(|&i| !packed[i] && 3 * (packed_size + comps[i].vertices.len()) < 2 * n);
        let Some(i) = next else { break };
        packed[i] = true;
        packed_size += comps[i].vertices.len();
    }

    let side_edges = |take: bool| -> Vec<(Vertex, Vertex)> {
        let mut set: BTreeSet<Vertex> = BTreeSet::from([v]);
        for (i, c) in comps.iter().enumerate() {
            if packed[i] == take {
                set.extend(c.vertices.iter().copied());
            }
        }
        t.edges().into_iter().filter(|(h, tl)| set.contains(h) && set.contains(tl)).collect()
    };
    let a = side_edges(true);
    let b = side_edges(false);
    let root_in_a = v == t.root() || a.iter().any(|&(h, _)| h == t.root());
    let (e1, e2) = if root_in_a { (a, b) } else { (b, a) };
    let t1 = RootedTree::from_edges(t.root(), e1)?;
    let t2 = RootedTree::from_edges(v, e2)?;
    Ok((t1, t2, v))
}

/// Smallest `d` with `(3/2)^d >= n`, plus 2.
pub fn depth_bound(n: usize) -> usize {
    let n = BigUint::from(n.max(1));
    let mut d = 0u32;
    while num_traits::pow(BigUint::from(3u32), d as usize)
        < &n * num_traits::pow(BigUint::from(2u32), d as usize)
    {
        d += 1;
    }
    d as usize + 2
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompNode {
    pub mu: Vertex,
    pub edge: Option<Edge>,
    pub children: Vec<usize>,
}

/// A rooted tree of nodes carrying a vertex `mu`; leaves carry an edge.
/// Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompositionTree {
    pub nodes: Vec<DecompNode>,
}

/// A failed decomposition-tree property, naming the offending node.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("property (a): root has mu {found}, expected {expected}")]
    RootMu { found: Vertex, expected: Vertex },
    #[error("property (b): leaf {node} has no edge")]
    LeafWithoutEdge { node: usize },
    #[error("property (b): leaf {node} has mu different from its edge head")]
    LeafMuNotHead { node: usize },
    #[error("internal node {node} carries an edge")]
    InternalWithEdge { node: usize },
    #[error("node {node} uses an edge that is not in the graph")]
    UnknownEdge { node: usize },
    #[error("property (c): node {node}, child {child} has no witness sibling")]
    Witness { node: usize, child: usize },
}

impl Violation {
    /// Which definition property failed: 'a', 'b', 'c', or 's' for
    /// structural problems.
    pub fn property(&self) -> char {
        match self {
            Violation::RootMu { .. } => 'a',
            Violation::LeafWithoutEdge { .. } | Violation::LeafMuNotHead { .. } => 'b',
            Violation::Witness { .. } => 'c',
            _ => 's',
        }
    }
}

impl DecompositionTree {
    pub fn leaf(edge: Edge) -> Self {
        DecompositionTree { nodes: vec![DecompNode { mu: edge.head, edge: Some(edge), children: vec![] }] }
    }

    /// New tree whose root has `mu` and the given subtrees as children.
    pub fn join(mu: Vertex, subtrees: Vec<DecompositionTree>) -> Self {
        let mut nodes = vec![DecompNode { mu, edge: None, children: vec![] }];
        for sub in subtrees {
            let offset = nodes.len();
            nodes[0].children.push(offset);
            nodes.extend(sub.nodes.into_iter().map(|mut n| {
                n.children.iter_mut().for_each(|c| *c += offset);
                n
            }));
        }
        DecompositionTree { nodes }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &DecompNode {
        &self.nodes[id]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Sum of leaf edge costs.
    pub fn cost(&self) -> Rational {
        self.nodes.iter().filter_map(|n| n.edge.as_ref()).map(|e| e.cost.clone()).sum()
    }

    pub fn height(&self) -> usize {
        fn h(t: &DecompositionTree, id: usize) -> usize {
            t.nodes[id].children.iter().map(|&c| 1 + h(t, c)).max().unwrap_or(0)
        }
        if self.nodes.is_empty() {
            0
        } else {
            h(self, 0)
        }
    }

    pub fn is_binary(&self) -> bool {
        self.nodes.iter().all(|n| n.children.is_empty() || n.children.len() == 2)
    }

    /// Leaves of the subtree at `id`, in preorder.
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(u) = stack.pop() {
            let n = &self.nodes[u];
            if n.children.is_empty() {
                out.push(u);
            }
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn leaf_edges(&self) -> Vec<Edge> {
        self.leaves_under(0).into_iter().filter_map(|l| self.nodes[l].edge.clone()).collect()
    }

    /// Preorder listing, one node per line: indentation, depth, mu and the
    /// optional edge `head tail cost`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let n = &self.nodes[id];
            let _ = write!(out, "{}{} {}", "  ".repeat(depth), depth, n.mu);
            if let Some(e) = &n.edge {
                let _ = write!(out, " {} {} {}", e.head, e.tail, format_rational(&e.cost));
            }
            out.push('\n');
            stack.extend(n.children.iter().rev().map(|&c| (c, depth + 1)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DecompError> {
        let mut nodes: Vec<DecompNode> = Vec::new();
        let mut path: Vec<usize> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |msg: &str| DecompError::Parse { line: i + 1, msg: msg.to_string() };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected an integer"));
            let depth = num(toks[0])?;
            let mu = num(toks.get(1).ok_or_else(|| bad("missing mu"))?)?;
            let edge = match toks.len() {
                2 => None,
                5 => Some(Edge::new(
                    num(toks[2])?,
                    num(toks[3])?,
                    parse_rational(toks[4]).ok_or_else(|| bad("bad cost"))?,
                )),
                _ => return Err(bad("expected `depth mu [head tail cost]`")),
            };
            if depth > path.len() || (depth == 0 && !nodes.is_empty()) {
                return Err(bad("bad depth"));
            }
            path.truncate(depth);
            let id = nodes.len();
            nodes.push(DecompNode { mu, edge, children: vec![] });
            if let Some(&p) = path.last() {
                nodes[p].children.push(id);
            }
            path.push(id);
        }
        if nodes.is_empty() {
            return Err(DecompError::Parse { line: 1, msg: "empty tree".into() });
        }
        Ok(DecompositionTree { nodes })
    }
}

/// Recursive balanced partition of a Steiner arborescence down to single
/// edges. Edge costs come from `inst`.
pub fn build_decomposition_tree(
    steiner: &RootedTree,
    inst: &DstInstance,
) -> Result<DecompositionTree, DecompError> {
    if steiner.size() < 2 {
        return Err(DecompError::EmptyTree);
    }
    if steiner.size() == 2 {
        let (h, t) = steiner.edges()[0];
        let cost = inst.edge_cost(h, t).ok_or(GraphError::NotAnEdge(h, t))?.clone();
        return Ok(DecompositionTree::leaf(Edge::new(h, t, cost)));
    }
    let (t1, t2, _) = balanced_partition(steiner)?;
    let tau1 = build_decomposition_tree(&t1, inst)?;
    let tau2 = build_decomposition_tree(&t2, inst)?;
    Ok(DecompositionTree::join(steiner.root(), vec![tau1, tau2]))
}

/// `{mu_alpha}` plus the tails of all leaf edges below `alpha`.
pub fn involved_vertices(tau: &DecompositionTree, alpha: usize) -> BTreeSet<Vertex> {
    let mut out = BTreeSet::from([tau.nodes[alpha].mu]);
    for l in tau.leaves_under(alpha) {
        if let Some(e) = &tau.nodes[l].edge {
            out.insert(e.tail);
        }
    }
    out
}

/// Checks properties (a), (b) and (c) and that every leaf edge exists in
/// `inst`.
pub fn validate_decomposition(tau: &DecompositionTree, inst: &DstInstance) -> Result<(), Violation> {
    let root_mu = tau.nodes[0].mu;
    if root_mu != inst.root() {
        return Err(Violation::RootMu { found: root_mu, expected: inst.root() });
    }
    for (id, n) in tau.nodes.iter().enumerate() {
        if n.children.is_empty() {
            let Some(e) = &n.edge else { return Err(Violation::LeafWithoutEdge { node: id }) };
            if e.head != n.mu {
                return Err(Violation::LeafMuNotHead { node: id });
            }
            if inst.edge_cost(e.head, e.tail) != Some(&e.cost) {
                return Err(Violation::UnknownEdge { node: id });
            }
            continue;
        }
        if n.edge.is_some() {
            return Err(Violation::InternalWithEdge { node: id });
        }
        for &c2 in &n.children {
            let mu2 = tau.nodes[c2].mu;
            if mu2 == n.mu {
                continue;
            }
            let witnessed = n
                .children
                .iter()
                .any(|&c1| tau.nodes[c1].mu == n.mu && involved_vertices(tau, c1).contains(&mu2));
            if !witnessed {
                return Err(Violation::Witness { node: id, child: c2 });
            }
        }
    }
    Ok(())
}

/// Whether the leaf edges below `alpha` contain a path from `mu_alpha` to
/// every vertex involved in the subtree.
pub fn reachability_holds(tau: &DecompositionTree, alpha: usize) -> bool {
    let mut adj: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
    for l in tau.leaves_under(alpha) {
        if let Some(e) = &tau.nodes[l].edge {
            adj.entry(e.head).or_default().push(e.tail);
        }
    }
    let start = tau.nodes[alpha].mu;
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &w in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    involved_vertices(tau, alpha).is_subset(&seen)
}

/// The leaf edges of a valid decomposition tree, pruned to an arborescence.
pub fn decomposition_to_steiner(
    tau: &DecompositionTree,
    inst: &DstInstance,
) -> Result<SteinerSolution, DecompError> {
    validate_decomposition(tau, inst)?;
    let involved = involved_vertices(tau, 0);
    if let Some(&t) = inst.terminals().iter().find(|t| !involved.contains(t)) {
        return Err(DecompError::TerminalNotInvolved(t));
    }
    let sol = SteinerSolution::from_edges(inst, tau.leaf_edges().iter().map(Edge::key))?;
    let pruned = prune_to_arborescence(inst, &sol)?;
    debug_assert!(pruned.cost <= tau.cost() || tau.cost().is_zero());
    Ok(pruned)
}
