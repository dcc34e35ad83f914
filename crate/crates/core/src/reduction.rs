//! The DST to LCST reduction: twigs, the label tree, embedding of an
//! optimal decomposition tree, and the mapping of LCST solutions back to
//! decomposition trees.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use num_traits::Zero;
use thiserror::Error;

use crate::decomp::{depth_bound, DecompNode, DecompositionTree};
use crate::graph::{DstInstance, Edge, Vertex};
use crate::lcst::{Label, LcstError, LcstInstance, LcstSolution, NodeId};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("cap exceeded: more than {limit} {what}")]
    CapExceeded { what: &'static str, limit: usize },
    #[error("no child of label-tree node {node} carries the required twig {twig}")]
    MissingTwig { node: NodeId, twig: String },
    #[error("decomposition tree has no internal node; a single-edge tree has no twig embedding")]
    SingularDecomposition,
    #[error("decomposition tree is not binary")]
    NotBinary,
    #[error("label-tree node {0} is not a q-node")]
    NotQNode(NodeId),
    #[error("solution is missing label-tree node {0} needed for identification")]
    MissingIdentification(NodeId),
    #[error("unknown label-tree node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Lcst(#[from] LcstError),
}

/// Limits on label-tree materialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_nodes: usize,
    pub max_twigs: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_nodes: 200_000, max_twigs: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub g: Option<usize>,
    pub hbar: Option<usize>,
    pub depth: Option<usize>,
    pub caps: Option<Caps>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReductionParams {
    /// Decomposition levels collapsed into one twig.
    pub g: usize,
    /// Height bound for optimal decomposition trees.
    pub hbar: usize,
    /// Recursion depth of the label tree.
    pub depth: usize,
    pub caps: Caps,
    /// Set when overrides lowered the height or depth below the bound that
    /// guarantees an optimal embedding.
    pub forfeited: bool,
}

/// `g = max(1, ceil(log2 log2 k))`, `hbar = depth_bound(2k)`,
/// `depth = ceil(hbar / g)`, then overrides.
pub fn choose_params(k: usize, overrides: &Overrides) -> ReductionParams {
    let k = k.max(1);
    let mut g = 0usize;
    // Smallest g with 2^(2^g) >= k.
    while g < 6 && (1u128 << (1u32 << g).min(127)) < k as u128 {
        g += 1;
    }
    let g = overrides.g.unwrap_or(g.max(1)).max(1);
    let hbar_needed = depth_bound(2 * k);
    let hbar = overrides.hbar.unwrap_or(hbar_needed);
    let depth_needed = hbar_needed.div_ceil(g);
    let depth = overrides.depth.unwrap_or(hbar.div_ceil(g)).max(1);
    ReductionParams {
        g,
        hbar,
        depth,
        caps: overrides.caps.unwrap_or_default(),
        forfeited: hbar < hbar_needed || depth < depth_needed,
    }
}

/// A full binary fragment of a decomposition tree. Children are kept in
/// sorted order, so equal twigs compare equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Twig {
    Leaf { mu: Vertex, edge: Option<(Vertex, Vertex)> },
    Node { mu: Vertex, children: Box<(Twig, Twig)> },
}

impl Twig {
    pub fn leaf(mu: Vertex, edge: Option<(Vertex, Vertex)>) -> Twig {
        Twig::Leaf { mu, edge }
    }

    /// Internal node; the children are put in canonical order.
    pub fn node(mu: Vertex, a: Twig, b: Twig) -> Twig {
        let (a, b) = if b < a { (b, a) } else { (a, b) };
        Twig::Node { mu, children: Box::new((a, b)) }
    }

    pub fn mu(&self) -> Vertex {
        match self {
            Twig::Leaf { mu, .. } | Twig::Node { mu, .. } => *mu,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Twig::Leaf { .. })
    }

    pub fn depth(&self) -> usize {
        match self {
            Twig::Leaf { .. } => 0,
            Twig::Node { children, .. } => 1 + children.0.depth().max(children.1.depth()),
        }
    }

    /// Leaves in preorder as `(mu, edge)`.
    pub fn leaves(&self) -> Vec<(Vertex, Option<(Vertex, Vertex)>)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(Vertex, Option<(Vertex, Vertex)>)>) {
        match self {
            Twig::Leaf { mu, edge } => out.push((*mu, *edge)),
            Twig::Node { children, .. } => {
                children.0.collect_leaves(out);
                children.1.collect_leaves(out);
            }
        }
    }

    /// `mu` of every leaf without an edge, in preorder.
    pub fn undefined_leaves(&self) -> Vec<Vertex> {
        self.leaves().into_iter().filter(|(_, e)| e.is_none()).map(|(mu, _)| mu).collect()
    }

    pub fn defined_edges(&self) -> Vec<(Vertex, Vertex)> {
        self.leaves().into_iter().filter_map(|(_, e)| e).collect()
    }

    pub fn has_defined_tail(&self, v: Vertex) -> bool {
        self.defined_edges().iter().any(|&(_, t)| t == v)
    }

    /// Sum of defined leaf edge costs in `inst`.
    pub fn cost(&self, inst: &DstInstance) -> Rational {
        self.defined_edges()
            .iter()
            .map(|&(h, t)| inst.edge_cost(h, t).cloned().unwrap_or_else(Rational::zero))
            .sum()
    }

    /// Checks the twig invariants against `inst` and depth limit `g`.
    pub fn check(&self, inst: &DstInstance, g: usize) -> Result<(), String> {
        if self.depth() > g {
            return Err(format!("depth {} exceeds {g}", self.depth()));
        }
        self.check_rec(inst)
    }

    fn check_rec(&self, inst: &DstInstance) -> Result<(), String> {
        match self {
            Twig::Leaf { mu, edge: Some((h, t)) } => {
                if h != mu {
                    return Err(format!("leaf with mu {mu} has edge head {h}"));
                }
                if inst.edge_cost(*h, *t).is_none() {
                    return Err(format!("edge {h}->{t} not in graph"));
                }
                Ok(())
            }
            Twig::Leaf { .. } => Ok(()),
            Twig::Node { mu, children } => {
                if children.0.mu() != *mu && children.1.mu() != *mu {
                    return Err(format!("internal node with mu {mu} has no child keeping it"));
                }
                if children.1 < children.0 {
                    return Err("children out of canonical order".into());
                }
                children.0.check_rec(inst)?;
                children.1.check_rec(inst)
            }
        }
    }

    /// For every internal node whose differing child lacks a witness inside
    /// the twig: the vertex to be witnessed and the indices (into
    /// [`Twig::undefined_leaves`]) of the undefined leaves below the
    /// same-`mu` child. Internal nodes are visited in preorder; the
    /// same-`mu` child is the first one in canonical order.
    pub fn consistency_requirements(&self) -> Vec<(Vertex, Vec<usize>)> {
        let mut out = Vec::new();
        self.requirements_rec(0, &mut out);
        out
    }

    fn requirements_rec(&self, offset: usize, out: &mut Vec<(Vertex, Vec<usize>)>) -> usize {
        match self {
            Twig::Leaf { edge, .. } => usize::from(edge.is_none()),
            Twig::Node { mu, children } => {
                let (c0, c1) = (&children.0, &children.1);
                let n0 = c0.undefined_leaves().len();
                let n1 = c1.undefined_leaves().len();
                let (a1, a2, range) = if c0.mu() == *mu {
                    (c0, c1, offset..offset + n0)
                } else {
                    (c1, c0, offset + n0..offset + n0 + n1)
                };
                if a2.mu() != *mu && !a1.has_defined_tail(a2.mu()) {
                    out.push((a2.mu(), range.collect()));
                }
                c0.requirements_rec(offset, out);
                c1.requirements_rec(offset + n0, out);
                n0 + n1
            }
        }
    }
}

impl fmt::Display for Twig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Twig::Leaf { mu, edge: None } => write!(f, "{mu}"),
            Twig::Leaf { mu, edge: Some((_, t)) } => write!(f, "{mu}>{t}"),
            Twig::Node { mu, children } => write!(f, "({mu} {} {})", children.0, children.1),
        }
    }
}

/// All non-singular twigs of depth at most `g` whose root has `mu = root`,
/// sorted. Fails once more than `max_twigs` exist.
pub fn enumerate_twigs(
    inst: &DstInstance,
    root: Vertex,
    g: usize,
    max_twigs: usize,
) -> Result<Vec<Twig>, ReductionError> {
    let cap = |n: usize| -> Result<(), ReductionError> {
        if n > max_twigs {
            Err(ReductionError::CapExceeded { what: "twigs", limit: max_twigs })
        } else {
            Ok(())
        }
    };
    // all[d][v]: twigs of depth <= d rooted at v, including single leaves.
    let n = inst.n();
    let mut all: Vec<Vec<Vec<Twig>>> = Vec::with_capacity(g + 1);
    let leaves: Vec<Vec<Twig>> = (0..n)
        .map(|v| {
            std::iter::once(Twig::leaf(v, None))
                .chain(inst.out_edges(v).map(|e| Twig::leaf(v, Some(e.key()))))
                .collect()
        })
        .collect();
    all.push(leaves);
    for d in 1..=g {
        let prev = &all[d - 1];
        let every: Vec<&Twig> = prev.iter().flatten().collect();
        let mut level = Vec::with_capacity(n);
        for v in 0..n {
            let mut set: BTreeSet<Twig> = prev[v].iter().cloned().collect();
            for a in &prev[v] {
                for &b in &every {
                    set.insert(Twig::node(v, a.clone(), b.clone()));
                    // Nodes for other roots are only needed below `root`.
                    cap(set.len().saturating_sub(prev[v].len()) / n.max(1))?;
                }
            }
            level.push(set.into_iter().collect::<Vec<_>>());
        }
        all.push(level);
    }
    let out: Vec<Twig> = all[g][root].iter().filter(|t| !t.is_singular()).cloned().collect();
    cap(out.len())?;
    Ok(out)
}

/// Node kinds of the label tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LtKind {
    /// Chooses one twig rooted at `u`; `level` counts twig layers above.
    P { u: Vertex, level: usize },
    /// Carries the twig `twigs(u)[index]`.
    Q { u: Vertex, index: usize },
}

/// Snapshot of one label-tree node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LtNode {
    pub parent: Option<NodeId>,
    pub kind: LtKind,
    pub cost: Rational,
    pub dem: Vec<Label>,
    pub ser: Vec<Label>,
    /// `None` until a p-node is expanded. For q-nodes, one p-node per
    /// undefined twig leaf, in leaf preorder.
    pub children: Option<Vec<NodeId>>,
    /// Consistency requirements `(label, vertex)` inherited by the q-nodes
    /// below a p-node: a q-node whose twig has a defined leaf with tail
    /// `vertex` serves `label`.
    reqs: Arc<Vec<(Label, Vertex)>>,
}

struct Arena {
    nodes: Vec<LtNode>,
    next_label: usize,
    twigs: BTreeMap<Vertex, Arc<Vec<Twig>>>,
}

/// The label tree over a metric-closed instance, built lazily: a p-node's
/// children (and their own p-children) appear on first access. Labels are
/// allocated from a counter in construction order; globals are the
/// terminal indices.
pub struct LabelTree {
    closed: DstInstance,
    params: ReductionParams,
    arena: Mutex<Arena>,
}

impl LabelTree {
    pub fn new(closed: DstInstance, params: ReductionParams) -> Self {
        let k = closed.k();
        let root = LtNode {
            parent: None,
            kind: LtKind::P { u: closed.root(), level: 0 },
            cost: Rational::zero(),
            dem: vec![k],
            ser: vec![],
            children: None,
            reqs: Arc::new(Vec::new()),
        };
        let arena = Arena { nodes: vec![root], next_label: k + 1, twigs: BTreeMap::new() };
        LabelTree { closed, params, arena: Mutex::new(arena) }
    }

    pub fn instance(&self) -> &DstInstance {
        &self.closed
    }

    pub fn params(&self) -> &ReductionParams {
        &self.params
    }

    pub fn root(&self) -> NodeId {
        0
    }

    fn lock(&self) -> MutexGuard<'_, Arena> {
        self.arena.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Nodes materialized so far.
    pub fn len(&self) -> usize {
        self.lock().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> Result<LtNode, ReductionError> {
        self.lock().nodes.get(id).cloned().ok_or(ReductionError::UnknownNode(id))
    }

    pub fn twig(&self, id: NodeId) -> Result<Twig, ReductionError> {
        let arena = self.lock();
        let node = arena.nodes.get(id).ok_or(ReductionError::UnknownNode(id))?;
        match node.kind {
            LtKind::Q { u, index } => Ok(arena.twigs[&u][index].clone()),
            LtKind::P { .. } => Err(ReductionError::NotQNode(id)),
        }
    }

    /// Children of `id`, expanding a p-node on first access.
    pub fn children(&self, id: NodeId) -> Result<Vec<NodeId>, ReductionError> {
        let mut arena = self.lock();
        if id >= arena.nodes.len() {
            return Err(ReductionError::UnknownNode(id));
        }
        if let Some(ch) = &arena.nodes[id].children {
            return Ok(ch.clone());
        }
        self.expand(&mut arena, id)?;
        Ok(arena.nodes[id].children.clone().expect("just expanded"))
    }

    fn twigs_for(&self, arena: &mut Arena, u: Vertex) -> Result<Arc<Vec<Twig>>, ReductionError> {
        if let Some(t) = arena.twigs.get(&u) {
            return Ok(t.clone());
        }
        let t = Arc::new(enumerate_twigs(&self.closed, u, self.params.g, self.params.caps.max_twigs)?);
        arena.twigs.insert(u, t.clone());
        Ok(t)
    }

    fn push(&self, arena: &mut Arena, node: LtNode) -> Result<NodeId, ReductionError> {
        if arena.nodes.len() >= self.params.caps.max_nodes {
            return Err(ReductionError::CapExceeded { what: "label-tree nodes", limit: self.params.caps.max_nodes });
        }
        arena.nodes.push(node);
        Ok(arena.nodes.len() - 1)
    }

    fn fresh(arena: &mut Arena) -> Label {
        arena.next_label += 1;
        arena.next_label - 1
    }

    fn expand(&self, arena: &mut Arena, p: NodeId) -> Result<(), ReductionError> {
        let LtKind::P { u, level } = arena.nodes[p].kind else {
            unreachable!("q-nodes are created with their children")
        };
        if level >= self.params.depth {
            arena.nodes[p].children = Some(Vec::new());
            return Ok(());
        }
        let twigs = self.twigs_for(arena, u)?;
        let ell = arena.nodes[p].dem[0];
        let inherited = arena.nodes[p].reqs.clone();
        let mut q_ids = Vec::with_capacity(twigs.len());
        for (index, twig) in twigs.iter().enumerate() {
            let mut ser = vec![ell];
            for (_, edge) in twig.leaves() {
                if let Some((_, t)) = edge {
                    if let Some(i) = self.closed.terminal_index(t) {
                        ser.push(i);
                    }
                }
            }
            for &(label, target) in inherited.iter() {
                if twig.has_defined_tail(target) {
                    ser.push(label);
                }
            }
            let q = self.push(
                arena,
                LtNode {
                    parent: Some(p),
                    kind: LtKind::Q { u, index },
                    cost: twig.cost(&self.closed),
                    dem: vec![],
                    ser,
                    children: None,
                    reqs: Arc::new(Vec::new()),
                },
            )?;
            // One p-child per undefined leaf, tied to q by a fresh label.
            let mut kids = Vec::new();
            for mu in twig.undefined_leaves() {
                let own = Self::fresh(arena);
                let child = self.push(
                    arena,
                    LtNode {
                        parent: Some(q),
                        kind: LtKind::P { u: mu, level: level + 1 },
                        cost: Rational::zero(),
                        dem: vec![own],
                        ser: vec![],
                        children: None,
                        reqs: inherited.clone(),
                    },
                )?;
                let tie = Self::fresh(arena);
                arena.nodes[q].dem.push(tie);
                arena.nodes[child].ser.push(tie);
                kids.push(child);
            }
            // Witness labels for internal nodes lacking one inside the twig.
            let mut extra: Vec<Vec<(Label, Vertex)>> = vec![Vec::new(); kids.len()];
            for (target, leaf_indices) in twig.consistency_requirements() {
                let label = Self::fresh(arena);
                arena.nodes[q].dem.push(label);
                for i in leaf_indices {
                    extra[i].push((label, target));
                }
            }
            for (i, &child) in kids.iter().enumerate() {
                if !extra[i].is_empty() {
                    let mut reqs = (*inherited).clone();
                    reqs.extend(extra[i].iter().copied());
                    arena.nodes[child].reqs = Arc::new(reqs);
                }
            }
            arena.nodes[q].ser.sort_unstable();
            arena.nodes[q].ser.dedup();
            arena.nodes[q].children = Some(kids);
            q_ids.push(q);
        }
        arena.nodes[p].children = Some(q_ids);
        Ok(())
    }

    /// Expands every node (subject to caps) and exports the tree as an LCST
    /// instance with the same node ids.
    pub fn materialize(&self) -> Result<LcstInstance, ReductionError> {
        let mut queue = VecDeque::from([self.root()]);
        while let Some(v) = queue.pop_front() {
            queue.extend(self.children(v)?);
        }
        let arena = self.lock();
        let n = arena.nodes.len();
        let mut parent = Vec::with_capacity(n);
        let mut cost = Vec::with_capacity(n);
        let mut dem = Vec::with_capacity(n);
        let mut ser = Vec::with_capacity(n);
        for node in &arena.nodes {
            parent.push(node.parent);
            cost.push(node.cost.clone());
            dem.push(node.dem.iter().copied().collect());
            ser.push(node.ser.iter().copied().collect());
        }
        Ok(LcstInstance::new(parent, cost, dem, ser, self.closed.k())?)
    }

    /// Longest demand list among materialized nodes.
    pub fn max_demand(&self) -> usize {
        self.lock().nodes.iter().map(|n| n.dem.len()).max().unwrap_or(0)
    }

    /// Number of labels allocated so far, globals included.
    pub fn label_count(&self) -> usize {
        self.lock().next_label
    }
}

/// A tree of twigs cut from a binary decomposition tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwigForest {
    pub twigs: Vec<Twig>,
    /// Per twig, the child twig for each undefined leaf (leaf preorder).
    pub children: Vec<Vec<usize>>,
}

impl TwigForest {
    pub fn depth(&self) -> usize {
        fn d(f: &TwigForest, i: usize) -> usize {
            1 + f.children[i].iter().map(|&c| d(f, c)).max().unwrap_or(0)
        }
        if self.twigs.is_empty() {
            0
        } else {
            d(self, 0)
        }
    }
}

/// Cuts `tau` into twigs: every internal node at depth `i*g` roots a twig
/// holding its descendants down to depth `(i+1)*g`.
pub fn twig_forest(tau: &DecompositionTree, g: usize) -> Result<TwigForest, ReductionError> {
    if !tau.is_binary() {
        return Err(ReductionError::NotBinary);
    }
    if tau.is_leaf(0) {
        return Err(ReductionError::SingularDecomposition);
    }
    let mut forest = TwigForest { twigs: Vec::new(), children: Vec::new() };
    build_twig(tau, 0, g, &mut forest);
    Ok(forest)
}

/// Adds the twig rooted at `alpha` (and, recursively, those below it);
/// returns its index.
fn build_twig(tau: &DecompositionTree, alpha: usize, g: usize, forest: &mut TwigForest) -> usize {
    // Twig shape decorated with the decomposition node behind each
    // undefined leaf, so the cut points survive canonical reordering.
    fn cut(tau: &DecompositionTree, id: usize, left: usize) -> (Twig, Vec<usize>) {
        let n = &tau.nodes[id];
        if n.children.is_empty() {
            return (Twig::leaf(n.mu, n.edge.as_ref().map(Edge::key)), vec![]);
        }
        if left == 0 {
            return (Twig::leaf(n.mu, None), vec![id]);
        }
        let (ta, pa) = cut(tau, n.children[0], left - 1);
        let (tb, pb) = cut(tau, n.children[1], left - 1);
        if tb < ta {
            (Twig::node(n.mu, tb, ta), [pb, pa].concat())
        } else {
            (Twig::node(n.mu, ta, tb), [pa, pb].concat())
        }
    }
    let (twig, cuts) = cut(tau, alpha, g);
    let index = forest.twigs.len();
    forest.twigs.push(twig);
    forest.children.push(Vec::new());
    let kids: Vec<usize> = cuts.into_iter().map(|c| build_twig(tau, c, g, forest)).collect();
    forest.children[index] = kids;
    index
}

/// Selects, for each twig of `forest`, the matching q-node under the
/// current p-node, starting from the label-tree root.
pub fn embed_optimal(lt: &LabelTree, forest: &TwigForest) -> Result<LcstSolution, ReductionError> {
    let mut nodes = BTreeSet::new();
    let mut cost = Rational::zero();
    let mut stack = vec![(lt.root(), 0usize)];
    while let Some((p, t)) = stack.pop() {
        let twig = &forest.twigs[t];
        let info = lt.node(p)?;
        if let LtKind::P { u, .. } = info.kind {
            assert_eq!(u, twig.mu(), "p-node and twig root disagree");
        }
        nodes.insert(p);
        let mut found = None;
        for q in lt.children(p)? {
            if lt.twig(q)? == *twig {
                found = Some(q);
                break;
            }
        }
        let q = found.ok_or_else(|| ReductionError::MissingTwig { node: p, twig: twig.to_string() })?;
        nodes.insert(q);
        let qn = lt.node(q)?;
        cost += &qn.cost;
        let kids = qn.children.expect("q-nodes know their children");
        for (i, &child_twig) in forest.children[t].iter().enumerate() {
            stack.push((kids[i], child_twig));
        }
    }
    Ok(LcstSolution { nodes, cost })
}

/// Assembles a decomposition tree from a label-consistent selection of
/// label-tree nodes: the twigs of the selected q-nodes, glued at their
/// undefined leaves, under a root with `mu = r`. A p-node with several
/// selected q-children merges their twig roots.
pub fn lcst_to_decomposition(
    lt: &LabelTree,
    sol: &LcstSolution,
) -> Result<DecompositionTree, ReductionError> {
    let mut nodes = vec![DecompNode { mu: lt.instance().root(), edge: None, children: vec![] }];
    // (p-node, decomposition node it is identified with)
    let mut stack = vec![(lt.root(), 0usize)];
    while let Some((p, beta)) = stack.pop() {
        if !sol.contains(p) {
            return Err(ReductionError::MissingIdentification(p));
        }
        let selected: Vec<NodeId> =
            lt.children(p)?.into_iter().filter(|q| sol.contains(*q)).collect();
        if selected.is_empty() {
            return Err(ReductionError::MissingIdentification(p));
        }
        for q in selected {
            let twig = lt.twig(q)?;
            let kids = lt.node(q)?.children.expect("q-nodes know their children");
            let mut undefined = Vec::new();
            let Twig::Node { children, .. } = &twig else {
                unreachable!("label-tree twigs are non-singular")
            };
            for sub in [&children.0, &children.1] {
                let id = graft(lt.instance(), sub, &mut nodes, &mut undefined);
                nodes[beta].children.push(id);
            }
            for (i, leaf) in undefined.into_iter().enumerate() {
                stack.push((kids[i], leaf));
            }
        }
    }
    Ok(DecompositionTree { nodes })
}

/// Copies `twig` into `nodes`; records undefined leaves in preorder.
fn graft(inst: &DstInstance, twig: &Twig, nodes: &mut Vec<DecompNode>, undefined: &mut Vec<usize>) -> usize {
    let id = nodes.len();
    match twig {
        Twig::Leaf { mu, edge } => {
            let edge = edge.map(|(h, t)| {
                Edge::new(h, t, inst.edge_cost(h, t).cloned().unwrap_or_else(Rational::zero))
            });
            if edge.is_none() {
                undefined.push(id);
            }
            nodes.push(DecompNode { mu: *mu, edge, children: vec![] });
        }
        Twig::Node { mu, children } => {
            nodes.push(DecompNode { mu: *mu, edge: None, children: vec![] });
            let a = graft(inst, &children.0, nodes, undefined);
            let b = graft(inst, &children.1, nodes, undefined);
            nodes[id].children = vec![a, b];
        }
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{build_decomposition_tree, validate_decomposition, RootedTree};
    use crate::graph::{metric_closure, parse_dst};
    use crate::lcst::{validate_full, validate_label_consistent};
    use crate::rational::int;

    fn g1_closed() -> DstInstance {
        let g = parse_dst(
            "dst 4 5\nroot 0\nterminals 2 3\nedge 0 1 1\nedge 1 2 1\nedge 1 3 1\nedge 0 2 3\nedge 0 3 3\n",
        )
        .unwrap();
        metric_closure(&g).unwrap().0
    }

    #[test]
    fn params() {
        let p = choose_params(2, &Overrides::default());
        assert_eq!((p.g, p.hbar, p.depth, p.forfeited), (1, 6, 6, false));
        assert_eq!(choose_params(256, &Overrides::default()).g, 3);
        assert_eq!(choose_params(1, &Overrides::default()).g, 1);
        assert_eq!(choose_params(5, &Overrides::default()).g, 2);
        let p = choose_params(2, &Overrides { depth: Some(2), ..Default::default() });
        assert_eq!(p.depth, 2);
        assert!(p.forfeited);
    }

    #[test]
    fn twig_canonical_order_and_requirements() {
        let a = Twig::node(0, Twig::leaf(1, None), Twig::leaf(0, Some((0, 2))));
        let b = Twig::node(0, Twig::leaf(0, Some((0, 2))), Twig::leaf(1, None));
        assert_eq!(a, b);
        // mu 1 is not a tail inside the same-mu child: one requirement, no
        // undefined leaves below the same-mu child.
        assert_eq!(a.consistency_requirements(), vec![(1, vec![])]);
        let c = Twig::node(0, Twig::leaf(0, Some((0, 1))), Twig::leaf(1, None));
        assert!(c.consistency_requirements().is_empty());
        let d = Twig::node(0, Twig::leaf(0, None), Twig::leaf(1, None));
        assert_eq!(d.undefined_leaves(), vec![0, 1]);
        assert_eq!(d.consistency_requirements(), vec![(1, vec![0])]);
        assert!(Twig::leaf(1, Some((0, 1))).check(&g1_closed(), 1).is_err());
    }

    #[test]
    fn two_vertex_twig_count() {
        // Closure of r -> a: leaves at r are {r, r>a}, at a just {a}.
        let g = DstInstance::new(2, [Edge::new(0, 1, int(1))], 0, [1]).unwrap();
        let twigs = enumerate_twigs(&g, 0, 1, 1000).unwrap();
        // Unordered pairs with at least one child keeping mu = r:
        // {r,r}, {r,r>a}, {r>a,r>a}, {r,a}, {r>a,a}.
        assert_eq!(twigs.len(), 5);
        assert!(twigs.iter().all(|t| t.check(&g, 1).is_ok() && !t.is_singular()));
        assert!(matches!(
            enumerate_twigs(&g, 0, 1, 3),
            Err(ReductionError::CapExceeded { what: "twigs", .. })
        ));
    }

    #[test]
    fn g1_embedding() {
        let closed = g1_closed();
        let params = choose_params(2, &Overrides { depth: Some(2), ..Default::default() });
        let lt = LabelTree::new(closed.clone(), params);
        let tree = RootedTree::from_edges(0, [(0, 1), (1, 2), (1, 3)]).unwrap();
        let tau = build_decomposition_tree(&tree, &closed).unwrap();
        let forest = twig_forest(&tau, 1).unwrap();
        assert_eq!(forest.twigs.len(), 2);
        assert_eq!(forest.depth(), 2);
        let sol = embed_optimal(&lt, &forest).unwrap();
        assert_eq!(sol.cost, int(3));
        let full = lt.materialize().unwrap();
        assert!(validate_label_consistent(&full, &sol).is_ok());
        assert_eq!(validate_full(&full, &sol).unwrap(), int(3));

        let back = lcst_to_decomposition(&lt, &sol).unwrap();
        assert!(validate_decomposition(&back, &closed).is_ok());
        assert_eq!(back.cost(), int(3));

        // Every q under the root serves the root's demand label.
        let root = lt.node(0).unwrap();
        for q in lt.children(0).unwrap() {
            assert!(lt.node(q).unwrap().ser.contains(&root.dem[0]));
        }
    }

    #[test]
    fn depth_zero_is_a_single_p_node() {
        let params = choose_params(2, &Overrides { depth: Some(1), ..Default::default() });
        let params = ReductionParams { depth: 0, ..params };
        let lt = LabelTree::new(g1_closed(), params);
        let inst = lt.materialize().unwrap();
        assert_eq!(inst.len(), 1);
    }

    #[test]
    fn node_cap_is_an_error() {
        let caps = Caps { max_nodes: 10, max_twigs: 1000 };
        let params = choose_params(2, &Overrides { depth: Some(2), caps: Some(caps), ..Default::default() });
        let lt = LabelTree::new(g1_closed(), params);
        assert!(matches!(lt.materialize(), Err(ReductionError::CapExceeded { .. })));
    }
}
