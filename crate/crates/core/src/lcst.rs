//! Label-Consistent Subtree instances: model, normalization, pruning of
//! useless nodes, validation and exact solvers for small trees.
//!
//! Labels are integers; the global labels are exactly `0..k`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::{format_rational, parse_rational, Rational};

pub type NodeId = usize;
pub type Label = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LcstError {
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("node {node} demands global label {label}")]
    GlobalDemand { node: NodeId, label: Label },
    #[error("negative cost at node {0}")]
    NegativeCost(NodeId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("tree has {n} nodes, brute force is capped at {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("instance is infeasible")]
    Infeasible,
    #[error(transparent)]
    Violation(#[from] LcstViolation),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LcstViolation {
    #[error("solution does not contain the root")]
    MissingRoot,
    #[error("node {0} is not in the instance")]
    UnknownNode(NodeId),
    #[error("node {0} is selected without its parent")]
    Disconnected(NodeId),
    #[error("node {node} demands label {label}, which no selected descendant serves")]
    Unserved { node: NodeId, label: Label },
    #[error("global {0} unserved")]
    GlobalUnserved(Label),
}

/// A rooted tree with node costs, demand labels and service labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LcstInstance {
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    cost: Vec<Rational>,
    dem: Vec<BTreeSet<Label>>,
    ser: Vec<BTreeSet<Label>>,
    root: NodeId,
    k: usize,
}

impl LcstInstance {
    pub fn new(
        parent: Vec<Option<NodeId>>,
        cost: Vec<Rational>,
        dem: Vec<BTreeSet<Label>>,
        ser: Vec<BTreeSet<Label>>,
        k: usize,
    ) -> Result<Self, LcstError> {
        let n = parent.len();
        if n == 0 || cost.len() != n || dem.len() != n || ser.len() != n {
            return Err(LcstError::Malformed("inconsistent node counts".into()));
        }
        let roots: Vec<NodeId> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(LcstError::Malformed(format!("{} roots", roots.len())));
        }
        let mut children = vec![Vec::new(); n];
        for v in 0..n {
            if let Some(p) = parent[v] {
                if p >= n {
                    return Err(LcstError::Malformed(format!("parent {p} out of range")));
                }
                children[p].push(v);
            }
            if cost[v].is_negative() {
                return Err(LcstError::NegativeCost(v));
            }
            if let Some(&l) = dem[v].iter().find(|&&l| l < k) {
                return Err(LcstError::GlobalDemand { node: v, label: l });
            }
        }
        let inst = LcstInstance { parent, children, cost, dem, ser, root: roots[0], k };
        if inst.preorder().len() != n {
            return Err(LcstError::Malformed("cycle or unreachable node".into()));
        }
        Ok(inst)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_global(&self, l: Label) -> bool {
        l < self.k
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.children[v].is_empty()
    }

    pub fn cost(&self, v: NodeId) -> &Rational {
        &self.cost[v]
    }

    pub fn dem(&self, v: NodeId) -> &BTreeSet<Label> {
        &self.dem[v]
    }

    pub fn ser(&self, v: NodeId) -> &BTreeSet<Label> {
        &self.ser[v]
    }

    /// Every label mentioned anywhere, plus all globals.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out: BTreeSet<Label> = (0..self.k).collect();
        for v in 0..self.len() {
            out.extend(self.dem[v].iter().copied());
            out.extend(self.ser[v].iter().copied());
        }
        out
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            if out.len() > self.len() {
                break;
            }
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    pub fn depth(&self, v: NodeId) -> usize {
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            cur = p;
            d += 1;
        }
        d
    }

    pub fn height(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut h = 0;
        for v in self.preorder() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
                h = h.max(depth[v]);
            }
        }
        h
    }

    /// Largest demand set.
    pub fn max_demand(&self) -> usize {
        self.dem.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    /// Nodes of the subtree at `v`, in preorder.
    pub fn subtree(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    pub fn leaf_descendants(&self, v: NodeId) -> Vec<NodeId> {
        self.subtree(v).into_iter().filter(|&u| self.is_leaf(u)).collect()
    }

    /// For every node, the sorted labels served somewhere in its subtree.
    pub fn servable(&self) -> Vec<Vec<Label>> {
        let mut out: Vec<Vec<Label>> = vec![Vec::new(); self.len()];
        for &v in self.preorder().iter().rev() {
            let mut set: BTreeSet<Label> = self.ser[v].clone();
            for &c in &self.children[v] {
                set.extend(out[c].iter().copied());
            }
            out[v] = set.into_iter().collect();
        }
        out
    }

    /// Canonical text form: `lcst N`, one `node` line per id, `globals`.
    pub fn to_text(&self) -> String {
        let list = |s: &BTreeSet<Label>| {
            s.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        };
        let mut out = String::new();
        let _ = writeln!(out, "lcst {}", self.len());
        for v in 0..self.len() {
            let parent = self.parent[v].map_or("-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "node {v} {parent} {} dem:{} ser:{}",
                format_rational(&self.cost[v]),
                list(&self.dem[v]),
                list(&self.ser[v])
            );
        }
        out.push_str("globals");
        for g in 0..self.k {
            let _ = write!(out, " {g}");
        }
        out.push('\n');
        out
    }

    /// Parses the text form. Global labels are renumbered to `0..k` and the
    /// remaining labels to `k..`, both in increasing order.
    pub fn parse(text: &str) -> Result<Self, LcstError> {
        let mut n: Option<usize> = None;
        let mut rows: BTreeMap<NodeId, (Option<NodeId>, Rational, Vec<Label>, Vec<Label>)> =
            BTreeMap::new();
        let mut globals: Option<Vec<Label>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| LcstError::Parse { line: i + 1, msg: format!("{msg}: {line}") };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected an integer"));
            let labels = |s: &str, prefix: &str| -> Result<Vec<Label>, LcstError> {
                let body = s.strip_prefix(prefix).ok_or_else(|| bad("expected label list"))?;
                body.split(',').filter(|t| !t.is_empty()).map(num).collect()
            };
            match toks[0] {
                "lcst" if toks.len() == 2 && n.is_none() => n = Some(num(toks[1])?),
                "node" if toks.len() == 6 => {
                    let id = num(toks[1])?;
                    let parent = if toks[2] == "-" { None } else { Some(num(toks[2])?) };
                    let cost = parse_rational(toks[3]).ok_or_else(|| bad("bad cost"))?;
                    let dem = labels(toks[4], "dem:")?;
                    let ser = labels(toks[5], "ser:")?;
                    if rows.insert(id, (parent, cost, dem, ser)).is_some() {
                        return Err(bad("duplicate node"));
                    }
                }
                "globals" if globals.is_none() => {
                    globals = Some(toks[1..].iter().map(|s| num(s)).collect::<Result<_, _>>()?);
                }
                _ => return Err(bad("unrecognized line")),
            }
        }
        let n = n.ok_or(LcstError::Parse { line: 1, msg: "missing `lcst` header".into() })?;
        if rows.len() != n || rows.keys().next_back().is_some_and(|&m| m + 1 != n) {
            return Err(LcstError::Malformed(format!("expected nodes 0..{n}")));
        }
        let globals: BTreeSet<Label> = globals.unwrap_or_default().into_iter().collect();
        let mut all: BTreeSet<Label> = BTreeSet::new();
        for (_, _, d, s) in rows.values() {
            all.extend(d.iter().copied());
            all.extend(s.iter().copied());
        }
        let mut remap: BTreeMap<Label, Label> = BTreeMap::new();
        for &g in &globals {
            let next = remap.len();
            remap.insert(g, next);
        }
        for &l in &all {
            if !globals.contains(&l) {
                let next = remap.len();
                remap.insert(l, next);
            }
        }
        let mut parent = Vec::with_capacity(n);
        let mut cost = Vec::with_capacity(n);
        let mut dem = Vec::with_capacity(n);
        let mut ser = Vec::with_capacity(n);
        for (p, c, d, s) in rows.into_values() {
            parent.push(p);
            cost.push(c);
            dem.push(d.iter().map(|l| remap[l]).collect());
            ser.push(s.iter().map(|l| remap[l]).collect());
        }
        LcstInstance::new(parent, cost, dem, ser, globals.len())
    }
}

/// A root-containing subtree, given by its node set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LcstSolution {
    pub nodes: BTreeSet<NodeId>,
    pub cost: Rational,
}

impl LcstSolution {
    pub fn new(inst: &LcstInstance, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let cost = nodes.iter().filter(|&&v| v < inst.len()).map(|&v| inst.cost[v].clone()).sum();
        LcstSolution { nodes, cost }
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    /// Sorted node ids, one per line.
    pub fn to_text(&self) -> String {
        self.nodes.iter().map(|v| format!("{v}\n")).collect()
    }
}

fn check_structure(inst: &LcstInstance, sol: &LcstSolution) -> Result<(), LcstViolation> {
    if !sol.contains(inst.root) {
        return Err(LcstViolation::MissingRoot);
    }
    for &v in &sol.nodes {
        if v >= inst.len() {
            return Err(LcstViolation::UnknownNode(v));
        }
        if let Some(p) = inst.parent[v] {
            if !sol.contains(p) {
                return Err(LcstViolation::Disconnected(v));
            }
        }
    }
    Ok(())
}

/// Labels served inside the solution below each selected node.
fn served_within(inst: &LcstInstance, sol: &LcstSolution) -> BTreeMap<NodeId, BTreeSet<Label>> {
    let mut served: BTreeMap<NodeId, BTreeSet<Label>> = BTreeMap::new();
    for &v in sol.nodes.iter().rev() {
        // Children can have smaller ids than parents, so fold explicitly.
        served.entry(v).or_default();
    }
    let order: Vec<NodeId> = inst.preorder().into_iter().filter(|v| sol.contains(*v)).collect();
    for &v in order.iter().rev() {
        let mut set = inst.ser[v].clone();
        for &c in &inst.children[v] {
            if let Some(s) = served.get(&c) {
                set.extend(s.iter().copied());
            }
        }
        served.insert(v, set);
    }
    served
}

/// Every demand of every selected node is served by a selected descendant
/// (the node itself included).
pub fn validate_label_consistent(inst: &LcstInstance, sol: &LcstSolution) -> Result<(), LcstViolation> {
    check_structure(inst, sol)?;
    let served = served_within(inst, sol);
    for &u in &sol.nodes {
        if let Some(&l) = inst.dem[u].iter().find(|l| !served[&u].contains(l)) {
            return Err(LcstViolation::Unserved { node: u, label: l });
        }
    }
    Ok(())
}

/// Label consistency plus service of every global label; returns the cost.
pub fn validate_full(inst: &LcstInstance, sol: &LcstSolution) -> Result<Rational, LcstViolation> {
    validate_label_consistent(inst, sol)?;
    let served = served_within(inst, sol);
    let at_root = &served[&inst.root];
    if let Some(g) = (0..inst.k).find(|g| !at_root.contains(g)) {
        return Err(LcstViolation::GlobalUnserved(g));
    }
    Ok(sol.nodes.iter().map(|&v| inst.cost[v].clone()).sum())
}

/// An instance in normal form: demand sets pairwise disjoint and only on
/// internal nodes, exactly one service label per leaf (a root that is also
/// a leaf may have none), no service labels on internal nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedLcst {
    inst: LcstInstance,
    a: Vec<Option<Label>>,
}

impl std::ops::Deref for NormalizedLcst {
    type Target = LcstInstance;
    fn deref(&self) -> &LcstInstance {
        &self.inst
    }
}

impl NormalizedLcst {
    /// Wraps an instance that already is in normal form.
    pub fn from_normal(inst: LcstInstance) -> Result<Self, LcstError> {
        let mut seen = BTreeSet::new();
        let mut a = vec![None; inst.len()];
        for v in 0..inst.len() {
            for &l in &inst.dem[v] {
                if !seen.insert(l) {
                    return Err(LcstError::Malformed(format!("label {l} demanded twice")));
                }
            }
            if inst.is_leaf(v) {
                if !inst.dem[v].is_empty() && v != inst.root {
                    return Err(LcstError::Malformed(format!("leaf {v} has demands")));
                }
                match inst.ser[v].len() {
                    1 => a[v] = inst.ser[v].first().copied(),
                    0 if v == inst.root => {}
                    _ => return Err(LcstError::Malformed(format!("leaf {v} needs one service label"))),
                }
            } else if !inst.ser[v].is_empty() {
                return Err(LcstError::Malformed(format!("internal node {v} serves labels")));
            }
        }
        Ok(NormalizedLcst { inst, a })
    }

    pub fn instance(&self) -> &LcstInstance {
        &self.inst
    }

    /// The service label of leaf `v`.
    pub fn a(&self, v: NodeId) -> Option<Label> {
        self.a[v]
    }

    pub fn s(&self) -> usize {
        self.inst.max_demand()
    }

    /// The node that demands `label`, if any.
    pub fn demander(&self) -> BTreeMap<Label, NodeId> {
        let mut out = BTreeMap::new();
        for v in 0..self.len() {
            for &l in &self.inst.dem[v] {
                out.insert(l, v);
            }
        }
        out
    }

    /// Drops surplus serving leaves so every label is served by at most one
    /// selected leaf, keeping demanded labels served under their demander.
    pub fn canonicalize_service(&self, sol: &LcstSolution) -> LcstSolution {
        let demander = self.demander();
        let mut by_label: BTreeMap<Label, Vec<NodeId>> = BTreeMap::new();
        for &v in &sol.nodes {
            if self.is_leaf(v) {
                if let Some(l) = self.a[v] {
                    by_label.entry(l).or_default().push(v);
                }
            }
        }
        let mut drop = BTreeSet::new();
        for (l, leaves) in by_label {
            let keep = match demander.get(&l) {
                Some(&u) => leaves.iter().copied().find(|&w| self.is_ancestor(u, w)),
                None if self.is_global(l) => leaves.first().copied(),
                None => None,
            };
            drop.extend(leaves.into_iter().filter(|&w| Some(w) != keep && w != self.root));
        }
        LcstSolution::new(&self.inst, sol.nodes.iter().copied().filter(|v| !drop.contains(v)))
    }

    pub fn is_ancestor(&self, u: NodeId, w: NodeId) -> bool {
        let mut cur = Some(w);
        while let Some(c) = cur {
            if c == u {
                return true;
            }
            cur = self.inst.parent[c];
        }
        false
    }
}

/// Mutable working copy used by the normal-form passes.
struct Work {
    parent: Vec<Option<NodeId>>,
    children: Vec<BTreeSet<NodeId>>,
    cost: Vec<Rational>,
    dem: Vec<BTreeSet<Label>>,
    ser: Vec<BTreeSet<Label>>,
    alive: Vec<bool>,
    origin: Vec<NodeId>,
    root: NodeId,
}

impl Work {
    fn from(inst: &LcstInstance) -> Self {
        Work {
            parent: inst.parent.clone(),
            children: inst.children.iter().map(|c| c.iter().copied().collect()).collect(),
            cost: inst.cost.clone(),
            dem: inst.dem.clone(),
            ser: inst.ser.clone(),
            alive: vec![true; inst.len()],
            origin: (0..inst.len()).collect(),
            root: inst.root,
        }
    }

    fn is_leaf(&self, v: NodeId) -> bool {
        self.children[v].is_empty()
    }

    fn add_leaf(&mut self, parent: NodeId, label: Label) {
        let id = self.parent.len();
        self.parent.push(Some(parent));
        self.children.push(BTreeSet::new());
        self.cost.push(Rational::zero());
        self.dem.push(BTreeSet::new());
        self.ser.push(BTreeSet::from([label]));
        self.alive.push(true);
        self.origin.push(self.origin[parent]);
        self.children[parent].insert(id);
    }

    fn remove_subtree(&mut self, v: NodeId) {
        if let Some(p) = self.parent[v] {
            self.children[p].remove(&v);
        }
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            self.alive[u] = false;
            stack.extend(std::mem::take(&mut self.children[u]));
        }
    }

    /// Removes non-root leaves matching `dead` until none remain.
    fn sweep_leaves(&mut self, dead: impl Fn(&Work, NodeId) -> bool) {
        loop {
            let victims: Vec<NodeId> = (0..self.parent.len())
                .filter(|&v| self.alive[v] && v != self.root && self.is_leaf(v) && dead(self, v))
                .collect();
            if victims.is_empty() {
                return;
            }
            for v in victims {
                self.remove_subtree(v);
            }
        }
    }

    /// Compacts live nodes in id order; returns the instance and, per new
    /// node, the original node it stands for.
    fn finish(self, k: usize) -> (LcstInstance, Vec<NodeId>, Vec<NodeId>) {
        let live: Vec<NodeId> = (0..self.parent.len()).filter(|&v| self.alive[v]).collect();
        let index: BTreeMap<NodeId, NodeId> = live.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let parent = live.iter().map(|&v| self.parent[v].map(|p| index[&p])).collect();
        let cost = live.iter().map(|&v| self.cost[v].clone()).collect();
        let dem = live.iter().map(|&v| self.dem[v].clone()).collect();
        let ser = live.iter().map(|&v| self.ser[v].clone()).collect();
        let origin = live.iter().map(|&v| self.origin[v]).collect();
        let inst = LcstInstance::new(parent, cost, dem, ser, k).expect("passes preserve tree shape");
        (inst, origin, live)
    }
}

/// Result of [`normalize`]: the normal-form instance and a map from its
/// nodes back to the input's nodes (fresh leaves map to their host).
#[derive(Clone, Debug)]
pub struct Normalized {
    pub norm: NormalizedLcst,
    pub origin: Vec<NodeId>,
}

impl Normalized {
    /// Maps a solution of the normal form to one of the input instance.
    pub fn lift_solution(&self, original: &LcstInstance, sol: &LcstSolution) -> LcstSolution {
        LcstSolution::new(original, sol.nodes.iter().map(|&v| self.origin[v]))
    }
}

/// Brings an instance into normal form without changing its optimum.
///
/// 1. A local label demanded by several nodes gets one copy per demander;
///    every server of the label serves all copies.
/// 2. Leaf demands are resolved: self-served labels are dropped, leaves
///    with an unservable demand are removed (cascading upwards).
/// 3. Service labels move to fresh zero-cost leaves, one label each;
///    label-less leaves are removed.
///
/// Afterwards, same-label leaf siblings are reduced to the cheapest, and
/// leaves whose label is neither global nor demanded by an ancestor are
/// removed.
pub fn normalize(inst: &LcstInstance) -> Normalized {
    let k = inst.k;
    let mut w = Work::from(inst);

    // 1. One copy of a shared local label per demanding node.
    let mut demanders: BTreeMap<Label, Vec<NodeId>> = BTreeMap::new();
    for v in 0..inst.len() {
        for &l in &inst.dem[v] {
            demanders.entry(l).or_default().push(v);
        }
    }
    let mut next_label = inst.labels().last().map_or(k, |&m| m + 1).max(k);
    let mut copies: BTreeMap<Label, Vec<Label>> = BTreeMap::new();
    for (&l, us) in &demanders {
        if us.len() < 2 {
            continue;
        }
        let mut ls = vec![l];
        for &u in &us[1..] {
            w.dem[u].remove(&l);
            w.dem[u].insert(next_label);
            ls.push(next_label);
            next_label += 1;
        }
        copies.insert(l, ls);
    }
    for v in 0..inst.len() {
        let extra: Vec<Label> =
            w.ser[v].iter().filter_map(|l| copies.get(l)).flatten().copied().collect();
        w.ser[v].extend(extra);
    }

    // 2. Leaf demands.
    loop {
        let mut changed = false;
        for v in 0..w.parent.len() {
            if !w.alive[v] || !w.is_leaf(v) || w.dem[v].is_empty() {
                continue;
            }
            let served: Vec<Label> = w.dem[v].intersection(&w.ser[v]).copied().collect();
            for l in served {
                w.dem[v].remove(&l);
                changed = true;
            }
            if !w.dem[v].is_empty() && v != w.root {
                w.remove_subtree(v);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // 3. Services to fresh leaves.
    for v in 0..w.parent.len() {
        if !w.alive[v] {
            continue;
        }
        if !w.is_leaf(v) || w.ser[v].len() > 1 {
            let labels = std::mem::take(&mut w.ser[v]);
            for l in labels {
                w.add_leaf(v, l);
            }
        }
    }
    w.sweep_leaves(|w, v| w.ser[v].len() != 1 || !w.dem[v].is_empty());

    // Cheapest leaf per (parent, label).
    for v in 0..w.parent.len() {
        if !w.alive[v] {
            continue;
        }
        let mut best: BTreeMap<Label, NodeId> = BTreeMap::new();
        let mut drop = Vec::new();
        for &c in &w.children[v] {
            if !w.is_leaf(c) {
                continue;
            }
            let l = *w.ser[c].first().expect("leaves carry one label");
            match best.get(&l) {
                Some(&b) if w.cost[b] <= w.cost[c] => drop.push(c),
                Some(&b) => {
                    drop.push(b);
                    best.insert(l, c);
                }
                None => {
                    best.insert(l, c);
                }
            }
        }
        for c in drop {
            w.remove_subtree(c);
        }
    }

    // Irrelevant leaves.
    let relevant = |w: &Work, v: NodeId| {
        let Some(&l) = w.ser[v].first() else { return false };
        if l < k {
            return true;
        }
        let mut cur = w.parent[v];
        while let Some(u) = cur {
            if w.dem[u].contains(&l) {
                return true;
            }
            cur = w.parent[u];
        }
        false
    };
    w.sweep_leaves(|w, v| w.ser[v].len() != 1 || !w.dem[v].is_empty() || !relevant(w, v));

    let (inst, origin, _) = w.finish(k);
    let norm = NormalizedLcst::from_normal(inst).expect("normalization establishes normal form");
    Normalized { norm, origin }
}

/// Result of [`prune_useless`].
#[derive(Clone, Debug)]
pub struct Pruned {
    pub norm: NormalizedLcst,
    /// Per surviving node, its id before pruning.
    pub origin: Vec<NodeId>,
    pub feasible: bool,
}

impl Pruned {
    pub fn lift_solution(&self, before: &LcstInstance, sol: &LcstSolution) -> LcstSolution {
        LcstSolution::new(before, sol.nodes.iter().map(|&v| self.origin[v]))
    }
}

/// Repeatedly removes internal nodes with a demand that no leaf below them
/// serves, together with their subtrees, and leaves that lost their purpose.
/// `feasible` tells whether the rest still serves every global label.
pub fn prune_useless(inst: &NormalizedLcst) -> Pruned {
    let mut w = Work::from(&inst.inst);
    let mut root_useless = false;
    loop {
        let live = LiveView(&w);
        let servable = live.servable();
        let useless: Vec<NodeId> = (0..w.parent.len())
            .filter(|&v| w.alive[v] && w.dem[v].iter().any(|l| !servable[v].contains(l)))
            .collect();
        if useless.is_empty() {
            break;
        }
        for v in useless {
            if !w.alive[v] {
                continue;
            }
            if v == w.root {
                root_useless = true;
                continue;
            }
            w.remove_subtree(v);
        }
        w.sweep_leaves(|w, v| w.ser[v].len() != 1 || !w.dem[v].is_empty());
        if root_useless {
            break;
        }
    }
    let feasible = !root_useless && {
        let servable = LiveView(&w).servable();
        (0..inst.k).all(|g| servable[w.root].contains(&g))
    };
    let k = inst.k;
    let (pruned, _, live) = w.finish(k);
    let norm = NormalizedLcst::from_normal(pruned).expect("pruning keeps normal form");
    Pruned { norm, origin: live, feasible }
}

struct LiveView<'a>(&'a Work);

impl LiveView<'_> {
    fn servable(&self) -> Vec<BTreeSet<Label>> {
        let w = self.0;
        let mut out = vec![BTreeSet::new(); w.parent.len()];
        let mut order = Vec::new();
        let mut stack = vec![w.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(w.children[v].iter().copied());
        }
        for &v in order.iter().rev() {
            let mut set = w.ser[v].clone();
            for &c in &w.children[v] {
                set.extend(out[c].iter().copied());
            }
            out[v] = set;
        }
        out
    }
}

pub const BRUTE_FORCE_CAP: usize = 24;

/// Exhaustive minimum over all root-containing subtrees passing
/// [`validate_full`]; ties go to the lexicographically smallest node list.
pub fn brute_force_lcst(inst: &LcstInstance) -> Result<(Rational, LcstSolution), LcstError> {
    if inst.len() > BRUTE_FORCE_CAP {
        return Err(LcstError::CapExceeded { n: inst.len(), cap: BRUTE_FORCE_CAP });
    }
    let order = inst.preorder();
    let mut chosen = vec![false; inst.len()];
    let mut best: Option<(Rational, Vec<NodeId>)> = None;
    fn rec(
        inst: &LcstInstance,
        order: &[NodeId],
        idx: usize,
        chosen: &mut Vec<bool>,
        best: &mut Option<(Rational, Vec<NodeId>)>,
    ) {
        if idx == order.len() {
            let sol = LcstSolution::new(inst, (0..inst.len()).filter(|&v| chosen[v]));
            if let Ok(cost) = validate_full(inst, &sol) {
                let nodes: Vec<NodeId> = sol.nodes.into_iter().collect();
                let better = match best {
                    None => true,
                    Some((bc, bn)) => cost < *bc || (cost == *bc && nodes < *bn),
                };
                if better {
                    *best = Some((cost, nodes));
                }
            }
            return;
        }
        let v = order[idx];
        let allowed = inst.parent[v].map_or(true, |p| chosen[p]);
        if allowed {
            chosen[v] = true;
            rec(inst, order, idx + 1, chosen, best);
            chosen[v] = false;
        }
        if v != inst.root {
            rec(inst, order, idx + 1, chosen, best);
        }
    }
    rec(inst, &order, 0, &mut chosen, &mut best);
    let (opt, nodes) = best.ok_or(LcstError::Infeasible)?;
    Ok((opt.clone(), LcstSolution { nodes: nodes.into_iter().collect(), cost: opt }))
}

/// Exact optimum by dynamic programming over (node, labels still owed by
/// its subtree). Each owed label is handed to exactly one selected child;
/// children owing nothing are left out.
pub fn exact_lcst(inst: &LcstInstance) -> Result<(Rational, LcstSolution), LcstError> {
    let mut solver = ExactDp { inst, servable: inst.servable(), memo: HashMap::new() };
    let globals: Vec<Label> = (0..inst.k).collect();
    let opt = solver.solve(inst.root, &globals).ok_or(LcstError::Infeasible)?;
    let mut nodes = BTreeSet::new();
    let mut stack = vec![(inst.root, globals)];
    while let Some((u, owed)) = stack.pop() {
        nodes.insert(u);
        let (_, plan) = solver.memo[&(u, owed)].clone().expect("solved state");
        stack.extend(plan);
    }
    let sol = LcstSolution::new(inst, nodes);
    debug_assert_eq!(sol.cost, opt);
    Ok((opt, sol))
}

type Plan = Vec<(NodeId, Vec<Label>)>;

struct ExactDp<'a> {
    inst: &'a LcstInstance,
    servable: Vec<Vec<Label>>,
    memo: HashMap<(NodeId, Vec<Label>), Option<(Rational, Plan)>>,
}

impl ExactDp<'_> {
    fn solve(&mut self, u: NodeId, owed: &[Label]) -> Option<Rational> {
        let key = (u, owed.to_vec());
        if let Some(r) = self.memo.get(&key) {
            return r.as_ref().map(|(c, _)| c.clone());
        }
        let inst = self.inst;
        let needed: Vec<Label> = owed
            .iter()
            .chain(inst.dem[u].iter())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|l| !inst.ser[u].contains(l))
            .collect();
        let m = needed.len();
        let full = (1usize << m) - 1;
        // best[mask]: cheapest cover of `mask` by the children seen so far.
        let mut best: Vec<Option<(Rational, Plan)>> = vec![None; full + 1];
        best[0] = Some((Rational::zero(), Vec::new()));
        for &c in &inst.children[u] {
            let reach: usize = needed
                .iter()
                .enumerate()
                .filter(|(_, l)| self.servable[c].binary_search(l).is_ok())
                .fold(0, |acc, (i, _)| acc | 1 << i);
            if reach == 0 {
                continue;
            }
            let mut next = best.clone();
            let mut sub = reach;
            while sub > 0 {
                let labels: Vec<Label> = (0..m).filter(|i| sub >> i & 1 == 1).map(|i| needed[i]).collect();
                if let Some(cc) = self.solve(c, &labels) {
                    for mask in 0..=full {
                        if mask & sub != 0 {
                            continue;
                        }
                        let Some((base, plan)) = &best[mask] else { continue };
                        let total = base + &cc;
                        let target = mask | sub;
                        if next[target].as_ref().map_or(true, |(t, _)| total < *t) {
                            let mut p = plan.clone();
                            p.push((c, labels.clone()));
                            next[target] = Some((total, p));
                        }
                    }
                }
                sub = (sub - 1) & reach;
            }
            best = next;
        }
        let result = best[full].take().map(|(c, plan)| (c + &inst.cost[u], plan));
        let out = result.as_ref().map(|(c, _)| c.clone());
        self.memo.insert(key, result);
        out
    }
}
