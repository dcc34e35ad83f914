//! Exact optimum for small DST instances.
//!
//! Two independent solvers: a directed Dreyfus-Wagner subset DP over
//! shortest-path distances, and exhaustive enumeration of edge subsets.
//! When the instance is small enough for both, they must agree.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use thiserror::Error;

use crate::graph::{
    prune_to_arborescence, DstInstance, GraphError, MetricClosure, SteinerSolution, Vertex,
};
use crate::rational::Rational;

pub const DEFAULT_TERMINAL_CAP: usize = 12;
/// Enumeration is used as a cross-check up to these sizes.
pub const ENUM_MAX_N: usize = 6;
pub const ENUM_MAX_M: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("terminal cap exceeded: k = {k} > {cap}")]
    CapExceeded { k: usize, cap: usize },
    #[error("instance infeasible: {0}")]
    Infeasible(#[from] GraphError),
    #[error("edge enumeration needs m <= {max}, got {m}")]
    TooManyEdges { m: usize, max: usize },
    #[error("oracles disagree: subset DP {dp}, enumeration {enumerated}")]
    Disagreement { dp: Rational, enumerated: Rational },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub opt: Rational,
    pub tree: SteinerSolution,
}

/// Minimum-cost Steiner arborescence.
///
/// Uses the subset DP; on instances with `n <= 6` and `m <= 12` the
/// enumeration oracle is run as well, must agree, and supplies the tree
/// (the lexicographically smallest optimal edge list).
pub fn exact_opt(inst: &DstInstance) -> Result<OracleResult, OracleError> {
    exact_opt_with_cap(inst, DEFAULT_TERMINAL_CAP)
}

pub fn exact_opt_with_cap(inst: &DstInstance, cap: usize) -> Result<OracleResult, OracleError> {
    let dp = subset_dp(inst, cap)?;
    if inst.n() <= ENUM_MAX_N && inst.m() <= ENUM_MAX_M {
        let brute = enumerate_opt(inst)?;
        if brute.opt != dp.opt {
            return Err(OracleError::Disagreement { dp: dp.opt, enumerated: brute.opt });
        }
        return Ok(brute);
    }
    Ok(dp)
}

/// Directed Dreyfus-Wagner: `best[S][v]` is the cheapest arborescence rooted
/// at `v` reaching terminal subset `S`.
pub fn subset_dp(inst: &DstInstance, cap: usize) -> Result<OracleResult, OracleError> {
    let k = inst.k();
    if k > cap {
        return Err(OracleError::CapExceeded { k, cap });
    }
    let mc = MetricClosure::compute(inst);
    for &t in inst.terminals() {
        if mc.dist(inst.root(), t).is_none() {
            return Err(GraphError::Unreachable(t).into());
        }
    }
    if k == 0 {
        return Ok(OracleResult {
            opt: Rational::zero(),
            tree: SteinerSolution::from_edges(inst, [])?,
        });
    }

    let n = inst.n();
    let full = (1usize << k) - 1;
    // best[S][v], and for merges the chosen (split A, meeting vertex u).
    let mut best: Vec<Vec<Option<Rational>>> = vec![vec![None; n]; full + 1];
    let mut via: Vec<Vec<Option<(usize, Vertex)>>> = vec![vec![None; n]; full + 1];
    let mut merge: Vec<Vec<Option<(Rational, usize)>>> = vec![vec![None; n]; full + 1];

    for (i, &t) in inst.terminals().iter().enumerate() {
        for v in 0..n {
            best[1 << i][v] = mc.dist(v, t).cloned();
            via[1 << i][v] = Some((0, t));
        }
    }
    for set in 1..=full {
        if set.count_ones() < 2 {
            continue;
        }
        let low = set & set.wrapping_neg();
        for u in 0..n {
            // Enumerate proper subsets containing the lowest bit.
            let mut sub = (set - 1) & set;
            let mut cur: Option<(Rational, usize)> = None;
            while sub > 0 {
                if sub & low != 0 {
                    if let (Some(a), Some(b)) = (&best[sub][u], &best[set ^ sub][u]) {
                        let c = a + b;
                        if cur.as_ref().map_or(true, |(bc, _)| c < *bc) {
                            cur = Some((c, sub));
                        }
                    }
                }
                sub = (sub - 1) & set;
            }
            merge[set][u] = cur;
        }
        for v in 0..n {
            let mut cur: Option<(Rational, Vertex)> = None;
            for u in 0..n {
                let (Some(d), Some((m, _))) = (mc.dist(v, u), &merge[set][u]) else { continue };
                let c = d + m;
                if cur.as_ref().map_or(true, |(bc, _)| c < *bc) {
                    cur = Some((c, u));
                }
            }
            if let Some((c, u)) = cur {
                best[set][v] = Some(c);
                via[set][v] = Some((merge[set][u].as_ref().map(|m| m.1).unwrap_or(0), u));
            }
        }
    }

    let opt = best[full][inst.root()].clone().expect("all terminals reachable");
    // Recover: a stack of (set, v) states.
    let mut edges = BTreeSet::new();
    let mut stack = vec![(full, inst.root())];
    while let Some((set, v)) = stack.pop() {
        let (split, u) = via[set][v].expect("state was reached");
        let path = mc.path(v, u).expect("finite distance");
        for w in path.windows(2) {
            edges.insert((w[0], w[1]));
        }
        if set.count_ones() >= 2 {
            stack.push((split, u));
            stack.push((set ^ split, u));
        }
    }
    let tree = prune_to_arborescence(inst, &SteinerSolution::from_edges(inst, edges)?)?;
    debug_assert_eq!(tree.cost, opt);
    Ok(OracleResult { opt, tree })
}

/// Exhaustive search over edge subsets, keeping root arborescences that
/// reach every terminal. Ties go to the lexicographically smallest sorted
/// edge list.
pub fn enumerate_opt(inst: &DstInstance) -> Result<OracleResult, OracleError> {
    const MAX_M: usize = 20;
    let m = inst.m();
    if m > MAX_M {
        return Err(OracleError::TooManyEdges { m, max: MAX_M });
    }
    let edges = inst.edges();
    let mut best: Option<(Rational, Vec<(Vertex, Vertex)>)> = None;
    for mask in 0u32..(1u32 << m) {
        let chosen: Vec<(Vertex, Vertex)> =
            (0..m).filter(|i| mask >> i & 1 == 1).map(|i| edges[i].key()).collect();
        if !is_spanning_arborescence(inst, &chosen) {
            continue;
        }
        let cost: Rational = (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| edges[i].cost.clone())
            .sum();
        let better = match &best {
            None => true,
            Some((bc, be)) => cost < *bc || (cost == *bc && chosen < *be),
        };
        if better {
            best = Some((cost, chosen));
        }
    }
    let Some((opt, chosen)) = best else {
        let t = inst
            .terminals()
            .iter()
            .copied()
            .find(|&t| MetricClosure::compute(inst).dist(inst.root(), t).is_none())
            .unwrap_or(inst.root());
        return Err(GraphError::Unreachable(t).into());
    };
    Ok(OracleResult { opt, tree: SteinerSolution::from_edges(inst, chosen)? })
}

/// Out-arborescence rooted at the instance root (possibly empty) that
/// reaches every terminal.
fn is_spanning_arborescence(inst: &DstInstance, edges: &[(Vertex, Vertex)]) -> bool {
    let mut parent: BTreeMap<Vertex, Vertex> = BTreeMap::new();
    for &(h, t) in edges {
        if t == inst.root() || parent.insert(t, h).is_some() {
            return false;
        }
    }
    // Every vertex with a parent must reach the root by parent links.
    for &(_, t) in edges {
        let mut cur = t;
        let mut steps = 0;
        while let Some(&p) = parent.get(&cur) {
            cur = p;
            steps += 1;
            if steps > edges.len() {
                return false;
            }
        }
        if cur != inst.root() {
            return false;
        }
    }
    inst.terminals().iter().all(|t| parent.contains_key(t))
}

/// An optimum tree on the metric closure in which every Steiner vertex
/// other than the root has at least two children. Chains through
/// single-child Steiner vertices are shortcut by closure edges.
pub fn canonical_optimum_tree(closed: &DstInstance) -> Result<SteinerSolution, OracleError> {
    let base = exact_opt(closed)?;
    let mut parent: BTreeMap<Vertex, Vertex> = base.tree.edges.iter().map(|&(h, t)| (t, h)).collect();
    loop {
        let mut children: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for (&t, &h) in &parent {
            children.entry(h).or_default().push(t);
        }
        let is_steiner = |v: Vertex| v != closed.root() && !closed.is_terminal(v);
        // Steiner leaves cost nothing in an optimum; drop them.
        let leaf = parent.keys().copied().find(|&v| is_steiner(v) && !children.contains_key(&v));
        if let Some(v) = leaf {
            parent.remove(&v);
            continue;
        }
        let chain = children
            .iter()
            .find(|(&v, ch)| is_steiner(v) && ch.len() == 1)
            .map(|(&v, ch)| (v, ch[0]));
        let Some((v, w)) = chain else { break };
        let p = parent[&v];
        parent.remove(&v);
        parent.insert(w, p);
    }
    let tree = SteinerSolution::from_edges(closed, parent.iter().map(|(&t, &h)| (h, t)))?;
    debug_assert!(tree.cost <= base.opt);
    Ok(tree)
}
