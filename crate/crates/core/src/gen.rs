//! Seeded random instances for tests, benchmarks and property suites.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{DstInstance, Edge};
use crate::lcst::{normalize, prune_useless, validate_full, Label, LcstInstance, LcstSolution, NodeId, NormalizedLcst};
use crate::rational::int;

/// Random DST instance on `n` vertices, root 0, `k` terminals, at most `m`
/// edges, integer costs in `1..=max_cost`. A random arborescence is laid
/// down first so every terminal is reachable.
pub fn random_dst<R: Rng>(rng: &mut R, n: usize, m: usize, k: usize, max_cost: i64) -> DstInstance {
    assert!(n >= 2 && k < n && m >= n - 1);
    let mut order: Vec<usize> = (1..n).collect();
    order.shuffle(rng);
    let mut placed = vec![0usize];
    let mut edges = Vec::new();
    for &v in &order {
        let p = placed[rng.gen_range(0..placed.len())];
        edges.push(Edge::new(p, v, int(rng.gen_range(1..=max_cost))));
        placed.push(v);
    }
    let mut attempts = 0;
    while edges.len() < m && attempts < 20 * m {
        attempts += 1;
        let h = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        if h == t || t == 0 || edges.iter().any(|e| e.head == h && e.tail == t) {
            continue;
        }
        edges.push(Edge::new(h, t, int(rng.gen_range(1..=max_cost))));
    }
    let mut candidates: Vec<usize> = (1..n).collect();
    candidates.shuffle(rng);
    candidates.truncate(k);
    DstInstance::new(n, edges, 0, candidates).expect("generated instance is valid")
}

/// Random parent array of a rooted tree on `n` nodes, root 0, parents
/// drawn among earlier nodes (a random recursive tree), then relabelled by
/// a random permutation that keeps the root at 0.
pub fn random_parents<R: Rng>(rng: &mut R, n: usize) -> Vec<Option<usize>> {
    let mut perm: Vec<usize> = (1..n).collect();
    perm.shuffle(rng);
    let label = |i: usize| if i == 0 { 0 } else { perm[i - 1] };
    let mut parent = vec![None; n];
    for i in 1..n {
        // Mix of shallow and deep shapes.
        let p = if rng.gen_bool(0.5) { i - 1 } else { rng.gen_range(0..i) };
        parent[label(i)] = Some(label(p));
    }
    parent
}

/// Random parent array with every node at depth at most `max_height`.
pub fn random_shallow_parents<R: Rng>(rng: &mut R, n: usize, max_height: usize) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut depth = vec![0usize; n];
    for i in 1..n {
        let open: Vec<usize> = (0..i).filter(|&v| depth[v] < max_height).collect();
        let p = open[rng.gen_range(0..open.len())];
        parent[i] = Some(p);
        depth[i] = depth[p] + 1;
    }
    parent
}

/// Random LCST instance: `n` nodes of height at most `max_height`, `k`
/// globals and `locals` local labels. Internal nodes demand a local label
/// with probability 2/5; leaves serve one random label; a few internal
/// nodes serve one too. Not necessarily feasible or normal.
pub fn random_lcst<R: Rng>(rng: &mut R, n: usize, k: usize, locals: usize, max_height: usize) -> LcstInstance {
    let parent = random_shallow_parents(rng, n, max_height);
    let mut internal = vec![false; n];
    for p in parent.iter().flatten() {
        internal[*p] = true;
    }
    let labels = k + locals;
    let cost = (0..n).map(|_| int(rng.gen_range(0..=4))).collect();
    let mut dem = vec![BTreeSet::new(); n];
    let mut ser = vec![BTreeSet::new(); n];
    for v in 0..n {
        if internal[v] {
            if locals > 0 && rng.gen_bool(0.4) {
                dem[v].insert(k + rng.gen_range(0..locals));
            }
            if labels > 0 && rng.gen_bool(0.15) {
                ser[v].insert(rng.gen_range(0..labels));
            }
        } else if labels > 0 {
            ser[v].insert(rng.gen_range(0..labels));
        }
    }
    LcstInstance::new(parent, cost, dem, ser, k).expect("generated instance is valid")
}

/// A random label-consistent solution covering every global label, or
/// `None` when the random descent gets stuck. Each owed label is routed to
/// a random child able to serve it; other children join with probability
/// 1/3. Surplus serving leaves are dropped.
pub fn random_lcst_solution<R: Rng>(rng: &mut R, inst: &NormalizedLcst) -> Option<LcstSolution> {
    let servable = inst.servable();
    let mut nodes = BTreeSet::new();
    let mut stack = vec![(inst.root(), (0..inst.k()).collect::<BTreeSet<Label>>())];
    while let Some((u, mut owed)) = stack.pop() {
        nodes.insert(u);
        owed.extend(inst.dem(u).iter().copied());
        if inst.is_leaf(u) {
            if owed.iter().any(|&l| Some(l) != inst.a(u)) {
                return None;
            }
            continue;
        }
        let mut assigned: BTreeMap<NodeId, BTreeSet<Label>> = BTreeMap::new();
        for l in owed {
            let able: Vec<NodeId> =
                inst.children(u).iter().copied().filter(|&v| servable[v].binary_search(&l).is_ok()).collect();
            if able.is_empty() {
                return None;
            }
            assigned.entry(able[rng.gen_range(0..able.len())]).or_default().insert(l);
        }
        for &v in inst.children(u) {
            match assigned.remove(&v) {
                Some(ls) => stack.push((v, ls)),
                None if rng.gen_bool(1.0 / 3.0) => stack.push((v, BTreeSet::new())),
                None => {}
            }
        }
    }
    let sol = inst.canonicalize_service(&LcstSolution::new(inst, nodes));
    validate_full(inst, &sol).ok().map(|_| sol)
}

/// A random feasible normalized instance (after pruning), retrying until
/// one is found.
pub fn random_feasible_lcst<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    locals: usize,
    max_height: usize,
) -> NormalizedLcst {
    loop {
        let raw = random_lcst(rng, n, k, locals, max_height);
        let pruned = prune_useless(&normalize(&raw).norm);
        if pruned.feasible {
            return pruned.norm;
        }
    }
}
