//! Round-and-condition rounding of lifted LCST points.
//!
//! The process walks the tree top-down. At a selected internal node it
//! samples, for every label it owes, the child responsible for it (and
//! conditions on that choice); then every child is kept with its current
//! probability and explored on the point conditioned on it. Children see
//! the point left after all label samples at their parent, not each
//! other's conditionings.
//!
//! Randomness: ChaCha8 seeded with the run seed, stream selected by run
//! index. Each decision consumes one `u64`, read as the dyadic rational
//! `u / 2^64` and compared exactly with the probability at hand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lcst::{validate_label_consistent, Label, LcstSolution, LcstViolation, NodeId, NormalizedLcst};
use crate::lp::{DistributionBacked, Event, LiftedSolution, LpError};
use crate::rational::{format_rational, Rational};

pub const DEFAULT_RETRY_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoundingError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("sampling mass for label {label} at node {node} is {mass}, not 1")]
    SamplingMass { node: NodeId, label: Label, mass: String },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("output is not label-consistent: {0}")]
    Inconsistent(#[from] LcstViolation),
    #[error("retry cap exhausted after {batches} batches; uncovered labels {uncovered:?}")]
    RetryCapExhausted { batches: usize, uncovered: Vec<Label> },
}

/// One random decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    /// Child `child` of `node` is made responsible for `label`.
    Sample { node: NodeId, label: Label, child: NodeId },
    /// Child `child` of `node` is kept (`true`) or dropped.
    Coin { node: NodeId, child: NodeId, kept: bool },
}

impl Decision {
    pub fn to_line(&self) -> String {
        match self {
            Decision::Sample { node, label, child } => format!("sample {node} {label} {child}"),
            Decision::Coin { node, child, kept } => format!("coin {node} {child} {}", u8::from(*kept)),
        }
    }
}

/// The next decision with its outcome probabilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Choice {
    Sample { node: NodeId, label: Label, options: Vec<(NodeId, Rational)> },
    Coin { node: NodeId, child: NodeId, p: Rational },
}

impl Choice {
    /// Outcome probabilities; for coins `[kept, dropped]`.
    pub fn probabilities(&self) -> Vec<Rational> {
        match self {
            Choice::Sample { options, .. } => options.iter().map(|(_, p)| p.clone()).collect(),
            Choice::Coin { p, .. } => vec![p.clone(), Rational::one() - p],
        }
    }

    /// Outcome index for a uniform draw `r` in `[0, 1)`.
    pub fn pick(&self, r: &Rational) -> usize {
        let mut acc = Rational::zero();
        let probs = self.probabilities();
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if *r < acc {
                return i;
            }
        }
        // Only reachable when trailing outcomes have probability zero.
        probs.iter().rposition(|p| p.is_positive()).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
struct Frame<X> {
    node: NodeId,
    labels: Vec<Label>,
    next_label: usize,
    owed: BTreeMap<NodeId, BTreeSet<Label>>,
    next_child: usize,
    x: X,
}

/// The rounding process as an explicit state machine.
#[derive(Clone, Debug)]
pub struct RoundingState<X> {
    frames: Vec<Frame<X>>,
    selected: BTreeSet<NodeId>,
    trace: Vec<Decision>,
}

impl<X: LiftedSolution> RoundingState<X> {
    /// Starts at the root owing its demands and every global label.
    pub fn start(inst: &NormalizedLcst, x: X) -> Result<Self, RoundingError> {
        let root = inst.root();
        if !x.query_one(Event::Node(root))?.is_one() {
            return Err(RoundingError::Precondition(format!("x[{root}] != 1")));
        }
        let mut labels: BTreeSet<Label> = inst.dem(root).clone();
        labels.extend(0..inst.k());
        for &l in &labels {
            if !x.query_one(Event::Label(root, l))?.is_one() {
                return Err(RoundingError::Precondition(format!("x[{root},{l}] != 1")));
            }
        }
        let mut s = RoundingState { frames: vec![], selected: BTreeSet::new(), trace: vec![] };
        s.enter(inst, root, labels, x);
        Ok(s)
    }

    fn enter(&mut self, inst: &NormalizedLcst, node: NodeId, labels: BTreeSet<Label>, x: X) {
        self.selected.insert(node);
        if inst.is_leaf(node) {
            return;
        }
        self.frames.push(Frame {
            node,
            labels: labels.into_iter().collect(),
            next_label: 0,
            owed: BTreeMap::new(),
            next_child: 0,
            x,
        });
    }

    fn settle(&mut self, inst: &NormalizedLcst) {
        while let Some(f) = self.frames.last() {
            if f.next_label < f.labels.len() || f.next_child < inst.children(f.node).len() {
                return;
            }
            self.frames.pop();
        }
    }

    /// The point the next decision is made on.
    pub fn current(&self) -> Option<&X> {
        self.frames.last().map(|f| &f.x)
    }

    /// The pending decision, or `None` when the run is over.
    pub fn next_choice(&self, inst: &NormalizedLcst) -> Result<Option<Choice>, RoundingError> {
        let Some(f) = self.frames.last() else { return Ok(None) };
        if f.next_label < f.labels.len() {
            let label = f.labels[f.next_label];
            let mut options = Vec::new();
            let mut mass = Rational::zero();
            for &v in inst.children(f.node) {
                let p = f.x.query_one(Event::Label(v, label))?;
                mass += &p;
                options.push((v, p));
            }
            if !mass.is_one() {
                return Err(RoundingError::SamplingMass { node: f.node, label, mass: format_rational(&mass) });
            }
            return Ok(Some(Choice::Sample { node: f.node, label, options }));
        }
        let child = inst.children(f.node)[f.next_child];
        let p = f.x.query_one(Event::Node(child))?;
        Ok(Some(Choice::Coin { node: f.node, child, p }))
    }

    /// Applies outcome `k` of `choice` (which must be the pending one).
    pub fn apply(&mut self, inst: &NormalizedLcst, choice: &Choice, k: usize) -> Result<(), RoundingError> {
        match choice {
            Choice::Sample { node, label, options } => {
                let child = options[k].0;
                let f = self.frames.last_mut().expect("pending sample");
                f.x = f.x.condition(Event::Label(child, *label))?;
                f.owed.entry(child).or_default().insert(*label);
                f.next_label += 1;
                self.trace.push(Decision::Sample { node: *node, label: *label, child });
            }
            Choice::Coin { node, child, .. } => {
                let kept = k == 0;
                let f = self.frames.last_mut().expect("pending coin");
                f.next_child += 1;
                self.trace.push(Decision::Coin { node: *node, child: *child, kept });
                if kept {
                    let x = f.x.condition(Event::Node(*child))?;
                    let mut labels = f.owed.get(child).cloned().unwrap_or_default();
                    labels.extend(inst.dem(*child).iter().copied());
                    self.enter(inst, *child, labels, x);
                }
            }
        }
        self.settle(inst);
        Ok(())
    }

    pub fn selected(&self) -> &BTreeSet<NodeId> {
        &self.selected
    }

    pub fn trace(&self) -> &[Decision] {
        &self.trace
    }
}

/// A deterministic generator for `(seed, run index)`.
pub fn rng_for(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// `u / 2^64` for the next `u64` of `rng`.
pub fn uniform_dyadic(rng: &mut impl RngCore) -> Rational {
    Rational::new(BigInt::from(rng.next_u64()), BigInt::one() << 64)
}

/// A finished run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundingRun {
    pub seed: u64,
    pub run: u64,
    pub trace: Vec<Decision>,
    pub solution: LcstSolution,
}

impl RoundingRun {
    /// Trace export, one decision per line.
    pub fn trace_text(&self) -> String {
        let mut out = format!("seed {} run {}\n", self.seed, self.run);
        for d in &self.trace {
            let _ = writeln!(out, "{}", d.to_line());
        }
        out
    }
}

fn run_with<X: LiftedSolution>(inst: &NormalizedLcst, x: X, seed: u64, run: u64) -> Result<RoundingRun, RoundingError> {
    let mut rng = rng_for(seed, run);
    let mut state = RoundingState::start(inst, x)?;
    while let Some(choice) = state.next_choice(inst)? {
        let r = uniform_dyadic(&mut rng);
        let k = choice.pick(&r);
        state.apply(inst, &choice, k)?;
    }
    let solution = LcstSolution::new(inst, state.selected.iter().copied());
    validate_label_consistent(inst, &solution)?;
    Ok(RoundingRun { seed, run, trace: state.trace, solution })
}

/// One rounding run. For points with finitely many rounds the rounds must
/// cover the conditioning depth.
pub fn round_once<X: LiftedSolution>(inst: &NormalizedLcst, x: X, seed: u64) -> Result<RoundingRun, RoundingError> {
    check_rounds(inst, &x)?;
    run_with(inst, x, seed, 0)
}

fn check_rounds<X: LiftedSolution>(inst: &NormalizedLcst, x: &X) -> Result<(), RoundingError> {
    if let Some(r) = x.rounds() {
        let h = inst.height();
        let need = crate::lp::required_rounds(inst.s(), h).max(h + 1);
        if r < need {
            return Err(RoundingError::Precondition(format!("{r} rounds available, {need} required")));
        }
    }
    Ok(())
}

/// `ceil(4 (h+1) ln(max(2, 2k)))`.
pub fn default_reps(h: usize, k: usize) -> usize {
    let v = 4.0 * (h as f64 + 1.0) * ((2 * k).max(2) as f64).ln();
    v.ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOutcome {
    pub solution: LcstSolution,
    pub reps: usize,
    pub batches: usize,
}

/// Repeats rounding `reps` times and takes the union; retries the whole
/// batch until every global label is served, at most `retry_cap` times.
pub fn solve_lcst<X: LiftedSolution>(
    inst: &NormalizedLcst,
    factory: impl Fn() -> X,
    seed: u64,
    reps: Option<usize>,
    retry_cap: usize,
) -> Result<SolveOutcome, RoundingError> {
    let k = inst.k();
    let reps = if k == 0 { 1 } else { reps.unwrap_or_else(|| default_reps(inst.height(), k)).max(1) };
    check_rounds(inst, &factory())?;
    let mut run = 0u64;
    let mut uncovered = Vec::new();
    for batch in 1..=retry_cap.max(1) {
        let mut nodes = BTreeSet::new();
        for _ in 0..reps {
            nodes.extend(run_with(inst, factory(), seed, run)?.solution.nodes);
            run += 1;
        }
        let served: BTreeSet<Label> =
            nodes.iter().filter(|&&v| inst.is_leaf(v)).filter_map(|&v| inst.a(v)).collect();
        uncovered = (0..k).filter(|l| !served.contains(l)).collect();
        if uncovered.is_empty() {
            let solution = LcstSolution::new(inst, nodes);
            validate_label_consistent(inst, &solution)?;
            return Ok(SolveOutcome { solution, reps, batches: batch });
        }
    }
    Err(RoundingError::RetryCapExhausted { batches: retry_cap.max(1), uncovered })
}

/// Wilson score interval for `hits` successes out of `n` at normal
/// quantile `z`.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (all, none) = (hits == n, hits == 0);
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The bounds at 0 and n are exact; floating point misses them.
    let lo = if none { 0.0 } else { (center - half).max(0.0) };
    let hi = if all { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489;

/// Per-label statistics of `t_l`, the number of selected leaves serving `l`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelStats {
    pub trials: u64,
    pub covered: u64,
    pub sum_t: u64,
    pub sum_t2: u64,
}

impl LabelStats {
    pub fn mean_t(&self) -> f64 {
        self.sum_t as f64 / self.trials.max(1) as f64
    }

    /// `E[t | t >= 1]`.
    pub fn cond_mean_t(&self) -> f64 {
        if self.covered == 0 {
            0.0
        } else {
            self.sum_t as f64 / self.covered as f64
        }
    }

    /// Half-width of a normal confidence interval for the mean of `t`.
    pub fn mean_margin(&self, z: f64) -> f64 {
        let n = self.trials.max(1) as f64;
        let mean = self.mean_t();
        let var = (self.sum_t2 as f64 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        z * (var / n).sqrt()
    }

    /// Half-width for `E[t | t >= 1]` over the covered trials.
    pub fn cond_mean_margin(&self, z: f64) -> f64 {
        let n = self.covered.max(1) as f64;
        let mean = self.cond_mean_t();
        let var = (self.sum_t2 as f64 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        z * (var / n).sqrt()
    }

    pub fn coverage_interval(&self, z: f64) -> (f64, f64) {
        wilson(self.covered, self.trials, z)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoverageStats {
    pub trials: u64,
    /// How often each node was selected.
    pub node_hits: Vec<u64>,
    pub labels: BTreeMap<Label, LabelStats>,
    pub total_cost: Rational,
}

impl CoverageStats {
    fn merge(&mut self, other: CoverageStats) {
        self.trials += other.trials;
        if self.node_hits.len() < other.node_hits.len() {
            self.node_hits.resize(other.node_hits.len(), 0);
        }
        for (a, b) in self.node_hits.iter_mut().zip(other.node_hits) {
            *a += b;
        }
        for (l, s) in other.labels {
            let e = self.labels.entry(l).or_default();
            e.trials += s.trials;
            e.covered += s.covered;
            e.sum_t += s.sum_t;
            e.sum_t2 += s.sum_t2;
        }
        self.total_cost += other.total_cost;
    }

    pub fn node_interval(&self, v: NodeId, z: f64) -> (f64, f64) {
        wilson(self.node_hits[v], self.trials, z)
    }

    /// CSV with columns `label,trials,covered,mean_t,cond_mean_t,wilson_lo,wilson_hi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,trials,covered,mean_t,cond_mean_t,wilson_lo,wilson_hi\n");
        for (l, s) in &self.labels {
            let (lo, hi) = s.coverage_interval(Z99);
            let _ = writeln!(
                out,
                "{l},{},{},{:.6},{:.6},{:.6},{:.6}",
                s.trials,
                s.covered,
                s.mean_t(),
                s.cond_mean_t(),
                lo,
                hi
            );
        }
        out
    }
}

/// Runs `trials` independent roundings (run `i` uses stream `i` of
/// `seed`) on `threads` threads and aggregates node marginals and `t_l`
/// for every global label.
pub fn estimate_marginals<X: LiftedSolution + Send + Sync>(
    inst: &NormalizedLcst,
    factory: impl Fn() -> X + Sync,
    trials: u64,
    seed: u64,
    threads: usize,
) -> Result<CoverageStats, RoundingError> {
    let threads = threads.max(1) as u64;
    let chunk = trials.div_ceil(threads);
    let one = |lo: u64, hi: u64| -> Result<CoverageStats, RoundingError> {
        let mut stats = CoverageStats { node_hits: vec![0; inst.len()], ..Default::default() };
        for run in lo..hi {
            let r = run_with(inst, factory(), seed, run)?;
            stats.trials += 1;
            stats.total_cost += &r.solution.cost;
            let mut t: BTreeMap<Label, u64> = (0..inst.k()).map(|l| (l, 0)).collect();
            for &v in &r.solution.nodes {
                stats.node_hits[v] += 1;
                if inst.is_leaf(v) {
                    if let Some(c) = inst.a(v).and_then(|l| t.get_mut(&l)) {
                        *c += 1;
                    }
                }
            }
            for (l, c) in t {
                let e = stats.labels.entry(l).or_default();
                e.trials += 1;
                e.covered += u64::from(c >= 1);
                e.sum_t += c;
                e.sum_t2 += c * c;
            }
        }
        Ok(stats)
    };
    let parts: Vec<Result<CoverageStats, RoundingError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|i| {
                let (lo, hi) = ((i * chunk).min(trials), ((i + 1) * chunk).min(trials));
                let one = &one;
                scope.spawn(move || one(lo, hi))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut total = CoverageStats { node_hits: vec![0; inst.len()], ..Default::default() };
    for p in parts {
        total.merge(p?);
    }
    Ok(total)
}

/// A failed one-step identity: at the given trace prefix, the expected
/// next value of `event` differs from its current value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MartingaleFailure {
    pub prefix: Vec<Decision>,
    pub event: Event,
    pub current: Rational,
    pub expected_next: Rational,
}

/// Exhaustively checks, for every trace prefix of at most `depth`
/// decisions and every event in `events`, that the expectation of the
/// event's probability after the next decision equals its current value.
/// After a sample the next point is the one conditioned on the sampled
/// event; after a coin it is the point conditioned on the child being kept
/// or dropped. Returns the number of (prefix, event) pairs checked.
pub fn check_martingale(
    inst: &NormalizedLcst,
    x: &DistributionBacked,
    events: &[Event],
    depth: usize,
) -> Result<usize, Box<MartingaleFailure>> {
    let state = RoundingState::start(inst, x.clone()).expect("precondition holds for the fixture");
    let mut checked = 0;
    explore(inst, &state, events, depth, &mut checked)?;
    Ok(checked)
}

fn explore(
    inst: &NormalizedLcst,
    state: &RoundingState<DistributionBacked>,
    events: &[Event],
    depth: usize,
    checked: &mut usize,
) -> Result<(), Box<MartingaleFailure>> {
    if depth == 0 {
        return Ok(());
    }
    let Some(choice) = state.next_choice(inst).expect("valid point") else { return Ok(()) };
    let x = state.current().expect("pending decision has a frame");
    let probs = choice.probabilities();
    let branches: Vec<Option<DistributionBacked>> = match &choice {
        Choice::Sample { label, options, .. } => options
            .iter()
            .map(|(v, p)| if p.is_positive() { x.condition(Event::Label(*v, *label)).ok() } else { None })
            .collect(),
        Choice::Coin { child, p, .. } => vec![
            if p.is_positive() { x.condition(Event::Node(*child)).ok() } else { None },
            if p.is_one() { None } else { x.condition_not(Event::Node(*child)).ok() },
        ],
    };
    for &e in events {
        let current = x.query_one(e).expect("distribution queries succeed");
        let mut expected = Rational::zero();
        for (p, b) in probs.iter().zip(&branches) {
            if let Some(b) = b {
                expected += p * b.query_one(e).expect("distribution queries succeed");
            }
        }
        *checked += 1;
        if expected != current {
            return Err(Box::new(MartingaleFailure {
                prefix: state.trace().to_vec(),
                event: e,
                current,
                expected_next: expected,
            }));
        }
    }
    for (k, p) in probs.iter().enumerate() {
        if p.is_positive() {
            let mut next = state.clone();
            next.apply(inst, &choice, k).expect("positive-probability outcome applies");
            explore(inst, &next, events, depth - 1, checked)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcst::LcstInstance;
    use crate::lp::build_base_lp;
    use crate::rational::{int, ratio};

    /// Root with two leaves, each serving global 0.
    fn fork() -> NormalizedLcst {
        let inst = LcstInstance::new(
            vec![None, Some(0), Some(0)],
            vec![int(0), int(1), int(2)],
            vec![BTreeSet::new(); 3],
            vec![BTreeSet::new(), BTreeSet::from([0]), BTreeSet::from([0])],
            1,
        )
        .unwrap();
        NormalizedLcst::from_normal(inst).unwrap()
    }

    fn half_half(n: &NormalizedLcst) -> DistributionBacked {
        let base = build_base_lp(n);
        DistributionBacked::from_solutions(
            n,
            &base,
            vec![(LcstSolution::new(n, [0, 1]), ratio(1, 2)), (LcstSolution::new(n, [0, 2]), ratio(1, 2))],
        )
        .unwrap()
    }

    #[test]
    fn point_mass_is_reproduced() {
        let n = fork();
        let base = build_base_lp(&n);
        let x = DistributionBacked::from_solutions(&n, &base, vec![(LcstSolution::new(&n, [0, 2]), int(1))]).unwrap();
        for seed in 0..20 {
            assert_eq!(round_once(&n, x.clone(), seed).unwrap().solution.nodes, BTreeSet::from([0, 2]));
        }
        let out = solve_lcst(&n, || x.clone(), 1, None, DEFAULT_RETRY_CAP).unwrap();
        assert_eq!(out.batches, 1);
    }

    #[test]
    fn replay_is_deterministic() {
        let n = fork();
        let x = half_half(&n);
        let a = round_once(&n, x.clone(), 99).unwrap();
        let b = round_once(&n, x.clone(), 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace_text(), b.trace_text());
        assert!(a.trace_text().lines().nth(1).unwrap().starts_with("sample 0 0 "));
    }

    #[test]
    fn two_atoms_split_evenly() {
        let n = fork();
        let x = half_half(&n);
        let stats = estimate_marginals(&n, || x.clone(), 2000, 5, 2).unwrap();
        let (lo, hi) = stats.node_interval(1, Z99);
        assert!(lo <= 0.5 && 0.5 <= hi, "{lo} {hi}");
        assert_eq!(stats.node_hits[1] + stats.node_hits[2], 2000);
        assert!(stats.to_csv().starts_with("label,trials,covered,mean_t,cond_mean_t,wilson_lo,wilson_hi\n0,2000,2000,"));
    }

    #[test]
    fn martingale_on_fork() {
        let n = fork();
        let x = half_half(&n);
        let base = build_base_lp(&n);
        let checked = check_martingale(&n, &x, base.space.events(), 3).unwrap();
        assert!(checked > 0);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson(50, 100, Z99);
        assert!(lo < 0.5 && hi > 0.5 && lo > 0.3 && hi < 0.7);
        assert_eq!(wilson(0, 0, Z99), (0.0, 1.0));
        assert_eq!(wilson(0, 10_000, Z99).0, 0.0);
        assert_eq!(wilson(10_000, 10_000, Z99).1, 1.0);
        assert_eq!(default_reps(1, 1), (8.0 * 2f64.ln()).ceil() as usize);
    }

    #[test]
    fn dyadic_draw_is_in_unit_interval() {
        let mut rng = rng_for(1, 0);
        for _ in 0..100 {
            let r = uniform_dyadic(&mut rng);
            assert!(!r.is_negative() && r < int(1));
        }
    }
}
