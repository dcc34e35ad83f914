//! End-to-end runs: approximation, LP bound, baseline, direct LCST and
//! benchmarks.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use rand::Rng;
use thiserror::Error;

use crate::decomp::{build_decomposition_tree, decomposition_to_steiner, DecompError, RootedTree};
use crate::gen::random_lcst_solution;
use crate::graph::{
    expand_to_original, metric_closure, parse_dst, prune_to_arborescence, validate_solution, DstInstance,
    GraphError, SteinerSolution,
};
use crate::lcst::{
    exact_lcst, normalize, prune_useless, validate_full, LcstError, LcstInstance, LcstSolution, NodeId,
    NormalizedLcst,
};
use crate::lp::{
    build_base_lp, lift, required_rounds, solve_lifted, solve_lp, DistributionBacked, LiftBudget,
    LpError, SaLpSolution,
};
use crate::oracle::{canonical_optimum_tree, exact_opt, OracleError, DEFAULT_TERMINAL_CAP};
use crate::rational::{format_rational, Rational};
use crate::reduction::{
    choose_params, embed_optimal, lcst_to_decomposition, twig_forest, LabelTree, Overrides, ReductionError,
    ReductionParams,
};
use crate::rounding::{estimate_marginals, rng_for, solve_lcst, CoverageStats, RoundingError, DEFAULT_RETRY_CAP};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input: {0}")]
    Input(String),
    #[error("closure: {0}")]
    Closure(GraphError),
    #[error("label tree: {0}")]
    Reduction(#[from] ReductionError),
    #[error("lcst: instance is infeasible after pruning")]
    InfeasibleLcst,
    #[error("lcst: {0}")]
    Lcst(#[from] LcstError),
    #[error("lp: {0}")]
    Lp(#[from] LpError),
    #[error("rounding: {0}")]
    Rounding(#[from] RoundingError),
    #[error("back-mapping: {0}")]
    BackMap(String),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
}

impl PipelineError {
    /// 2 infeasible, 3 caps exceeded, 4 retry cap exhausted, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Closure(GraphError::Unreachable(_))
            | PipelineError::InfeasibleLcst
            | PipelineError::Lp(LpError::Infeasible)
            | PipelineError::Oracle(OracleError::Infeasible(_)) => 2,
            PipelineError::Reduction(ReductionError::CapExceeded { .. })
            | PipelineError::Lp(LpError::Budget { .. })
            | PipelineError::Lcst(LcstError::CapExceeded { .. })
            | PipelineError::Oracle(OracleError::CapExceeded { .. }) => 3,
            PipelineError::Rounding(RoundingError::RetryCapExhausted { .. }) => 4,
            _ => 1,
        }
    }

    /// Short status word for reports.
    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            2 => "infeasible",
            3 => "caps",
            4 => "retry-cap",
            _ => "error",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Solve the lifted LP exactly (tiny instances only).
    SaLp,
    /// A distribution over integral solutions, seeded with the embedded
    /// optimum (a testing device standing in for the lifted LP).
    Distribution,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub overrides: Overrides,
    /// Lift rounds for the LP backend; default `max(s(h+2)(h+1)+1, h+1)`.
    pub rounds: Option<usize>,
    pub reps: Option<usize>,
    pub retry_cap: usize,
    pub seed: u64,
    pub backend: Backend,
    pub lift_budget: LiftBudget,
    /// Extra random supports mixed into the distribution backend.
    pub perturb: usize,
    /// Compare against the exact optimum when it is within reach.
    pub run_oracle: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            overrides: Overrides::default(),
            rounds: None,
            reps: None,
            retry_cap: DEFAULT_RETRY_CAP,
            seed: 0,
            backend: Backend::Distribution,
            lift_budget: LiftBudget::default(),
            perturb: 0,
            run_oracle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub params: ReductionParams,
    pub label_tree_nodes: usize,
    pub lcst_nodes: usize,
    pub backend: Backend,
    /// Seed of the distribution backend: `embedded` or `lcst-exact`.
    pub seed_source: Option<&'static str>,
    /// LP objective (or expected cost under the distribution).
    pub lp_objective: Rational,
    pub reps: usize,
    pub batches: usize,
    pub cost: Rational,
    pub opt: Option<Rational>,
    pub seed: u64,
}

impl RunReport {
    pub fn ratio(&self) -> Option<Rational> {
        match &self.opt {
            Some(o) if o.is_positive() => Some(&self.cost / o),
            Some(_) if self.cost.is_zero() => Some(Rational::from_integer(1.into())),
            _ => None,
        }
    }

    /// `key value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "n {}\nm {}\nk {}\nseed {}", self.n, self.m, self.k, self.seed);
        let _ = writeln!(out, "g {}\nhbar {}\ndepth {}\nforfeited {}", p.g, p.hbar, p.depth, p.forfeited);
        let _ = writeln!(out, "label_tree_nodes {}\nlcst_nodes {}", self.label_tree_nodes, self.lcst_nodes);
        let backend = match self.backend {
            Backend::SaLp => "sa-lp",
            Backend::Distribution => "dist",
        };
        let _ = writeln!(out, "backend {backend}");
        if let Some(s) = self.seed_source {
            let _ = writeln!(out, "seed_source {s}");
        }
        let _ = writeln!(out, "lp_objective {}", format_rational(&self.lp_objective));
        let _ = writeln!(out, "reps {}\nbatches {}", self.reps, self.batches);
        let _ = writeln!(out, "cost {}", format_rational(&self.cost));
        if let Some(o) = &self.opt {
            let _ = writeln!(out, "opt {}", format_rational(o));
        }
        if let Some(r) = self.ratio() {
            let _ = writeln!(out, "ratio {}", format_rational(&r));
        }
        out
    }
}

/// Nodes of `pruned` whose origin, through both maps, is selected.
fn push_forward(origin: impl Fn(NodeId) -> NodeId, len: usize, inst: &LcstInstance, sol: &LcstSolution) -> LcstSolution {
    LcstSolution::new(inst, (0..len).filter(|&v| sol.contains(origin(v))))
}

/// The reduced instance with the maps back to label-tree ids.
struct Reduced {
    tree: LabelTree,
    full: LcstInstance,
    pruned: NormalizedLcst,
    /// Per pruned node, its label-tree id.
    origin: Vec<NodeId>,
}

fn reduce(closed: &DstInstance, cfg: &PipelineConfig) -> Result<Reduced, PipelineError> {
    let params = choose_params(closed.k(), &cfg.overrides);
    let tree = LabelTree::new(closed.clone(), params);
    let full = tree.materialize()?;
    let normalized = normalize(&full);
    let pruned = prune_useless(&normalized.norm);
    if !pruned.feasible {
        return Err(PipelineError::InfeasibleLcst);
    }
    let origin = pruned.origin.iter().map(|&v| normalized.origin[v]).collect();
    Ok(Reduced { tree, full, pruned: pruned.norm, origin })
}

/// The optimum of `closed` embedded into the label tree, if the tree is
/// deep enough and the optimum has two or more edges.
fn embedded_optimum(closed: &DstInstance, tree: &LabelTree) -> Option<LcstSolution> {
    let opt = canonical_optimum_tree(closed).ok()?;
    let rooted = RootedTree::from_solution(closed, &opt).ok()?;
    let tau = build_decomposition_tree(&rooted, closed).ok()?;
    let forest = twig_forest(&tau, tree.params().g).ok()?;
    embed_optimal(tree, &forest).ok()
}

enum Oracle {
    Sa(SaLpSolution),
    Dist(DistributionBacked),
}

fn lp_oracle(inst: &NormalizedLcst, cfg: &PipelineConfig) -> Result<(Oracle, Rational), PipelineError> {
    let base = build_base_lp(inst);
    let h = inst.height();
    let r = cfg.rounds.unwrap_or_else(|| required_rounds(inst.s(), h).max(h + 1));
    let lifted = lift(&base.lp, r, &cfg.lift_budget)?;
    let (sol, point) = solve_lifted(&lifted)?;
    Ok((Oracle::Sa(SaLpSolution::new(Arc::new(base.space), point)), sol.value))
}

/// Point mass on `seed_sol`, or half of it mixed with `cfg.perturb`
/// random solutions of equal weight.
fn dist_oracle(inst: &NormalizedLcst, seed_sol: LcstSolution, cfg: &PipelineConfig) -> Result<(Oracle, Rational), PipelineError> {
    let base = build_base_lp(inst);
    let mut support = vec![seed_sol];
    let mut rng = rng_for(cfg.seed, u64::MAX);
    let mut attempts = 0;
    while support.len() <= cfg.perturb && attempts < 100 * (cfg.perturb + 1) {
        attempts += 1;
        if let Some(s) = random_lcst_solution(&mut rng, inst) {
            support.push(s);
        }
        let _ = rng.gen::<u8>();
    }
    let weights: Vec<Rational> = if support.len() == 1 {
        vec![Rational::from_integer(1.into())]
    } else {
        let half = Rational::new(1.into(), 2.into());
        let rest = &half / Rational::from_integer(((support.len() - 1) as i64).into());
        std::iter::once(half).chain(std::iter::repeat(rest).take(support.len() - 1)).collect()
    };
    let expected: Rational = support.iter().zip(&weights).map(|(s, w)| &s.cost * w).sum();
    let d = DistributionBacked::from_solutions(inst, &base, support.into_iter().zip(weights).collect())?;
    Ok((Oracle::Dist(d), expected))
}

fn round(inst: &NormalizedLcst, oracle: &Oracle, cfg: &PipelineConfig) -> Result<crate::rounding::SolveOutcome, PipelineError> {
    Ok(match oracle {
        Oracle::Sa(x) => solve_lcst(inst, || x.clone(), cfg.seed, cfg.reps, cfg.retry_cap)?,
        Oracle::Dist(x) => solve_lcst(inst, || x.clone(), cfg.seed, cfg.reps, cfg.retry_cap)?,
    })
}

/// The full approximation pipeline: closure, label tree, normalization,
/// pruning, lifted point, rounding, and the way back to a Steiner tree in
/// the input graph.
pub fn run_approx(inst: &DstInstance, cfg: &PipelineConfig) -> Result<(SteinerSolution, RunReport), PipelineError> {
    let (closed, mc) = metric_closure(inst).map_err(PipelineError::Closure)?;
    let red = reduce(&closed, cfg)?;
    let mut seed_source = None;
    let (oracle, lp_objective) = match cfg.backend {
        Backend::SaLp => lp_oracle(&red.pruned, cfg)?,
        Backend::Distribution => {
            let embedded = embedded_optimum(&closed, &red.tree)
                .map(|s| red.pruned.canonicalize_service(&push_forward(|v| red.origin[v], red.pruned.len(), &red.pruned, &s)))
                .filter(|s| validate_full(&red.pruned, s).is_ok());
            let seed_sol = match embedded {
                Some(s) => {
                    seed_source = Some("embedded");
                    s
                }
                None => {
                    seed_source = Some("lcst-exact");
                    exact_lcst(&red.pruned)?.1
                }
            };
            dist_oracle(&red.pruned, seed_sol, cfg)?
        }
    };
    let outcome = round(&red.pruned, &oracle, cfg)?;

    let in_tree = LcstSolution::new(&red.full, outcome.solution.nodes.iter().map(|&v| red.origin[v]));
    validate_full(&red.full, &in_tree).map_err(|e| PipelineError::BackMap(e.to_string()))?;
    let tau = lcst_to_decomposition(&red.tree, &in_tree)?;
    let closure_sol = decomposition_to_steiner(&tau, &closed).map_err(|e: DecompError| PipelineError::BackMap(e.to_string()))?;
    let sol = expand_to_original(inst, &mc, &closure_sol).map_err(PipelineError::Closure)?;
    let cost = validate_solution(inst, &sol).map_err(|e| PipelineError::BackMap(e.to_string()))?;

    let opt = if cfg.run_oracle && inst.k() <= DEFAULT_TERMINAL_CAP { Some(exact_opt(inst)?.opt) } else { None };
    let report = RunReport {
        n: inst.n(),
        m: inst.m(),
        k: inst.k(),
        params: *red.tree.params(),
        label_tree_nodes: red.full.len(),
        lcst_nodes: red.pruned.len(),
        backend: cfg.backend,
        seed_source,
        lp_objective,
        reps: outcome.reps,
        batches: outcome.batches,
        cost,
        opt,
        seed: cfg.seed,
    };
    Ok((sol, report))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpBound {
    pub value: Rational,
    pub vars: usize,
    pub rows: usize,
    pub basis: Vec<usize>,
    pub lcst_nodes: usize,
}

/// Base-relaxation optimum of the reduced instance; a lower bound on the
/// optimum once the label tree is deep enough.
pub fn run_lp_bound(inst: &DstInstance, cfg: &PipelineConfig) -> Result<LpBound, PipelineError> {
    let (closed, _) = metric_closure(inst).map_err(PipelineError::Closure)?;
    let red = reduce(&closed, cfg)?;
    let base = build_base_lp(&red.pruned);
    let sol = solve_lp(&base.lp)?;
    Ok(LpBound {
        value: sol.value,
        vars: base.lp.num_vars(),
        rows: base.lp.rows.len(),
        basis: sol.basis,
        lcst_nodes: red.pruned.len(),
    })
}

/// Union of shortest root-terminal paths, pruned.
pub fn baseline_shortest_paths(inst: &DstInstance) -> Result<SteinerSolution, GraphError> {
    let (_, mc) = metric_closure(inst)?;
    let mut edges = BTreeSet::new();
    for &t in inst.terminals() {
        let path = mc.path(inst.root(), t).ok_or(GraphError::Unreachable(t))?;
        edges.extend(path.windows(2).map(|w| (w[0], w[1])));
    }
    let sol = SteinerSolution::from_edges(inst, edges)?;
    prune_to_arborescence(inst, &sol)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LcstReport {
    pub nodes: usize,
    pub pruned_nodes: usize,
    pub s: usize,
    pub h: usize,
    pub lp_objective: Rational,
    pub cost: Rational,
    pub opt: Rational,
}

/// Rounding directly on an LCST instance. The distribution backend is
/// seeded with the exact optimum.
pub fn run_lcst(inst: &LcstInstance, cfg: &PipelineConfig) -> Result<(LcstSolution, LcstReport), PipelineError> {
    let normalized = normalize(inst);
    let pruned = prune_useless(&normalized.norm);
    if !pruned.feasible {
        return Err(PipelineError::InfeasibleLcst);
    }
    let norm = &pruned.norm;
    let (opt, opt_sol) = exact_lcst(norm)?;
    let (oracle, lp_objective) = match cfg.backend {
        Backend::SaLp => lp_oracle(norm, cfg)?,
        Backend::Distribution => dist_oracle(norm, opt_sol, cfg)?,
    };
    let outcome = round(norm, &oracle, cfg)?;
    let sol = normalized.lift_solution(inst, &pruned.lift_solution(&normalized.norm, &outcome.solution));
    let cost = validate_full(inst, &sol).map_err(|e| PipelineError::BackMap(e.to_string()))?;
    let report = LcstReport {
        nodes: inst.len(),
        pruned_nodes: norm.len(),
        s: norm.s(),
        h: norm.height(),
        lp_objective,
        cost,
        opt,
    };
    Ok((sol, report))
}

/// Empirical coverage statistics of `trials` roundings on an LCST
/// instance (after normalization and pruning).
pub fn run_stats(inst: &LcstInstance, cfg: &PipelineConfig, trials: u64, threads: usize) -> Result<CoverageStats, PipelineError> {
    let normalized = normalize(inst);
    let pruned = prune_useless(&normalized.norm);
    if !pruned.feasible {
        return Err(PipelineError::InfeasibleLcst);
    }
    let norm = &pruned.norm;
    let (oracle, _) = match cfg.backend {
        Backend::SaLp => lp_oracle(norm, cfg)?,
        Backend::Distribution => dist_oracle(norm, exact_lcst(norm)?.1, cfg)?,
    };
    Ok(match oracle {
        Oracle::Sa(x) => estimate_marginals(norm, || x.clone(), trials, cfg.seed, threads)?,
        Oracle::Dist(x) => estimate_marginals(norm, || x.clone(), trials, cfg.seed, threads)?,
    })
}

/// Header of the benchmark CSV.
pub const BENCH_HEADER: &str = "instance,mode,seed,n,m,k,status,cost,opt,ratio,label_tree_nodes";

/// One row per (instance, mode, seed) over the `.dst` files of `dir`, in
/// file-name order; modes are `approx` and `baseline`. Failures become
/// rows with their status. No timings, so output is reproducible.
pub fn bench(dir: &Path, cfg: &PipelineConfig, seeds: &[u64]) -> Result<String, PipelineError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", dir.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "dst"))
        .collect();
    files.sort();
    let mut out = format!("{BENCH_HEADER}\n");
    for path in files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_dst(&t).map_err(|e| e.to_string()));
        let inst = match parsed {
            Ok(i) => i,
            Err(e) => {
                let _ = writeln!(out, "{name},parse,,,,,error:{},,,,", e.replace(',', ";"));
                continue;
            }
        };
        let opt = if inst.k() <= DEFAULT_TERMINAL_CAP { exact_opt(&inst).ok().map(|r| r.opt) } else { None };
        let fmt_opt = |o: &Option<Rational>| o.as_ref().map(format_rational).unwrap_or_default();
        let ratio = |cost: &Rational| match &opt {
            Some(o) if o.is_positive() => format_rational(&(cost / o)),
            Some(_) => "1".into(),
            None => String::new(),
        };
        let (n, m, k) = (inst.n(), inst.m(), inst.k());
        for &seed in seeds {
            let run_cfg = PipelineConfig { seed, run_oracle: false, ..cfg.clone() };
            match run_approx(&inst, &run_cfg) {
                Ok((_, rep)) => {
                    let _ = writeln!(
                        out,
                        "{name},approx,{seed},{n},{m},{k},ok,{},{},{},{}",
                        format_rational(&rep.cost),
                        fmt_opt(&opt),
                        ratio(&rep.cost),
                        rep.label_tree_nodes
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{name},approx,{seed},{n},{m},{k},{},,{},,", e.status(), fmt_opt(&opt));
                }
            }
        }
        match baseline_shortest_paths(&inst) {
            Ok(sol) => {
                let _ = writeln!(
                    out,
                    "{name},baseline,,{n},{m},{k},ok,{},{},{},",
                    format_rational(&sol.cost),
                    fmt_opt(&opt),
                    ratio(&sol.cost)
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{name},baseline,,{n},{m},{k},infeasible,,{},,", fmt_opt(&opt));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::rational::int;

    fn g1() -> DstInstance {
        parse_dst("dst 4 5\nroot 0\nterminals 2 3\nedge 0 1 1\nedge 1 2 1\nedge 1 3 1\nedge 0 2 3\nedge 0 3 3\n").unwrap()
    }

    fn depth2() -> PipelineConfig {
        PipelineConfig { overrides: Overrides { depth: Some(2), ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn g1_distribution_backend_is_exact() {
        let (sol, rep) = run_approx(&g1(), &depth2()).unwrap();
        assert_eq!(sol.cost, int(3));
        assert_eq!(rep.ratio(), Some(int(1)));
        assert_eq!(rep.seed_source, Some("embedded"));
        assert!(rep.to_text().contains("ratio 1\n"));
    }

    #[test]
    fn g1_perturbed_still_validates() {
        let cfg = PipelineConfig { perturb: 3, seed: 7, ..depth2() };
        let (sol, rep) = run_approx(&g1(), &cfg).unwrap();
        assert!(validate_solution(&g1(), &sol).is_ok());
        assert!(rep.ratio().unwrap() >= int(1));
    }

    #[test]
    fn unreachable_terminal_fails_at_closure() {
        let inst = DstInstance::new(3, [Edge::new(0, 1, int(1))], 0, [2]).unwrap();
        let err = run_approx(&inst, &depth2()).unwrap_err();
        assert!(matches!(err, PipelineError::Closure(GraphError::Unreachable(2))));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_shortest_paths(&g1()).unwrap().cost, int(3));
        let star = DstInstance::new(3, [Edge::new(0, 1, int(2)), Edge::new(0, 2, int(5))], 0, [1, 2]).unwrap();
        assert_eq!(baseline_shortest_paths(&star).unwrap().cost, int(7));
    }

    #[test]
    fn default_depth_hits_caps() {
        let cfg = PipelineConfig {
            overrides: Overrides { caps: Some(crate::reduction::Caps { max_nodes: 5_000, max_twigs: 1_000 }), ..Default::default() },
            ..Default::default()
        };
        assert_eq!(run_approx(&g1(), &cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn sa_backend_on_g1_exceeds_the_lift_budget() {
        let cfg = PipelineConfig { backend: Backend::SaLp, ..depth2() };
        assert_eq!(run_approx(&g1(), &cfg).unwrap_err().exit_code(), 3);
    }
}
