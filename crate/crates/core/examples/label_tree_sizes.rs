//! Prints label-tree and relaxation sizes for a small instance at each
//! label-tree depth: `cargo run --release --example label_tree_sizes [file.dst] [max_depth]`.

use std::time::Instant;

use dstq::graph::{metric_closure, parse_dst};
use dstq::lcst::{exact_lcst, normalize, prune_useless};
use dstq::lp::{build_base_lp, solve_lp};
use dstq::reduction::{choose_params, LabelTree, Overrides};

const G1: &str = "dst 4 5\nroot 0\nterminals 2 3\nedge 0 1 1\nedge 1 2 1\nedge 1 3 1\nedge 0 2 3\nedge 0 3 3\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let text = match args.first() {
        Some(path) => std::fs::read_to_string(path)?,
        None => G1.to_string(),
    };
    let max_depth: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    let (closed, _) = metric_closure(&parse_dst(&text)?)?;
    for depth in 1..=max_depth {
        let params = choose_params(closed.k(), &Overrides { depth: Some(depth), ..Default::default() });
        let tree = LabelTree::new(closed.clone(), params);
        let full = tree.materialize()?;
        let normalized = normalize(&full);
        let pruned = prune_useless(&normalized.norm);
        println!(
            "depth {depth}: {} nodes, {} labels; normalized {}, pruned {} (s = {}, h = {})",
            full.len(),
            tree.label_count(),
            normalized.norm.len(),
            pruned.norm.len(),
            pruned.norm.s(),
            pruned.norm.height()
        );
        let t = Instant::now();
        let (opt, _) = exact_lcst(&full)?;
        println!("  optimum {opt} ({:?})", t.elapsed());
        if pruned.feasible {
            let base = build_base_lp(&pruned.norm);
            let t = Instant::now();
            let sol = solve_lp(&base.lp)?;
            println!("  relaxation {} over {} events, {} rows ({:?})", sol.value, base.space.len(), base.lp.rows.len(), t.elapsed());
        }
    }
    Ok(())
}
