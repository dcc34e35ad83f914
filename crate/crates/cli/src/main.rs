use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dstq::graph::{parse_dst, DstInstance, SteinerSolution};
use dstq::lcst::LcstInstance;
use dstq::oracle::exact_opt;
use dstq::pipeline::{bench, run_approx, run_lcst, run_lp_bound, run_stats, Backend, PipelineConfig, PipelineError};
use dstq::rational::format_rational;
use dstq::reduction::{Caps, Overrides};

#[derive(Parser)]
#[command(name = "dstq", version, about = "Directed Steiner tree via label-consistent subtrees")]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Mode {
    /// Exact optimum of a `.dst` instance.
    Exact { file: PathBuf },
    /// Full approximation pipeline on a `.dst` instance.
    Approx { file: PathBuf },
    /// Base relaxation value of the reduced instance.
    LpBound { file: PathBuf },
    /// Round directly on an `.lcst` instance.
    Lcst { file: PathBuf },
    /// Coverage statistics of repeated rounding on an `.lcst` instance.
    Stats { file: PathBuf },
    /// CSV over every `.dst` file of a directory.
    Bench { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    SaLp,
    Dist,
}

#[derive(clap::Args)]
struct Opts {
    /// Falls back to DSTQ_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    g: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// `nodes=N,twigs=N`; either part may be omitted.
    #[arg(long, global = true, value_parser = parse_caps)]
    caps: Option<Caps>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    retry_cap: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "dist")]
    backend: BackendArg,
    /// Random solutions mixed into the distribution backend.
    #[arg(long, global = true, default_value_t = 0)]
    perturb: usize,
    /// Write CSV output (bench, stats) here instead of stdout.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Bench: seeds `seed .. seed + runs`.
    #[arg(long, global = true, default_value_t = 1)]
    runs: u64,
}

fn parse_caps(s: &str) -> Result<Caps, String> {
    let mut caps = Caps::default();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (key, val) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let val: usize = val.parse().map_err(|_| format!("bad number `{val}`"))?;
        match key {
            "nodes" => caps.max_nodes = val,
            "twigs" => caps.max_twigs = val,
            _ => return Err(format!("unknown cap `{key}`")),
        }
    }
    Ok(caps)
}

impl Opts {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let seed = match self.seed {
            Some(s) => s,
            None => match std::env::var("DSTQ_SEED") {
                Ok(v) => v.trim().parse().map_err(|_| PipelineError::Input(format!("DSTQ_SEED is not a number: {v}")))?,
                Err(_) => 0,
            },
        };
        let mut cfg = PipelineConfig {
            overrides: Overrides { g: self.g, hbar: None, depth: self.depth, caps: self.caps },
            rounds: self.rounds,
            reps: self.reps,
            seed,
            backend: match self.backend {
                BackendArg::SaLp => Backend::SaLp,
                BackendArg::Dist => Backend::Distribution,
            },
            perturb: self.perturb,
            ..PipelineConfig::default()
        };
        if let Some(r) = self.retry_cap {
            cfg.retry_cap = r;
        }
        Ok(cfg)
    }

    fn emit_csv(&self, csv: &str) -> Result<(), PipelineError> {
        match &self.csv {
            Some(p) => std::fs::write(p, csv).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display()))),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn read_dst(path: &Path) -> Result<DstInstance, PipelineError> {
    parse_dst(&read(path)?).map_err(|e| PipelineError::Input(e.to_string()))
}

fn read_lcst(path: &Path) -> Result<LcstInstance, PipelineError> {
    Ok(LcstInstance::parse(&read(path)?)?)
}

fn print_tree(sol: &SteinerSolution) {
    for (h, t) in sol.edge_list() {
        println!("edge {h} {t}");
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = cli.opts.config()?;
    match &cli.mode {
        Mode::Exact { file } => {
            let res = exact_opt(&read_dst(file)?)?;
            println!("opt {}", format_rational(&res.opt));
            print_tree(&res.tree);
        }
        Mode::Approx { file } => {
            let (sol, report) = run_approx(&read_dst(file)?, &cfg)?;
            print!("{}", report.to_text());
            print_tree(&sol);
        }
        Mode::LpBound { file } => {
            let bound = run_lp_bound(&read_dst(file)?, &cfg)?;
            println!("bound {}", format_rational(&bound.value));
            println!("vars {}\nrows {}\nlcst_nodes {}", bound.vars, bound.rows, bound.lcst_nodes);
        }
        Mode::Lcst { file } => {
            let (sol, r) = run_lcst(&read_lcst(file)?, &cfg)?;
            println!("nodes {}\npruned_nodes {}\ns {}\nh {}", r.nodes, r.pruned_nodes, r.s, r.h);
            println!("lp_objective {}", format_rational(&r.lp_objective));
            println!("cost {}\nopt {}", format_rational(&r.cost), format_rational(&r.opt));
            print!("{}", sol.to_text());
        }
        Mode::Stats { file } => {
            let stats = run_stats(&read_lcst(file)?, &cfg, cli.opts.trials, cli.opts.threads)?;
            cli.opts.emit_csv(&stats.to_csv())?;
        }
        Mode::Bench { dir } => {
            let seeds: Vec<u64> = (0..cli.opts.runs).map(|i| cfg.seed.wrapping_add(i)).collect();
            cli.opts.emit_csv(&bench(dir, &cfg, &seeds)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
