use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn dstq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstq")).args(args).env_remove("DSTQ_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exact_prints_optimum_and_tree() {
    let o = dstq(&["exact", data("g1.dst").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "opt 3\nedge 0 1\nedge 1 2\nedge 1 3\n");
}

#[test]
fn approx_on_g1_is_optimal() {
    let o = dstq(&["approx", data("g1.dst").to_str().unwrap(), "--depth", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("cost 3\n"), "{out}");
    assert!(out.contains("ratio 1\n"), "{out}");
}

#[test]
fn lp_bound_below_optimum() {
    let o = dstq(&["lp-bound", data("g1.dst").to_str().unwrap(), "--depth", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("bound 3\n"));
}

#[test]
fn exit_codes() {
    let unreachable = dstq(&["approx", data("unreachable.dst").to_str().unwrap()]);
    assert_eq!(unreachable.status.code(), Some(2));
    let caps = dstq(&["approx", data("g1.dst").to_str().unwrap(), "--caps", "nodes=100"]);
    assert_eq!(caps.status.code(), Some(3));
    let sa = dstq(&["approx", data("g1.dst").to_str().unwrap(), "--depth", "2", "--backend", "sa-lp"]);
    assert_eq!(sa.status.code(), Some(3));
    let missing = dstq(&["exact", data("nope.dst").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_flag = dstq(&["exact", "--caps", "width=3", data("g1.dst").to_str().unwrap()]);
    assert_eq!(bad_flag.status.code(), Some(1));
}

#[test]
fn lcst_and_stats() {
    let o = dstq(&["lcst", data("fork.lcst").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("cost 3\nopt 3\n"));
    let s = dstq(&["stats", data("fork.lcst").to_str().unwrap(), "--trials", "500", "--perturb", "2", "--threads", "2"]);
    assert!(s.status.success());
    let csv = stdout(&s);
    assert!(csv.starts_with("label,trials,covered,mean_t,cond_mean_t,wilson_lo,wilson_hi\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bench_is_reproducible_and_seed_env_is_honoured() {
    let dir = data("corpus");
    let args = ["bench", dir.to_str().unwrap(), "--depth", "2", "--runs", "2", "--perturb", "2"];
    let a = dstq(&args);
    let b = dstq(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let csv = stdout(&a);
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[6], "ok", "{line}");
        assert_eq!(cols[9], "1", "{line}");
    }
    let env = Command::new(env!("CARGO_BIN_EXE_dstq")).args(args).env("DSTQ_SEED", "5").output().unwrap();
    assert!(stdout(&env).contains("g1.dst,approx,5,"));
}

#[test]
fn bench_on_empty_dir_is_header_only() {
    let dir = std::env::temp_dir().join(format!("dstq-empty-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("out.csv");
    let o = dstq(&["bench", dir.to_str().unwrap(), "--csv", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "instance,mode,seed,n,m,k,status,cost,opt,ratio,label_tree_nodes\n");
    std::fs::remove_dir_all(&dir).unwrap();
}
