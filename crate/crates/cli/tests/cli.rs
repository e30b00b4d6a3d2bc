use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dykstra_net::bench::read_trace;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dykstra-net")).args(args).output().unwrap()
}

fn run_to_trace(config: &str, extra: &[&str]) -> (Output, Vec<dykstra_net::bench::TraceRow>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let cfg = fixture(config);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = cli(&args);
    let rows = read_trace(std::fs::File::open(&out).unwrap()).unwrap();
    (o, rows)
}

#[test]
fn consensus_trace() {
    let (o, rows) = run_to_trace("consensus.toml", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("converged"), "{text}");
    assert!(rows.last().unwrap().dist_ref.unwrap() <= 1e-9);
    for w in rows.windows(2) {
        assert!(w[1].iter > w[0].iter);
        assert!(w[1].wall_ns >= w[0].wall_ns);
        let (a, b) = (w[0].f.unwrap(), w[1].f.unwrap());
        assert!(b >= a - 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let cfg = fixture("consensus.toml");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--schedule", "full"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "iter,F,gap_lb,dist_ref,sumz_sqrtn,wall_ns");
}

#[test]
fn seeds_are_reproducible() {
    let (_, a) = run_to_trace("consensus.toml", &["--seed", "3"]);
    let (_, b) = run_to_trace("consensus.toml", &["--seed", "3"]);
    let f = |r: &[dykstra_net::bench::TraceRow]| r.iter().map(|r| r.f).collect::<Vec<_>>();
    assert_eq!(f(&a), f(&b));
}

#[test]
fn stuck_exits_nonzero() {
    let (o, rows) = run_to_trace("stuck.toml", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stuck"));
    assert_eq!(rows.last().unwrap().gap_lb, Some(2.0));
    assert!(rows.iter().all(|r| r.f == Some(0.0)));

    // the full subset escapes
    let (o, rows) = run_to_trace("stuck.toml", &["--subsets", "0,1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows.last().unwrap().f, Some(1.0));
}

#[test]
fn apg_running_min() {
    let (o, rows) = run_to_trace("consensus.toml", &["--algorithm", "apg"]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    assert!(rows.len() > 1);
    for w in rows.windows(2) {
        assert!(w[1].f.unwrap() >= w[0].f.unwrap());
    }
}

#[test]
fn graph_file_and_oracle() {
    let cfg = fixture("mixed.toml");
    let o = cli(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let x: Vec<f64> = String::from_utf8_lossy(&o.stdout).trim().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(x.len(), 2);
    assert!(x[0] >= -0.2 - 1e-12 && x[0] <= 0.4 + 1e-12);

    let (o, rows) = run_to_trace("mixed.toml", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows.last().unwrap().dist_ref.unwrap() <= 1e-6);
}

#[test]
fn bad_config_reports() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[graph]\nkind = \"path\"\nn = 3\n[run]\nmax_cycles = \"many\"\n").unwrap();
    let o = cli(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");

    let cfg = fixture("consensus.toml");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--schedule", "ring"]);
    assert_eq!(o.status.code(), Some(2));
}
