use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dadmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dadmm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

const SMALL: [&str; 6] = [
    "--set",
    "replicates=2",
    "--set",
    "max_iter=40",
    "--set",
    "nodes=12",
];

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let mut args = vec![
            "run",
            "--preset",
            "paper-localization",
            "--seed",
            "11",
            "--workers",
            workers,
        ];
        args.extend(SMALL);
        args.extend(["--out", out.to_str().unwrap()]);
        let res = dadmm(&args);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let first = csv_files(&a);
    assert!(first.iter().any(|(n, _)| n == "trace_000.csv"));
    assert!(first.iter().any(|(n, _)| n == "summary.csv"));
    assert_eq!(first, csv_files(&b));
}

#[test]
fn sync_check_reports_reference_match() {
    let dir = tempfile::tempdir().unwrap();
    let res = dadmm(&[
        "run",
        "--preset",
        "sync-check",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(
        stdout.lines().last().unwrap().ends_with(",true"),
        "{stdout}"
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "problem = quadratic\nnodes = 6\ndim = 1\nreplicates = 1\nmax_iter = 20\nseed = 1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = dadmm(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let echoed = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echoed.contains("seed = 9"));
    assert!(echoed.contains("nodes = 6"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "rho_policy = auto\nrho = 10\n").unwrap();
    assert_eq!(
        dadmm(&["run", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        dadmm(&["run", "--preset", "unknown"]).status.code(),
        Some(1)
    );
    assert_eq!(
        dadmm(&["run", "--set", "frequency=0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        dadmm(&["run", "--config", "/nonexistent/file"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(dadmm(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let res = dadmm(&[
        "run",
        "--preset",
        "sync-check",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn check_params_prints_node_table() {
    let res = dadmm(&[
        "check-params",
        "--set",
        "problem=quadratic",
        "--set",
        "dim=1",
        "--set",
        "nodes=8",
    ]);
    assert!(res.status.success());
    let stdout = String::from_utf8(res.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next(),
        Some("node,neighborhood,lipschitz,rho,alpha,beta,feasible,min_feasible_rho")
    );
    assert_eq!(lines.clone().count(), 8);
    assert!(lines.all(|l| l.split(',').nth(6) == Some("true")));

    let warn = dadmm(&["check-params", "--preset", "paper-localization"]);
    assert!(warn.status.success());
    assert!(String::from_utf8_lossy(&warn.stderr).contains("warning"));
}

#[test]
fn gen_graph_writes_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    let res = dadmm(&[
        "gen-graph",
        "--preset",
        "paper-localization",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("nodes 25"));
    assert!(text.contains("node 0 0.25 0.25 1"));
    let stdout = dadmm(&["gen-graph", "--preset", "paper-localization", "--seed", "3"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), text);
}

#[test]
fn sweep_writes_table_and_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--preset",
        "paper-localization",
        "--param",
        "rho",
        "--values",
        "10,50",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend(SMALL);
    let res = dadmm(&args);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(dir.path().join("rho_10/summary.csv").exists());
    assert!(dir.path().join("rho_50/trace_001.csv").exists());
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let bad = dadmm(&["sweep", "--param", "colour", "--values", "red"]);
    assert_eq!(bad.status.code(), Some(1));
}
