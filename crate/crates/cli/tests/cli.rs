use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_madode"))
}

fn tmpdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("madode_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    dir
}

/// CSV rows with the wall-time column blanked, for determinism comparison.
fn stable_csv(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() > 7 && cols[0] != "problem" {
                cols[7] = "-";
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn csv_header_and_determinism() {
    let out1 = tmpdir("det1");
    let out2 = tmpdir("det2");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["--problem", "decay", "--method", "cg", "--tol", "1e-5,1e-6"])
            .args(["--seed", "7", "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = stable_csv(&out1.join("results.csv"));
    let b = stable_csv(&out2.join("results.csv"));
    assert_eq!(a, b, "CSV differs between identical runs");
    assert!(a.starts_with(
        "problem,method,q,mode,tol,n_components,error,walltime_s,slabs,rejected,iters_global,iters_local,mu"
    ));
    // Two tolerance rows.
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn mono_runs_report_unit_efficiency() {
    let out = tmpdir("mono");
    let status = bin()
        .args(["--problem", "harmonic", "--method", "cg", "--tol", "1e-5"])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let mu = row.split(',').last().unwrap();
    assert_eq!(mu, "1.000000");
}

#[test]
fn snapshot_at_zero_reproduces_initial_data() {
    let out = tmpdir("snap");
    let status = bin()
        .args(["--problem", "harmonic", "--method", "mcg", "--tol", "1e-5"])
        .args(["--end-time", "1", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("solution_t0.0000.dat")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values, vec![1.0, 0.0]);
    // Step-field snapshots exist for interior times.
    assert!(out.join("steps_t0.5000.dat").exists());
}

#[test]
fn missing_problem_is_a_usage_error() {
    let output = bin().args(["--method", "cg"]).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("problem"));
}

#[test]
fn config_file_merges_with_cli_winning() {
    let out = tmpdir("cfg");
    let cfg_path = std::env::temp_dir().join("madode_cli_cfg.txt");
    fs::write(
        &cfg_path,
        "# benchmark settings\nproblem = decay\nmethod = dg\ntol = 1e-3\n",
    )
    .unwrap();
    // CLI overrides the method; problem and tol come from the file.
    let status = bin()
        .args(["--config", cfg_path.to_str().unwrap()])
        .args(["--method", "cg", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("exponential-decay,cg,1,adaptive,1.000000e-3,"));
}

#[test]
fn trace_flag_writes_checkpoint() {
    let out = tmpdir("trace");
    let status = bin()
        .args(["--problem", "decay", "--method", "cg", "--tol", "1e-4", "--trace"])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let bytes = fs::read(out.join("trace.bin")).unwrap();
    assert_eq!(&bytes[..8], b"MADTRC01");
}
