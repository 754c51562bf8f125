//! End-to-end tests of the `rmiso` binary: config-driven runs, output
//! schema and determinism, recurrence estimation, and the verification
//! subcommand (including the mutation hook that must trip the energy-budget
//! criterion).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rmiso() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmiso"))
}

fn write_quad_config(dir: &Path, out: &Path) -> std::path::PathBuf {
    let text = format!(
        "[problem]\n\
         kind = quad\n\
         components = 6\n\
         dim = 3\n\
         data_seed = 7\n\n\
         [sampler]\n\
         kind = cyclic\n\n\
         [solver]\n\
         variant = rmiso_dpr\n\
         rho = 2\n\
         iters = 120\n\
         record_every = 10\n\
         invariant_checks = true\n\n\
         [run]\n\
         seeds = 1,2\n\
         out = {}\n",
        out.display()
    );
    let path = dir.join("quad.ini");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn run_writes_schema_stable_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_quad_config(dir.path(), &out_a);

    run_ok(rmiso().arg("run").arg("--config").arg(&config));
    run_ok(rmiso()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_b));

    let csv_a = fs::read_to_string(out_a.join("seed_1.csv")).unwrap();
    let csv_b = fs::read_to_string(out_b.join("seed_1.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "identical configs must produce identical CSVs");

    let header = csv_a.lines().next().unwrap();
    assert_eq!(
        header,
        "iter,elapsed_ms,objective,surrogate,stationarity,error_grad_norm,rho_n,radius_n,\
         step_norm,sampled_index,staleness_max"
    );
    // 120 iterations at record_every = 10.
    assert_eq!(csv_a.lines().count(), 1 + 12);

    let summary = fs::read_to_string(out_a.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,min_stationarity,checks_passed,energy_sum,step_sq_sum,gap_sum,delta0,rho_used,\
         final_objective"
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[2], "true", "invariant checks must pass: {line}");
    }
    assert!(out_a.join("config.resolved.ini").exists());
}

#[test]
fn run_rho_auto_uses_target_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("auto");
    let config = write_quad_config(dir.path(), &out);
    run_ok(rmiso()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--rho")
        .arg("auto")
        .arg("--seed")
        .arg("3"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    let rho_used: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    // Cyclic over 6 components: target time (6 - 1)/2 = 2.5 times the
    // smoothness preset (positive).
    assert!(rho_used > 0.0);
}

#[test]
fn estimate_prints_analytic_cyclic_line() {
    let output = run_ok(rmiso()
        .arg("estimate")
        .arg("--sampler")
        .arg("cyclic")
        .arg("--size")
        .arg("10")
        .arg("--replicas")
        .arg("4")
        .arg("--horizon")
        .arg("20"));
    let line = String::from_utf8(output.stdout).unwrap();
    let fields: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(fields.len(), 9);
    assert_eq!(fields[0].parse::<f64>().unwrap(), 10.0);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 4.5);
    assert_eq!(fields[6], "analytic");
}

#[test]
fn estimate_censoring_exits_with_code_two() {
    let output = rmiso()
        .arg("estimate")
        .arg("--sampler")
        .arg("random_walk")
        .arg("--graph")
        .arg("lonely")
        .arg("--size")
        .arg("12")
        .arg("--replicas")
        .arg("40")
        .arg("--horizon")
        .arg("12")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("censored"), "diagnostic missing: {stderr}");
}

#[test]
fn check_only_runs_single_criterion() {
    let output = run_ok(rmiso()
        .arg("check")
        .arg("--only")
        .arg("prox-linear-closed-form")
        .arg("--seed")
        .arg("1"));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("PASS prox-linear-closed-form"));
}

#[test]
fn check_rejects_unknown_criterion() {
    let output = rmiso()
        .arg("check")
        .arg("--only")
        .arg("not-a-criterion")
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn mutated_dynamic_regularization_fails_energy_check() {
    // The hook weakens the regularization actually applied while reporting
    // the nominal value; the energy budget must catch the mismatch.
    let output = rmiso()
        .arg("check")
        .arg("--only")
        .arg("iterate-energy")
        .arg("--seed")
        .arg("1")
        .env("RMISO_MUTATE", "dpr-rho")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        !output.status.success(),
        "mutated run unexpectedly passed:\n{stdout}"
    );
    assert!(stdout.contains("FAIL iterate-energy"), "{stdout}");

    // And the same criterion passes without the mutation.
    let output = run_ok(rmiso()
        .arg("check")
        .arg("--only")
        .arg("iterate-energy")
        .arg("--seed")
        .arg("1"));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("PASS iterate-energy"), "{stdout}");
}
