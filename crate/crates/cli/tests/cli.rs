use std::path::Path;
use std::process::{Command, Output};

fn sbm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbm"))
        .args(args)
        .current_dir(dir)
        .env_remove("SBM_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

const SMALL: &[&str] = &["--Lambda", "2", "--M", "6", "--N", "2", "--starts", "4", "--delta", "0.1"];

#[test]
fn discretize_writes_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbm(
        dir.path(),
        &["discretize", "--s", "1", "--alpha", "0.5", "--scheme", "log", "--Lambda", "2", "--M", "2"],
    );
    assert!(out.status.success());
    let mesh = dir.path().join("sbm-discretize/mesh.csv");
    let omegas: Vec<f64> = column(&mesh, "omega").iter().map(|s| s.parse().unwrap()).collect();
    let lambdas: Vec<f64> = column(&mesh, "lambda").iter().map(|s| s.parse().unwrap()).collect();
    assert!((omegas[0] - 7.0 / 18.0).abs() < 1e-14);
    assert!((omegas[1] - 7.0 / 9.0).abs() < 1e-14);
    assert!((lambdas[0] - 0.09375f64.sqrt()).abs() < 1e-14);
    assert!((lambdas[1] - 0.375f64.sqrt()).abs() < 1e-14);
    assert!(dir.path().join("sbm-discretize/metadata.json").exists());
}

#[test]
fn zero_coupling_mesh_has_zero_lambdas() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbm(dir.path(), &["discretize", "--alpha", "0", "--M", "5"]);
    assert!(out.status.success());
    let lambdas = column(&dir.path().join("sbm-discretize/mesh.csv"), "lambda");
    assert!(lambdas.iter().all(|l| l.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sbm(dir.path(), &["discretize", "--M", "0"]).status.code(), Some(2));
    assert_eq!(sbm(dir.path(), &["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(sbm(dir.path(), &["solve", "--delta", "-1"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[model]\nalfa = 1\n").unwrap();
    assert_eq!(sbm(dir.path(), &["solve", "-c", "bad.toml"]).status.code(), Some(2));
}

#[test]
fn solve_free_spin() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--alpha", "0"];
    args.extend_from_slice(SMALL);
    assert!(sbm(dir.path(), &args).status.success());
    let summary = json(&dir.path().join("sbm-solve/summary.json"));
    assert!((summary["energy"].as_f64().unwrap() + 0.05).abs() < 1e-10);
    let modes = column(&dir.path().join("sbm-solve/modes.csv"), "delta_x");
    assert_eq!(modes.len(), 6);
    assert!(dir.path().join("sbm-solve/solution.json").exists());
}

#[test]
fn solve_without_tunneling_gives_polaron_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbm(
        dir.path(),
        &["solve", "--alpha", "0.3", "--delta", "0", "--Lambda", "2", "--M", "6", "--N", "1", "--starts", "4"],
    );
    assert!(out.status.success());
    let mesh = sbm(dir.path(), &["discretize", "--alpha", "0.3", "--Lambda", "2", "--M", "6"]);
    assert!(mesh.status.success());
    let mesh = dir.path().join("sbm-discretize/mesh.csv");
    let w: Vec<f64> = column(&mesh, "omega").iter().map(|s| s.parse().unwrap()).collect();
    let l: Vec<f64> = column(&mesh, "lambda").iter().map(|s| s.parse().unwrap()).collect();
    let expect: f64 = -w.iter().zip(&l).map(|(w, l)| l * l / (4.0 * w)).sum::<f64>();
    let e = json(&dir.path().join("sbm-solve/summary.json"))["energy"].as_f64().unwrap();
    assert!((e - expect).abs() < 1e-10, "{e} vs {expect}");
}

#[test]
fn solve_is_reproducible_from_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--alpha", "0.6", "-o", "first"];
    args.extend_from_slice(SMALL);
    assert!(sbm(dir.path(), &args).status.success());
    assert!(sbm(dir.path(), &args).status.success());
    let first = std::fs::read(dir.path().join("first/summary.json")).unwrap();

    let echo = dir.path().join("first/config.toml");
    let echo = echo.to_str().unwrap();
    assert!(sbm(dir.path(), &["solve", "-c", echo, "-o", "second"]).status.success());
    let second = std::fs::read(dir.path().join("second/summary.json")).unwrap();
    assert_eq!(first, second);
    assert_eq!(
        std::fs::read(dir.path().join("first/modes.csv")).unwrap(),
        std::fs::read(dir.path().join("second/modes.csv")).unwrap()
    );
}

#[test]
fn solve_warm_start_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--alpha", "0.6"];
    args.extend_from_slice(SMALL);
    assert!(sbm(dir.path(), &args).status.success());
    let mut again = args.clone();
    again.extend_from_slice(&["--init", "sbm-solve/solution.json", "-o", "warm"]);
    assert!(sbm(dir.path(), &again).status.success());
    let other_mesh = [
        "solve", "--alpha", "0.6", "--M", "5", "--Lambda", "2", "--N", "2", "--starts", "1",
        "--init", "sbm-solve/solution.json", "-o", "mismatch",
    ];
    assert_eq!(sbm(dir.path(), &other_mesh).status.code(), Some(1));
}

#[test]
fn output_root_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_sbm"))
        .args(["discretize", "--M", "3", "-o", "mesh"])
        .current_dir(dir.path())
        .env("SBM_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("mesh/mesh.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--alphas", "0.2,0.4,0.6"];
    args.extend_from_slice(SMALL);
    assert!(sbm(dir.path(), &args).status.success());
    let records = dir.path().join("sbm-sweep/records.csv");
    assert_eq!(column(&records, "alpha").len(), 3);
    for file in column(&records, "modes_file") {
        assert!(dir.path().join("sbm-sweep").join(file).exists());
    }
    let zetas = column(&records, "zeta");
    assert!(zetas.iter().all(|z| (z.parse::<f64>().unwrap() - 1.0).abs() < 1e-6));
}

#[test]
fn converge_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "converge", "--alpha", "0.8", "--Lambda", "2", "--M", "6", "--starts", "3", "--delta", "0.1",
        "--axis", "N", "--values", "1,2,3,4",
    ];
    assert!(sbm(dir.path(), &args).status.success());
    let e: Vec<f64> = column(&dir.path().join("sbm-converge/convergence.csv"), "energy")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(e.len(), 4);
    assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
}

#[test]
fn fit_power_law_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,y\n");
    for i in 1..=10 {
        let x = i as f64 * 0.5;
        csv.push_str(&format!("{x},{}\n", 3.0 * x * x));
    }
    std::fs::write(dir.path().join("data.csv"), csv).unwrap();
    let args = ["fit", "--input", "data.csv", "--x", "x", "--y", "y", "--model", "power"];
    assert!(sbm(dir.path(), &args).status.success());
    let fit = json(&dir.path().join("sbm-fit/fit.json"));
    assert!((fit["params"]["amplitude"].as_f64().unwrap() - 3.0).abs() < 1e-10);
    assert!((fit["params"]["exponent"].as_f64().unwrap() - 2.0).abs() < 1e-10);

    let bad = sbm(dir.path(), &["fit", "--input", "data.csv", "--x", "x", "--y", "zz", "--model", "power"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("'zz'"));
}

#[test]
fn fit_transition_from_records() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("records.csv"),
        "alpha,zeta\n0.98,1.0\n0.99,0.999\n1.00,0.998\n1.01,0.0\n1.02,0.0\n",
    )
    .unwrap();
    let args = ["fit", "--input", "records.csv", "--x", "alpha", "--y", "zeta", "--model", "transition"];
    assert!(sbm(dir.path(), &args).status.success());
    let fit = json(&dir.path().join("sbm-fit/fit.json"));
    assert!((fit["alpha_c"].as_f64().unwrap() - 1.005).abs() < 1e-12);
}

#[test]
fn validate_gate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbm(dir.path(), &["validate", "--trials", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}
