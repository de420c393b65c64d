use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sbm_core::analysis::{
    convergence_study, detect_transition_from, fit_exponential, fit_log_form, fit_power_law,
    ratio_from_parts, record_from_solution, sweep_alpha, FitResult, FitWindow, ModeProfile,
    SweepConfig, SweepRecord, TransitionEstimate,
};
use sbm_core::ansatz::StateCheckpoint;
use sbm_core::observables::spin_observables;
use sbm_core::optimizer::multi_start_report;
use sbm_core::oracle::{validate_formulas, ValidationReport};
use sbm_core::BathDiscretization;

use crate::config::RunConfig;
use crate::output::{num, opt, OutputDir, Table};
use crate::CliError;

fn sweep_config(cfg: &RunConfig, keep_profiles: bool) -> Result<SweepConfig, CliError> {
    Ok(SweepConfig {
        params: cfg.params()?,
        mesh: cfg.mesh_spec(),
        opts: cfg.optimizer,
        warm_start: cfg.sweep.warm_start,
        degeneracy_tol: cfg.symmetry.degeneracy_tol,
        keep_profiles,
    })
}

fn entropy(cfg: &RunConfig, nats: f64) -> f64 {
    if cfg.output.entropy_bits {
        nats / std::f64::consts::LN_2
    } else {
        nats
    }
}

pub fn mesh_table(bath: &BathDiscretization) -> Table {
    let mut t = Table::new(&["k", "omega", "lambda", "interval_lo", "interval_hi"]);
    for k in 0..bath.mode_count() {
        t.push(vec![
            k.to_string(),
            num(bath.omegas[k]),
            num(bath.lambdas[k]),
            num(bath.interval_lo[k]),
            num(bath.interval_hi[k]),
        ]);
    }
    t
}

#[derive(Serialize)]
struct MeshSummary {
    modes: usize,
    omega_min: f64,
    total_weight: f64,
    reorganization_energy: f64,
    fingerprint: String,
}

pub fn discretize(cfg: &RunConfig, to_stdout: bool) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let bath = cfg.mesh_spec().build(cfg.model.alpha)?;
    let table = mesh_table(&bath);
    let out = OutputDir::create(cfg.output_dir("discretize"))?;
    let path = out.write_csv("mesh.csv", &table)?;
    out.write_json(
        "summary.json",
        &MeshSummary {
            modes: bath.mode_count(),
            omega_min: bath.omega_min,
            total_weight: bath.total_weight(),
            reorganization_energy: bath.reorganization_energy(),
            fingerprint: bath.fingerprint(),
        },
    )?;
    out.write_provenance("discretize", cfg)?;
    if to_stdout {
        print!("{}", std::fs::read_to_string(&path).unwrap_or_default());
    }
    Ok(out.path().to_path_buf())
}

/// Per-mode observables, with the ratio functions at `l = 0` and the top
/// mode.
fn modes_table(profile: &ModeProfile) -> Result<Table, CliError> {
    let m = profile.omegas.len();
    let low = ratio_from_parts(&profile.omegas, &profile.cor_x_low, &profile.delta_x, 0)?;
    let top = ratio_from_parts(&profile.omegas, &profile.cor_x_top, &profile.delta_x, m - 1)?;
    let excess = profile.uncertainty_excess();
    let offset = profile.momentum_offset();
    let mut t = Table::new(&[
        "k",
        "omega",
        "lambda",
        "delta_x",
        "delta_p",
        "uncertainty_excess",
        "momentum_offset",
        "f_bar",
        "g_bar",
        "cor_x_low",
        "cor_p_low",
        "cor_x_top",
        "cor_p_top",
        "ratio_low",
        "ratio_top",
    ]);
    let at = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map(|v| v[k]);
    for k in 0..m {
        t.push(vec![
            k.to_string(),
            num(profile.omegas[k]),
            num(profile.lambdas[k]),
            num(profile.delta_x[k]),
            num(profile.delta_p[k]),
            num(excess[k]),
            num(offset[k]),
            opt(at(&profile.f_bar, k)),
            opt(at(&profile.g_bar, k)),
            opt(profile.cor_x_low[k]),
            opt(profile.cor_p_low[k]),
            opt(profile.cor_x_top[k]),
            opt(profile.cor_p_top[k]),
            opt(low.ratio[k]),
            opt(top.ratio[k]),
        ]);
    }
    Ok(t)
}

#[derive(Serialize)]
struct SolveSummary {
    alpha: f64,
    epsilon: f64,
    delta: f64,
    modes: usize,
    n_states: usize,
    omega_min: f64,
    mesh_fingerprint: String,
    energy: f64,
    zeta: f64,
    parity: f64,
    sigma_z: f64,
    sigma_x: f64,
    sigma_y: f64,
    entropy: f64,
    entropy_unit: &'static str,
    grad_norm: f64,
    converged: bool,
    iterations: usize,
    start_index: usize,
    master_seed: u64,
    restart_seed: Option<u64>,
    annealed: bool,
    parity_partner_energy: f64,
    restarts: usize,
    restarts_converged: usize,
}

#[derive(Serialize)]
struct FailureReport<'a> {
    error: &'a str,
    best_energy: Option<f64>,
    best_grad_norm: Option<f64>,
    restarts: usize,
}

pub fn solve(cfg: &RunConfig, init: Option<&Path>) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let params = cfg.params()?;
    let bath = cfg.mesh_spec().build(cfg.model.alpha)?;
    let warm = match init {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let ckpt: StateCheckpoint = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad checkpoint {}: {e}", path.display())))?;
            vec![ckpt.restore(&bath)?]
        }
        None => Vec::new(),
    };
    let out = OutputDir::create(cfg.output_dir("solve"))?;
    out.write_provenance("solve", cfg)?;

    let report = multi_start_report(&params, &bath, &cfg.optimizer, &warm)?;
    let restarts = report.restarts.len();
    let restarts_converged = report.restarts.iter().filter(|r| r.converged).count();
    let Some(sol) = report.best_converged else {
        let msg = "no restart reached the gradient tolerance";
        out.write_json(
            "failure.json",
            &FailureReport {
                error: msg,
                best_energy: report.best_any.as_ref().map(|s| s.energy),
                best_grad_norm: report.best_any.as_ref().map(|s| s.grad_norm),
                restarts,
            },
        )?;
        return Err(CliError::Runtime(msg.into()));
    };

    let checkpoint = StateCheckpoint::new(&sol.state, sol.restart_seed, &bath);
    out.write_json("solution.json", &checkpoint)?;
    let spin = spin_observables(&sol.state)?;
    let record = record_from_solution(cfg.model.alpha, sol.clone(), &bath, &sweep_config(cfg, true)?)?;
    let profile = record.profile.as_ref().expect("profile requested");
    out.write_csv("modes.csv", &modes_table(profile)?)?;
    out.write_json(
        "summary.json",
        &SolveSummary {
            alpha: cfg.model.alpha,
            epsilon: params.epsilon,
            delta: params.delta,
            modes: bath.mode_count(),
            n_states: sol.state.n(),
            omega_min: bath.omega_min,
            mesh_fingerprint: bath.fingerprint(),
            energy: sol.energy,
            zeta: record.zeta,
            parity: record.parity,
            sigma_z: spin.sigma_z,
            sigma_x: spin.sigma_x,
            sigma_y: spin.sigma_y,
            entropy: entropy(cfg, spin.entropy),
            entropy_unit: if cfg.output.entropy_bits { "bits" } else { "nats" },
            grad_norm: sol.grad_norm,
            converged: sol.converged,
            iterations: sol.iterations,
            start_index: sol.start_index,
            master_seed: sol.master_seed,
            restart_seed: sol.restart_seed,
            annealed: sol.annealed,
            parity_partner_energy: sol.parity_partner_energy,
            restarts,
            restarts_converged,
        },
    )?;
    println!(
        "E = {} zeta = {} <sz> = {} ({} of {restarts} restarts converged)",
        num(sol.energy),
        num(record.zeta),
        num(spin.sigma_z),
        restarts_converged
    );
    Ok(out.path().to_path_buf())
}

pub fn records_table(cfg: &RunConfig, records: &[SweepRecord]) -> Table {
    let mut t = Table::new(&[
        "alpha",
        "energy",
        "zeta",
        "parity",
        "sigma_z",
        "sigma_x",
        "entropy",
        "grad_norm",
        "converged",
        "iterations",
        "start_index",
        "band",
        "modes_file",
    ]);
    for r in records {
        t.push(vec![
            num(r.alpha),
            num(r.energy),
            num(r.zeta),
            num(r.parity),
            num(r.sigma_z),
            num(r.sigma_x),
            num(entropy(cfg, r.entropy)),
            num(r.grad_norm),
            r.converged.to_string(),
            r.iterations.to_string(),
            r.start_index.to_string(),
            format!("{:?}", r.band).to_lowercase(),
            r.modes_file.clone().unwrap_or_default(),
        ]);
    }
    t
}

#[derive(Serialize)]
struct SweepSummary {
    points: usize,
    unconverged: Vec<f64>,
    transition: Option<TransitionEstimate>,
    omega_min: f64,
}

pub fn sweep(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let alphas = cfg.sweep.grid()?;
    let out = OutputDir::create(cfg.output_dir("sweep"))?;
    out.write_provenance("sweep", cfg)?;
    let mut records = sweep_alpha(&alphas, &sweep_config(cfg, cfg.sweep.write_modes)?)?;
    for r in records.iter_mut() {
        if let Some(profile) = &r.profile {
            let name = format!("modes/alpha_{:.6}.csv", r.alpha);
            out.write_csv(&name, &modes_table(profile)?)?;
            r.modes_file = Some(name);
        }
    }
    out.write_csv("records.csv", &records_table(cfg, &records))?;
    let unconverged: Vec<f64> = records.iter().filter(|r| !r.converged).map(|r| r.alpha).collect();
    if !unconverged.is_empty() {
        log::warn!("unconverged points at alpha = {unconverged:?}");
    }
    let zetas: Vec<f64> = records.iter().map(|r| r.zeta).collect();
    let transition = detect_transition_from(&alphas, &zetas)?;
    if let Some(t) = &transition {
        println!("alpha_c = {} +- {}", num(t.alpha_c), num(t.uncertainty));
    } else {
        println!("no symmetric-to-broken jump on this grid");
    }
    out.write_json(
        "summary.json",
        &SweepSummary {
            points: records.len(),
            unconverged,
            transition,
            omega_min: cfg.mesh_spec().build(alphas[0])?.omega_min,
        },
    )?;
    Ok(out.path().to_path_buf())
}

pub fn converge(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let out = OutputDir::create(cfg.output_dir("converge"))?;
    out.write_provenance("converge", cfg)?;
    let study = convergence_study(
        &cfg.params()?,
        cfg.model.alpha,
        &cfg.mesh_spec(),
        cfg.converge.axis,
        &cfg.converge.values,
        &cfg.optimizer,
    )?;
    let mut t = Table::new(&["value", "energy", "shift", "grad_norm", "converged"]);
    for r in &study.rows {
        t.push(vec![
            r.value.to_string(),
            num(r.energy),
            num(r.shift),
            num(r.grad_norm),
            r.converged.to_string(),
        ]);
    }
    out.write_csv("convergence.csv", &t)?;
    out.write_json("summary.json", &study)?;
    if let Some(fit) = &study.fit {
        println!("shift ~ exp(-{} x)", num(fit.param("rate")));
    }
    Ok(out.path().to_path_buf())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Power,
    Exponential,
    Logform,
    /// Locate the ζ jump in a sweep's records.
    Transition,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRequest {
    pub input: PathBuf,
    pub x: String,
    pub y: String,
    pub model: FitKind,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum FitOutcome {
    Curve(FitResult),
    Transition(Option<TransitionEstimate>),
}

/// Reads two numeric columns, skipping rows where either is empty.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: bad header: {e}", path.display())))?
        .clone();
    let index = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("{}: missing column '{name}'", path.display()))
        })
    };
    let (ix, iy) = (index(x)?, index(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let parse = |i: usize, name: &str| -> Result<Option<f64>, CliError> {
            let field = rec.get(i).unwrap_or("").trim();
            if field.is_empty() {
                return Ok(None);
            }
            field.parse::<f64>().map(Some).map_err(|_| {
                CliError::Usage(format!(
                    "{}: column '{name}' row {} is not a number: '{field}'",
                    path.display(),
                    line + 1
                ))
            })
        };
        if let (Some(a), Some(b)) = (parse(ix, x)?, parse(iy, y)?) {
            xs.push(a);
            ys.push(b);
        }
    }
    Ok((xs, ys))
}

pub fn fit(req: &FitRequest, out_dir: PathBuf) -> Result<PathBuf, CliError> {
    let (xs, ys) = read_columns(&req.input, &req.x, &req.y)?;
    let window = FitWindow {
        lo: req.x_min,
        hi: req.x_max,
    };
    let outcome = match req.model {
        FitKind::Power => FitOutcome::Curve(fit_power_law(&xs, &ys, &window)?),
        FitKind::Exponential => FitOutcome::Curve(fit_exponential(&xs, &ys, &window)?),
        FitKind::Logform => {
            let (wx, wy): (Vec<f64>, Vec<f64>) = xs
                .iter()
                .zip(&ys)
                .filter(|(x, _)| window.contains(**x))
                .map(|(x, y)| (*x, *y))
                .unzip();
            FitOutcome::Curve(fit_log_form(&wx, &wy)?)
        }
        FitKind::Transition => FitOutcome::Transition(detect_transition_from(&xs, &ys)?),
    };
    let out = OutputDir::create(out_dir)?;
    out.write_json("fit.json", &outcome)?;
    let mut meta = BTreeMap::new();
    meta.insert("request", serde_json::to_value(req).expect("request serializes"));
    meta.insert("version", env!("CARGO_PKG_VERSION").into());
    out.write_json("metadata.json", &meta)?;
    match &outcome {
        FitOutcome::Curve(f) => {
            let params: Vec<String> = f.params.iter().map(|(k, v)| format!("{k} = {}", num(*v))).collect();
            println!("{} ({} points, residual {})", params.join(", "), f.points, num(f.residual));
        }
        FitOutcome::Transition(Some(t)) => println!("alpha_c = {} +- {}", num(t.alpha_c), num(t.uncertainty)),
        FitOutcome::Transition(None) => println!("no transition in the data"),
    }
    Ok(out.path().to_path_buf())
}

pub fn validate(trials: usize, n_max: usize, seed: u64, tol: f64, out_dir: PathBuf) -> Result<PathBuf, CliError> {
    let report: ValidationReport = validate_formulas(trials, n_max, seed)?;
    let out = OutputDir::create(out_dir)?;
    out.write_json("validate.json", &report)?;
    let verdict = if report.max_deviation <= tol { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: max deviation {} over {trials} states ({}), tolerance {}",
        num(report.max_deviation),
        report.worst,
        num(tol)
    );
    if report.max_deviation > tol {
        return Err(CliError::Runtime("closed forms disagree with the oracle".into()));
    }
    Ok(out.path().to_path_buf())
}
