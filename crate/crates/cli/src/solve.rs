use std::path::{Path, PathBuf};

use clap::Args;
use geocontrol_core::reduction::{self, ReducedState};
use geocontrol_core::{numeric, pmp, CoalgebraElement, PmpSolverConfig, Trajectory};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{check_len, Floats, IntegrationArgs, Loaded, OutputArgs, ProblemArgs};
use crate::report::{finite, input, CliError, CliResult, Summary};

#[derive(Args, Debug)]
pub struct SolvePmpArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Initial state (defaults to the origin).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<Floats>,
    /// Initial costate.
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Floats,
    /// Initial guess for the optimal control (defaults to zero).
    #[arg(long, allow_hyphen_values = true)]
    pub u0: Option<Floats>,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn drift(values: &[f64]) -> f64 {
    values.first().map_or(0.0, |v0| {
        values.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max)
    })
}

pub fn solve_pmp(a: &SolvePmpArgs, summary: &mut Summary) -> CliResult<()> {
    let loaded = a.problem.load()?;
    let prob = &loaded.full;
    let n = prob.state_dim();
    let cfg = a.integration.config()?;
    let x0 = a.x0.clone().map(|f| f.0).unwrap_or_else(|| vec![0.0; n]);
    check_len("--x0", n, x0.len())?;
    check_len("--p0", n, a.p0.len())?;
    if let Some(u) = &a.u0 {
        check_len("--u0", prob.control_dim(), u.len())?;
    }
    let traj = pmp::integrate_pmp(prob, &x0, &a.p0, a.u0.as_ref().map(|u| u.0.as_slice()), a.integration.t_final, &cfg)?;

    let h_drift = drift(traj.channel("H").unwrap_or(&[]));
    println!("problem: {}", loaded.name);
    println!("rows: {}", traj.len());
    println!("H(0) = {:.15e}, H drift = {h_drift:.3e}", traj.channel("H").map_or(f64::NAN, |h| h[0]));
    let mut momentum = Vec::new();
    let d = prob.symmetry().map_or(0, |s| s.algebra().dim());
    for i in 1..=d {
        let name = format!("J_{i}");
        let dj = drift(traj.channel(&name).unwrap_or(&[]));
        println!("{name} drift = {dj:.3e}");
        momentum.push(finite(dj));
    }
    let written = a.output.write(&traj, None)?;
    if let Some(p) = &written {
        println!("wrote {p}");
    }
    summary
        .set("problem", loaded.name.as_str())
        .set("rows", traj.len())
        .num("t_final", a.integration.t_final)
        .num("step", cfg.rk_step)
        .num("h_drift", h_drift)
        .set("momentum_drift", momentum)
        .set("out", written);
    Ok(())
}

#[derive(Args, Debug)]
pub struct SolveReducedArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Initial momentum in the dual basis.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["theta", "k"])]
    pub lambda0: Option<Floats>,
    /// Angle shortcut: lambda0 = (cos theta, sin theta, k). Accepts a comma list for sweeps.
    #[arg(long, allow_hyphen_values = true, requires = "k")]
    pub theta: Option<Floats>,
    /// Vertical momentum for the shortcut. Accepts a comma list for sweeps.
    #[arg(long, allow_hyphen_values = true, requires = "theta")]
    pub k: Option<Floats>,
    /// Initial guess for the optimal control (defaults to zero).
    #[arg(long, allow_hyphen_values = true)]
    pub u0: Option<Floats>,
    /// Worker threads for parameter sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

struct ReducedRun {
    label: Value,
    lambda0: Vec<f64>,
    out: Option<PathBuf>,
}

/// Largest deviation from `λ(t)`, where `(λ₁ + iλ₂)` rotates at rate `λ₃`.
fn heisenberg_closed_form_error(traj: &Trajectory, lambda0: &[f64]) -> CliResult<f64> {
    let (a, b, k) = (lambda0[0], lambda0[1], lambda0[2]);
    let mut worst = 0.0f64;
    for (i, t) in traj.times.iter().enumerate() {
        let (s, c) = (k * t).sin_cos();
        let exact = [a * c - b * s, a * s + b * c, k];
        worst = worst.max(numeric::max_abs_diff(traj.block_at(i, "mu")?, &exact));
    }
    Ok(worst)
}

fn indexed_path(base: &Path, idx: usize) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{idx}.{ext}"),
        None => format!("{stem}_{idx}"),
    };
    base.with_file_name(name)
}

fn plan_runs(a: &SolveReducedArgs, m: usize) -> CliResult<Vec<ReducedRun>> {
    let mut runs = Vec::new();
    match (&a.lambda0, &a.theta, &a.k) {
        (Some(l), _, _) => {
            check_len("--lambda0", m, l.len())?;
            runs.push(ReducedRun {
                label: json!({ "lambda0": &l.0 }),
                lambda0: l.0.clone(),
                out: None,
            });
        }
        (None, Some(thetas), Some(ks)) => {
            if m != 3 {
                return input(format!("--theta/--k need a three-dimensional algebra, this one has dimension {m}"));
            }
            if thetas.is_empty() || ks.is_empty() {
                return input("--theta and --k need at least one value each");
            }
            for &theta in thetas.iter() {
                for &k in ks.iter() {
                    runs.push(ReducedRun {
                        label: json!({ "theta": theta, "k": k }),
                        lambda0: vec![theta.cos(), theta.sin(), k],
                        out: None,
                    });
                }
            }
        }
        _ => return input("no initial momentum: give --lambda0 or both --theta and --k"),
    }
    if let (Some(base), true) = (&a.output.out, runs.len() > 1) {
        for (i, r) in runs.iter_mut().enumerate() {
            r.out = Some(indexed_path(base, i));
        }
    }
    Ok(runs)
}

fn run_reduced(
    loaded: &Loaded,
    a: &SolveReducedArgs,
    cfg: &PmpSolverConfig,
    run: &ReducedRun,
) -> CliResult<Value> {
    let rp = loaded.reduced()?;
    let u0 = a.u0.clone().map(|f| f.0).unwrap_or_else(|| vec![0.0; rp.control_dim()]);
    check_len("--u0", rp.control_dim(), u0.len())?;
    if rp.base_dim() != 0 {
        return input("solve-reduced supports only fully reduced problems (P = G)");
    }
    let st0 = ReducedState::on_algebra(CoalgebraElement(run.lambda0.clone()), u0);
    let traj = reduction::integrate_reduced(rp, &st0, a.integration.t_final, cfg)?;
    let mut r = run.label.clone();
    let obj = r.as_object_mut().expect("label is an object");
    obj.insert("rows".into(), json!(traj.len()));
    obj.insert("h_drift".into(), finite(drift(traj.channel("h").unwrap_or(&[]))));
    let casimirs: serde_json::Map<String, Value> = rp
        .casimirs()
        .iter()
        .map(|c| (c.name.clone(), finite(drift(traj.channel(&c.name).unwrap_or(&[])))))
        .collect();
    obj.insert("casimir_drift".into(), Value::Object(casimirs));
    if loaded.builtin_heisenberg {
        obj.insert(
            "closed_form_error".into(),
            finite(heisenberg_closed_form_error(&traj, &run.lambda0)?),
        );
    }
    let written = a.output.write(&traj, run.out.as_deref())?;
    obj.insert("out".into(), json!(written));
    Ok(r)
}

pub fn solve_reduced(a: &SolveReducedArgs, summary: &mut Summary) -> CliResult<()> {
    let loaded = a.problem.load()?;
    let m = loaded.algebra()?.dim();
    let cfg = a.integration.config()?;
    let runs = plan_runs(a, m)?;
    if a.jobs == 0 {
        return input("--jobs must be at least 1");
    }
    let results: Vec<CliResult<Value>> = if runs.len() > 1 && a.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
        pool.install(|| runs.par_iter().map(|r| run_reduced(&loaded, a, &cfg, r)).collect())
    } else {
        runs.iter().map(|r| run_reduced(&loaded, a, &cfg, r)).collect()
    };
    let results = results.into_iter().collect::<CliResult<Vec<Value>>>()?;

    println!("problem: {}", loaded.name);
    let mut worst: Option<f64> = None;
    for r in &results {
        let mut line = format!("{}: rows {}, h drift {:.3e}", label_text(r), r["rows"], r["h_drift"].as_f64().unwrap_or(f64::NAN));
        if let Some(Value::Object(c)) = r.get("casimir_drift") {
            for (name, v) in c {
                line.push_str(&format!(", {name} drift {:.3e}", v.as_f64().unwrap_or(f64::NAN)));
            }
        }
        if let Some(e) = r.get("closed_form_error").and_then(Value::as_f64) {
            line.push_str(&format!(", closed-form error {e:.3e}"));
            worst = Some(worst.map_or(e, |w: f64| w.max(e)));
        }
        if let Some(p) = r.get("out").and_then(Value::as_str) {
            line.push_str(&format!(", wrote {p}"));
        }
        println!("{line}");
    }
    if let Some(w) = worst {
        println!("max closed-form error: {w:.3e}");
    }
    summary
        .set("problem", loaded.name.as_str())
        .num("t_final", a.integration.t_final)
        .num("step", cfg.rk_step)
        .set("runs", results);
    if let Some(w) = worst {
        summary.num("max_closed_form_error", w);
    }
    Ok(())
}

fn label_text(r: &Value) -> String {
    match (r.get("theta"), r.get("k"), r.get("lambda0")) {
        (Some(t), Some(k), _) => format!("theta={t} k={k}"),
        (_, _, Some(l)) => format!("lambda0={l}"),
        _ => "run".into(),
    }
}
