use std::path::PathBuf;

use clap::Args;
use geocontrol_core::reduction::{self, ReducedState};
use geocontrol_core::{dirac, numeric, pmp, CoalgebraElement, PmpSolverConfig, PontryaginPoint, Trajectory};
use serde_json::json;

use crate::args::{check_len, Floats, read_trajectory, Loaded, ProblemArgs};
use crate::report::{finite, input, CliError, CliResult, Summary};

#[derive(Args, Debug)]
pub struct CheckDiracArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Run the random two-form self-test instead of a membership check.
    #[arg(long, conflicts_with_all = ["trajectory", "x0", "p0", "lambda0"])]
    pub self_test: bool,
    /// Number of random forms in the self-test.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Largest dimension of the random forms.
    #[arg(long, default_value_t = 8)]
    pub max_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Full (x, p, u) or reduced (mu, u) trajectory to check row by row.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Point mode, full bundle: state.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<Floats>,
    /// Point mode, full bundle: costate.
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<Floats>,
    /// Point mode, reduced bundle: momentum.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["x0", "p0"])]
    pub lambda0: Option<Floats>,
    /// Point mode: control (defaults to the optimal feedback).
    #[arg(long, allow_hyphen_values = true)]
    pub u0: Option<Floats>,
    /// Point mode: velocity to test, `(ẋ, ṗ)` or `λ̇` (defaults to the PMP vector field).
    #[arg(long, allow_hyphen_values = true)]
    pub velocity: Option<Floats>,
    /// Largest accepted relative membership residual.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn verdict(worst: f64, tol: f64, what: &str) -> CliResult<()> {
    if worst <= tol {
        println!("{what}: max residual {worst:.3e} <= {tol:.1e}: member");
        Ok(())
    } else {
        println!("{what}: max residual {worst:.3e} > {tol:.1e}: not a member");
        Err(CliError::Numerical(format!(
            "membership residual {worst:.3e} exceeds tolerance {tol:.1e}"
        )))
    }
}

pub fn check_dirac(a: &CheckDiracArgs, summary: &mut Summary) -> CliResult<()> {
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return input(format!("--tol must be positive, got {}", a.tol));
    }
    if a.self_test {
        return self_test(a, summary);
    }
    let loaded = a.problem.load()?;
    let cfg = PmpSolverConfig::default();
    summary.set("problem", loaded.name.as_str()).num("tol", a.tol);
    if let Some(path) = &a.trajectory {
        let traj = read_trajectory(path)?;
        return check_trajectory(&loaded, &traj, &cfg, a.tol, summary);
    }
    match (&a.x0, &a.p0, &a.lambda0) {
        (_, Some(p), None) => check_full_point(&loaded, a, p, &cfg, summary),
        (None, None, Some(l)) => check_reduced_point(&loaded, a, l, &cfg, summary),
        _ => input("nothing to check: give --self-test, --trajectory, --p0 [--x0] or --lambda0"),
    }
}

fn self_test(a: &CheckDiracArgs, summary: &mut Summary) -> CliResult<()> {
    if a.trials == 0 || a.max_dim == 0 {
        return input("--trials and --max-dim must be positive");
    }
    let rep = dirac::random_graph_self_test(a.trials, a.max_dim, a.seed);
    println!(
        "self-test: {}/{} Dirac-property passes (random antisymmetric forms, d <= {})",
        rep.passed, rep.trials, a.max_dim
    );
    summary
        .set("mode", "self-test")
        .set("trials", rep.trials)
        .set("passed", rep.passed);
    if rep.passed == rep.trials {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{} random graphs failed the Dirac test", rep.trials - rep.passed)))
    }
}

fn check_trajectory(
    loaded: &Loaded,
    traj: &Trajectory,
    cfg: &PmpSolverConfig,
    tol: f64,
    summary: &mut Summary,
) -> CliResult<()> {
    let (mode, residuals) = if traj.has_block("x") && traj.has_block("p") {
        ("full", pmp::dirac_membership_residuals(&loaded.full, traj, cfg)?)
    } else if traj.has_block("mu") {
        ("reduced", reduction::reduced_membership_residuals(loaded.reduced()?, traj)?)
    } else {
        return input("trajectory has neither (x, p, u) nor mu blocks");
    };
    let worst = max_of(&residuals);
    let row = residuals.iter().position(|r| *r == worst).unwrap_or(0);
    println!("{mode} trajectory: {} rows checked, worst at t = {}", residuals.len(), traj.times[row]);
    summary
        .set("mode", format!("{mode}-trajectory"))
        .set("rows", residuals.len())
        .num("max_residual", worst)
        .num("worst_time", traj.times[row]);
    verdict(worst, tol, "membership")
}

fn check_full_point(
    loaded: &Loaded,
    a: &CheckDiracArgs,
    p: &[f64],
    cfg: &PmpSolverConfig,
    summary: &mut Summary,
) -> CliResult<()> {
    let prob = &loaded.full;
    let (n, r) = (prob.state_dim(), prob.control_dim());
    let x = a.x0.clone().map(|f| f.0).unwrap_or_else(|| vec![0.0; n]);
    check_len("--x0", n, x.len())?;
    check_len("--p0", n, p.len())?;
    let u = match &a.u0 {
        Some(u) => {
            check_len("--u0", r, u.len())?;
            u.0.clone()
        }
        None => pmp::optimal_feedback(prob, &x, p, &vec![0.0; r], cfg)?.u,
    };
    let pt = PontryaginPoint::new(x, p.to_vec(), u.clone());
    let d = prob.hamiltonian_partials(&pt, cfg.fd_step)?;
    let mut v = match &a.velocity {
        Some(v) => {
            check_len("--velocity", 2 * n, v.len())?;
            v.0.clone()
        }
        None => d.dh_dp.iter().copied().chain(d.dh_dx.iter().map(|g| -g)).collect(),
    };
    v.extend(std::iter::repeat_n(0.0, r));
    let alpha: Vec<f64> = d.dh_dx.iter().chain(&d.dh_dp).chain(&d.dh_du).copied().collect();
    let res = dirac::pontryagin_fiber(n, r).relative_residual(&v, &alpha)?;
    let phi = numeric::norm(&d.dh_du);
    println!("control u = {u:?}, |dH/du| = {phi:.3e}");
    summary
        .set("mode", "full-point")
        .set("u", u.iter().map(|v| finite(*v)).collect::<Vec<_>>())
        .num("consistency_residual", phi)
        .num("max_residual", res);
    verdict(res, a.tol, "membership")
}

fn check_reduced_point(
    loaded: &Loaded,
    a: &CheckDiracArgs,
    lambda: &[f64],
    cfg: &PmpSolverConfig,
    summary: &mut Summary,
) -> CliResult<()> {
    let rp = loaded.reduced()?;
    let alg = rp.algebra();
    if rp.base_dim() != 0 {
        return input("reduced point mode supports only fully reduced problems (P = G)");
    }
    check_len("--lambda0", alg.dim(), lambda.len())?;
    let mu = CoalgebraElement(lambda.to_vec());
    let u = match &a.u0 {
        Some(u) => {
            check_len("--u0", rp.control_dim(), u.len())?;
            u.0.clone()
        }
        None => reduction::eliminate_controls_reduced(rp, &[], &[], &mu, &vec![0.0; rp.control_dim()], cfg)?.u,
    };
    let st = ReducedState::on_algebra(mu.clone(), u.clone());
    let rhs = reduction::reduced_pmp_rhs(rp, &st, cfg)?;
    let rate = match &a.velocity {
        Some(v) => {
            check_len("--velocity", alg.dim(), v.len())?;
            CoalgebraElement(v.0.clone())
        }
        None => rhs.mu_dot.clone(),
    };
    let res = reduction::membership_residual_reduced(alg, &mu, &rate, &rhs.xi, rhs.xi.coeffs())?;
    println!("control u = {u:?}, xi = {:?}, lambda dot = {:?}", rhs.xi.coeffs(), rate.coeffs());
    summary
        .set("mode", "reduced-point")
        .set("u", u.iter().map(|v| finite(*v)).collect::<Vec<_>>())
        .num("max_residual", res);
    verdict(res, a.tol, "membership")
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Full trajectory with (x, p, u) blocks.
    #[arg(long)]
    pub full: PathBuf,
    /// Reduced trajectory with a mu block.
    #[arg(long)]
    pub reduced: PathBuf,
    /// Largest accepted deviation.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

const SAME_TIME_TOL: f64 = 1e-12;

pub fn compare(a: &CompareArgs, summary: &mut Summary) -> CliResult<()> {
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return input(format!("--tol must be positive, got {}", a.tol));
    }
    let loaded = a.problem.load()?;
    let full = read_trajectory(&a.full)?;
    let red = read_trajectory(&a.reduced)?;
    for (name, t, blocks) in [("full", &full, &["x", "p", "u"][..]), ("reduced", &red, &["mu"][..])] {
        if t.is_empty() {
            return input(format!("{name} trajectory is empty"));
        }
        if let Some(b) = blocks.iter().find(|b| !t.has_block(b)) {
            return input(format!("{name} trajectory has no `{b}` block"));
        }
    }
    let (f0, f1) = (full.times[0], full.times[full.len() - 1]);
    let (r0, r1) = (red.times[0], red.times[red.len() - 1]);
    let (lo, hi) = (f0.max(r0), f1.min(r1));
    if lo > hi {
        return input(format!(
            "time ranges are disjoint: full [{f0}, {f1}], reduced [{r0}, {r1}]"
        ));
    }
    let same_grid = full.len() == red.len()
        && full.times.iter().zip(&red.times).all(|(a, b)| (a - b).abs() <= SAME_TIME_TOL);
    if !same_grid {
        eprintln!("warning: time grids differ; resampling the reduced trajectory by linear interpolation on [{lo}, {hi}]");
    }
    let mu_range = red.block_range("mu").expect("checked above");
    let u_range = red.block_range("u");
    let mut worst = 0.0f64;
    let mut worst_t = lo;
    let mut compared = 0;
    for i in 0..full.len() {
        let t = full.times[i];
        if t < lo - SAME_TIME_TOL || t > hi + SAME_TIME_TOL {
            continue;
        }
        let state = if same_grid {
            red.states[i].clone()
        } else {
            red.interpolate(t.clamp(r0, r1)).expect("t inside the reduced range").0
        };
        let pt = PontryaginPoint::new(
            full.block_at(i, "x")?.to_vec(),
            full.block_at(i, "p")?.to_vec(),
            full.block_at(i, "u")?.to_vec(),
        );
        let proj = reduction::project_full_to_reduced(&loaded.full, &pt)?;
        check_len("reduced mu block", proj.mu.dim(), mu_range.len())?;
        let mut dev = numeric::max_abs_diff(proj.mu.coeffs(), &state[mu_range.clone()]);
        if let Some(ur) = &u_range {
            check_len("reduced u block", proj.u.len(), ur.len())?;
            dev = dev.max(numeric::max_abs_diff(&proj.u, &state[ur.clone()]));
        }
        if dev > worst || compared == 0 {
            worst = worst.max(dev);
            worst_t = t;
        }
        compared += 1;
    }
    println!(
        "compared {compared} samples on [{lo}, {hi}]{}",
        if same_grid { "" } else { " (interpolated)" }
    );
    println!("max |project(full) - reduced| = {worst:.3e} at t = {worst_t}");
    summary
        .set("problem", loaded.name.as_str())
        .set("samples", compared)
        .set("interpolated", !same_grid)
        .set("range", json!([finite(lo), finite(hi)]))
        .num("max_deviation", worst)
        .num("worst_time", worst_t)
        .num("tol", a.tol);
    if worst <= a.tol {
        println!("trajectories agree within {:.1e}", a.tol);
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "max deviation {worst:.3e} exceeds tolerance {:.1e}",
            a.tol
        )))
    }
}
