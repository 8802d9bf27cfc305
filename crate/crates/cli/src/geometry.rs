use std::path::PathBuf;

use clap::Args;
use geocontrol_core::reconstruct::{self, CircleFit};
use geocontrol_core::reduction;
use geocontrol_core::{AlgebraElement, LieAlgebraSpec, Trajectory};
use serde_json::{json, Value};

use crate::args::{check_len, Floats, read_trajectory, OutputArgs, ProblemArgs};
use crate::report::{finite, input, CliResult, Summary};

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Reduced trajectory (CSV or JSON) with `xi_*` channels or `mu`/`u` blocks.
    #[arg(long)]
    pub input: PathBuf,
    /// Problem supplying the algebra (defaults to the built-in Heisenberg problem).
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Exponential coordinates of the initial group element (defaults to the identity).
    #[arg(long, allow_hyphen_values = true)]
    pub g0: Option<Floats>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn is_heisenberg(alg: &LieAlgebraSpec) -> bool {
    alg.dim() == 3
        && (0..3).all(|i| {
            (0..3).all(|j| {
                (0..3).all(|k| {
                    let expected = match (i, j, k) {
                        (0, 1, 2) => 1.0,
                        (1, 0, 2) => -1.0,
                        _ => 0.0,
                    };
                    alg.c(i, j, k) == expected
                })
            })
        })
}

/// Adds `xi_*` channels computed from the `u` block when the file lacks them.
fn with_velocity_channels(loaded: &crate::args::Loaded, mut traj: Trajectory) -> CliResult<Trajectory> {
    let m = loaded.algebra()?.dim();
    if (1..=m).all(|i| traj.channel(&format!("xi_{i}")).is_some()) {
        return Ok(traj);
    }
    let rp = loaded.reduced()?;
    if !traj.has_block("u") {
        return input("reduced trajectory has neither `xi_*` channels nor a `u` block");
    }
    let mut cols = vec![Vec::with_capacity(traj.len()); m];
    for row in 0..traj.len() {
        let st = reduction::reduced_state_at(rp, &traj, row)?;
        let xi = rp.algebra_velocity(&st.z, &st.u)?;
        for (c, v) in cols.iter_mut().zip(xi.coeffs()) {
            c.push(*v);
        }
    }
    for (i, c) in cols.into_iter().enumerate() {
        traj.channels.insert(format!("xi_{}", i + 1), c);
    }
    Ok(traj)
}

fn circle_json(fit: &CircleFit) -> Value {
    json!({
        "center": [finite(fit.center[0]), finite(fit.center[1])],
        "radius": finite(fit.radius),
        "max_radial_deviation": finite(fit.max_radial_deviation),
    })
}

pub fn reconstruct(a: &ReconstructArgs, summary: &mut Summary) -> CliResult<()> {
    let loaded = a.problem.load_or_heisenberg()?;
    let alg = loaded.algebra()?.clone();
    let m = alg.dim();
    let reduced = with_velocity_channels(&loaded, read_trajectory(&a.input)?)?;
    if reduced.len() > 1 && reduced.uniform_step().is_none() {
        return input("reconstruction needs a uniform time grid");
    }
    let g0_coords = a.g0.clone().map(|f| f.0).unwrap_or_else(|| vec![0.0; m]);
    check_len("--g0", m, g0_coords.len())?;
    let g0 = alg.exp_nilpotent(&AlgebraElement(g0_coords.clone()))?;
    let traj = reconstruct::reconstruct_trajectory(&alg, &g0, &reduced)?;

    println!("rows: {}", traj.len());
    let last = traj.block_at(traj.len() - 1, "q")?;
    println!("final exponential coordinates: {last:?}");
    summary
        .set("rows", traj.len())
        .set("final", last.iter().map(|v| finite(*v)).collect::<Vec<_>>());

    if let Some(s2) = traj.channel("speed2") {
        let d = s2.iter().map(|v| (v - s2[0]).abs()).fold(0.0, f64::max);
        println!("speed |u|^2 = {:.12}, drift {d:.3e}", s2[0]);
        summary.num("speed2", s2[0]).num("speed2_drift", d);
    }

    if is_heisenberg(&alg) {
        let pts: Vec<[f64; 2]> = traj.block_rows("q")?.iter().map(|q| [q[0], q[1]]).collect();
        let spread = pts
            .iter()
            .map(|p| (p[0] - pts[0][0]).hypot(p[1] - pts[0][1]))
            .fold(0.0, f64::max);
        let shape = if spread <= 1e-12 {
            println!("plane projection: constant point");
            json!({ "shape": "point" })
        } else {
            match reconstruct::circle_fit(&pts) {
                Ok(fit) => {
                    println!(
                        "plane projection: circle, center ({:.9}, {:.9}), radius {:.9}, max radial deviation {:.3e}",
                        fit.center[0], fit.center[1], fit.radius, fit.max_radial_deviation
                    );
                    let mut v = circle_json(&fit);
                    v["shape"] = json!("circle");
                    v
                }
                Err(_) => {
                    println!("plane projection: straight line");
                    json!({ "shape": "line" })
                }
            }
        };
        summary.set("projection", shape);
        if reduced.has_block("mu") {
            let mu0 = reduced.block_at(0, "mu")?;
            let (x0, y0) = (g0_coords[0], g0_coords[1]);
            let (a0, b0, k) = (mu0[0], mu0[1], mu0[2]);
            if k != 0.0 {
                let center = [x0 - b0 / k, y0 + a0 / k];
                let radius = a0.hypot(b0) / k.abs();
                let dev = reconstruct::radial_deviation(&traj, center, radius)?;
                println!(
                    "expected circle: center ({:.9}, {:.9}), radius {radius:.9} (= |lambda_12| / |k|), deviation {dev:.3e}",
                    center[0], center[1]
                );
                summary.set(
                    "expected_circle",
                    json!({
                        "center": [finite(center[0]), finite(center[1])],
                        "radius": finite(radius),
                        "max_radial_deviation": finite(dev),
                    }),
                );
            }
        }
    }

    let written = a.output.write(&traj, None)?;
    if let Some(p) = &written {
        println!("wrote {p}");
    }
    summary.set("out", written);
    Ok(())
}
