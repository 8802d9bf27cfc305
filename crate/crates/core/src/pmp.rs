//! Presymplectic PMP for regular problems: the controls are eliminated on the
//! constraint set `∂H_P/∂u = 0` by Newton's method at every Runge-Kutta stage,
//! which turns the differential-algebraic system into an ODE on `(x, p)`.

use nalgebra::{DMatrix, DVector};

use crate::dirac;
use crate::error::{check_len, Error, Result};
use crate::lie::CoalgebraElement;
use crate::numeric;
use crate::ocp::{ControlProblem, PontryaginPoint};
use crate::trajectory::{StateBlock, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct PmpSolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub rk_step: f64,
    /// Base step of the 5-point finite-difference stencils.
    pub fd_step: f64,
    pub regularity_rank_tol: f64,
    /// Largest relative change of the optimal control between consecutive
    /// stages before it is reported as a branch switch.
    pub branch_jump_tol: f64,
}

impl Default for PmpSolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            newton_max_iter: 50,
            rk_step: 1e-3,
            fd_step: 1e-3,
            regularity_rank_tol: 1e-9,
            branch_jump_tol: 0.5,
        }
    }
}

impl PmpSolverConfig {
    pub fn with_step(mut self, step: f64) -> Self {
        self.rk_step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("rk_step", self.rk_step),
            ("fd_step", self.fd_step),
            ("regularity_rank_tol", self.regularity_rank_tol),
            ("branch_jump_tol", self.branch_jump_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Converged optimal control.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Sign of `det W` at the solution; used to detect branch switches.
    pub hessian_sign: f64,
}

/// `φ_a = ∂H_P/∂u^a`.
pub fn consistency_residual(
    prob: &ControlProblem,
    pt: &PontryaginPoint,
    cfg: &PmpSolverConfig,
) -> Result<Vec<f64>> {
    Ok(prob.hamiltonian_partials(pt, cfg.fd_step)?.dh_du)
}

/// Smallest singular value of `W = ∂²H_P/∂u²` (infinite when there are no
/// controls).
pub fn control_hessian_sigma_min(
    prob: &ControlProblem,
    pt: &PontryaginPoint,
    cfg: &PmpSolverConfig,
) -> Result<f64> {
    let w = prob.hamiltonian_partials(pt, cfg.fd_step)?.d2h_du2;
    Ok(numeric::smallest_singular_value(&w))
}

/// True iff `W` has full rank at `pt`, i.e. its smallest singular value
/// exceeds `regularity_rank_tol`.
pub fn regularity_check(
    prob: &ControlProblem,
    pt: &PontryaginPoint,
    cfg: &PmpSolverConfig,
) -> Result<bool> {
    Ok(control_hessian_sigma_min(prob, pt, cfg)? > cfg.regularity_rank_tol)
}

/// Solves `φ(x, p, u) = 0` for `u` by Newton's method from `u_guess`.
pub fn optimal_feedback(
    prob: &ControlProblem,
    x: &[f64],
    p: &[f64],
    u_guess: &[f64],
    cfg: &PmpSolverConfig,
) -> Result<Feedback> {
    check_len("control guess", prob.control_dim(), u_guess.len())?;
    newton_controls(u_guess, cfg, |u| {
        let pt = PontryaginPoint::new(x.to_vec(), p.to_vec(), u.to_vec());
        let d = prob.hamiltonian_partials(&pt, cfg.fd_step)?;
        Ok((d.dh_du, d.d2h_du2))
    })
}

/// Newton iteration on a control gradient. `partials(u)` returns the gradient
/// and its Jacobian. The iteration count is the number of updates taken.
pub(crate) fn newton_controls<F>(u_guess: &[f64], cfg: &PmpSolverConfig, mut partials: F) -> Result<Feedback>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>,
{
    let mut u = u_guess.to_vec();
    let mut iterations = 0;
    loop {
        let (grad, w) = partials(&u)?;
        let residual = numeric::norm(&grad);
        let sigma_min = numeric::smallest_singular_value(&w);
        if !u.is_empty() && !(sigma_min > cfg.regularity_rank_tol) {
            return Err(Error::Regularity { sigma_min });
        }
        if residual <= cfg.newton_tol {
            return Ok(Feedback {
                u,
                iterations,
                residual,
                hessian_sign: det_sign(&w),
            });
        }
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        let delta = w
            .lu()
            .solve(&DVector::from_column_slice(&grad))
            .ok_or(Error::Regularity { sigma_min })?;
        for (ui, du) in u.iter_mut().zip(delta.iter()) {
            *ui -= du;
        }
        iterations += 1;
    }
}

fn det_sign(w: &DMatrix<f64>) -> f64 {
    if w.nrows() == 0 {
        1.0
    } else {
        w.determinant().signum()
    }
}

/// Tracks one branch of `φ = 0` along a trajectory: each accepted control
/// seeds the next solve, and jumps or sign changes of `det W` are rejected.
pub(crate) struct BranchTracker<'a> {
    cfg: &'a PmpSolverConfig,
    last_u: Vec<f64>,
    sign: Option<f64>,
}

impl<'a> BranchTracker<'a> {
    pub(crate) fn new(cfg: &'a PmpSolverConfig, u_guess: Vec<f64>) -> Self {
        Self {
            cfg,
            last_u: u_guess,
            sign: None,
        }
    }

    /// Solves from the tracked control. When that fails after the branch has
    /// been established, probes widely spaced starts so that a jump to
    /// another root is reported as a branch switch rather than a stall.
    pub(crate) fn solve<F>(&mut self, mut newton: F) -> Result<Feedback>
    where
        F: FnMut(&[f64]) -> Result<Feedback>,
    {
        let first = newton(&self.last_u);
        let err = match first {
            Ok(fb) => return self.accept(fb),
            Err(e) if self.sign.is_none() || !e.is_numerical() => return Err(e),
            Err(e) => e,
        };
        let scale = 1.0 + self.last_u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.last_u.len() {
            for mult in [1.0, -1.0, 2.0, -2.0, 4.0, -4.0] {
                let mut start = self.last_u.clone();
                start[i] += mult * scale;
                if let Ok(fb) = newton(&start) {
                    return self.accept(fb);
                }
            }
        }
        Err(err)
    }

    pub(crate) fn accept(&mut self, fb: Feedback) -> Result<Feedback> {
        if self.sign.is_some() {
            let scale = 1.0 + self.last_u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if numeric::max_abs_diff(&fb.u, &self.last_u) / scale > self.cfg.branch_jump_tol {
                return Err(Error::BranchSwitch(format!(
                    "control jumped from {:?} to {:?}",
                    self.last_u, fb.u
                )));
            }
        }
        if self.sign.is_some_and(|s| s != fb.hessian_sign) {
            return Err(Error::BranchSwitch(
                "control Hessian changed sign between stages".into(),
            ));
        }
        self.sign = Some(fb.hessian_sign);
        self.last_u = fb.u.clone();
        Ok(fb)
    }
}

/// Integrates `ẋ = ∂H_P/∂p, ṗ = −∂H_P/∂x` with classical RK4, re-solving the
/// optimal control at every stage.
///
/// Rows hold `(x, p, u*)`. Channels: `H` and, with a symmetry, the momentum
/// map components `J_1 … J_d`.
pub fn integrate_pmp(
    prob: &ControlProblem,
    x0: &[f64],
    p0: &[f64],
    u_guess: Option<&[f64]>,
    t_final: f64,
    cfg: &PmpSolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = prob.state_dim();
    let r = prob.control_dim();
    check_len("initial state", n, x0.len())?;
    check_len("initial costate", n, p0.len())?;
    let guess = match u_guess {
        Some(u) => {
            check_len("control guess", r, u.len())?;
            u.to_vec()
        }
        None => vec![0.0; r],
    };
    let (steps, h) = numeric::time_grid(t_final, cfg.rk_step)?;

    let mut tracker = BranchTracker::new(cfg, guess);
    let mut solve = |x: &[f64], p: &[f64]| -> Result<Feedback> {
        tracker.solve(|guess| optimal_feedback(prob, x, p, guess, cfg))
    };
    let mut traj = Trajectory::new(vec![
        StateBlock::new("x", n),
        StateBlock::new("p", n),
        StateBlock::new("u", r),
    ]);
    let at = |time: f64| move |e: Error| Error::FeedbackAt {
        time,
        source: Box::new(e),
    };

    let mut y: Vec<f64> = x0.iter().chain(p0).copied().collect();
    let fb = solve(&y[..n], &y[n..]).map_err(at(0.0))?;
    record_row(prob, &mut traj, 0.0, &y, &fb.u)?;

    for k in 0..steps {
        let t = k as f64 * h;
        y = numeric::rk4_step(&y, t, h, |ts, ys| {
            let fb = solve(&ys[..n], &ys[n..]).map_err(at(ts))?;
            let pt = PontryaginPoint::new(ys[..n].to_vec(), ys[n..].to_vec(), fb.u);
            let d = prob.hamiltonian_partials(&pt, cfg.fd_step).map_err(at(ts))?;
            Ok(d.dh_dp.into_iter().chain(d.dh_dx.into_iter().map(|v| -v)).collect())
        })?;
        let t_next = if k + 1 == steps { t_final } else { (k + 1) as f64 * h };
        let fb = solve(&y[..n], &y[n..]).map_err(at(t_next))?;
        record_row(prob, &mut traj, t_next, &y, &fb.u)?;
    }
    Ok(traj)
}

fn record_row(
    prob: &ControlProblem,
    traj: &mut Trajectory,
    t: f64,
    y: &[f64],
    u: &[f64],
) -> Result<()> {
    let n = prob.state_dim();
    let pt = PontryaginPoint::new(y[..n].to_vec(), y[n..].to_vec(), u.to_vec());
    traj.push_channel("H", prob.pontryagin_hamiltonian(&pt)?);
    if let Some(sym) = prob.symmetry() {
        let j = sym.momentum(&pt.x, &pt.p)?;
        for (i, v) in j.coeffs().iter().enumerate() {
            traj.push_channel(&format!("J_{}", i + 1), *v);
        }
    }
    let mut row = y.to_vec();
    row.extend_from_slice(u);
    traj.push(t, row);
    Ok(())
}

/// `J_M(x, p)`: component `i` is `⟨p, (e_i)_P(x)⟩`.
pub fn momentum_map(prob: &ControlProblem, x: &[f64], p: &[f64]) -> Result<CoalgebraElement> {
    let sym = prob.symmetry().ok_or(Error::MissingSymmetry)?;
    check_len("state", prob.state_dim(), x.len())?;
    sym.momentum(x, p)
}

/// The Lagrange-Pontryagin functional
/// `∫ L(x, u) + ⟨p, ẋ − f(x, u)⟩ dt` by the composite trapezoid rule, with `ẋ`
/// taken from fourth-order differences of the stored states.
pub fn lagrange_pontryagin_action(prob: &ControlProblem, traj: &Trajectory) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::invalid(
            "the action needs a trajectory with at least two samples",
        ));
    }
    let dt = traj
        .uniform_step()
        .ok_or_else(|| Error::invalid("the action needs a uniform time grid"))?;
    let xs = traj.block_rows("x")?;
    let ps = traj.block_rows("p")?;
    let us = traj.block_rows("u")?;
    let owned: Vec<Vec<f64>> = xs.iter().map(|r| r.to_vec()).collect();
    let xdot = numeric::sampled_derivative(&owned, dt);
    let integrand = (0..traj.len())
        .map(|i| {
            let f = prob.dynamics(xs[i], us[i])?;
            let l = prob.lagrangian(xs[i], us[i])?;
            let slack: f64 = (0..f.len()).map(|j| ps[i][j] * (xdot[i][j] - f[j])).sum();
            Ok(l + slack)
        })
        .collect::<Result<Vec<f64>>>()?;
    let inner: f64 = integrand[1..integrand.len() - 1].iter().sum();
    Ok(dt * (0.5 * (integrand[0] + integrand[integrand.len() - 1]) + inner))
}

/// Least-squares residuals of `((ẋ, ṗ, 0), dH_P) ∈ D_Ω` at every row of a full
/// trajectory, with velocities from fourth-order differences of the stored
/// rows. Residuals are relative: distance divided by `1 + ‖(v, α)‖`.
pub fn dirac_membership_residuals(
    prob: &ControlProblem,
    traj: &Trajectory,
    cfg: &PmpSolverConfig,
) -> Result<Vec<f64>> {
    let n = prob.state_dim();
    let r = prob.control_dim();
    if traj.len() < 2 {
        return Err(Error::invalid("membership check needs at least two samples"));
    }
    let dt = traj
        .uniform_step()
        .ok_or_else(|| Error::invalid("membership check needs a uniform time grid"))?;
    let xs = traj.block_rows("x")?;
    let ps = traj.block_rows("p")?;
    let us = traj.block_rows("u")?;
    check_len("trajectory state block", n, xs[0].len())?;
    check_len("trajectory control block", r, us[0].len())?;
    let xp: Vec<Vec<f64>> = xs.iter().zip(&ps).map(|(x, p)| [*x, *p].concat()).collect();
    let vel = numeric::sampled_derivative(&xp, dt);
    let fiber = dirac::pontryagin_fiber(n, r);
    (0..traj.len())
        .map(|i| {
            let pt = PontryaginPoint::new(xs[i].to_vec(), ps[i].to_vec(), us[i].to_vec());
            let d = prob.hamiltonian_partials(&pt, cfg.fd_step)?;
            let mut v = vel[i].clone();
            v.extend(std::iter::repeat_n(0.0, r));
            let alpha: Vec<f64> = d.dh_dx.iter().chain(&d.dh_dp).chain(&d.dh_du).copied().collect();
            fiber.relative_residual(&v, &alpha)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg;
    use std::sync::Arc;

    fn cfg() -> PmpSolverConfig {
        PmpSolverConfig::default()
    }

    #[test]
    fn residual_examples() {
        let p = heisenberg::problem();
        let pt = PontryaginPoint::new(vec![0.0; 3], vec![0.0; 3], vec![1.0, 1.0]);
        assert_eq!(consistency_residual(&p, &pt, &cfg()).unwrap(), vec![-1.0, -1.0]);

        let x = vec![0.7, -0.2, 1.0];
        let lam = vec![0.4, 1.1, -0.6];
        let sym = p.symmetry().unwrap();
        let u: Vec<f64> = (0..2)
            .map(|a| crate::ocp::dot(&lam, &sym.left_invariant_field(a, &x).unwrap()))
            .collect();
        let r = consistency_residual(&p, &PontryaginPoint::new(x, lam, u), &cfg()).unwrap();
        assert!(numeric::norm(&r) <= 1e-12);
    }

    #[test]
    fn regularity_examples() {
        let p = heisenberg::problem();
        let pt = PontryaginPoint::new(vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3], vec![0.0, 0.0]);
        assert!(regularity_check(&p, &pt, &cfg()).unwrap());
        assert_eq!(control_hessian_sigma_min(&p, &pt, &cfg()).unwrap(), 1.0);

        let linear = ControlProblem::new(
            "linear",
            1,
            1,
            Arc::new(|_, u| Ok(vec![u[0]])),
            Arc::new(|_, u| Ok(2.0 * u[0])),
        );
        let pt = PontryaginPoint::new(vec![0.0], vec![1.0], vec![0.3]);
        assert!(!regularity_check(&linear, &pt, &cfg()).unwrap());
        assert!(matches!(
            optimal_feedback(&linear, &[0.0], &[1.0], &[0.0], &cfg()),
            Err(Error::Regularity { .. })
        ));

        let uncontrolled = ControlProblem::new(
            "drift",
            1,
            0,
            Arc::new(|x, _| Ok(vec![-x[0]])),
            Arc::new(|x, _| Ok(x[0] * x[0])),
        );
        let pt = PontryaginPoint::new(vec![0.5], vec![1.0], vec![]);
        assert!(regularity_check(&uncontrolled, &pt, &cfg()).unwrap());
    }

    #[test]
    fn feedback_examples() {
        let p = heisenberg::problem();
        let th = 0.9f64;
        let fb = optimal_feedback(&p, &[0.0; 3], &[th.cos(), th.sin(), 2.0], &[0.0, 0.0], &cfg())
            .unwrap();
        assert_eq!(fb.iterations, 1);
        assert!((fb.u[0] - th.cos()).abs() < 1e-15 && (fb.u[1] - th.sin()).abs() < 1e-15);

        let again = optimal_feedback(&p, &[0.0; 3], &[th.cos(), th.sin(), 2.0], &fb.u, &cfg())
            .unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.u, fb.u);

        let zero = optimal_feedback(&p, &[0.0; 3], &[0.0; 3], &[0.3, -0.2], &cfg()).unwrap();
        assert_eq!(zero.u, vec![0.0, 0.0]);
    }

    #[test]
    fn feedback_no_convergence() {
        // φ = p − u³ has a root but Newton needs many steps from far away.
        let prob = ControlProblem::new(
            "cubic",
            1,
            1,
            Arc::new(|_, u| Ok(vec![u[0]])),
            Arc::new(|_, u| Ok(u[0].powi(4) / 4.0)),
        );
        let cfg = PmpSolverConfig {
            newton_max_iter: 2,
            ..cfg()
        };
        let err = optimal_feedback(&prob, &[0.0], &[8.0], &[100.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, .. }));
    }

    #[test]
    fn zero_horizon_is_single_row() {
        let p = heisenberg::problem();
        let tr = integrate_pmp(&p, &[0.0; 3], &[1.0, 0.0, 1.0], None, 0.0, &cfg()).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.states[0], vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_horizon_or_step() {
        let p = heisenberg::problem();
        assert!(integrate_pmp(&p, &[0.0; 3], &[1.0, 0.0, 1.0], None, -1.0, &cfg()).is_err());
        let bad = cfg().with_step(0.0);
        assert!(integrate_pmp(&p, &[0.0; 3], &[1.0, 0.0, 1.0], None, 1.0, &bad).is_err());
        assert!(integrate_pmp(&p, &[0.0; 3], &[1.0, 0.0], None, 1.0, &cfg()).is_err());
    }

    #[test]
    fn hamiltonian_and_casimir_conserved() {
        let p = heisenberg::problem();
        let k = 1.3;
        let tr = integrate_pmp(&p, &[0.0; 3], &[1.0, 0.0, k], None, 2.0, &cfg()).unwrap();
        let h = tr.channel("H").unwrap();
        assert!(h.iter().all(|v| (v - 0.5).abs() <= 1e-6));
        for row in tr.block_rows("p").unwrap() {
            assert!((row[2] - k).abs() <= 1e-9);
        }
        let j3 = tr.channel("J_3").unwrap();
        assert!(j3.iter().all(|v| (v - k).abs() <= 1e-9));
        for i in 0..tr.len() {
            let pt = PontryaginPoint::new(
                tr.block_at(i, "x").unwrap().to_vec(),
                tr.block_at(i, "p").unwrap().to_vec(),
                tr.block_at(i, "u").unwrap().to_vec(),
            );
            let r = consistency_residual(&p, &pt, &cfg()).unwrap();
            assert!(numeric::norm(&r) <= 10.0 * cfg().newton_tol);
        }
    }

    #[test]
    fn branch_switch_is_reported() {
        // φ = p·1 − u·(u² − 1)-like cubic with two stable branches; forcing
        // p through the fold makes the tracked root jump.
        let prob = ControlProblem::new(
            "fold",
            1,
            1,
            Arc::new(|_, _| Ok(vec![1.0])),
            Arc::new(|x, u| Ok(u[0].powi(4) / 4.0 - u[0] * u[0] / 2.0 - x[0] * u[0])),
        );
        // ẋ = 1 sweeps x; φ = x + u − u³. Starting on the u ≈ −1 branch with
        // x from 0 past the fold at x = 2/(3√3) forces a jump to u > 1.
        let err = integrate_pmp(&prob, &[0.0], &[0.0], Some(&[-1.0]), 1.0, &cfg().with_step(0.01))
            .unwrap_err();
        match err {
            Error::FeedbackAt { source, .. } => {
                assert!(matches!(*source, Error::BranchSwitch(_) | Error::Regularity { .. }), "{source:?}")
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn action_examples() {
        let p = heisenberg::problem();
        let tr = integrate_pmp(&p, &[0.0; 3], &[0.6, 0.8, 1.0], None, 1.0, &cfg()).unwrap();
        let s = lagrange_pontryagin_action(&p, &tr).unwrap();
        assert!((s - 0.5).abs() <= 1e-4, "{s}");

        let coarse = integrate_pmp(&p, &[0.0; 3], &[0.6, 0.8, 1.0], None, 1.0, &cfg().with_step(2e-3))
            .unwrap();
        let s2 = lagrange_pontryagin_action(&p, &coarse).unwrap();
        assert!((s - s2).abs() <= 4e-6);

        let mut zero = Trajectory::new(tr.blocks.clone());
        zero.push(0.0, vec![0.0; 8]);
        zero.push(0.5, vec![0.0; 8]);
        zero.push(1.0, vec![0.0; 8]);
        assert_eq!(lagrange_pontryagin_action(&p, &zero).unwrap(), 0.0);

        let mut single = Trajectory::new(tr.blocks.clone());
        single.push(0.0, vec![0.0; 8]);
        assert!(lagrange_pontryagin_action(&p, &single).is_err());
    }

    #[test]
    fn momentum_map_examples() {
        let p = heisenberg::problem();
        assert_eq!(
            momentum_map(&p, &[0.3, 0.2, 0.1], &[0.0; 3]).unwrap(),
            CoalgebraElement::zeros(3)
        );
        let pc = [0.5, -1.5, 2.0];
        let j = momentum_map(&p, &[0.0; 3], &pc).unwrap();
        let sym = p.symmetry().unwrap();
        for i in 0..3 {
            let e = crate::ocp::dot(&pc, &sym.generator(i, &[0.0; 3]).unwrap());
            assert!((j.coeffs()[i] - e).abs() < 1e-15);
        }
        assert!(momentum_map(&heisenberg_without_symmetry(), &[0.0; 3], &pc).is_err());
    }

    fn heisenberg_without_symmetry() -> ControlProblem {
        ControlProblem::new(
            "plain",
            3,
            2,
            Arc::new(|x, u| Ok(vec![u[0], u[1], (x[0] * u[1] - x[1] * u[0]) / 2.0])),
            Arc::new(|_, u| Ok(0.5 * (u[0] * u[0] + u[1] * u[1]))),
        )
    }

    #[test]
    fn dirac_membership_along_trajectory() {
        let p = heisenberg::problem();
        let step = 1e-3;
        let tr = integrate_pmp(&p, &[0.0; 3], &[0.0, 1.0, 0.7], None, 1.0, &cfg().with_step(step))
            .unwrap();
        let res = dirac_membership_residuals(&p, &tr, &cfg()).unwrap();
        let worst = res.iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(worst <= 10.0 * step.powi(4), "{worst:e}");
    }
}
