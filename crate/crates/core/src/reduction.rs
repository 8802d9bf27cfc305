//! Reduced PMP on `T*(P/G) ⊕ 𝔤̃* ⊕ Ũ`.
//!
//! With reduced Hamiltonian `h = ⟨p_z, Γ̃(z,u)⟩ + ⟨μ, γ̃(z,u)⟩ − l(z,u)` the
//! equations integrated here are
//!
//! ```text
//! ż   = ∂h/∂p_z
//! ṗ_z = −∂h/∂z − F_A(ż, ·)
//! μ̇   = ± ad*_ξ μ,   ξ = ∂h/∂μ
//! 0   = ∂h/∂u
//! ```
//!
//! Covariant derivatives are plain coordinate derivatives in the user's
//! trivialization. The sign of the coadjoint term is a per-problem setting.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;

use crate::dirac;
use crate::error::{check_len, Error, Result};
use crate::lie::{AlgebraElement, CoalgebraElement, LieAlgebraSpec};
use crate::numeric;
use crate::ocp::{dot, random_vec, ControlProblem, GroupAction, PontryaginPoint};
use crate::pmp::{newton_controls, BranchTracker, Feedback, PmpSolverConfig};
use crate::trajectory::{StateBlock, Trajectory};

pub type ReducedScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;
pub type ReducedBaseFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type ReducedAlgebraFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<AlgebraElement> + Send + Sync>;
/// `F(z, μ, v, w)`: the curvature term paired with `μ`, bilinear and
/// antisymmetric in `(v, w)`.
pub type CurvatureFn =
    Arc<dyn Fn(&[f64], &CoalgebraElement, &[f64], &[f64]) -> Result<f64> + Send + Sync>;
/// `(∂h/∂u, ∂²h/∂u²)` at a state.
pub type ReducedControlDerivativesFn =
    Arc<dyn Fn(&ReducedState) -> (Vec<f64>, DMatrix<f64>) + Send + Sync>;
pub type CasimirFn = Arc<dyn Fn(&CoalgebraElement) -> f64 + Send + Sync>;

const CURVATURE_TOL: f64 = 1e-12;
const CURVATURE_PROBES: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoadjointSign {
    /// `μ̇ = ad*_ξ μ`.
    #[default]
    Plus,
    /// `μ̇ = −ad*_ξ μ`.
    Minus,
}

impl CoadjointSign {
    pub fn factor(self) -> f64 {
        match self {
            CoadjointSign::Plus => 1.0,
            CoadjointSign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub z: Vec<f64>,
    pub p_z: Vec<f64>,
    pub mu: CoalgebraElement,
    pub u: Vec<f64>,
}

impl ReducedState {
    /// State with no base coordinates.
    pub fn on_algebra(mu: CoalgebraElement, u: Vec<f64>) -> Self {
        Self {
            z: Vec::new(),
            p_z: Vec::new(),
            mu,
            u,
        }
    }
}

#[derive(Clone)]
pub struct Casimir {
    pub name: String,
    pub f: CasimirFn,
}

#[derive(Clone)]
pub struct ReducedProblem {
    name: String,
    s: usize,
    algebra: LieAlgebraSpec,
    r: usize,
    lagrangian: ReducedScalarFn,
    base_dynamics: ReducedBaseFn,
    algebra_dynamics: ReducedAlgebraFn,
    curvature: Option<CurvatureFn>,
    control_derivatives: Option<ReducedControlDerivativesFn>,
    casimirs: Vec<Casimir>,
    sign: CoadjointSign,
}

impl fmt::Debug for ReducedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedProblem")
            .field("name", &self.name)
            .field("base_dim", &self.s)
            .field("algebra_dim", &self.algebra.dim())
            .field("control_dim", &self.r)
            .field("curvature", &self.curvature.is_some())
            .field("casimirs", &self.casimirs.iter().map(|c| &c.name).collect::<Vec<_>>())
            .field("sign", &self.sign)
            .finish()
    }
}

/// Right-hand side of the reduced equations at a state whose controls are
/// already eliminated.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedRhs {
    pub z_dot: Vec<f64>,
    pub p_z_dot: Vec<f64>,
    pub mu_dot: CoalgebraElement,
    pub xi: AlgebraElement,
}

impl ReducedProblem {
    pub fn new(
        name: &str,
        base_dim: usize,
        algebra: LieAlgebraSpec,
        control_dim: usize,
        lagrangian: ReducedScalarFn,
        base_dynamics: ReducedBaseFn,
        algebra_dynamics: ReducedAlgebraFn,
    ) -> Self {
        Self {
            name: name.to_string(),
            s: base_dim,
            algebra,
            r: control_dim,
            lagrangian,
            base_dynamics,
            algebra_dynamics,
            curvature: None,
            control_derivatives: None,
            casimirs: Vec::new(),
            sign: CoadjointSign::default(),
        }
    }

    /// Attaches a curvature term after checking antisymmetry on random probes.
    pub fn with_curvature(mut self, f: CurvatureFn) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..CURVATURE_PROBES {
            let z = random_vec(&mut rng, self.s, 1.0);
            let mu = CoalgebraElement(random_vec(&mut rng, self.algebra.dim(), 1.0));
            let v = random_vec(&mut rng, self.s, 1.0);
            let w = random_vec(&mut rng, self.s, 1.0);
            let a = f(&z, &mu, &v, &w)?;
            let b = f(&z, &mu, &w, &v)?;
            if !((a + b).abs() <= CURVATURE_TOL * (1.0 + a.abs())) {
                return Err(Error::invalid(format!(
                    "curvature is not antisymmetric: F(v,w) = {a}, F(w,v) = {b}"
                )));
            }
        }
        self.curvature = Some(f);
        Ok(self)
    }

    pub fn with_control_derivatives(mut self, f: ReducedControlDerivativesFn) -> Self {
        self.control_derivatives = Some(f);
        self
    }

    pub fn with_casimir(mut self, name: &str, f: CasimirFn) -> Self {
        self.casimirs.push(Casimir {
            name: name.to_string(),
            f,
        });
        self
    }

    pub fn with_coadjoint_sign(mut self, sign: CoadjointSign) -> Self {
        self.sign = sign;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_dim(&self) -> usize {
        self.s
    }

    pub fn algebra(&self) -> &LieAlgebraSpec {
        &self.algebra
    }

    pub fn control_dim(&self) -> usize {
        self.r
    }

    pub fn coadjoint_sign(&self) -> CoadjointSign {
        self.sign
    }

    pub fn casimirs(&self) -> &[Casimir] {
        &self.casimirs
    }

    pub fn check_state(&self, st: &ReducedState) -> Result<()> {
        check_len("reduced base point", self.s, st.z.len())?;
        check_len("reduced base costate", self.s, st.p_z.len())?;
        check_len("reduced momentum", self.algebra.dim(), st.mu.dim())?;
        check_len("reduced control", self.r, st.u.len())
    }

    fn evaluation_error(st: &ReducedState, reason: String) -> Error {
        Error::Evaluation {
            point: format!("z={:?} p_z={:?} mu={:?} u={:?}", st.z, st.p_z, st.mu.coeffs(), st.u),
            reason,
        }
    }

    /// `Γ̃(z, u)` with a length check.
    pub fn base_velocity(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let v = (self.base_dynamics)(z, u)?;
        check_len("reduced base dynamics output", self.s, v.len())?;
        Ok(v)
    }

    /// `γ̃(z, u)` with a length check.
    pub fn algebra_velocity(&self, z: &[f64], u: &[f64]) -> Result<AlgebraElement> {
        let v = (self.algebra_dynamics)(z, u)?;
        check_len("reduced algebra dynamics output", self.algebra.dim(), v.dim())?;
        Ok(v)
    }

    fn h_parts(&self, z: &[f64], p_z: &[f64], mu: &CoalgebraElement, u: &[f64]) -> Result<f64> {
        let gamma = self.base_velocity(z, u)?;
        let xi = self.algebra_velocity(z, u)?;
        let l = (self.lagrangian)(z, u)?;
        Ok(dot(p_z, &gamma) + dot(mu.coeffs(), xi.coeffs()) - l)
    }

    /// Curvature covector `F_A(v, ·)` at `(z, μ)`; zero when no curvature was
    /// supplied.
    pub fn curvature_covector(&self, z: &[f64], mu: &CoalgebraElement, v: &[f64]) -> Result<Vec<f64>> {
        match &self.curvature {
            None => Ok(vec![0.0; self.s]),
            Some(f) => (0..self.s)
                .map(|j| {
                    let mut e = vec![0.0; self.s];
                    e[j] = 1.0;
                    f(z, mu, v, &e)
                })
                .collect(),
        }
    }

    /// `∂h/∂u` and `∂²h/∂u²`, analytic when supplied, otherwise 5-point and
    /// second differences with step `fd_step·(1 + |u_a|)`.
    pub fn control_partials(&self, st: &ReducedState, fd_step: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if let Some(f) = &self.control_derivatives {
            let (g, w) = f(st);
            check_len("reduced control gradient", self.r, g.len())?;
            return Ok((g, w));
        }
        let h = |u: &[f64]| self.h_parts(&st.z, &st.p_z, &st.mu, u);
        let g = numeric::gradient_5pt(h, &st.u, fd_step)?;
        let w = numeric::hessian_fd(h, &st.u, fd_step)?;
        Ok((g, w))
    }
}

/// `h = ⟨p_z, Γ̃⟩ + ⟨μ, γ̃⟩ − l`.
pub fn reduced_hamiltonian(rp: &ReducedProblem, st: &ReducedState) -> Result<f64> {
    rp.check_state(st)?;
    let h = rp.h_parts(&st.z, &st.p_z, &st.mu, &st.u)?;
    if !h.is_finite() {
        return Err(ReducedProblem::evaluation_error(st, "non-finite reduced Hamiltonian".into()));
    }
    Ok(h)
}

/// Solves `∂h/∂u = 0` by Newton's method from `u_guess`.
pub fn eliminate_controls_reduced(
    rp: &ReducedProblem,
    z: &[f64],
    p_z: &[f64],
    mu: &CoalgebraElement,
    u_guess: &[f64],
    cfg: &PmpSolverConfig,
) -> Result<Feedback> {
    let mut st = ReducedState {
        z: z.to_vec(),
        p_z: p_z.to_vec(),
        mu: mu.clone(),
        u: u_guess.to_vec(),
    };
    rp.check_state(&st)?;
    newton_controls(u_guess, cfg, |u| {
        st.u.copy_from_slice(u);
        rp.control_partials(&st, cfg.fd_step)
    })
}

/// Evaluates the reduced equations at a state with eliminated controls.
pub fn reduced_pmp_rhs(rp: &ReducedProblem, st: &ReducedState, cfg: &PmpSolverConfig) -> Result<ReducedRhs> {
    rp.check_state(st)?;
    let z_dot = rp.base_velocity(&st.z, &st.u)?;
    let xi = rp.algebra_velocity(&st.z, &st.u)?;
    let dh_dz = numeric::gradient_5pt(
        |z| rp.h_parts(z, &st.p_z, &st.mu, &st.u),
        &st.z,
        cfg.fd_step,
    )?;
    let curv = rp.curvature_covector(&st.z, &st.mu, &z_dot)?;
    let p_z_dot = dh_dz.iter().zip(&curv).map(|(a, b)| -a - b).collect();
    let mu_dot = rp.algebra.coadjoint(&xi, &st.mu)?.scaled(rp.sign.factor());
    let out = ReducedRhs {
        z_dot,
        p_z_dot,
        mu_dot,
        xi,
    };
    let finite = numeric::all_finite(&out.z_dot)
        && numeric::all_finite(&out.p_z_dot)
        && numeric::all_finite(out.mu_dot.coeffs());
    if !finite {
        return Err(ReducedProblem::evaluation_error(st, "non-finite reduced vector field".into()));
    }
    Ok(out)
}

fn reduced_blocks(rp: &ReducedProblem) -> Vec<StateBlock> {
    let mut blocks = Vec::new();
    if rp.s > 0 {
        blocks.push(StateBlock::new("z", rp.s));
        blocks.push(StateBlock::new("p_z", rp.s));
    }
    blocks.push(StateBlock::new("mu", rp.algebra.dim()));
    blocks.push(StateBlock::new("u", rp.r));
    blocks
}

fn split_state(rp: &ReducedProblem, y: &[f64], u: Vec<f64>) -> ReducedState {
    let s = rp.s;
    ReducedState {
        z: y[..s].to_vec(),
        p_z: y[s..2 * s].to_vec(),
        mu: CoalgebraElement(y[2 * s..].to_vec()),
        u,
    }
}

/// RK4 integration of the reduced equations with per-stage control
/// elimination. Rows hold `(z, p_z, μ, u*)` (the base blocks are omitted when
/// `s = 0`). Channels: `h`, `xi_1 … xi_m`, and one per registered Casimir.
pub fn integrate_reduced(
    rp: &ReducedProblem,
    st0: &ReducedState,
    t_final: f64,
    cfg: &PmpSolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    rp.check_state(st0)?;
    let (steps, h) = numeric::time_grid(t_final, cfg.rk_step)?;
    let mut tracker = BranchTracker::new(cfg, st0.u.clone());
    let mut solve = |y: &[f64]| -> Result<ReducedState> {
        let st = split_state(rp, y, Vec::new());
        let fb = tracker.solve(|guess| eliminate_controls_reduced(rp, &st.z, &st.p_z, &st.mu, guess, cfg))?;
        Ok(ReducedState { u: fb.u, ..st })
    };
    let at = |time: f64| {
        move |e: Error| Error::FeedbackAt {
            time,
            source: Box::new(e),
        }
    };

    let mut traj = Trajectory::new(reduced_blocks(rp));
    let mut y: Vec<f64> = st0
        .z
        .iter()
        .chain(&st0.p_z)
        .chain(st0.mu.coeffs())
        .copied()
        .collect();
    let st = solve(&y).map_err(at(0.0))?;
    record_reduced(rp, &mut traj, 0.0, &st)?;
    for k in 0..steps {
        let t = k as f64 * h;
        y = numeric::rk4_step(&y, t, h, |ts, ys| {
            let st = solve(ys).map_err(at(ts))?;
            let rhs = reduced_pmp_rhs(rp, &st, cfg).map_err(at(ts))?;
            Ok(rhs
                .z_dot
                .into_iter()
                .chain(rhs.p_z_dot)
                .chain(rhs.mu_dot.0)
                .collect())
        })?;
        let t_next = if k + 1 == steps { t_final } else { (k + 1) as f64 * h };
        let st = solve(&y).map_err(at(t_next))?;
        record_reduced(rp, &mut traj, t_next, &st)?;
    }
    Ok(traj)
}

fn record_reduced(rp: &ReducedProblem, traj: &mut Trajectory, t: f64, st: &ReducedState) -> Result<()> {
    traj.push_channel("h", reduced_hamiltonian(rp, st)?);
    let xi = rp.algebra_velocity(&st.z, &st.u)?;
    for (i, v) in xi.coeffs().iter().enumerate() {
        traj.push_channel(&format!("xi_{}", i + 1), *v);
    }
    for c in &rp.casimirs {
        traj.push_channel(&c.name, (c.f)(&st.mu));
    }
    let row = st
        .z
        .iter()
        .chain(&st.p_z)
        .chain(st.mu.coeffs())
        .chain(&st.u)
        .copied()
        .collect();
    traj.push(t, row);
    Ok(())
}

/// Reads a reduced trajectory row back into a state.
pub fn reduced_state_at(rp: &ReducedProblem, traj: &Trajectory, row: usize) -> Result<ReducedState> {
    let block = |name: &'static str, len: usize| -> Result<Vec<f64>> {
        if len == 0 && !traj.has_block(name) {
            Ok(Vec::new())
        } else {
            let v = traj.block_at(row, name)?.to_vec();
            check_len(name, len, v.len())?;
            Ok(v)
        }
    };
    Ok(ReducedState {
        z: block("z", rp.s)?,
        p_z: block("p_z", rp.s)?,
        mu: CoalgebraElement(block("mu", rp.algebra.dim())?),
        u: block("u", rp.r)?,
    })
}

/// Projects a full Pontryagin point to the reduced bundle. Only `P = G` with
/// the left-translation action is supported: `z` and `p_z` are empty and
/// `μ = L_g^* p` is the body momentum.
pub fn project_full_to_reduced(prob: &ControlProblem, pt: &PontryaginPoint) -> Result<ReducedState> {
    let sym = prob.symmetry().ok_or(Error::MissingSymmetry)?;
    if !matches!(sym.action(), GroupAction::LeftTranslation) {
        return Err(Error::UnsupportedBundle(
            "only P = G with the left-translation action can be projected".into(),
        ));
    }
    prob.check_point(pt)?;
    Ok(ReducedState::on_algebra(sym.body_momentum(&pt.x, &pt.p)?, pt.u.clone()))
}

/// Builds the reduced problem of a left-invariant problem on a group
/// (`P = G`): `γ̃(u)` is `f(e, u)` read in the left-invariant frame at the
/// identity and `l(u) = L(e, u)`.
pub fn from_left_invariant(prob: &ControlProblem) -> Result<ReducedProblem> {
    let sym = prob.symmetry().ok_or(Error::MissingSymmetry)?;
    if !matches!(sym.action(), GroupAction::LeftTranslation) {
        return Err(Error::UnsupportedBundle(
            "reduction from a full problem needs P = G with the left-translation action".into(),
        ));
    }
    let n = prob.state_dim();
    let origin = vec![0.0; n];
    let frame = sym.left_frame(&origin)?;
    let inverse = frame
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("left-invariant frame at the identity is singular"))?;
    let dyn_prob = prob.clone();
    let lag_prob = prob.clone();
    let o1 = origin.clone();
    let o2 = origin;
    Ok(ReducedProblem::new(
        prob.name(),
        0,
        sym.algebra().clone(),
        prob.control_dim(),
        Arc::new(move |_, u| lag_prob.lagrangian(&o1, u)),
        Arc::new(|_, _| Ok(Vec::new())),
        Arc::new(move |_, u| {
            let f = dyn_prob.dynamics(&o2, u)?;
            let xi = &inverse * nalgebra::DVector::from_column_slice(&f);
            Ok(AlgebraElement(xi.iter().copied().collect()))
        }),
    ))
}

/// `((ξ, λ̇), (0, ∂h/∂μ)) ∈ [D_G]_G(λ)` within `tol`.
pub fn membership_check_reduced(
    alg: &LieAlgebraSpec,
    lambda: &CoalgebraElement,
    lambda_dot: &CoalgebraElement,
    xi: &AlgebraElement,
    dh_dmu: &[f64],
    tol: f64,
) -> Result<bool> {
    Ok(membership_residual_reduced(alg, lambda, lambda_dot, xi, dh_dmu)? <= tol)
}

pub fn membership_residual_reduced(
    alg: &LieAlgebraSpec,
    lambda: &CoalgebraElement,
    lambda_dot: &CoalgebraElement,
    xi: &AlgebraElement,
    dh_dmu: &[f64],
) -> Result<f64> {
    let m = alg.dim();
    check_len("momentum rate", m, lambda_dot.dim())?;
    check_len("algebra velocity", m, xi.dim())?;
    check_len("dh/dmu", m, dh_dmu.len())?;
    let fiber = dirac::reduced_dirac_fiber(alg, lambda)?;
    let v: Vec<f64> = xi.coeffs().iter().chain(lambda_dot.coeffs()).copied().collect();
    let alpha: Vec<f64> = std::iter::repeat_n(0.0, m).chain(dh_dmu.iter().copied()).collect();
    fiber.relative_residual(&v, &alpha)
}

/// Membership residual at every row of a reduced trajectory, with `λ̇` taken
/// from fourth-order differences of the stored momenta.
pub fn reduced_membership_residuals(rp: &ReducedProblem, traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.len() < 2 {
        return Err(Error::invalid("membership check needs at least two samples"));
    }
    let dt = traj
        .uniform_step()
        .ok_or_else(|| Error::invalid("membership check needs a uniform time grid"))?;
    let mus: Vec<Vec<f64>> = traj.block_rows("mu")?.iter().map(|r| r.to_vec()).collect();
    let rates = numeric::sampled_derivative(&mus, dt);
    (0..traj.len())
        .map(|i| {
            let st = reduced_state_at(rp, traj, i)?;
            let xi = rp.algebra_velocity(&st.z, &st.u)?;
            membership_residual_reduced(
                &rp.algebra,
                &st.mu,
                &CoalgebraElement(rates[i].clone()),
                &xi,
                xi.coeffs(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg;
    use std::f64::consts::PI;

    fn cfg() -> PmpSolverConfig {
        PmpSolverConfig::default()
    }

    fn heis_state(l: [f64; 3], u: [f64; 2]) -> ReducedState {
        ReducedState::on_algebra(CoalgebraElement(l.to_vec()), u.to_vec())
    }

    #[test]
    fn hamiltonian_examples() {
        let rp = heisenberg::reduced_problem();
        let st = heis_state([0.3, -1.2, 2.0], [0.5, 0.25]);
        let expected = 0.3 * 0.5 - 1.2 * 0.25 - (0.25 + 0.0625) / 2.0;
        assert!((reduced_hamiltonian(&rp, &st).unwrap() - expected).abs() < 1e-15);
        let elim = heis_state([0.3, -1.2, 2.0], [0.3, -1.2]);
        assert!((reduced_hamiltonian(&rp, &elim).unwrap() - (0.09 + 1.44) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_base_only() {
        let rp = ReducedProblem::new(
            "base",
            2,
            LieAlgebraSpec::abelian(1),
            1,
            Arc::new(|_, _| Ok(0.0)),
            Arc::new(|z, u| Ok(vec![z[1] + u[0], -z[0]])),
            Arc::new(|_, _| Ok(AlgebraElement(vec![0.0]))),
        );
        let st = ReducedState {
            z: vec![1.0, 2.0],
            p_z: vec![3.0, -1.0],
            mu: CoalgebraElement(vec![5.0]),
            u: vec![0.5],
        };
        assert_eq!(reduced_hamiltonian(&rp, &st).unwrap(), 3.0 * 2.5 + 1.0);
        let bad = ReducedState { z: vec![1.0], ..st };
        assert!(reduced_hamiltonian(&rp, &bad).is_err());
    }

    #[test]
    fn control_elimination() {
        let rp = heisenberg::reduced_problem();
        let mu = CoalgebraElement(vec![0.6, -0.8, 3.0]);
        let fb = eliminate_controls_reduced(&rp, &[], &[], &mu, &[0.0, 0.0], &cfg()).unwrap();
        assert_eq!(fb.u, vec![0.6, -0.8]);
        let again = eliminate_controls_reduced(&rp, &[], &[], &mu, &fb.u, &cfg()).unwrap();
        assert_eq!(again.iterations, 0);
        let zero =
            eliminate_controls_reduced(&rp, &[], &[], &CoalgebraElement::zeros(3), &[1.0, 1.0], &cfg())
                .unwrap();
        assert_eq!(zero.u, vec![0.0, 0.0]);

        // Same answer through finite differences.
        let plain = ReducedProblem::new(
            "fd",
            0,
            LieAlgebraSpec::heisenberg(),
            2,
            Arc::new(|_, u| Ok(0.5 * (u[0] * u[0] + u[1] * u[1]))),
            Arc::new(|_, _| Ok(Vec::new())),
            Arc::new(|_, u| Ok(AlgebraElement(vec![u[0], u[1], 0.0]))),
        );
        let fd = eliminate_controls_reduced(&plain, &[], &[], &mu, &[0.0, 0.0], &cfg()).unwrap();
        assert!(numeric::max_abs_diff(&fd.u, &[0.6, -0.8]) < 1e-12);
    }

    #[test]
    fn rhs_examples() {
        let rp = heisenberg::reduced_problem();
        let k = 1.7;
        let r = reduced_pmp_rhs(&rp, &heis_state([1.0, 0.0, k], [1.0, 0.0]), &cfg()).unwrap();
        assert_eq!(r.xi, AlgebraElement(vec![1.0, 0.0, 0.0]));
        assert_eq!(r.mu_dot, CoalgebraElement(vec![0.0, k, 0.0]));
        let eq = reduced_pmp_rhs(&rp, &heis_state([0.0, 0.0, k], [0.0, 0.0]), &cfg()).unwrap();
        assert_eq!(eq.xi, AlgebraElement::zeros(3));
        assert!(eq.mu_dot.coeffs().iter().all(|v| *v == 0.0));

        let flipped = heisenberg::reduced_problem().with_coadjoint_sign(CoadjointSign::Minus);
        let r = reduced_pmp_rhs(&flipped, &heis_state([1.0, 0.0, k], [1.0, 0.0]), &cfg()).unwrap();
        assert_eq!(r.mu_dot, CoalgebraElement(vec![0.0, -k, 0.0]));
    }

    #[test]
    fn abelian_reduces_to_hamilton() {
        // Harmonic oscillator on the base, a free particle on the fiber.
        let rp = ReducedProblem::new(
            "osc",
            1,
            LieAlgebraSpec::abelian(1),
            1,
            Arc::new(|z, u| Ok(0.5 * (u[0] * u[0] + z[0] * z[0]))),
            Arc::new(|_, u| Ok(vec![u[0]])),
            Arc::new(|_, _| Ok(AlgebraElement(vec![1.0]))),
        );
        let st = ReducedState {
            z: vec![0.4],
            p_z: vec![-0.3],
            mu: CoalgebraElement(vec![2.0]),
            u: vec![-0.3],
        };
        let r = reduced_pmp_rhs(&rp, &st, &cfg()).unwrap();
        assert!((r.z_dot[0] + 0.3).abs() < 1e-14);
        assert!((r.p_z_dot[0] - 0.4).abs() < 1e-10);
        assert_eq!(r.mu_dot, CoalgebraElement(vec![0.0]));
    }

    #[test]
    fn curvature_enters_costate() {
        let base = || {
            ReducedProblem::new(
                "curved",
                2,
                LieAlgebraSpec::abelian(1),
                2,
                Arc::new(|_, u| Ok(0.5 * (u[0] * u[0] + u[1] * u[1]))),
                Arc::new(|_, u| Ok(u.to_vec())),
                Arc::new(|_, _| Ok(AlgebraElement(vec![0.0]))),
            )
        };
        let rp = base()
            .with_curvature(Arc::new(|_, mu, v, w| Ok(mu.coeffs()[0] * (v[0] * w[1] - v[1] * w[0]))))
            .unwrap();
        let st = ReducedState {
            z: vec![0.0, 0.0],
            p_z: vec![1.0, 0.0],
            mu: CoalgebraElement(vec![2.0]),
            u: vec![1.0, 0.0],
        };
        let r = reduced_pmp_rhs(&rp, &st, &cfg()).unwrap();
        assert!((r.p_z_dot[0]).abs() < 1e-12);
        assert!((r.p_z_dot[1] + 2.0).abs() < 1e-12);
        assert!(base()
            .with_curvature(Arc::new(|_, _, v, w| Ok(v[0] * w[0])))
            .is_err());
    }

    #[test]
    fn closed_form_momentum() {
        let rp = heisenberg::reduced_problem();
        let (theta, k) = (0.4, 1.3);
        let st0 = ReducedState::on_algebra(heisenberg::initial_momentum(theta, k), vec![0.0, 0.0]);
        let tr = integrate_reduced(&rp, &st0, 2.0 * PI, &cfg()).unwrap();
        let mut worst = 0.0f64;
        for (i, t) in tr.times.iter().enumerate() {
            let mu = tr.block_at(i, "mu").unwrap();
            worst = worst.max(numeric::max_abs_diff(mu, &heisenberg::momentum_at(theta, k, *t)));
        }
        assert!(worst <= 1e-6, "{worst:e}");
        let h = tr.channel("h").unwrap();
        assert!(h.iter().all(|v| (v - 0.5).abs() <= 1e-6));
        let c = tr.channel("lambda3").unwrap();
        assert!(c.iter().all(|v| (v - k).abs() <= 1e-9));
        assert_eq!(tr.channel("xi_3").unwrap().iter().filter(|v| **v != 0.0).count(), 0);
    }

    #[test]
    fn zero_horizon() {
        let rp = heisenberg::reduced_problem();
        let st0 = heis_state([0.6, 0.8, 2.0], [0.6, 0.8]);
        let tr = integrate_reduced(&rp, &st0, 0.0, &cfg()).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(reduced_state_at(&rp, &tr, 0).unwrap(), st0);
    }

    #[test]
    fn membership_examples() {
        let rp = heisenberg::reduced_problem();
        let st0 = ReducedState::on_algebra(heisenberg::initial_momentum(1.1, -0.7), vec![0.0, 0.0]);
        let tr = integrate_reduced(&rp, &st0, 2.0, &cfg()).unwrap();
        let res = reduced_membership_residuals(&rp, &tr).unwrap();
        assert!(res.iter().all(|r| *r <= 1e-6));

        let alg = LieAlgebraSpec::heisenberg();
        let lam = CoalgebraElement(vec![0.2, 0.9, 1.5]);
        let xi = AlgebraElement(vec![0.2, 0.9, 0.0]);
        let rate = alg.coadjoint(&xi, &lam).unwrap();
        assert!(membership_check_reduced(&alg, &lam, &rate, &xi, xi.coeffs(), 1e-6).unwrap());
        let mut bumped = rate.clone();
        bumped.0[1] += 1e-2;
        assert!(!membership_check_reduced(&alg, &lam, &bumped, &xi, xi.coeffs(), 1e-6).unwrap());

        let ab = LieAlgebraSpec::abelian(2);
        let lam = CoalgebraElement(vec![1.0, -1.0]);
        let xi = AlgebraElement(vec![1.0, -1.0]);
        assert!(membership_check_reduced(&ab, &lam, &CoalgebraElement::zeros(2), &xi, xi.coeffs(), 1e-12)
            .unwrap());
    }

    #[test]
    fn projection_at_identity_is_verbatim() {
        let prob = heisenberg::problem();
        let pt = PontryaginPoint::new(vec![0.0; 3], vec![0.3, -0.1, 2.0], vec![0.3, -0.1]);
        let st = project_full_to_reduced(&prob, &pt).unwrap();
        assert_eq!(st.mu.coeffs(), &[0.3, -0.1, 2.0]);
        assert!(st.z.is_empty() && st.p_z.is_empty());
        assert_eq!(st.u, pt.u);
    }

    #[test]
    fn projection_invariant_under_translation() {
        let prob = heisenberg::problem();
        let sym = prob.symmetry().unwrap();
        let x = vec![0.4, -0.3, 0.2];
        let p = vec![0.5, 1.0, -0.7];
        let base = project_full_to_reduced(&prob, &PontryaginPoint::new(x.clone(), p.clone(), vec![0.0; 2]))
            .unwrap();
        let g = sym.to_group(&[1.2, -0.4, 0.9]).unwrap();
        let (gx, gp) = sym.cotangent_lift(&g, &x, &p).unwrap();
        let moved = project_full_to_reduced(&prob, &PontryaginPoint::new(gx, gp, vec![0.0; 2])).unwrap();
        assert!(numeric::max_abs_diff(base.mu.coeffs(), moved.mu.coeffs()) <= 1e-12);
    }

    #[test]
    fn from_left_invariant_matches_builtin() {
        let prob = heisenberg::problem();
        let rp = from_left_invariant(&prob).unwrap();
        let builtin = heisenberg::reduced_problem();
        let st = heis_state([0.3, -0.5, 1.25], [0.7, 0.1]);
        let a = reduced_hamiltonian(&rp, &st).unwrap();
        let b = reduced_hamiltonian(&builtin, &st).unwrap();
        assert!((a - b).abs() < 1e-10);
        let fb = eliminate_controls_reduced(&rp, &[], &[], &st.mu, &[0.0, 0.0], &cfg()).unwrap();
        assert!(numeric::max_abs_diff(&fb.u, &[0.3, -0.5]) < 1e-10);
    }
}
