//! Optimal control problems `(P, C, Γ, L)` in a single global chart, their
//! Pontryagin Hamiltonian `H_P(x, p, u) = ⟨p, f(x, u)⟩ − L(x, u)` and symmetry
//! data.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::lie::{AlgebraElement, CoalgebraElement, GroupElement, LieAlgebraSpec};
use crate::numeric;

pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type LagrangianFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type ControlHessianFn = Arc<dyn Fn(&PontryaginPoint) -> DMatrix<f64> + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(usize, &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Step used when differentiating group actions through the exponential chart.
const GROUP_FD_STEP: f64 = 1e-3;

/// Threshold on both invariance deviations.
pub const INVARIANCE_TOL: f64 = 1e-8;

/// A point `(x, p, u)` of the Pontryagin bundle `T*P ×_P C`.
#[derive(Clone, Debug, PartialEq)]
pub struct PontryaginPoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
}

impl PontryaginPoint {
    pub fn new(x: Vec<f64>, p: Vec<f64>, u: Vec<f64>) -> Self {
        Self { x, p, u }
    }

    fn describe(&self) -> String {
        format!("x={:?}, p={:?}, u={:?}", self.x, self.p, self.u)
    }
}

/// Hand-written derivatives of the dynamics and Lagrangian.
#[derive(Clone)]
pub struct AnalyticDerivatives {
    /// `∂f/∂x`, n×n.
    pub dynamics_x: MatrixFn,
    /// `∂f/∂u`, n×r.
    pub dynamics_u: MatrixFn,
    pub lagrangian_x: GradientFn,
    pub lagrangian_u: GradientFn,
    /// `∂²H_P/∂u²`, when known in closed form.
    pub hamiltonian_uu: Option<ControlHessianFn>,
}

/// How the symmetry group acts on the state space.
#[derive(Clone)]
pub enum GroupAction {
    /// `P = G`, states are exponential coordinates of a nilpotent matrix group
    /// and `g` acts by left multiplication. Controls are untouched.
    LeftTranslation,
    /// Only the infinitesimal generators `(e_i)_P(x)` are known.
    Generators(GeneratorFn),
}

#[derive(Clone)]
pub struct Symmetry {
    algebra: LieAlgebraSpec,
    action: GroupAction,
}

impl fmt::Debug for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.action {
            GroupAction::LeftTranslation => "left translation",
            GroupAction::Generators(_) => "generators",
        };
        f.debug_struct("Symmetry")
            .field("dim", &self.algebra.dim())
            .field("action", &kind)
            .finish()
    }
}

impl Symmetry {
    pub fn left_translation(algebra: LieAlgebraSpec) -> Result<Self> {
        if algebra.matrix_basis().is_none() {
            return Err(Error::UnsupportedAlgebra(
                "left translation needs a matrix realization".into(),
            ));
        }
        Ok(Self {
            algebra,
            action: GroupAction::LeftTranslation,
        })
    }

    pub fn from_generators(algebra: LieAlgebraSpec, generators: GeneratorFn) -> Self {
        Self {
            algebra,
            action: GroupAction::Generators(generators),
        }
    }

    pub fn algebra(&self) -> &LieAlgebraSpec {
        &self.algebra
    }

    pub fn action(&self) -> &GroupAction {
        &self.action
    }

    pub fn is_left_translation(&self) -> bool {
        matches!(self.action, GroupAction::LeftTranslation)
    }

    fn require_left(&self) -> Result<()> {
        if self.is_left_translation() {
            Ok(())
        } else {
            Err(Error::UnsupportedBundle(
                "operation needs P = G with a left-translation action".into(),
            ))
        }
    }

    /// Group element with exponential coordinates `x`.
    pub fn to_group(&self, x: &[f64]) -> Result<GroupElement> {
        self.require_left()?;
        self.algebra.exp_nilpotent(&AlgebraElement(x.to_vec()))
    }

    /// Exponential coordinates of `g`.
    pub fn from_group(&self, g: &GroupElement) -> Result<Vec<f64>> {
        self.require_left()?;
        Ok(self.algebra.log_nilpotent(g)?.0)
    }

    /// `Φ_g(x)`.
    pub fn act(&self, g: &GroupElement, x: &[f64]) -> Result<Vec<f64>> {
        self.require_left()?;
        check_len("group action state", self.algebra.dim(), x.len())?;
        if g.is_identity() {
            return Ok(x.to_vec());
        }
        self.from_group(&g.compose(&self.to_group(x)?))
    }

    /// Matrix of the tangent map `TΦ_g` at `x`.
    pub fn act_jacobian(&self, g: &GroupElement, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_left()?;
        let n = x.len();
        if g.is_identity() {
            return Ok(DMatrix::identity(n, n));
        }
        numeric::jacobian_5pt(|y| self.act(g, y), x, GROUP_FD_STEP)
    }

    /// `TΦ_g(x)·v`.
    pub fn act_tangent(&self, g: &GroupElement, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("tangent vector", x.len(), v.len())?;
        let j = self.act_jacobian(g, x)?;
        Ok((0..x.len())
            .map(|r| (0..x.len()).map(|c| j[(r, c)] * v[c]).sum())
            .collect())
    }

    /// Cotangent lift of `Φ_g`: `(x, p) ↦ (Φ_g x, (TΦ_g)^{-T} p)`.
    pub fn cotangent_lift(
        &self,
        g: &GroupElement,
        x: &[f64],
        p: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("costate", x.len(), p.len())?;
        let j = self.act_jacobian(g, x)?;
        let jt = j.transpose();
        let rhs = nalgebra::DVector::from_column_slice(p);
        let p_new = jt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("group action tangent map is singular"))?;
        Ok((self.act(g, x)?, p_new.iter().copied().collect()))
    }

    /// Infinitesimal generator `(e_i)_P(x)`.
    pub fn generator(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if i >= self.algebra.dim() {
            return Err(Error::invalid(format!(
                "generator index {i} out of range for algebra of dimension {}",
                self.algebra.dim()
            )));
        }
        match &self.action {
            GroupAction::Generators(f) => {
                let v = f(i, x)?;
                check_len("generator output", x.len(), v.len())?;
                Ok(v)
            }
            GroupAction::LeftTranslation => {
                check_len("state", self.algebra.dim(), x.len())?;
                let e = AlgebraElement::basis(self.algebra.dim(), i);
                Ok(self.algebra.right_field_in_exp_chart(&AlgebraElement(x.to_vec()), &e)?.0)
            }
        }
    }

    /// Left-invariant field `T L_g e_i` in the exponential chart.
    pub fn left_invariant_field(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.require_left()?;
        check_len("state", self.algebra.dim(), x.len())?;
        if i >= self.algebra.dim() {
            return Err(Error::invalid(format!(
                "field index {i} out of range for algebra of dimension {}",
                self.algebra.dim()
            )));
        }
        let e = AlgebraElement::basis(self.algebra.dim(), i);
        Ok(self.algebra.left_field_in_exp_chart(&AlgebraElement(x.to_vec()), &e)?.0)
    }

    /// Momentum map `J_i(x, p) = ⟨p, (e_i)_P(x)⟩`.
    pub fn momentum(&self, x: &[f64], p: &[f64]) -> Result<CoalgebraElement> {
        check_len("costate", x.len(), p.len())?;
        (0..self.algebra.dim())
            .map(|i| Ok(dot(p, &self.generator(i, x)?)))
            .collect::<Result<Vec<f64>>>()
            .map(CoalgebraElement)
    }

    /// Body momentum `λ = L_g^* p`, i.e. `λ_i = ⟨p, T L_g e_i⟩`.
    pub fn body_momentum(&self, x: &[f64], p: &[f64]) -> Result<CoalgebraElement> {
        check_len("costate", x.len(), p.len())?;
        (0..self.algebra.dim())
            .map(|i| Ok(dot(p, &self.left_invariant_field(i, x)?)))
            .collect::<Result<Vec<f64>>>()
            .map(CoalgebraElement)
    }

    /// Matrix whose columns are the left-invariant fields at `x`.
    pub fn left_frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let d = self.algebra.dim();
        let cols = (0..d)
            .map(|i| self.left_invariant_field(i, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(n, d, |r, c| cols[c][r]))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A geometric optimal control problem in a global chart.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    n: usize,
    r: usize,
    dynamics: DynamicsFn,
    lagrangian: LagrangianFn,
    derivatives: Option<AnalyticDerivatives>,
    symmetry: Option<Symmetry>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("r", &self.r)
            .field("analytic", &self.derivatives.is_some())
            .field("symmetry", &self.symmetry)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianPartials {
    pub dh_dx: Vec<f64>,
    pub dh_dp: Vec<f64>,
    pub dh_du: Vec<f64>,
    pub d2h_du2: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub samples: usize,
    /// `max |L∘Ψ_g − L|`.
    pub lagrangian_deviation: f64,
    /// `max ‖TΦ_g∘Γ − Γ∘Ψ_g‖_∞`.
    pub dynamics_deviation: f64,
    pub invariant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeReport {
    pub samples: usize,
    pub max_relative_deviation: f64,
    pub consistent: bool,
}

impl ControlProblem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        r: usize,
        dynamics: DynamicsFn,
        lagrangian: LagrangianFn,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            r,
            dynamics,
            lagrangian,
            derivatives: None,
            symmetry: None,
        }
    }

    pub fn with_derivatives(mut self, d: AnalyticDerivatives) -> Self {
        self.derivatives = Some(d);
        self
    }

    pub fn with_symmetry(mut self, s: Symmetry) -> Result<Self> {
        if s.is_left_translation() {
            check_len("left-translation state dimension", s.algebra.dim(), self.n)?;
        }
        self.symmetry = Some(s);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.r
    }

    pub fn symmetry(&self) -> Option<&Symmetry> {
        self.symmetry.as_ref()
    }

    pub fn derivatives(&self) -> Option<&AnalyticDerivatives> {
        self.derivatives.as_ref()
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn check_point(&self, pt: &PontryaginPoint) -> Result<()> {
        check_len("state", self.n, pt.x.len())?;
        check_len("costate", self.n, pt.p.len())?;
        check_len("control", self.r, pt.u.len())
    }

    /// `f(x, u)`, checked for length and finiteness.
    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.n, x.len())?;
        check_len("control", self.r, u.len())?;
        let f = (self.dynamics)(x, u)?;
        check_len("dynamics output", self.n, f.len())?;
        if !numeric::all_finite(&f) {
            return Err(Error::Evaluation {
                point: format!("x={x:?}, u={u:?}"),
                reason: format!("non-finite dynamics {f:?}"),
            });
        }
        Ok(f)
    }

    pub fn lagrangian(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        check_len("state", self.n, x.len())?;
        check_len("control", self.r, u.len())?;
        let l = (self.lagrangian)(x, u)?;
        if !l.is_finite() {
            return Err(Error::Evaluation {
                point: format!("x={x:?}, u={u:?}"),
                reason: format!("non-finite Lagrangian {l}"),
            });
        }
        Ok(l)
    }

    /// `H_P(x, p, u) = Σ p_i f^i(x, u) − L(x, u)`.
    pub fn pontryagin_hamiltonian(&self, pt: &PontryaginPoint) -> Result<f64> {
        self.check_point(pt)?;
        let f = self.dynamics(&pt.x, &pt.u)?;
        let l = self.lagrangian(&pt.x, &pt.u)?;
        Ok(dot(&pt.p, &f) - l)
    }

    fn h_at(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<f64> {
        let f = (self.dynamics)(x, u)?;
        let l = (self.lagrangian)(x, u)?;
        Ok(dot(p, &f) - l)
    }

    /// All first partials of `H_P` and the control Hessian `W = ∂²H_P/∂u²`.
    ///
    /// Analytic derivatives are used when present. Otherwise first partials
    /// come from the 5-point stencil and `W` from second differences, both with
    /// step `fd_step·(1 + |coordinate|)`. `∂H/∂p = f(x, u)` is always exact.
    pub fn hamiltonian_partials(
        &self,
        pt: &PontryaginPoint,
        fd_step: f64,
    ) -> Result<HamiltonianPartials> {
        self.check_point(pt)?;
        let dh_dp = self.dynamics(&pt.x, &pt.u)?;
        let (dh_dx, dh_du, d2h_du2) = match &self.derivatives {
            Some(d) => {
                let fx = (d.dynamics_x)(&pt.x, &pt.u);
                let lx = (d.lagrangian_x)(&pt.x, &pt.u);
                let dh_dx: Vec<f64> = (0..self.n)
                    .map(|j| (0..self.n).map(|i| pt.p[i] * fx[(i, j)]).sum::<f64>() - lx[j])
                    .collect();
                let dh_du = self.analytic_dh_du(d, &pt.x, &pt.p, &pt.u);
                let w = match &d.hamiltonian_uu {
                    Some(h) => h(pt),
                    None => numeric::jacobian_5pt(
                        |u| Ok(self.analytic_dh_du(d, &pt.x, &pt.p, u)),
                        &pt.u,
                        fd_step,
                    )?,
                };
                (dh_dx, dh_du, w)
            }
            None => {
                let dh_dx =
                    numeric::gradient_5pt(|x| self.h_at(x, &pt.p, &pt.u), &pt.x, fd_step)?;
                let dh_du =
                    numeric::gradient_5pt(|u| self.h_at(&pt.x, &pt.p, u), &pt.u, fd_step)?;
                let w = numeric::hessian_fd(|u| self.h_at(&pt.x, &pt.p, u), &pt.u, fd_step)?;
                (dh_dx, dh_du, w)
            }
        };
        let finite = numeric::all_finite(&dh_dx)
            && numeric::all_finite(&dh_du)
            && d2h_du2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Evaluation {
                point: pt.describe(),
                reason: "non-finite Hamiltonian partials".into(),
            });
        }
        Ok(HamiltonianPartials {
            dh_dx,
            dh_dp,
            dh_du,
            d2h_du2,
        })
    }

    fn analytic_dh_du(&self, d: &AnalyticDerivatives, x: &[f64], p: &[f64], u: &[f64]) -> Vec<f64> {
        let fu = (d.dynamics_u)(x, u);
        let lu = (d.lagrangian_u)(x, u);
        (0..self.r)
            .map(|a| (0..self.n).map(|i| p[i] * fu[(i, a)]).sum::<f64>() - lu[a])
            .collect()
    }

    /// Compares analytic derivatives with plain central differences (step
    /// 1e-6) at random probe points.
    pub fn validate_derivatives(&self, samples: usize, seed: u64) -> Result<DerivativeReport> {
        let d = self
            .derivatives
            .as_ref()
            .ok_or_else(|| Error::invalid("problem has no analytic derivatives"))?;
        const STEP: f64 = 1e-6;
        const REL_TOL: f64 = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut record = |a: f64, b: f64| {
            worst = worst.max((a - b).abs() / (1.0 + a.abs().max(b.abs())));
        };
        for _ in 0..samples {
            let x = random_vec(&mut rng, self.n, 1.0);
            let u = random_vec(&mut rng, self.r, 1.0);
            let fx = (d.dynamics_x)(&x, &u);
            let fu = (d.dynamics_u)(&x, &u);
            for i in 0..self.n {
                let gx = numeric::gradient_central(|y| Ok(self.dynamics(y, &u)?[i]), &x, STEP)?;
                let gu = numeric::gradient_central(|v| Ok(self.dynamics(&x, v)?[i]), &u, STEP)?;
                for j in 0..self.n {
                    record(fx[(i, j)], gx[j]);
                }
                for a in 0..self.r {
                    record(fu[(i, a)], gu[a]);
                }
            }
            let lx = numeric::gradient_central(|y| self.lagrangian(y, &u), &x, STEP)?;
            let lu = numeric::gradient_central(|v| self.lagrangian(&x, v), &u, STEP)?;
            for (a, b) in (d.lagrangian_x)(&x, &u).iter().zip(&lx) {
                record(*a, *b);
            }
            for (a, b) in (d.lagrangian_u)(&x, &u).iter().zip(&lu) {
                record(*a, *b);
            }
        }
        Ok(DerivativeReport {
            samples,
            max_relative_deviation: worst,
            consistent: worst <= REL_TOL,
        })
    }

    /// Samples `g = exp(ξ)` with `ξ ∈ [−1, 1]^d` and `(x, u) ∈ [−1, 1]^{n+r}`
    /// and measures how far `L` and `Γ` are from being invariant.
    pub fn check_invariance(&self, samples: usize, seed: u64) -> Result<InvarianceReport> {
        let sym = self.symmetry.as_ref().ok_or(Error::MissingSymmetry)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sym.algebra.dim();
        let elements = (0..samples)
            .map(|_| sym.algebra.exp_nilpotent(&AlgebraElement(random_vec(&mut rng, d, 1.0))))
            .collect::<Result<Vec<_>>>()?;
        self.check_invariance_with(&elements, seed.wrapping_add(1))
    }

    /// Invariance check against caller-chosen group elements.
    pub fn check_invariance_with(
        &self,
        elements: &[GroupElement],
        seed: u64,
    ) -> Result<InvarianceReport> {
        let sym = self.symmetry.as_ref().ok_or(Error::MissingSymmetry)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l_dev = 0.0f64;
        let mut f_dev = 0.0f64;
        for g in elements {
            let x = random_vec(&mut rng, self.n, 1.0);
            let u = random_vec(&mut rng, self.r, 1.0);
            let gx = sym.act(g, &x)?;
            l_dev = l_dev.max((self.lagrangian(&gx, &u)? - self.lagrangian(&x, &u)?).abs());
            let pushed = sym.act_tangent(g, &x, &self.dynamics(&x, &u)?)?;
            let moved = self.dynamics(&gx, &u)?;
            f_dev = f_dev.max(numeric::max_abs_diff(&pushed, &moved));
        }
        Ok(InvarianceReport {
            samples: elements.len(),
            lagrangian_deviation: l_dev,
            dynamics_deviation: f_dev,
            invariant: l_dev <= INVARIANCE_TOL && f_dev <= INVARIANCE_TOL,
        })
    }
}

pub(crate) fn random_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}
