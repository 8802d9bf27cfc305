//! The subriemannian geodesic problem on the Heisenberg group, built in.
//!
//! States are exponential coordinates `(x, y, z)` of `g = exp(xγ₁ + yγ₂ + zγ₃)`,
//! and the control system is
//!
//! ```text
//! ẋ = u₁,   ẏ = u₂,   ż = (x u₂ − y u₁)/2,   L = (u₁² + u₂²)/2.
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::lie::{AlgebraElement, CoalgebraElement, LieAlgebraSpec};
use crate::ocp::{AnalyticDerivatives, ControlProblem, Symmetry};
use crate::reduction::ReducedProblem;

pub const NAME: &str = "heisenberg";

pub fn algebra() -> LieAlgebraSpec {
    LieAlgebraSpec::heisenberg()
}

fn dynamics(x: &[f64], u: &[f64]) -> Vec<f64> {
    vec![u[0], u[1], (x[0] * u[1] - x[1] * u[0]) / 2.0]
}

fn lagrangian(u: &[f64]) -> f64 {
    0.5 * (u[0] * u[0] + u[1] * u[1])
}

/// Full problem on `T*ℍ¹ × ℝ²` with analytic derivatives and the
/// left-translation symmetry.
pub fn problem() -> ControlProblem {
    let derivs = AnalyticDerivatives {
        dynamics_x: Arc::new(|_, u| {
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, u[1] / 2.0, -u[0] / 2.0, 0.0])
        }),
        dynamics_u: Arc::new(|x, _| {
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -x[1] / 2.0, x[0] / 2.0])
        }),
        lagrangian_x: Arc::new(|_, _| vec![0.0; 3]),
        lagrangian_u: Arc::new(|_, u| u.to_vec()),
        hamiltonian_uu: Some(Arc::new(|_| -DMatrix::identity(2, 2))),
    };
    problem_without_derivatives().with_derivatives(derivs)
}

/// Same problem, but every derivative goes through finite differences.
pub fn problem_without_derivatives() -> ControlProblem {
    ControlProblem::new(
        NAME,
        3,
        2,
        Arc::new(|x, u| Ok(dynamics(x, u))),
        Arc::new(|_, u| Ok(lagrangian(u))),
    )
    .with_symmetry(Symmetry::left_translation(algebra()).expect("matrix basis present"))
    .expect("state dimension matches algebra")
}

/// Fully reduced problem on `𝔤* × ℝ²`: `h(λ, u) = ⟨λ, u₁γ₁ + u₂γ₂⟩ − |u|²/2`,
/// with `λ₃` registered as a Casimir.
pub fn reduced_problem() -> ReducedProblem {
    ReducedProblem::new(
        NAME,
        0,
        algebra(),
        2,
        Arc::new(|_, u| Ok(lagrangian(u))),
        Arc::new(|_, _| Ok(Vec::new())),
        Arc::new(|_, u| Ok(AlgebraElement(vec![u[0], u[1], 0.0]))),
    )
    .with_control_derivatives(Arc::new(|st| {
        let mu = st.mu.coeffs();
        (
            vec![mu[0] - st.u[0], mu[1] - st.u[1]],
            -DMatrix::identity(2, 2),
        )
    }))
    .with_casimir("lambda3", Arc::new(|mu: &CoalgebraElement| mu.coeffs()[2]))
}

/// Initial body momentum `(cos θ, sin θ, k)` on the level set `h = 1/2`.
pub fn initial_momentum(theta: f64, k: f64) -> CoalgebraElement {
    CoalgebraElement(vec![theta.cos(), theta.sin(), k])
}

/// Closed-form Lie-Poisson solution `λ(t) = (cos(θ + kt), sin(θ + kt), k)`.
pub fn momentum_at(theta: f64, k: f64, t: f64) -> [f64; 3] {
    [(theta + k * t).cos(), (theta + k * t).sin(), k]
}
