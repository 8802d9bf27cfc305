//! Presymplectic and Dirac formulations of the Pontryagin maximum principle,
//! Lie-Poisson reduction and reconstruction, with the Heisenberg
//! subriemannian geodesic problem built in.

pub mod dirac;
pub mod error;
pub mod expr;
pub mod heisenberg;
pub mod lie;
pub mod numeric;
pub mod ocp;
pub mod pmp;
pub mod problem_file;
pub mod reconstruct;
pub mod reduction;
pub mod trajectory;

pub use dirac::{LinearDiracStructure, TwoForm};
pub use error::{Error, Result};
pub use lie::{AlgebraElement, CoalgebraElement, GroupElement, LieAlgebraSpec};
pub use ocp::{ControlProblem, PontryaginPoint, Symmetry};
pub use pmp::{Feedback, PmpSolverConfig};
pub use problem_file::ProblemFile;
pub use reduction::{CoadjointSign, ReducedProblem, ReducedState};
pub use trajectory::{Format, StateBlock, Trajectory};
