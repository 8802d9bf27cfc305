//! JSON problem files.
//!
//! ```json
//! {
//!   "name": "heisenberg",
//!   "n": 3, "r": 2,
//!   "dynamics": ["u1", "u2", "(x1*u2 - x2*u1)/2"],
//!   "lagrangian": "0.5*(u1^2 + u2^2)",
//!   "algebra": {
//!     "dim": 3,
//!     "structure": [[1, 2, 3, 1.0]],
//!     "matrix_basis": [[[0,1,0],[0,0,0],[0,0,0]], [[0,0,0],[0,0,1],[0,0,0]], [[0,0,1],[0,0,0],[0,0,0]]]
//!   },
//!   "action": {"kind": "left_translation"}
//! }
//! ```
//!
//! Expressions use the variables `x1 … xn` and `u1 … ur`. Structure entries
//! `[i, j, k, c]` mean `[e_i, e_j] = c e_k + …` and are one-based unless
//! `"index_base": 0` is given. The `generators` action takes one list of `n`
//! expressions in `x1 … xn` per basis element.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expression};
use crate::lie::LieAlgebraSpec;
use crate::ocp::{ControlProblem, Symmetry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub r: usize,
    pub dynamics: Vec<String>,
    pub lagrangian: String,
    #[serde(default)]
    pub algebra: Option<AlgebraFile>,
    #[serde(default)]
    pub action: Option<ActionFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    pub dim: usize,
    #[serde(default)]
    pub structure: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    pub index_base: Option<usize>,
    #[serde(default)]
    pub matrix_basis: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionFile {
    LeftTranslation,
    Generators { fields: Vec<Vec<String>> },
}

impl AlgebraFile {
    pub fn build(&self) -> Result<LieAlgebraSpec> {
        if self.dim == 0 {
            return Err(Error::invalid("algebra dimension must be positive"));
        }
        let base = self.index_base.unwrap_or(1);
        if base > 1 {
            return Err(Error::invalid(format!("index_base must be 0 or 1, got {base}")));
        }
        let entries = self
            .structure
            .iter()
            .map(|&(i, j, k, c)| {
                if i < base || j < base || k < base {
                    return Err(Error::invalid(format!(
                        "structure entry [{i}, {j}, {k}] uses index 0 but indices are one-based"
                    )));
                }
                Ok((i - base, j - base, k - base, c))
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = match &self.matrix_basis {
            None => None,
            Some(mats) => Some(
                mats.iter()
                    .enumerate()
                    .map(|(idx, rows)| matrix_from_rows(rows, idx))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let alg = LieAlgebraSpec::from_entries(self.dim, &entries, basis)?;
        match &self.labels {
            Some(l) => alg.with_labels(l.clone()),
            None => Ok(alg),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], idx: usize) -> Result<DMatrix<f64>> {
    let size = rows.len();
    if size == 0 || rows.iter().any(|r| r.len() != size) {
        return Err(Error::invalid(format!("matrix_basis[{idx}] must be a nonempty square matrix")));
    }
    Ok(DMatrix::from_fn(size, size, |i, j| rows[i][j]))
}

fn parse_all(sources: &[String], declared: &[String], what: &str) -> Result<Vec<Expression>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            expr::parse(s, declared)
                .map_err(|e| Error::invalid(format!("{what}[{i}] `{s}`: {e}")))
        })
        .collect()
}

fn eval_all(exprs: &[Expression], slots: &[f64]) -> Result<Vec<f64>> {
    exprs
        .iter()
        .map(|e| e.eval_slots(slots).map_err(Error::from))
        .collect()
}

impl ProblemFile {
    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parses every expression and assembles the problem. Derivatives go
    /// through finite differences.
    pub fn build(&self) -> Result<ControlProblem> {
        let (n, r) = (self.n, self.r);
        if n == 0 {
            return Err(Error::invalid("state dimension n must be positive"));
        }
        if self.dynamics.len() != n {
            return Err(Error::Dimension {
                context: "dynamics expressions",
                expected: n,
                got: self.dynamics.len(),
            });
        }
        let declared = expr::declared_vars(n, r, 0, 0);
        let dynamics = parse_all(&self.dynamics, &declared, "dynamics")?;
        let lagrangian = expr::parse(&self.lagrangian, &declared)
            .map_err(|e| Error::invalid(format!("lagrangian `{}`: {e}", self.lagrangian)))?;

        let mut prob = ControlProblem::new(
            self.name.as_deref().unwrap_or("problem"),
            n,
            r,
            Arc::new(move |x, u| {
                let slots: Vec<f64> = x.iter().chain(u).copied().collect();
                eval_all(&dynamics, &slots)
            }),
            Arc::new(move |x, u| {
                let slots: Vec<f64> = x.iter().chain(u).copied().collect();
                Ok(lagrangian.eval_slots(&slots)?)
            }),
        );

        match (&self.algebra, &self.action) {
            (None, None) => {}
            (None, Some(_)) => return Err(Error::invalid("an action needs an algebra")),
            (Some(a), action) => {
                let alg = a.build()?;
                let sym = match action {
                    None | Some(ActionFile::LeftTranslation) => Symmetry::left_translation(alg)?,
                    Some(ActionFile::Generators { fields }) => {
                        if fields.len() != alg.dim() {
                            return Err(Error::Dimension {
                                context: "generator fields",
                                expected: alg.dim(),
                                got: fields.len(),
                            });
                        }
                        let xvars = expr::declared_vars(n, 0, 0, 0);
                        let parsed = fields
                            .iter()
                            .map(|f| {
                                if f.len() != n {
                                    return Err(Error::Dimension {
                                        context: "generator field components",
                                        expected: n,
                                        got: f.len(),
                                    });
                                }
                                parse_all(f, &xvars, "generator")
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Symmetry::from_generators(alg, Arc::new(move |i, x| eval_all(&parsed[i], x)))
                    }
                };
                prob = prob.with_symmetry(sym)?;
            }
        }
        Ok(prob)
    }
}

/// The built-in Heisenberg problem written as a problem file.
pub fn heisenberg_file() -> ProblemFile {
    let unit = |i: usize, j: usize| {
        let mut m = vec![vec![0.0; 3]; 3];
        m[i][j] = 1.0;
        m
    };
    ProblemFile {
        name: Some("heisenberg".into()),
        n: 3,
        r: 2,
        dynamics: vec!["u1".into(), "u2".into(), "(x1*u2 - x2*u1)/2".into()],
        lagrangian: "0.5*(u1^2 + u2^2)".into(),
        algebra: Some(AlgebraFile {
            dim: 3,
            structure: vec![(1, 2, 3, 1.0)],
            index_base: None,
            matrix_basis: Some(vec![unit(0, 1), unit(1, 2), unit(0, 2)]),
            labels: None,
        }),
        action: Some(ActionFile::LeftTranslation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric;
    use crate::ocp::PontryaginPoint;

    #[test]
    fn heisenberg_round_trip() {
        let f = heisenberg_file();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"kind\":\"left_translation\""));
        let back = ProblemFile::from_json(&text).unwrap();
        assert_eq!(back, f);
        let prob = back.build().unwrap();
        let builtin = crate::heisenberg::problem();
        let pt = PontryaginPoint::new(vec![0.3, -0.2, 0.5], vec![1.0, 0.5, -2.0], vec![0.7, 0.1]);
        let a = prob.pontryagin_hamiltonian(&pt).unwrap();
        let b = builtin.pontryagin_hamiltonian(&pt).unwrap();
        assert!((a - b).abs() < 1e-15);
        let ja = prob.symmetry().unwrap().momentum(&pt.x, &pt.p).unwrap();
        let jb = builtin.symmetry().unwrap().momentum(&pt.x, &pt.p).unwrap();
        assert!(numeric::max_abs_diff(ja.coeffs(), jb.coeffs()) < 1e-9);
    }

    #[test]
    fn generators_action() {
        let text = r#"{
            "n": 3, "r": 2,
            "dynamics": ["u1", "u2", "(x1*u2 - x2*u1)/2"],
            "lagrangian": "0.5*(u1^2 + u2^2)",
            "algebra": {"dim": 3, "structure": [[1, 2, 3, 1]]},
            "action": {"kind": "generators", "fields": [["1", "0", "x2/2"], ["0", "1", "-x1/2"], ["0", "0", "1"]]}
        }"#;
        let prob = ProblemFile::from_json(text).unwrap().build().unwrap();
        let j = prob.symmetry().unwrap().momentum(&[1.0, 2.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(j.coeffs(), &[1.0, -0.5, 1.0]);
    }

    #[test]
    fn input_errors() {
        let bad_dim = r#"{"n": 2, "r": 1, "dynamics": ["u1"], "lagrangian": "u1^2"}"#;
        assert!(matches!(
            ProblemFile::from_json(bad_dim).unwrap().build(),
            Err(Error::Dimension { .. })
        ));
        let undeclared = r#"{"n": 1, "r": 1, "dynamics": ["u2"], "lagrangian": "u1^2"}"#;
        assert!(ProblemFile::from_json(undeclared).unwrap().build().is_err());
        let zero_index = r#"{"n": 1, "r": 1, "dynamics": ["u1"], "lagrangian": "u1^2",
            "algebra": {"dim": 1, "structure": [[0, 0, 0, 1]]}}"#;
        assert!(ProblemFile::from_json(zero_index).unwrap().build().is_err());
        let unknown = r#"{"n": 1, "r": 1, "dynamics": ["u1"], "lagrangian": "u1^2", "extra": 1}"#;
        assert!(ProblemFile::from_json(unknown).is_err());
        let no_basis = r#"{"n": 1, "r": 1, "dynamics": ["u1"], "lagrangian": "u1^2",
            "algebra": {"dim": 1}, "action": {"kind": "left_translation"}}"#;
        assert!(ProblemFile::from_json(no_basis).unwrap().build().is_err());
    }

    #[test]
    fn zero_based_indices() {
        let text = r#"{"dim": 3, "index_base": 0, "structure": [[0, 1, 2, 1]]}"#;
        let a: AlgebraFile = serde_json::from_str(text).unwrap();
        let alg = a.build().unwrap();
        assert_eq!(alg.c(0, 1, 2), 1.0);
        assert_eq!(alg.c(1, 0, 2), -1.0);
    }
}
