use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use geocontrol_core::problem_file::ProblemFile;
use geocontrol_core::reduction::{self, ReducedProblem};
use geocontrol_core::{heisenberg, ControlProblem, Format, LieAlgebraSpec, PmpSolverConfig, Trajectory};

use crate::report::{input, CliError, CliResult};

/// Comma-separated list of numbers, e.g. `1,0,-2.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct Floats(pub Vec<f64>);

impl std::str::FromStr for Floats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_vec(s).map(Floats)
    }
}

impl std::ops::Deref for Floats {
    type Target = Vec<f64>;

    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

fn parse_vec(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))
                .and_then(|v| if v.is_finite() { Ok(v) } else { Err(format!("`{t}` is not finite")) })
        })
        .collect()
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProblemArgs {
    /// Built-in problem name (`heisenberg`).
    #[arg(long)]
    pub builtin: Option<String>,
    /// JSON problem file.
    #[arg(long, conflicts_with = "builtin")]
    pub problem: Option<PathBuf>,
}

/// A loaded problem with its reduction when one exists.
pub struct Loaded {
    pub name: String,
    pub full: ControlProblem,
    pub reduced: Option<ReducedProblem>,
    pub builtin_heisenberg: bool,
}

impl Loaded {
    pub fn reduced(&self) -> CliResult<&ReducedProblem> {
        self.reduced.as_ref().ok_or_else(|| {
            CliError::Input(format!(
                "problem `{}` has no Lie group reduction (it needs an algebra with a left-translation action)",
                self.name
            ))
        })
    }

    pub fn algebra(&self) -> CliResult<&LieAlgebraSpec> {
        Ok(self.reduced()?.algebra())
    }
}

impl ProblemArgs {
    pub fn is_given(&self) -> bool {
        self.builtin.is_some() || self.problem.is_some()
    }

    pub fn load(&self) -> CliResult<Loaded> {
        match (&self.builtin, &self.problem) {
            (Some(name), _) => builtin(name),
            (None, Some(path)) => {
                let file = ProblemFile::load(path).map_err(|e| {
                    CliError::Input(format!("cannot load problem file {}: {e}", path.display()))
                })?;
                let full = file.build().map_err(|e| CliError::Input(e.to_string()))?;
                let reduced = match full.symmetry() {
                    Some(s) if s.is_left_translation() => {
                        Some(reduction::from_left_invariant(&full).map_err(|e| CliError::Input(e.to_string()))?)
                    }
                    _ => None,
                };
                Ok(Loaded {
                    name: full.name().to_string(),
                    full,
                    reduced,
                    builtin_heisenberg: false,
                })
            }
            (None, None) => input("no problem given: use --builtin heisenberg or --problem <file>"),
        }
    }

    /// Like [`load`](Self::load), defaulting to the Heisenberg problem.
    pub fn load_or_heisenberg(&self) -> CliResult<Loaded> {
        if self.is_given() {
            self.load()
        } else {
            builtin(heisenberg::NAME)
        }
    }
}

fn builtin(name: &str) -> CliResult<Loaded> {
    if name != heisenberg::NAME {
        return input(format!("unknown builtin `{name}` (available: heisenberg)"));
    }
    Ok(Loaded {
        name: name.to_string(),
        full: heisenberg::problem(),
        reduced: Some(heisenberg::reduced_problem()),
        builtin_heisenberg: true,
    })
}

#[derive(Args, Debug, Clone)]
pub struct IntegrationArgs {
    /// Final time.
    #[arg(long = "T", value_name = "T")]
    pub t_final: f64,
    /// Runge-Kutta step.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Newton tolerance for the control elimination.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

impl IntegrationArgs {
    pub fn config(&self) -> CliResult<PmpSolverConfig> {
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return input(format!("--T must be a nonnegative number, got {}", self.t_final));
        }
        let cfg = PmpSolverConfig {
            newton_tol: self.tol,
            ..PmpSolverConfig::default().with_step(self.step)
        };
        cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Output file for the trajectory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; defaults to the extension of --out, else CSV.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl OutputArgs {
    pub fn format_for(&self, path: &Path) -> Format {
        match self.format {
            Some(FormatArg::Csv) => Format::Csv,
            Some(FormatArg::Json) => Format::Json,
            None => Format::from_path(path),
        }
    }

    /// Writes `traj` to `path` (or --out) and returns the path written.
    pub fn write(&self, traj: &Trajectory, path: Option<&Path>) -> CliResult<Option<String>> {
        let Some(path) = path.or(self.out.as_deref()) else {
            return Ok(None);
        };
        traj.write_file(path, self.format_for(path))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(Some(path.display().to_string()))
    }
}

pub fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    Trajectory::read_file(path)
        .map_err(|e| CliError::Input(format!("cannot read trajectory {}: {e}", path.display())))
}

pub fn check_len(what: &str, expected: usize, got: usize) -> CliResult<()> {
    if expected == got {
        Ok(())
    } else {
        input(format!("{what}: expected {expected} values, got {got}"))
    }
}
