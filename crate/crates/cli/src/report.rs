use std::fmt;

use geocontrol_core::Error;
use serde_json::{json, Map, Value};

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input (exit 1).
    Input(String),
    /// A solver or check failed on valid input (exit 2).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numerical(_) => "numerical",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn input<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

/// Summary fields collected by a command for its `RESULT` line.
#[derive(Default)]
pub struct Summary {
    fields: Map<String, Value>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        let mut s = Self::default();
        s.set("command", command);
        s
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    /// Floats that are not finite become `null` so the line stays valid JSON.
    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, finite(value))
    }

    /// Records a failure, keeping whatever the command collected so far.
    pub fn fail(&mut self, err: &CliError) -> &mut Self {
        self.set("error", err.kind()).set("message", err.to_string())
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.fields)
    }
}

pub fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn result_line(mut summary: Value, status: &str, exit_code: i32) -> String {
    if let Value::Object(m) = &mut summary {
        m.insert("status".into(), json!(status));
        m.insert("exit_code".into(), json!(exit_code));
    }
    format!("RESULT {summary}")
}

pub fn error_summary(command: &str, err: &CliError) -> Value {
    json!({
        "command": command,
        "error": err.kind(),
        "message": err.to_string(),
    })
}
