//! JSON report plumbing shared by every subcommand.

use std::fmt;
use std::io;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failed run: machine-readable category plus a message.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new("invalid", message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<stochsym_core::Error> for Failure {
    fn from(e: stochsym_core::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<stochsym_core::ParseError> for Failure {
    fn from(e: stochsym_core::ParseError) -> Self {
        stochsym_core::Error::from(e).into()
    }
}

impl From<stochsym_core::EvalError> for Failure {
    fn from(e: stochsym_core::EvalError) -> Self {
        stochsym_core::Error::from(e).into()
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Ordered JSON object: header first, results, `status` last.
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, config: Value, timestamp: bool) -> Self {
        let mut fields = Map::new();
        fields.insert("tool".into(), "stochsym".into());
        fields.insert("version".into(), VERSION.into());
        fields.insert("command".into(), command.into());
        if timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            fields.insert("timestamp".into(), secs.into());
        }
        fields.insert("config".into(), config);
        Self { fields }
    }

    pub fn put(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.fields.insert(key.into(), v);
    }

    pub fn finish(mut self, result: CliResult<()>) -> (Value, i32) {
        let code = match result {
            Ok(()) => {
                self.fields.insert("status".into(), "ok".into());
                0
            }
            Err(fail) => {
                let mut err = Map::new();
                err.insert("kind".into(), fail.kind.into());
                err.insert("message".into(), fail.message.into());
                self.fields.insert("error".into(), Value::Object(err));
                self.fields.insert("kind".into(), fail.kind.into());
                self.fields.insert("status".into(), "error".into());
                1
            }
        };
        (Value::Object(self.fields), code)
    }
}

/// JSON-safe number: non-finite values become `null`.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}
