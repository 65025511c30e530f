use serde_json::{json, Map, Value};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Failure reported on stderr as `{code, message, context}`.
#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub code: String,
    pub message: String,
    pub context: Map<String, Value>,
}

impl CliError {
    pub fn new(exit: i32, code: &str, message: &str) -> Self {
        Self {
            exit,
            code: code.to_string(),
            message: message.to_string(),
            context: Map::new(),
        }
    }

    pub fn validation(code: &str, message: &str) -> Self {
        Self::new(EXIT_VALIDATION, code, message)
    }

    pub fn io(what: &str, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_OTHER, "io", &format!("{what}: {e}"))
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        json!({
            "code": self.code,
            "message": self.message,
            "context": self.context,
        })
        .to_string()
    }
}

impl From<srcre_core::Error> for CliError {
    fn from(e: srcre_core::Error) -> Self {
        use srcre_core::Error as E;
        let exit = if e.is_singular() {
            EXIT_SINGULAR
        } else {
            match e {
                E::Io(_) | E::EquivalenceViolation { .. } => EXIT_OTHER,
                _ => EXIT_VALIDATION,
            }
        };
        Self::new(exit, e.code(), &e.to_string())
    }
}

/// 17 significant digits, enough for doubles to round-trip exactly.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}
