use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Schema,
    Numerical,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Schema => 2,
            Kind::Numerical => 3,
            Kind::Io => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn schema(message: impl Into<String>) -> Self {
        Self { kind: Kind::Schema, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: Kind::Io, message: message.into() }
    }

    /// A library error raised while checking user-supplied settings.
    pub fn schema_from(e: latticewalk::Error) -> Self {
        match e {
            latticewalk::Error::Io(_) => e.into(),
            other => Self::schema(other.to_string()),
        }
    }

    /// Machine-readable report for stderr.
    pub fn report(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "exit_code": self.kind.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<latticewalk::Error> for CliError {
    fn from(e: latticewalk::Error) -> Self {
        use latticewalk::Error as E;
        let kind = match &e {
            E::Io(_) => Kind::Io,
            E::Numerical(_) | E::Underdetermined { .. } | E::Validation(_) => Kind::Numerical,
            E::Parameter(_)
            | E::Geometry(_)
            | E::Index { .. }
            | E::Dimension(_)
            | E::Parse(_)
            | E::Json(_) => Kind::Schema,
        };
        Self { kind, message: e.to_string() }
    }
}
