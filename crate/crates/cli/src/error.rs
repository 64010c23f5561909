//! Failures reported as one JSON object on stderr with a class-specific exit
//! code: 2 input, 3 resource, 4 numerical.

use serde_json::json;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: "usage", message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            "resource" => 3,
            "numerical" => 4,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message, "exit_code": self.exit_code() } }).to_string()
    }
}

impl From<treecalc::Error> for CliError {
    fn from(e: treecalc::Error) -> Self {
        use treecalc::Error::*;
        let kind = match &e {
            Input(_) | Json(_) => "input",
            Domain(_) => "domain",
            MeasureSupport(_) => "measure_support",
            Io(_) => "io",
            Resource(_) => "resource",
            Numerical(_) => "numerical",
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        treecalc::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        treecalc::Error::Json(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
