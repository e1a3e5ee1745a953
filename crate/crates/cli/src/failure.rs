//! Machine-readable error reports on stderr.

use std::process::ExitCode;

use serde::Serialize;
use tomorecon_core::Error;

/// Exit code for bad inputs, flags or data.
pub const EXIT_INVALID: u8 = 2;
/// Exit code for runtime failures (evaluator, failed checks).
pub const EXIT_FAILED: u8 = 1;

#[derive(Debug, Serialize)]
pub struct Failure {
    pub error: String,
    pub message: String,
    #[serde(skip)]
    pub code: u8,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            error: "invalid_input".into(),
            message: message.into(),
            code: EXIT_INVALID,
        }
    }

    pub fn failed(kind: &str, message: impl Into<String>) -> Self {
        Self {
            error: kind.into(),
            message: message.into(),
            code: EXIT_FAILED,
        }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("{}", serde_json::to_string(self).expect("failure serializes"));
        ExitCode::from(self.code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::EvaluatorExited(_)
            | Error::Protocol(_)
            | Error::Timeout(_)
            | Error::NonFiniteResponse(_)
            | Error::HandshakeRejected(_) => EXIT_FAILED,
            _ => EXIT_INVALID,
        };
        Self {
            error: e.kind().into(),
            message: e.to_string(),
            code,
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
