//! Failures and their exit codes: 2 input, 3 domain, 4 numerical.

use std::fmt;

use decaf::frame::FrameError;
use decaf::graphspec::GraphError;
use decaf::io::{ContainerError, SchemaError, StructureError, XyzError};
use decaf::oracle::OracleError;
use decaf::regress::RegressError;
use decaf::workflow::WorkflowError;
use decaf::FingerprintError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self { code: EXIT_DOMAIN, message: message.into() }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { message: format!("{what}: {}", self.message), ..self }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn frame_code(e: &FrameError) -> u8 {
    match e {
        FrameError::NotConverged { .. } => EXIT_NUMERICAL,
        FrameError::InvalidSettings(_) => EXIT_INPUT,
        _ => EXIT_DOMAIN,
    }
}

fn fingerprint_code(e: &FingerprintError) -> u8 {
    match e {
        FingerprintError::Frame(f) => frame_code(f),
        FingerprintError::GridMismatch { .. } | FingerprintError::LengthMismatch { .. } => EXIT_INPUT,
        FingerprintError::InvalidKernel(_) => EXIT_INPUT,
        FingerprintError::UnknownSpecies(_) | FingerprintError::ZeroFingerprint => EXIT_DOMAIN,
    }
}

fn regress_code(e: &RegressError) -> u8 {
    match e {
        RegressError::SingularCovariance { .. } => EXIT_NUMERICAL,
        RegressError::OracleFailure { .. } => EXIT_DOMAIN,
        RegressError::Fingerprint(f) => fingerprint_code(f),
        _ => EXIT_INPUT,
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<XyzError> for Failure {
    fn from(e: XyzError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<StructureError> for Failure {
    fn from(e: StructureError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<FrameError> for Failure {
    fn from(e: FrameError) -> Self {
        Failure { code: frame_code(&e), message: e.to_string() }
    }
}

impl From<FingerprintError> for Failure {
    fn from(e: FingerprintError) -> Self {
        Failure { code: fingerprint_code(&e), message: e.to_string() }
    }
}

impl From<RegressError> for Failure {
    fn from(e: RegressError) -> Self {
        Failure { code: regress_code(&e), message: e.to_string() }
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        let code = match &e {
            ContainerError::Fingerprint(f) => fingerprint_code(f),
            ContainerError::Regress(r) => regress_code(r),
            _ => EXIT_INPUT,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::domain(e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::domain(e.to_string())
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Structure { id, source } => Failure::from(source).context(id),
            WorkflowError::Fingerprint { label, source } => Failure::from(source).context(label),
            WorkflowError::MissingLabel { .. } => Failure::input(e.to_string()),
            WorkflowError::Regress(r) => r.into(),
        }
    }
}
