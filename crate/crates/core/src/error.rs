use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node `{node}`: expected {expected}, got {actual}")]
    ShapeMismatch {
        node: String,
        expected: String,
        actual: String,
    },

    #[error("type error at node `{node}`: {msg}")]
    Type { node: String, msg: String },

    #[error("graph contains a cycle through [{}]", .0.join(", "))]
    Cycle(Vec<String>),

    #[error("invalid graph: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("unknown operator `{0}`")]
    UnknownOp(String),

    #[error("kernel `{op}` failed: {msg}")]
    Kernel { op: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("regions overlap on node `{0}`")]
    Overlap(String),

    #[error("quantization error: {0}")]
    Quant(String),

    #[error("layout transform error: {0}")]
    Layout(String),

    #[error("codegen error: {0}")]
    Codegen(String),

    #[error("no codegen backend registered for target `{0}`")]
    NoBackend(String),

    #[error("operator `{op}` is not supported by target `{target}`")]
    Unsupported { op: String, target: String },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("payload decode error: {0}")]
    Decode(String),

    #[error("no engine factory registered for target `{0}`")]
    NoEngine(String),

    /// The message already includes `cause`, so it is not exposed as a
    /// separate error source.
    #[error("engine for `{fn_name}` failed: {cause}")]
    Engine { fn_name: String, cause: Box<Error> },

    #[error("{stage} failed: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },

    #[error("input error: {0}")]
    Input(String),

    #[error("runtime error: {0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn kernel(op: &str, msg: impl Into<String>) -> Self {
        Error::Kernel {
            op: op.to_string(),
            msg: msg.into(),
        }
    }

    /// Innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { cause, .. } => cause.root(),
            e => e,
        }
    }

    pub(crate) fn ty(node: &str, msg: impl Into<String>) -> Self {
        Error::Type {
            node: node.to_string(),
            msg: msg.into(),
        }
    }
}
