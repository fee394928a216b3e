use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the editing core can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid config field `{field}`: {constraint}")]
    Config { field: String, constraint: String },

    #[error("tensor format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("token mapping error: {0}")]
    Mapping(String),

    #[error("non-finite value at step {step}{}", layer.map(|l| alloc::format!(", layer {l}")).unwrap_or_default())]
    NonFinite { step: usize, layer: Option<usize> },

    #[error("trajectory has no latent at step {0}")]
    MissingStep(usize),

    #[error("capture error at layer {layer}: {reason}")]
    Capture { layer: usize, reason: String },

    #[error("injection error at layer {layer}: {reason}")]
    Injection { layer: usize, reason: String },

    #[error("mask error: {0}")]
    Mask(String),

    #[error("blend error: {0}")]
    Blend(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("backend spec error: {0}")]
    Spec(String),

    #[error("at generation step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: &str, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            // Non-finite errors already carry their step.
            Error::NonFinite { layer, .. } => Error::NonFinite { step, layer },
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep {
                step,
                source: alloc::boxed::Box::new(other),
            },
        }
    }
}
