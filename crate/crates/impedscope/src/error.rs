use impedscope_core::Error as CoreError;

/// Process exit code for a validation failure (bad config, mask mismatch,
/// malformed dataset).
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code for everything else that went wrong at run time.
pub const EXIT_RUNTIME: i32 = 1;

/// Input rejected before or while loading, as opposed to a failure while
/// computing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ValidationError(pub String);

impl ValidationError {
    pub fn new(msg: impl Into<String>) -> Self {
        ValidationError(msg.into())
    }
}

fn core_is_validation(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::DimensionMismatch { .. }
            | CoreError::UnknownPathology(_)
            | CoreError::MaskCardinality { .. }
            | CoreError::UnknownMask(_)
            | CoreError::EmptyMask(_)
            | CoreError::Geometry(_)
            | CoreError::InvalidArgument(_)
            | CoreError::TooFewPatients { .. }
    )
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ValidationError>().is_some() {
            return EXIT_VALIDATION;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some_and(|e| !e.is_io()) {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if core_is_validation(e) { EXIT_VALIDATION } else { EXIT_RUNTIME };
        }
    }
    EXIT_RUNTIME
}
