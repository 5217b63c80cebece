//! Crate-wide error type.

use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A class label referenced a row outside the classification head.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: usize },

    /// Training produced a non-finite value and was aborted.
    #[error("non-finite {what}; training aborted")]
    NonFinite { what: &'static str },

    /// An embedding norm fell below the usable floor.
    #[error("degenerate embedding: norm {norm:e} is at or below 1e-12")]
    DegenerateEmbedding { norm: f64 },

    /// A template aggregate could not be normalized.
    #[error("degenerate template: {reason}")]
    DegenerateTemplate { reason: String },

    /// A mean saliency map had zero norm, so no similarity is defined.
    #[error("degenerate saliency map for group {group:?}")]
    DegenerateSaliency { group: String },

    /// An attribute category had no entry in the binarization mapping.
    #[error("attribute category {category:?} has no mapping")]
    UnmappedCategory { category: String },

    /// A dataset was missing a category that the operation requires.
    #[error("dataset has no samples for category {category:?}")]
    MissingCategory { category: String },

    /// An operation that requires exactly two groups saw another count.
    #[error("expected exactly two groups, got {got}")]
    GroupArity { got: usize },

    /// Too few values for the statistic to be defined.
    #[error("need at least {needed} values, got {got}")]
    Arity { needed: usize, got: usize },

    /// Teacher training data contained samples from the wrong category.
    #[error("teacher data restricted to {expected:?} contains {count} sample(s) labeled {found:?}")]
    Contamination {
        expected: String,
        found: String,
        count: usize,
    },

    /// Two networks that must share an architecture did not.
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),

    /// A score list was empty where at least one score is required.
    #[error("empty {which} score list")]
    EmptyScores { which: &'static str },

    /// The requested FPR sits below the resolution of the impostor set.
    #[error("requested FPR {requested:e} is below the quantization floor 1/{n_impostor}{}", group_suffix(.group))]
    Quantization {
        requested: f64,
        n_impostor: usize,
        group: Option<String>,
    },

    /// BPC is undefined because a reference quantity is zero.
    #[error("BPC undefined: reference {what} is zero")]
    UndefinedBpc { what: &'static str },

    /// A binary file did not match the expected layout.
    #[error("{path}: bad data at byte {offset}: {reason}")]
    Format {
        path: String,
        offset: u64,
        reason: String,
    },

    /// A value failed validation.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

fn group_suffix(group: &Option<String>) -> String {
    match group {
        Some(g) => format!(" for group {g:?}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

