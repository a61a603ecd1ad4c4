//! Compilation errors raised after parsing.

use thiserror::Error;

use crate::ast::Span;
use crate::diag::Diagnostic;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CompileError {
    /// The loop binder reaches code whose accesses cannot be enumerated.
    #[error("EscapeError: {message}")]
    Escape { span: Span, message: String },
    /// Two views over possibly shared records disagree on written fields.
    #[error("AliasAmbiguityError: {detail}")]
    AliasAmbiguity { span: Span, detail: Box<AliasConflict> },
    /// A statement inside a hoisted region would invalidate the hoisted copy.
    #[error("StaleViewError: {message}")]
    StaleView { span: Span, message: String },
    #[error("UnsupportedConstruct: {message}")]
    Unsupported { span: Span, message: String },
    #[error("InternalInvariantError: {0}")]
    InternalInvariant(String),
}

/// Access sets of two loops that may share records; field lists are
/// comma-joined in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasConflict {
    pub outer: String,
    pub inner: String,
    pub outer_in: String,
    pub outer_out: String,
    pub inner_in: String,
    pub inner_out: String,
    pub conflict: String,
}

impl std::fmt::Display for AliasConflict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let AliasConflict {
            outer,
            inner,
            outer_in,
            outer_out,
            inner_in,
            inner_out,
            conflict,
        } = self;
        write!(
            f,
            "loops over '{outer}' and '{inner}' may share records; {outer} reads {{{outer_in}}} \
             writes {{{outer_out}}}, {inner} reads {{{inner_in}}} writes {{{inner_out}}}, \
             conflicting fields {{{conflict}}}"
        )
    }
}

impl CompileError {
    pub fn span(&self) -> Span {
        match self {
            CompileError::Escape { span, .. }
            | CompileError::AliasAmbiguity { span, .. }
            | CompileError::StaleView { span, .. }
            | CompileError::Unsupported { span, .. } => *span,
            CompileError::InternalInvariant(_) => Span::default(),
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::new(self.span(), self.to_string())
    }
}
