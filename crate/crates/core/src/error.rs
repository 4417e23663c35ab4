use thiserror::Error;

use crate::ast::SourceLoc;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: {message}")]
pub struct LexError {
    pub loc: SourceLoc,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: syntax error: {message}")]
pub struct ParseError {
    pub loc: SourceLoc,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error("{loc}: `{name}` used before assignment")]
    UseBeforeAssign { name: String, loc: SourceLoc },
    #[error("{loc}: `{expr}` has type uint64 but is used as a condition (first typed at {first})")]
    NotACondition {
        expr: String,
        loc: SourceLoc,
        first: SourceLoc,
    },
    #[error("{loc}: cannot assign to parameter `{name}`")]
    AssignToParam { name: String, loc: SourceLoc },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown global slot `{0}`")]
    UnknownGlobal(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("unknown contract `{0}`")]
    UnknownContract(String),
    #[error("unknown method `{contract}.{method}`")]
    UnknownMethod { contract: String, method: String },
    #[error("`{name}` expects {expected} argument(s), found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
}

/// Any failure while turning source text into a resolved program.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("lex error at {0}")]
    Lex(#[from] LexError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("type error at {0}")]
    Infer(#[from] InferError),
    #[error("{loc}: {error}")]
    Resolve { loc: SourceLoc, error: ResolveError },
    #[error("program is not well-formed:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    IllFormed(Vec<crate::wf::Diagnostic>),
}
