pub mod ast;
pub mod corpus;
pub mod error;
pub mod infer;
pub mod lexer;
pub mod obligation;
pub mod oracle;
pub mod parser;
pub mod pretty;
pub mod prover;
pub mod resolve;
pub mod verifier;
pub mod vm;
pub mod weaver;
pub mod wf;
