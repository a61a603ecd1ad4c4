//! Kernel-language frontend: lexing, parsing and checking.
//!
//! Annotations map onto the view operations as follows:
//!
//! | KL spelling              | meaning                                             |
//! |--------------------------|-----------------------------------------------------|
//! | `@soa_convert`           | convert the loop's container into a SoA view        |
//! | `@soa_convert_hoist(n)`  | same, with prologue/epilogue moved `n` loops out    |
//! | `@soa_offload`           | convert and run the loop via OpenMP target offload  |
//! | `@soa_target(c)`         | names the container an indexed loop converts        |
//! | `@assume_disjoint(a, b)` | asserts two containers never share a record         |
//!
//! `@target(...)` is only produced by the rewrite; it records device map clauses.

mod check;
mod lexer;
mod parser;

pub use check::{assignable, check_program, infer, is_lvalue, Scope, Typed};
pub use parser::is_keyword;

use crate::ast::Program;
use crate::diag::Diagnostics;

/// Parses and checks KL source text.
pub fn parse(src: &str) -> Result<Program, Diagnostics> {
    let prog = parser::parse_program(src).map_err(|d| Diagnostics(vec![d]))?;
    let diags = check_program(&prog);
    if diags.is_empty() {
        Ok(prog)
    } else {
        Err(diags)
    }
}
