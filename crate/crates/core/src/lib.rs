//! Compiler for the kernel language (KL): annotation-guided, temporary AoS-to-SoA
//! views over loop containers.
//!
//! Pipeline: [`frontend::parse`] → [`analysis`] → [`transform::rewrite`] →
//! [`backends`], with [`interp`] as the reference executor.

pub mod analysis;
pub mod ast;
pub mod backends;
pub mod corpus;
pub mod diag;
pub mod error;
pub mod frontend;
pub mod interp;
pub mod testing;
pub mod transform;

pub use analysis::{analyze, AccessSets, Analysis, FieldClass, LoopInfo};
pub use ast::Program;
pub use diag::{Diagnostic, Diagnostics};
pub use error::{AliasConflict, CompileError};
pub use frontend::parse;
pub use interp::{interpret, interpret_traced, Inputs, Outputs, Trap, Value};
pub use transform::{mangle, plan_view, rewrite, ViewPlan};
