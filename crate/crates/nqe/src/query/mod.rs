//! The n-ary FOL query language: AST, s-expression parser, canonical shapes,
//! and compilation to linear step programs.

mod ast;
mod compile;
mod parse;
mod shapes;

pub use ast::{EntitySlot, Projection, QueryAst, QueryType};
pub use compile::{
    compile, compile_fused, LogicOp, LogicStep, ProjectionSpec, RegisterId, SpecSlot, Step,
    StepProgram,
};
pub use parse::parse;
pub use shapes::canonical_ast;
