//! Model language front end: lexer, parser, data file reader and the
//! compiler that turns a parsed model plus data into a [`crate::graph::Dag`].

pub mod ast;
pub mod compile;
pub mod lexer;
pub mod parser;
pub mod rdump;

pub use ast::ModelAst;
pub use compile::{compile_graph, CompileError};
pub use parser::{parse_model, ParseError};
pub use rdump::{parse_data, DataEnvironment, DataError, DataValue};
