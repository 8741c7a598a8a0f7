//! VegaZero: a compact keyword grammar for single-view charts, and its
//! compilation to Vega-Lite.

mod ast;
mod compile;
mod execute;
mod parse;
mod validate;

pub use ast::*;
pub use compile::{build_doc, compile, Channel, ChannelType, CompileError, Encoding, InlineData, VegaLiteDoc, VEGA_LITE_SCHEMA};
pub use execute::{bin_label, execute, output_y_name, ExecError};
pub use parse::{parse, render, SyntaxError};
pub use validate::{validate, Violation, ViolationCode};
