#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditions;
pub mod error;
pub mod fisher;
pub mod forward;
pub mod linearize;
pub mod model;
pub mod oracle;
pub mod precise;

pub use error::{Error, Result};
