//! Entity ranking for telegraphic queries: a type catalog, a snippet
//! corpus index, and generative and discriminative joint interpreters that
//! pick a target type and a hint/selector split for each query.

pub mod catalog;
pub mod discriminative;
pub mod error;
pub mod eval;
pub mod generative;
pub mod index;
pub mod query;
pub mod synth;
pub mod text;
pub mod typepred;

pub use error::{Error, Result};
