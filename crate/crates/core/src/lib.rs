pub mod augment;
pub mod cli;
pub mod contrastive;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod momentum;
pub mod numeric;
pub mod synthetic;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
