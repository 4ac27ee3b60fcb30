//! Elastic bidirectional masked-LM encoder whose attention heads and MLP width
//! can be sliced to nested prefixes at inference time, together with the
//! tokenizer, data, training and benchmarking machinery around it.

pub mod bench;
pub mod data;
pub mod encoder;
pub mod error;
pub mod tensor;
pub mod tokenizer;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
