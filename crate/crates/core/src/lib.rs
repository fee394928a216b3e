//! Training-free real-image editing for rectified-flow MM-DiT models.
//!
//! The crate is `no_std` (with `alloc`). File formats, the benchmark harness
//! and the command line live in the `reflex` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attention;
pub mod backend;
pub mod config;
pub mod error;
pub mod flow;
pub mod hooks;
pub mod latent;
pub mod mask;
pub mod pipeline;
pub mod tensor;
pub mod tokens;
pub mod toy;

pub use crate::backend::{Backend, BackendField, Conditioning};
pub use crate::config::{EditConfig, LayerSet};
pub use crate::error::{Error, Result};
pub use crate::latent::LatentGrid;
pub use crate::tensor::Tensor;
pub use crate::tokens::{build_token_mapping, TokenMapping, TokenSequence};
pub use crate::toy::{BackendSpec, ToyBackend};
pub use crate::pipeline::{reflex_edit, EditOutput, EditRequest, RunReport};
