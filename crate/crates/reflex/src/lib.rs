//! File formats, metrics, benchmark harness and sweeps for ReFlex editing.
//! The algorithm itself lives in `reflex_core`.

pub mod analyze;
pub mod bench;
pub mod error;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod plot;
pub mod sweep;

pub use crate::error::{Error, Result};
pub use reflex_core;

use reflex_core::{BackendSpec, ToyBackend};

/// Named toy backend presets.
pub fn toy_backend(name: &str, seed: u64) -> Result<ToyBackend> {
    let spec = match name {
        "toy" => BackendSpec::default(),
        "toy-flux" => BackendSpec::flux_layout(),
        other => {
            return Err(reflex_core::Error::Spec(format!(
                "unknown backend `{other}` (expected toy or toy-flux)"
            ))
            .into())
        }
    };
    Ok(ToyBackend::new(BackendSpec { seed, ..spec })?)
}
