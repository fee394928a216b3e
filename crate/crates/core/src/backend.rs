//! Backend adapter contract.
//!
//! A backend supplies tokenization, the latent codec, a timestep schedule and
//! a velocity field with hooks. Joint attention must put text tokens at
//! indices `[0, L)` and image tokens at `[L, L + N)`, with `N = h * w`
//! image tokens laid out row-major over the latent grid. Hook tensors follow
//! the layouts documented in [`crate::hooks`].

use crate::error::Result;
use crate::flow::{TimestepSchedule, VelocityField};
use crate::hooks::Hooks;
use crate::latent::LatentGrid;
use crate::tensor::Tensor;
use crate::tokens::TokenSequence;

/// Prompt conditioning handed to every velocity evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub text: TokenSequence,
    /// Opaque guidance value for backends that use embedded guidance.
    pub guidance: Option<f32>,
}

impl Conditioning {
    pub fn new(text: TokenSequence) -> Self {
        Self {
            text,
            guidance: None,
        }
    }
}

pub trait Backend: Sync {
    /// `(h, w, c)` of the latent grid.
    fn latent_shape(&self) -> (usize, usize, usize);

    /// Total transformer layers; hook layer indices live in `0..n_layers()`.
    fn n_layers(&self) -> usize;

    fn n_heads(&self) -> usize;

    /// Width of the residual stream, i.e. the column count of residual hooks.
    fn d_model(&self) -> usize;

    fn schedule(&self, steps: usize) -> TimestepSchedule {
        TimestepSchedule::uniform(steps)
    }

    fn tokenize(&self, prompt: &str) -> TokenSequence;

    /// `[H, W, 3]` image in `[0, 1]` to a step-0 latent.
    fn encode(&self, image: &Tensor) -> Result<LatentGrid>;

    /// Latent to a `[H, W, 3]` image at the backend's native resolution.
    fn decode(&self, latent: &LatentGrid) -> Result<Tensor>;

    fn velocity(
        &self,
        latent: &LatentGrid,
        cond: &Conditioning,
        hooks: &mut dyn Hooks,
    ) -> Result<Tensor>;
}

/// Adapts a backend plus conditioning and hooks into a [`VelocityField`].
pub struct BackendField<'a, B: Backend + ?Sized> {
    pub backend: &'a B,
    pub cond: &'a Conditioning,
    pub hooks: &'a mut dyn Hooks,
}

impl<'a, B: Backend + ?Sized> BackendField<'a, B> {
    pub fn new(backend: &'a B, cond: &'a Conditioning, hooks: &'a mut dyn Hooks) -> Self {
        Self {
            backend,
            cond,
            hooks,
        }
    }
}

impl<B: Backend + ?Sized> VelocityField for BackendField<'_, B> {
    fn velocity(&mut self, latent: &LatentGrid) -> Result<Tensor> {
        self.backend.velocity(latent, self.cond, self.hooks)
    }
}
