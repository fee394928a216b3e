//! Hook surface every backend exposes during a velocity evaluation.
//!
//! Attention hooks see one head's post-softmax joint attention matrix
//! `[(L + N), (L + N)]`, text tokens first. Residual hooks see the image
//! segment of a block's branch output `f(x)_image` (`[N, d_model]`), before
//! it is added back to the stream. Handlers may modify either in place;
//! the backend uses whatever the handler leaves behind.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HookKind {
    AttentionProbs,
    ResidualImageOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HookMode {
    Capture,
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HookPoint {
    pub layer: usize,
    pub kind: HookKind,
    pub mode: HookMode,
}

/// Callbacks invoked by a backend while it evaluates the velocity field.
/// Calls arrive in layer order, heads in ascending order within a layer.
pub trait Hooks {
    fn wants(&self, layer: usize, kind: HookKind) -> bool;

    fn on_attention(
        &mut self,
        _layer: usize,
        _head: usize,
        _text_len: usize,
        _probs: &mut Tensor,
    ) -> Result<()> {
        Ok(())
    }

    fn on_residual(&mut self, _layer: usize, _image_out: &mut Tensor) -> Result<()> {
        Ok(())
    }
}

/// Hooks that never fire.
pub struct NoHooks;

impl Hooks for NoHooks {
    fn wants(&self, _: usize, _: HookKind) -> bool {
        false
    }
}

/// One tensor delivered to a capture hook.
#[derive(Debug, Clone, PartialEq)]
pub struct HookEvent {
    pub layer: usize,
    pub kind: HookKind,
    /// Head index for attention events.
    pub head: Option<usize>,
    pub text_len: usize,
    pub tensor: Tensor,
}

/// Records a copy of every tensor at the registered points.
#[derive(Debug, Default)]
pub struct CaptureHooks {
    points: Vec<(usize, HookKind)>,
    events: Vec<HookEvent>,
}

impl CaptureHooks {
    pub fn new(points: impl IntoIterator<Item = (usize, HookKind)>) -> Self {
        Self {
            points: points.into_iter().collect(),
            events: Vec::new(),
        }
    }

    pub fn events(&self) -> &[HookEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<HookEvent> {
        self.events
    }
}

impl Hooks for CaptureHooks {
    fn wants(&self, layer: usize, kind: HookKind) -> bool {
        self.points.contains(&(layer, kind))
    }

    fn on_attention(
        &mut self,
        layer: usize,
        head: usize,
        text_len: usize,
        probs: &mut Tensor,
    ) -> Result<()> {
        self.events.push(HookEvent {
            layer,
            kind: HookKind::AttentionProbs,
            head: Some(head),
            text_len,
            tensor: probs.clone(),
        });
        Ok(())
    }

    fn on_residual(&mut self, layer: usize, image_out: &mut Tensor) -> Result<()> {
        self.events.push(HookEvent {
            layer,
            kind: HookKind::ResidualImageOut,
            head: None,
            text_len: 0,
            tensor: image_out.clone(),
        });
        Ok(())
    }
}

/// Replaces tensors at fixed points with stored values.
#[derive(Debug, Default)]
pub struct OverrideHooks {
    attention: BTreeMap<(usize, usize), Tensor>,
    residual: BTreeMap<usize, Tensor>,
}

impl OverrideHooks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds overrides that replay captured events.
    pub fn from_events(events: &[HookEvent]) -> Self {
        let mut out = Self::new();
        for e in events {
            match (e.kind, e.head) {
                (HookKind::AttentionProbs, Some(h)) => out.set_attention(e.layer, h, e.tensor.clone()),
                (HookKind::ResidualImageOut, _) => out.set_residual(e.layer, e.tensor.clone()),
                _ => {}
            }
        }
        out
    }

    pub fn set_attention(&mut self, layer: usize, head: usize, probs: Tensor) {
        self.attention.insert((layer, head), probs);
    }

    pub fn set_residual(&mut self, layer: usize, image_out: Tensor) {
        self.residual.insert(layer, image_out);
    }
}

fn replace(layer: usize, dst: &mut Tensor, src: &Tensor) -> Result<()> {
    if dst.dims() != src.dims() {
        return Err(Error::Injection {
            layer,
            reason: format!("override shape {:?} vs expected {:?}", src.dims(), dst.dims()),
        });
    }
    dst.data_mut().copy_from_slice(src.data());
    Ok(())
}

impl Hooks for OverrideHooks {
    fn wants(&self, layer: usize, kind: HookKind) -> bool {
        match kind {
            HookKind::AttentionProbs => self.attention.keys().any(|&(l, _)| l == layer),
            HookKind::ResidualImageOut => self.residual.contains_key(&layer),
        }
    }

    fn on_attention(&mut self, layer: usize, head: usize, _: usize, probs: &mut Tensor) -> Result<()> {
        match self.attention.get(&(layer, head)) {
            Some(src) => replace(layer, probs, src),
            None => Ok(()),
        }
    }

    fn on_residual(&mut self, layer: usize, image_out: &mut Tensor) -> Result<()> {
        match self.residual.get(&layer) {
            Some(src) => replace(layer, image_out, src),
            None => Ok(()),
        }
    }
}
