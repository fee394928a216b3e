//! Joint-attention decomposition, mid-step feature caching and the two
//! attention adaptation rules applied during injection.
//!
//! A joint attention matrix over `[text; image]` tokens splits into four
//! query/key blocks:
//!
//! ```text
//!            keys: text   image
//! text  q  [  T2T-SA   T2I-CA ]
//! image q  [  I2T-CA   I2I-SA ]
//! ```
//!
//! Only the image-query rows (I2T-CA and I2I-SA) are ever injected.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::config::EditConfig;
use crate::error::{Error, Result};
use crate::hooks::{HookEvent, HookKind};
use crate::tensor::Tensor;
use crate::tokens::TokenMapping;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointAttentionBlocks {
    pub layer: usize,
    pub head: usize,
    pub t2t: Tensor,
    pub t2i: Tensor,
    pub i2t: Tensor,
    pub i2i: Tensor,
    pub representation: Representation,
}

impl JointAttentionBlocks {
    pub fn text_len(&self) -> usize {
        self.t2t.rows()
    }

    pub fn image_len(&self) -> usize {
        self.i2i.rows()
    }

    /// Reassembles `[[t2t, t2i], [i2t, i2i]]`.
    pub fn recompose(&self) -> Tensor {
        let (l, n) = (self.text_len(), self.image_len());
        let mut full = Tensor::zeros(&[l + n, l + n]);
        full.write_block(0, 0, &self.t2t);
        full.write_block(0, l, &self.t2i);
        full.write_block(l, 0, &self.i2t);
        full.write_block(l, l, &self.i2i);
        full
    }
}

/// Splits a square joint attention matrix whose first `text_len` tokens are text.
pub fn decompose_joint_attention(
    full: &Tensor,
    text_len: usize,
    layer: usize,
    head: usize,
    representation: Representation,
) -> Result<JointAttentionBlocks> {
    let (rows, cols) = full.expect_matrix("joint attention")?;
    if rows != cols {
        return Err(Error::Dimension(format!(
            "joint attention must be square, got {rows}x{cols}"
        )));
    }
    if text_len > rows {
        return Err(Error::Dimension(format!(
            "text length {text_len} exceeds matrix side {rows}"
        )));
    }
    let (l, s) = (text_len, rows);
    Ok(JointAttentionBlocks {
        layer,
        head,
        t2t: full.block(0, l, 0, l),
        t2i: full.block(0, l, l, s),
        i2t: full.block(l, s, 0, l),
        i2i: full.block(l, s, l, s),
        representation,
    })
}

/// I2T-CA adaptation. Column `i` of the result is the cached source column
/// `f(i)` when the target token has a source partner, otherwise the target
/// column scaled by `alpha`.
pub fn adapt_i2t_ca(
    ca_target: &Tensor,
    cache_ca: &Tensor,
    mapping: &TokenMapping,
    alpha: f32,
) -> Result<Tensor> {
    let (n, lt) = ca_target.expect_matrix("target I2T-CA")?;
    let (ns, ls) = cache_ca.expect_matrix("cached I2T-CA")?;
    if mapping.target_len() != lt {
        return Err(Error::Mapping(format!(
            "mapping covers {} target tokens, attention has {lt}",
            mapping.target_len()
        )));
    }
    if ns != n && mapping.mapped_count() > 0 {
        return Err(Error::Dimension(format!(
            "cached I2T-CA has {ns} image rows, target has {n}"
        )));
    }
    let mut out = Tensor::zeros(&[n, lt]);
    for (i, f) in mapping.as_slice().iter().enumerate() {
        match *f {
            Some(src) => {
                if src >= ls {
                    return Err(Error::Mapping(format!(
                        "target token {i} maps to source {src}, cache has {ls} columns"
                    )));
                }
                for r in 0..n {
                    out.set(r, i, cache_ca.at(r, src));
                }
            }
            None => {
                for r in 0..n {
                    out.set(r, i, alpha * ca_target.at(r, i));
                }
            }
        }
    }
    Ok(out)
}

/// Per-row index sets of the `k` largest entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKIndexSet {
    rows: Vec<Vec<usize>>,
}

impl TopKIndexSet {
    /// Indices of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn rank_desc(row: &[f32]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b))
}

/// Top-`k` entries of every row, ties broken toward the lowest index.
/// `k` is clamped to the row length.
pub fn topk_rows(sa_source: &Tensor, k: usize) -> Result<TopKIndexSet> {
    let (n, cols) = sa_source.expect_matrix("source I2I-SA")?;
    let k = k.min(cols);
    let mut idx: Vec<usize> = Vec::with_capacity(cols);
    let rows = (0..n)
        .map(|i| {
            if k == 0 {
                return Vec::new();
            }
            let row = sa_source.row(i);
            idx.clear();
            idx.extend(0..cols);
            let cmp = rank_desc(row);
            if k < cols {
                idx.select_nth_unstable_by(k - 1, &cmp);
            }
            let mut top = idx[..k].to_vec();
            top.sort_unstable();
            top
        })
        .collect();
    Ok(TopKIndexSet { rows })
}

/// I2I-SA adaptation. Inside each row's source top-`k` set the target
/// values are used, rescaled so the set carries the source's mass;
/// everything else is the source value.
///
/// Rows whose target mass over the set is zero keep the source row.
pub fn adapt_i2i_sa(sa_target: &Tensor, sa_source: &Tensor, k: usize) -> Result<Tensor> {
    let topk = topk_rows(sa_source, k)?;
    adapt_i2i_sa_with(sa_target, sa_source, &topk)
}

pub fn adapt_i2i_sa_with(
    sa_target: &Tensor,
    sa_source: &Tensor,
    topk: &TopKIndexSet,
) -> Result<Tensor> {
    if sa_target.dims() != sa_source.dims() || sa_source.rank() != 2 {
        return Err(Error::Dimension(format!(
            "I2I-SA shapes differ: target {:?}, source {:?}",
            sa_target.dims(),
            sa_source.dims()
        )));
    }
    let mut out = sa_source.clone();
    let mut guarded = 0usize;
    for i in 0..topk.len() {
        let set = topk.row(i);
        if set.is_empty() {
            continue;
        }
        let (src, tgt) = (sa_source.row(i), sa_target.row(i));
        let src_mass: f64 = set.iter().map(|&j| src[j] as f64).sum();
        let tgt_mass: f64 = set.iter().map(|&j| tgt[j] as f64).sum();
        if tgt_mass == 0.0 {
            guarded += 1;
            continue;
        }
        let ratio = src_mass / tgt_mass;
        let dst = out.row_mut(i);
        for &j in set {
            dst[j] = (tgt[j] as f64 * ratio) as f32;
        }
    }
    if guarded > 0 {
        log::warn!("I2I-SA adaptation: {guarded} rows had zero target mass, kept source rows");
    }
    Ok(out)
}

/// Source-side features for one attention layer/head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionFeatures {
    /// `[N, L_s]`
    pub ca: Tensor,
    /// `[N, N]`
    pub sa: Tensor,
}

/// Source features captured from a single evaluation at the extraction step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    extraction_step: usize,
    attention: BTreeMap<(usize, usize), AttentionFeatures>,
    residual: BTreeMap<usize, Tensor>,
}

impl FeatureCache {
    pub fn new(
        extraction_step: usize,
        attention: BTreeMap<(usize, usize), AttentionFeatures>,
        residual: BTreeMap<usize, Tensor>,
    ) -> Result<Self> {
        let mut image_len = None;
        let mut check = |layer: usize, t: &Tensor, what: &str| -> Result<()> {
            let (n, _) = t.expect_matrix(what)?;
            if !t.is_finite() {
                return Err(Error::Capture {
                    layer,
                    reason: format!("non-finite {what}"),
                });
            }
            match image_len {
                None => image_len = Some(n),
                Some(m) if m != n => {
                    return Err(Error::Capture {
                        layer,
                        reason: format!("{what} has {n} image rows, expected {m}"),
                    })
                }
                _ => {}
            }
            Ok(())
        };
        for (&(layer, _), f) in &attention {
            check(layer, &f.ca, "I2T-CA")?;
            check(layer, &f.sa, "I2I-SA")?;
        }
        for (&layer, r) in &residual {
            check(layer, r, "residual")?;
        }
        Ok(Self {
            extraction_step,
            attention,
            residual,
        })
    }

    pub fn extraction_step(&self) -> usize {
        self.extraction_step
    }

    pub fn attention(&self, layer: usize, head: usize) -> Option<&AttentionFeatures> {
        self.attention.get(&(layer, head))
    }

    pub fn attention_entries(&self) -> impl Iterator<Item = (&(usize, usize), &AttentionFeatures)> {
        self.attention.iter()
    }

    pub fn attention_layers(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.attention.keys().map(|&(l, _)| l).collect();
        v.dedup();
        v
    }

    pub fn residual(&self, layer: usize) -> Option<&Tensor> {
        self.residual.get(&layer)
    }

    pub fn residual_entries(&self) -> impl Iterator<Item = (&usize, &Tensor)> {
        self.residual.iter()
    }

    pub fn residual_layers(&self) -> Vec<usize> {
        self.residual.keys().copied().collect()
    }
}

/// Builds a feature cache from the hook events of one evaluation at the
/// extraction step `config.t_prime`.
pub fn capture_features(events: &[HookEvent], config: &EditConfig) -> Result<FeatureCache> {
    let mut attention = BTreeMap::new();
    let mut residual = BTreeMap::new();
    for e in events {
        match e.kind {
            HookKind::AttentionProbs if config.attn_layers.contains(e.layer) => {
                let head = e.head.ok_or_else(|| Error::Capture {
                    layer: e.layer,
                    reason: "attention event without head".into(),
                })?;
                let blocks = decompose_joint_attention(
                    &e.tensor,
                    e.text_len,
                    e.layer,
                    head,
                    Representation::Probabilities,
                )
                .map_err(|err| Error::Capture {
                    layer: e.layer,
                    reason: format!("{err}"),
                })?;
                attention.insert(
                    (e.layer, head),
                    AttentionFeatures {
                        ca: blocks.i2t,
                        sa: blocks.i2i,
                    },
                );
            }
            HookKind::ResidualImageOut if config.res_layers.contains(e.layer) => {
                residual.insert(e.layer, e.tensor.clone());
            }
            _ => {}
        }
    }
    let mut heads_per_layer: Option<usize> = None;
    for layer in config.attn_layers.iter() {
        let heads = attention.range((layer, 0)..=(layer, usize::MAX)).count();
        if heads == 0 {
            return Err(Error::Capture {
                layer,
                reason: "no attention event captured".into(),
            });
        }
        match heads_per_layer {
            None => heads_per_layer = Some(heads),
            Some(h) if h != heads => {
                return Err(Error::Capture {
                    layer,
                    reason: format!("{heads} heads captured, other layers have {h}"),
                })
            }
            _ => {}
        }
    }
    if let Some(layer) = config.res_layers.iter().find(|l| !residual.contains_key(l)) {
        return Err(Error::Capture {
            layer,
            reason: "no residual event captured".into(),
        });
    }
    FeatureCache::new(config.t_prime, attention, residual)
}

/// Which injections are live for the current layer and step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    pub ca: bool,
    pub sa: bool,
    pub sa_adapt: bool,
}

/// Replacement blocks for the image-query rows of one head.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowOverrides {
    /// New I2T-CA block `[N, L_t]`.
    pub i2t: Option<Tensor>,
    /// New I2I-SA block `[N, N]`.
    pub i2i: Option<Tensor>,
}

pub fn build_injected_row_blocks(
    target: &JointAttentionBlocks,
    cache: &FeatureCache,
    mapping: &TokenMapping,
    alpha: f32,
    k: usize,
    flags: StepFlags,
) -> Result<RowOverrides> {
    let mut out = RowOverrides::default();
    if !flags.ca && !flags.sa {
        return Ok(out);
    }
    let layer = target.layer;
    let injection = |reason: alloc::string::String| Error::Injection { layer, reason };
    let feats = cache
        .attention(layer, target.head)
        .ok_or_else(|| injection(format!("no cached features for head {}", target.head)))?;
    if flags.ca {
        if feats.ca.rows() != target.i2t.rows() {
            return Err(injection(format!(
                "cached I2T-CA has {} image rows, evaluation has {}",
                feats.ca.rows(),
                target.i2t.rows()
            )));
        }
        out.i2t = Some(
            adapt_i2t_ca(&target.i2t, &feats.ca, mapping, alpha)
                .map_err(|e| injection(format!("{e}")))?,
        );
    }
    if flags.sa {
        if feats.sa.dims() != target.i2i.dims() {
            return Err(injection(format!(
                "cached I2I-SA is {:?}, evaluation has {:?}",
                feats.sa.dims(),
                target.i2i.dims()
            )));
        }
        out.i2i = Some(if flags.sa_adapt {
            adapt_i2i_sa(&target.i2i, &feats.sa, k)?
        } else {
            feats.sa.clone()
        });
    }
    Ok(out)
}

/// Writes row overrides into the image-query rows of a full joint matrix.
pub fn apply_row_overrides(full: &mut Tensor, text_len: usize, overrides: &RowOverrides) {
    if let Some(i2t) = &overrides.i2t {
        full.write_block(text_len, 0, i2t);
    }
    if let Some(i2i) = &overrides.i2i {
        full.write_block(text_len, text_len, i2i);
    }
}
