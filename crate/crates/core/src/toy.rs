//! Deterministic miniature MM-DiT.
//!
//! Double-stream blocks come first (separate text/image projections), then
//! single-stream blocks over the concatenated `[text; image]` stream with
//! shared projections. Every block computes
//!
//! ```text
//! a = Attn(LN(x)),  m = MLP(LN(x + a)),  f(x) = a + m,  out = x + f(x)
//! ```
//!
//! All weights come from a seeded ChaCha stream, so equal specs build
//! bit-identical models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backend::{Backend, Conditioning};
use crate::error::{Error, Result};
use crate::hooks::{HookKind, Hooks};
use crate::latent::LatentGrid;
use crate::tensor::{matmul, matmul_into, Tensor};
use crate::tokens::TokenSequence;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendSpec {
    pub n_double: usize,
    pub n_single: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// `[h, w, c]`
    pub latent_shape: [usize; 3],
    /// Image pixels per latent cell along each axis, at native resolution.
    pub patch_size: usize,
    pub d_text: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            n_double: 4,
            n_single: 8,
            d_model: 64,
            n_heads: 4,
            latent_shape: [16, 16, 4],
            patch_size: 1,
            d_text: 32,
            vocab_size: 4096,
            seed: 0,
        }
    }
}

impl BackendSpec {
    /// FLUX block layout (19 double-stream then 38 single-stream layers) at
    /// toy width, so full-model layer indices such as 13..19 and 20..45 are
    /// meaningful.
    pub fn flux_layout() -> Self {
        Self {
            n_double: 19,
            n_single: 38,
            d_model: 32,
            n_heads: 2,
            ..Self::default()
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_double + self.n_single
    }

    pub fn validate(&self) -> Result<()> {
        let [h, w, c] = self.latent_shape;
        if self.n_layers() == 0 {
            return Err(Error::Spec("model needs at least one layer".into()));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Spec(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(4) {
            return Err(Error::Spec("d_model must be a multiple of 4".into()));
        }
        if h == 0 || w == 0 || c == 0 || self.patch_size == 0 || self.d_text == 0 {
            return Err(Error::Spec("latent, patch and text sizes must be positive".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Spec("vocabulary needs at least 2 entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    DoubleStream,
    SingleStream,
}

#[derive(Debug, Clone)]
struct Linear {
    w: Vec<f32>,
    d_in: usize,
    d_out: usize,
}

impl Linear {
    fn seeded(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, gain: f32) -> Self {
        let scale = gain / libm::sqrtf(d_in as f32);
        let w = (0..d_in * d_out)
            .map(|_| {
                let z: f32 = StandardNormal.sample(rng);
                scale * z
            })
            .collect::<Vec<f32>>();
        Self { w, d_in, d_out }
    }

    fn apply(&self, x: &[f32], rows: usize) -> Vec<f32> {
        matmul(x, &self.w, rows, self.d_in, self.d_out)
    }
}

#[derive(Debug, Clone)]
struct StreamWeights {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    mlp_in: Linear,
    mlp_out: Linear,
}

impl StreamWeights {
    fn seeded(rng: &mut ChaCha8Rng, d: usize, branch_gain: f32) -> Self {
        Self {
            q: Linear::seeded(rng, d, d, 1.0),
            k: Linear::seeded(rng, d, d, 1.0),
            v: Linear::seeded(rng, d, d, 1.0),
            o: Linear::seeded(rng, d, d, branch_gain),
            mlp_in: Linear::seeded(rng, d, 2 * d, 1.0),
            mlp_out: Linear::seeded(rng, 2 * d, d, branch_gain),
        }
    }
}

#[derive(Debug, Clone)]
enum Block {
    Double { text: StreamWeights, image: StreamWeights },
    Single(StreamWeights),
}

/// Seeded toy MM-DiT backend.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    spec: BackendSpec,
    token_table: Vec<f32>,
    text_in: Linear,
    image_in: Linear,
    time_in: Linear,
    blocks: Vec<Block>,
    head_out: Linear,
    /// `[3 p^2, c]` patch projection and its pseudo-inverse `[c, 3 p^2]`.
    codec_enc: Vec<f32>,
    codec_dec: Vec<f32>,
}

const LN_EPS: f32 = 1e-5;

impl ToyBackend {
    pub fn new(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let d = spec.d_model;
        let c = spec.latent_shape[2];
        let branch_gain = 1.0 / libm::sqrtf(2.0 * spec.n_layers() as f32);

        let token_table = (0..spec.vocab_size * spec.d_text)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let text_in = Linear::seeded(&mut rng, spec.d_text, d, 1.0);
        let image_in = Linear::seeded(&mut rng, c, d, 1.0);
        let time_in = Linear::seeded(&mut rng, d, d, 1.0);
        let mut blocks = Vec::with_capacity(spec.n_layers());
        for _ in 0..spec.n_double {
            blocks.push(Block::Double {
                text: StreamWeights::seeded(&mut rng, d, branch_gain),
                image: StreamWeights::seeded(&mut rng, d, branch_gain),
            });
        }
        for _ in 0..spec.n_single {
            blocks.push(Block::Single(StreamWeights::seeded(&mut rng, d, branch_gain)));
        }
        let head_out = Linear::seeded(&mut rng, d, c, 1.0);

        let patch = 3 * spec.patch_size * spec.patch_size;
        let codec_enc: Vec<f32> = (0..patch * c)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let codec_dec = pseudo_inverse(&codec_enc, patch, c)?;

        Ok(Self {
            spec,
            token_table,
            text_in,
            image_in,
            time_in,
            blocks,
            head_out,
            codec_enc,
            codec_dec,
        })
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn block_kind(&self, layer: usize) -> Option<BlockKind> {
        self.blocks.get(layer).map(|b| match b {
            Block::Double { .. } => BlockKind::DoubleStream,
            Block::Single(_) => BlockKind::SingleStream,
        })
    }

    /// Order-sensitive checksum of the first block's weights.
    pub fn first_layer_checksum(&self) -> u64 {
        let w = match &self.blocks[0] {
            Block::Double { image, .. } => &image.q.w,
            Block::Single(s) => &s.q.w,
        };
        w.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits() as u64).wrapping_mul(0x100_0000_01b3)
        })
    }

    /// Native image side lengths `(H, W)`.
    pub fn native_resolution(&self) -> (usize, usize) {
        let [h, w, _] = self.spec.latent_shape;
        (h * self.spec.patch_size, w * self.spec.patch_size)
    }

    fn token_id(&self, word: &str) -> u32 {
        // FNV-1a; id 0 is reserved for padding.
        let hash = word.bytes().fold(0x811c_9dc5u32, |h, b| {
            (h ^ b as u32).wrapping_mul(0x0100_0193)
        });
        1 + hash % (self.spec.vocab_size as u32 - 1)
    }

    fn run_block(
        &self,
        layer: usize,
        x: &mut [f32],
        text_len: usize,
        temb: &[f32],
        hooks: &mut dyn Hooks,
    ) -> Result<()> {
        let d = self.spec.d_model;
        let s = x.len() / d;
        // Time conditioning enters every block's normalized input.
        let mut h = layer_norm(x, d);
        for row in h.chunks_exact_mut(d) {
            for (a, b) in row.iter_mut().zip(temb) {
                *a += b;
            }
        }
        let (q, k, v) = match &self.blocks[layer] {
            Block::Double { text, image } => (
                split_project(&h, text_len, d, &text.q, &image.q),
                split_project(&h, text_len, d, &text.k, &image.k),
                split_project(&h, text_len, d, &text.v, &image.v),
            ),
            Block::Single(w) => (w.q.apply(&h, s), w.k.apply(&h, s), w.v.apply(&h, s)),
        };
        let attn = self.joint_attention(layer, &q, &k, &v, s, text_len, hooks)?;
        let a = match &self.blocks[layer] {
            Block::Double { text, image } => split_project(&attn, text_len, d, &text.o, &image.o),
            Block::Single(w) => w.o.apply(&attn, s),
        };
        let mut mid: Vec<f32> = x.iter().zip(&a).map(|(x, a)| x + a).collect();
        mid = layer_norm(&mid, d);
        let m = match &self.blocks[layer] {
            Block::Double { text, image } => {
                let mut hidden = split_project(&mid, text_len, d, &text.mlp_in, &image.mlp_in);
                hidden.iter_mut().for_each(|v| *v = gelu(*v));
                split_project(&hidden, text_len, 2 * d, &text.mlp_out, &image.mlp_out)
            }
            Block::Single(w) => {
                let mut hidden = w.mlp_in.apply(&mid, s);
                hidden.iter_mut().for_each(|v| *v = gelu(*v));
                w.mlp_out.apply(&hidden, s)
            }
        };
        let mut f: Vec<f32> = a.iter().zip(&m).map(|(a, m)| a + m).collect();
        if hooks.wants(layer, HookKind::ResidualImageOut) {
            let mut img = Tensor::new(vec![s - text_len, d], f[text_len * d..].to_vec())?;
            hooks.on_residual(layer, &mut img)?;
            f[text_len * d..].copy_from_slice(img.data());
        }
        for (x, f) in x.iter_mut().zip(&f) {
            *x += f;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn joint_attention(
        &self,
        layer: usize,
        q: &[f32],
        k: &[f32],
        v: &[f32],
        s: usize,
        text_len: usize,
        hooks: &mut dyn Hooks,
    ) -> Result<Vec<f32>> {
        let d = self.spec.d_model;
        let heads = self.spec.n_heads;
        let dh = d / heads;
        let scale = 1.0 / libm::sqrtf(dh as f32);
        let capture = hooks.wants(layer, HookKind::AttentionProbs);
        let mut out = vec![0f32; s * d];
        let mut qh = vec![0f32; s * dh];
        let mut kt = vec![0f32; dh * s];
        let mut vh = vec![0f32; s * dh];
        let mut oh = vec![0f32; s * dh];
        let mut probs = Tensor::zeros(&[s, s]);
        for head in 0..heads {
            let off = head * dh;
            for i in 0..s {
                qh[i * dh..(i + 1) * dh].copy_from_slice(&q[i * d + off..i * d + off + dh]);
                vh[i * dh..(i + 1) * dh].copy_from_slice(&v[i * d + off..i * d + off + dh]);
                for j in 0..dh {
                    kt[j * s + i] = k[i * d + off + j];
                }
            }
            matmul_into(&qh, &kt, probs.data_mut(), s, dh, s);
            for row in probs.data_mut().chunks_exact_mut(s) {
                softmax_scaled(row, scale);
            }
            if capture {
                hooks.on_attention(layer, head, text_len, &mut probs)?;
                if probs.dims() != [s, s] {
                    return Err(Error::Injection {
                        layer,
                        reason: format!("attention hook returned {:?}", probs.dims()),
                    });
                }
            }
            matmul_into(probs.data(), &vh, &mut oh, s, s, dh);
            for i in 0..s {
                out[i * d + off..i * d + off + dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
            }
        }
        Ok(out)
    }
}

impl Backend for ToyBackend {
    fn latent_shape(&self) -> (usize, usize, usize) {
        let [h, w, c] = self.spec.latent_shape;
        (h, w, c)
    }

    fn n_layers(&self) -> usize {
        self.spec.n_layers()
    }

    fn n_heads(&self) -> usize {
        self.spec.n_heads
    }

    fn d_model(&self) -> usize {
        self.spec.d_model
    }

    /// Whitespace-split words, one token per word. An empty prompt becomes a
    /// single padding token.
    fn tokenize(&self, prompt: &str) -> TokenSequence {
        let mut ids = Vec::new();
        let mut spans: BTreeMap<String, Vec<core::ops::Range<usize>>> = BTreeMap::new();
        for word in prompt.split_whitespace() {
            spans.entry(word.into()).or_default().push(ids.len()..ids.len() + 1);
            ids.push(self.token_id(word));
        }
        if ids.is_empty() {
            ids.push(0);
        }
        let dt = self.spec.d_text;
        let mut emb = Vec::with_capacity(ids.len() * dt);
        for &id in &ids {
            let id = id as usize;
            emb.extend_from_slice(&self.token_table[id * dt..(id + 1) * dt]);
        }
        let emb = Tensor::new(vec![ids.len(), dt], emb).expect("sized above");
        TokenSequence::new(ids, emb, spans).expect("spans built in range")
    }

    /// Box-downsamples to native resolution, then applies the patch
    /// projection. `H` and `W` must be multiples of the native size.
    fn encode(&self, image: &Tensor) -> Result<LatentGrid> {
        let (nh, nw) = self.native_resolution();
        let dims = image.dims();
        if dims.len() != 3 || dims[2] != 3 {
            return Err(Error::Codec(format!("image must be [H, W, 3], got {dims:?}")));
        }
        let (ih, iw) = (dims[0], dims[1]);
        if ih == 0 || iw == 0 || ih % nh != 0 || iw % nw != 0 {
            return Err(Error::Codec(format!(
                "image {ih}x{iw} is not a multiple of native {nh}x{nw}"
            )));
        }
        let (fy, fx) = (ih / nh, iw / nw);
        let area = (fy * fx) as f32;
        let px = image.data();
        let native: Vec<f32> = (0..nh * nw * 3)
            .map(|i| {
                let (y, x, ch) = (i / (nw * 3), (i / 3) % nw, i % 3);
                let mut acc = 0f32;
                for dy in 0..fy {
                    for dx in 0..fx {
                        acc += px[((y * fy + dy) * iw + x * fx + dx) * 3 + ch];
                    }
                }
                acc / area
            })
            .collect();
        let [h, w, c] = self.spec.latent_shape;
        let p = self.spec.patch_size;
        let patch_len = 3 * p * p;
        let mut patches = vec![0f32; h * w * patch_len];
        for ly in 0..h {
            for lx in 0..w {
                let dst = &mut patches[(ly * w + lx) * patch_len..(ly * w + lx + 1) * patch_len];
                for py in 0..p {
                    let row = ((ly * p + py) * nw + lx * p) * 3;
                    dst[py * p * 3..(py + 1) * p * 3].copy_from_slice(&native[row..row + p * 3]);
                }
            }
        }
        let lat = matmul(&patches, &self.codec_enc, h * w, patch_len, c);
        LatentGrid::new(Tensor::new(vec![h, w, c], lat)?, 0, 0.0)
    }

    fn decode(&self, latent: &LatentGrid) -> Result<Tensor> {
        let [h, w, c] = self.spec.latent_shape;
        if latent.shape() != (h, w, c) {
            return Err(Error::Codec(format!(
                "latent {:?} does not match backend {:?}",
                latent.shape(),
                self.spec.latent_shape
            )));
        }
        let p = self.spec.patch_size;
        let patch_len = 3 * p * p;
        let patches = matmul(latent.data().data(), &self.codec_dec, h * w, c, patch_len);
        let (nh, nw) = self.native_resolution();
        let mut img = vec![0f32; nh * nw * 3];
        for ly in 0..h {
            for lx in 0..w {
                let src = &patches[(ly * w + lx) * patch_len..(ly * w + lx + 1) * patch_len];
                for py in 0..p {
                    let row = ((ly * p + py) * nw + lx * p) * 3;
                    img[row..row + p * 3].copy_from_slice(&src[py * p * 3..(py + 1) * p * 3]);
                }
            }
        }
        Tensor::new(vec![nh, nw, 3], img)
    }

    fn velocity(
        &self,
        latent: &LatentGrid,
        cond: &Conditioning,
        hooks: &mut dyn Hooks,
    ) -> Result<Tensor> {
        let [h, w, c] = self.spec.latent_shape;
        if latent.shape() != (h, w, c) {
            return Err(Error::Dimension(format!(
                "latent {:?} does not match backend {:?}",
                latent.shape(),
                self.spec.latent_shape
            )));
        }
        let text = &cond.text;
        let (dt, d) = (self.spec.d_text, self.spec.d_model);
        if text.embeddings().cols() != dt {
            return Err(Error::Dimension(format!(
                "text embeddings have width {}, backend expects {dt}",
                text.embeddings().cols()
            )));
        }
        let l = text.len();
        let n = h * w;
        let s = l + n;

        let temb = self.time_in.apply(&sinusoid(latent.t_value() * 1000.0, d), 1);
        let mut x = vec![0f32; s * d];
        x[..l * d].copy_from_slice(&self.text_in.apply(text.embeddings().data(), l));
        x[l * d..].copy_from_slice(&self.image_in.apply(latent.data().data(), n));
        for i in 0..l {
            let pe = sinusoid(i as f32, d);
            for (a, b) in x[i * d..(i + 1) * d].iter_mut().zip(&pe) {
                *a += b;
            }
        }
        for y in 0..h {
            let pe_y = sinusoid(y as f32, d / 2);
            for xx in 0..w {
                let pe_x = sinusoid(xx as f32, d / 2);
                let row = &mut x[(l + y * w + xx) * d..(l + y * w + xx + 1) * d];
                for (a, b) in row.iter_mut().zip(pe_y.iter().chain(&pe_x)) {
                    *a += b;
                }
            }
        }

        for layer in 0..self.blocks.len() {
            self.run_block(layer, &mut x, l, &temb, hooks)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step: latent.step_index(),
                    layer: Some(layer),
                });
            }
        }

        let img = layer_norm(&x[l * d..], d);
        let v = self.head_out.apply(&img, n);
        Tensor::new(vec![h, w, c], v)
    }
}

/// Text rows through one projection, image rows through the other.
fn split_project(x: &[f32], text_len: usize, d_in: usize, text: &Linear, image: &Linear) -> Vec<f32> {
    let s = x.len() / d_in;
    let mut out = text.apply(&x[..text_len * d_in], text_len);
    out.extend(image.apply(&x[text_len * d_in..], s - text_len));
    out
}

fn layer_norm(x: &[f32], d: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(d) {
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / libm::sqrtf(var + LN_EPS);
        out.extend(row.iter().map(|v| (v - mean) * inv));
    }
    out
}

fn softmax_scaled(row: &mut [f32], scale: f32) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) * scale;
    let mut sum = 0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v * scale - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    0.5 * x * (1.0 + libm::tanhf(C * (x + 0.044_715 * x * x * x)))
}

/// `[sin(p w_0), .., sin(p w_{d/2-1}), cos(p w_0), ..]` with `w_i = 10000^(-2i/d)`.
fn sinusoid(pos: f32, d: usize) -> Vec<f32> {
    let half = d / 2;
    let mut out = vec![0f32; d];
    for i in 0..half {
        let freq = libm::powf(10_000.0, -(i as f32) / half as f32);
        out[i] = libm::sinf(pos * freq);
        out[half + i] = libm::cosf(pos * freq);
    }
    out
}

/// Moore-Penrose pseudo-inverse of a full-rank `rows x cols` matrix, in f64.
fn pseudo_inverse(a: &[f32], rows: usize, cols: usize) -> Result<Vec<f32>> {
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let at = |i: usize, j: usize| a[i * cols + j];
    let pinv = if rows <= cols {
        // A^T (A A^T)^-1
        let mut g = vec![0f64; rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                g[i * rows + j] = (0..cols).map(|k| at(i, k) * at(j, k)).sum();
            }
        }
        let gi = invert(&g, rows)?;
        let mut p = vec![0f64; cols * rows];
        for i in 0..cols {
            for j in 0..rows {
                p[i * rows + j] = (0..rows).map(|k| at(k, i) * gi[k * rows + j]).sum();
            }
        }
        p
    } else {
        // (A^T A)^-1 A^T
        let mut g = vec![0f64; cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                g[i * cols + j] = (0..rows).map(|k| at(k, i) * at(k, j)).sum();
            }
        }
        let gi = invert(&g, cols)?;
        let mut p = vec![0f64; cols * rows];
        for i in 0..cols {
            for j in 0..rows {
                p[i * rows + j] = (0..cols).map(|k| gi[i * cols + k] * at(j, k)).sum();
            }
        }
        p
    };
    Ok(pinv.into_iter().map(|v| v as f32).collect())
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(m: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0f64; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-12 {
            return Err(Error::Codec("codec projection is rank deficient".into()));
        }
        for j in 0..n {
            a.swap(col * n + j, pivot * n + j);
            inv.swap(col * n + j, pivot * n + j);
        }
        let p = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r * n + j] -= f * a[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Ok(inv)
}
