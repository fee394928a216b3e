//! The full edit: invert the source, extract mid-step features, then
//! generate the target with scheduled injections and latent blending.
//!
//! Generation step `g` (counted from the start of target generation) moves
//! the latent from step `T - g` to `T - g - 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::attention::{
    apply_row_overrides, build_injected_row_blocks, capture_features, decompose_joint_attention,
    FeatureCache, Representation, StepFlags,
};
use crate::backend::{Backend, BackendField, Conditioning};
use crate::config::{EditConfig, LayerSet};
use crate::error::{Error, Result};
use crate::flow::{
    checked_velocity, euler_step, gaussian_noise, noised_invert, sample_from, TimestepSchedule,
    Trajectory,
};
use crate::hooks::{CaptureHooks, HookKind, Hooks, NoHooks};
use crate::latent::LatentGrid;
use crate::mask::{
    blend_latents, gaussian_smooth, otsu_threshold, word_saliency, EditMask, DEFAULT_BINS,
    DEFAULT_RADIUS, DEFAULT_SIGMA,
};
use crate::tensor::Tensor;
use crate::tokens::{build_token_mapping, TokenMapping, TokenSequence};

/// Flags for one generation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepSchedule {
    pub ca: bool,
    pub sa: bool,
    pub sa_adapt: bool,
    pub res: bool,
    pub blend: bool,
}

impl StepSchedule {
    pub fn any_injection(&self) -> bool {
        self.ca || self.sa || self.res
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionSchedule {
    steps: Vec<StepSchedule>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleCounts {
    pub ca: usize,
    pub sa: usize,
    pub sa_adapt: usize,
    pub res: usize,
    pub blend: usize,
}

impl InjectionSchedule {
    /// A schedule with every flag off for `steps` steps.
    pub fn inactive(steps: usize) -> Self {
        Self {
            steps: alloc::vec![StepSchedule::default(); steps],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, g: usize) -> StepSchedule {
        self.steps.get(g).copied().unwrap_or_default()
    }

    pub fn steps(&self) -> &[StepSchedule] {
        &self.steps
    }

    pub fn counts(&self) -> ScheduleCounts {
        let mut c = ScheduleCounts::default();
        for s in &self.steps {
            c.ca += s.ca as usize;
            c.sa += s.sa as usize;
            c.sa_adapt += s.sa_adapt as usize;
            c.res += s.res as usize;
            c.blend += s.blend as usize;
        }
        c
    }
}

/// Step counts are `floor(frac * T)` and every flag is active on a prefix
/// of generation. Without a source prompt I2T-CA is never injected and the
/// no-source fractions apply to I2I-SA and residuals.
pub fn build_schedule(config: &EditConfig, has_source_prompt: bool) -> InjectionSchedule {
    let t = config.steps;
    let (ca, sa, res) = if has_source_prompt {
        (
            config.step_count(config.frac_ca),
            config.step_count(config.frac_sa),
            config.step_count(config.frac_res),
        )
    } else {
        (
            0,
            config.step_count(config.frac_sa_no_source),
            config.step_count(config.frac_res_no_source),
        )
    };
    let blend = config.step_count(config.m_frac);
    let adapt_start = config
        .sa_adapt_start
        .unwrap_or(if has_source_prompt { 2 } else { 4 });
    let steps = (0..t)
        .map(|g| StepSchedule {
            ca: g < ca,
            sa: g < sa,
            sa_adapt: g < sa && g >= adapt_start,
            res: g < res,
            blend: g < blend,
        })
        .collect();
    InjectionSchedule { steps }
}

/// One real-image edit.
#[derive(Debug, Clone, PartialEq)]
pub struct EditRequest {
    /// `[H, W, 3]` in `[0, 1]`.
    pub image: Tensor,
    pub source_prompt: Option<String>,
    pub target_prompt: String,
    /// Carries `blended_word` as well.
    pub config: EditConfig,
    /// Edit region on the latent grid; overrides the blended-word mask.
    pub user_mask: Option<EditMask>,
}

impl EditRequest {
    pub fn new(image: Tensor, target_prompt: impl Into<String>) -> Self {
        Self {
            image,
            source_prompt: None,
            target_prompt: target_prompt.into(),
            config: EditConfig::default(),
            user_mask: None,
        }
    }

    pub fn blended_word(&self) -> Option<&str> {
        self.config.blended_word.as_deref()
    }

    pub fn validate(&self, backend: &dyn Backend) -> Result<()> {
        self.config.validate()?;
        self.config.validate_layers(backend.n_layers())?;
        if let Some(word) = self.blended_word() {
            let found = self
                .source_prompt
                .as_deref()
                .is_some_and(|p| p.split_whitespace().any(|w| w == word));
            if !found {
                return Err(Error::config(
                    "blended_word",
                    format!("`{word}` does not appear in the source prompt"),
                ));
            }
        }
        if let Some(mask) = &self.user_mask {
            let (h, w, _) = backend.latent_shape();
            if (mask.height(), mask.width()) != (h, w) {
                return Err(Error::Mask(format!(
                    "user mask is {}x{}, latent grid is {h}x{w}",
                    mask.height(),
                    mask.width()
                )));
            }
        }
        Ok(())
    }
}

/// Inversion and extraction conditioning: the source prompt, or the empty
/// prompt when there is none.
pub fn source_conditioning(backend: &dyn Backend, source_prompt: Option<&str>) -> Conditioning {
    Conditioning::new(backend.tokenize(source_prompt.unwrap_or("")))
}

/// Noised inversion of an encoded latent to `T`, then one capture
/// evaluation at `(z_{t'}, t')`.
pub fn extract_from_latent(
    z0: &LatentGrid,
    cond: &Conditioning,
    config: &EditConfig,
    backend: &dyn Backend,
) -> Result<(FeatureCache, Trajectory)> {
    config.validate()?;
    config.validate_layers(backend.n_layers())?;
    let schedule = backend.schedule(config.steps);
    let noise = gaussian_noise(z0.data().dims(), config.seed);
    let mut no_hooks = NoHooks;
    let traj = {
        let mut field = BackendField::new(backend, cond, &mut no_hooks);
        noised_invert(z0, config.n_noising, &noise, &schedule, &mut field)?
    };
    let cache = extract_at(&traj, cond, config, backend)?;
    Ok((cache, traj))
}

/// The capture evaluation alone, for callers that already hold a trajectory.
pub fn extract_at(
    traj: &Trajectory,
    cond: &Conditioning,
    config: &EditConfig,
    backend: &dyn Backend,
) -> Result<FeatureCache> {
    let z_mid = traj.at(config.t_prime)?;
    let points = config
        .attn_layers
        .iter()
        .map(|l| (l, HookKind::AttentionProbs))
        .chain(config.res_layers.iter().map(|l| (l, HookKind::ResidualImageOut)));
    let mut capture = CaptureHooks::new(points);
    {
        let mut field = BackendField::new(backend, cond, &mut capture);
        checked_velocity(&mut field, z_mid)?;
    }
    capture_features(capture.events(), config)
}

pub fn extract_mid_step(
    image: &Tensor,
    source_prompt: Option<&str>,
    config: &EditConfig,
    backend: &dyn Backend,
) -> Result<(FeatureCache, Trajectory)> {
    let z0 = backend.encode(image)?;
    let cond = source_conditioning(backend, source_prompt);
    extract_from_latent(&z0, &cond, config, backend)
}

/// Where the blending mask comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    None,
    User(EditMask),
    /// Source token indices of the blended word.
    Word { word: String, source_tokens: Vec<usize> },
}

impl MaskSource {
    pub fn label(&self) -> String {
        match self {
            MaskSource::None => "none".into(),
            MaskSource::User(_) => "user".into(),
            MaskSource::Word { word, .. } => format!("word:{word}"),
        }
    }
}

/// Everything target generation needs besides the cache and trajectory.
#[derive(Debug, Clone)]
pub struct GenerationInputs {
    pub target: Conditioning,
    pub mapping: TokenMapping,
    pub mask_source: MaskSource,
}

impl GenerationInputs {
    pub fn from_request(request: &EditRequest, backend: &dyn Backend) -> Result<Self> {
        let target = backend.tokenize(&request.target_prompt);
        let source: Option<TokenSequence> =
            request.source_prompt.as_deref().map(|p| backend.tokenize(p));
        let mapping = build_token_mapping(source.as_ref(), &target);
        let mask_source = match (&request.user_mask, request.blended_word(), &source) {
            (Some(m), _, _) => MaskSource::User(m.clone()),
            (None, Some(word), Some(src)) => {
                let source_tokens = src.word_tokens(word);
                if source_tokens.is_empty() {
                    return Err(Error::config(
                        "blended_word",
                        format!("`{word}` does not appear in the source prompt"),
                    ));
                }
                MaskSource::Word {
                    word: word.into(),
                    source_tokens,
                }
            }
            _ => MaskSource::None,
        };
        Ok(Self {
            target: Conditioning::new(target),
            mapping,
            mask_source,
        })
    }
}

/// What happened at one generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub gen_step: usize,
    pub from_step: usize,
    pub flags: StepSchedule,
    /// Set when blending ran at this step.
    pub mask_ones: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub latent: LatentGrid,
    pub records: Vec<StepRecord>,
    /// Masks used for blending, in step order.
    pub masks: Vec<EditMask>,
}

struct InjectionHooks<'a> {
    cache: &'a FeatureCache,
    mapping: &'a TokenMapping,
    attn_layers: &'a LayerSet,
    res_layers: &'a LayerSet,
    alpha: f32,
    k: usize,
    flags: StepSchedule,
    record_ca: bool,
    recorded: Vec<Tensor>,
}

impl Hooks for InjectionHooks<'_> {
    fn wants(&self, layer: usize, kind: HookKind) -> bool {
        match kind {
            HookKind::AttentionProbs => {
                self.attn_layers.contains(layer) && (self.flags.ca || self.flags.sa || self.record_ca)
            }
            HookKind::ResidualImageOut => self.flags.res && self.res_layers.contains(layer),
        }
    }

    fn on_attention(
        &mut self,
        layer: usize,
        head: usize,
        text_len: usize,
        probs: &mut Tensor,
    ) -> Result<()> {
        if !self.attn_layers.contains(layer) {
            return Ok(());
        }
        let blocks =
            decompose_joint_attention(probs, text_len, layer, head, Representation::Probabilities)
                .map_err(|e| Error::Injection {
                    layer,
                    reason: format!("{e}"),
                })?;
        let flags = StepFlags {
            ca: self.flags.ca,
            sa: self.flags.sa,
            sa_adapt: self.flags.sa_adapt,
        };
        let overrides =
            build_injected_row_blocks(&blocks, self.cache, self.mapping, self.alpha, self.k, flags)?;
        apply_row_overrides(probs, text_len, &overrides);
        if self.record_ca {
            self.recorded.push(match overrides.i2t {
                Some(ca) => ca,
                None => blocks.i2t,
            });
        }
        Ok(())
    }

    fn on_residual(&mut self, layer: usize, image_out: &mut Tensor) -> Result<()> {
        if !self.res_layers.contains(layer) {
            return Ok(());
        }
        let src = self.cache.residual(layer).ok_or_else(|| Error::Injection {
            layer,
            reason: "no cached residual feature".into(),
        })?;
        if src.dims() != image_out.dims() {
            return Err(Error::Injection {
                layer,
                reason: format!(
                    "cached residual is {:?}, evaluation has {:?}",
                    src.dims(),
                    image_out.dims()
                ),
            });
        }
        image_out.data_mut().copy_from_slice(src.data());
        Ok(())
    }
}

/// Smoothed, Otsu-thresholded saliency of the blended word.
///
/// Uses the target I2T-CA columns whose tokens map into the word's source
/// span. When the word has no mapped target token (it was replaced), the
/// cached source I2T-CA of the word is used instead.
fn word_mask(
    recorded: &[Tensor],
    inputs: &GenerationInputs,
    source_tokens: &[usize],
    cache: &FeatureCache,
    grid: (usize, usize),
) -> Result<EditMask> {
    let cols: Vec<usize> = inputs
        .mapping
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some_and(|s| source_tokens.contains(&s)))
        .map(|(i, _)| i)
        .collect();
    let map = if cols.is_empty() {
        let blocks: Vec<&Tensor> = cache.attention_entries().map(|(_, f)| &f.ca).collect();
        word_saliency(&blocks, source_tokens, grid.0, grid.1)?
    } else {
        let blocks: Vec<&Tensor> = recorded.iter().collect();
        word_saliency(&blocks, &cols, grid.0, grid.1)?
    };
    let smooth = gaussian_smooth(&map, DEFAULT_SIGMA, DEFAULT_RADIUS)?;
    otsu_threshold(&smooth, DEFAULT_BINS)
}

/// Target generation from `source_traj[T]` with injections per `schedule`
/// and blending against `source_traj` where a mask source exists.
pub fn generate_with_injection(
    inputs: &GenerationInputs,
    config: &EditConfig,
    cache: &FeatureCache,
    source_traj: &Trajectory,
    schedule: &InjectionSchedule,
    backend: &dyn Backend,
) -> Result<Generation> {
    let steps = config.steps;
    let flow_schedule: TimestepSchedule = backend.schedule(steps);
    if schedule.len() != steps {
        return Err(Error::config(
            "T",
            format!("injection schedule has {} steps, config has {steps}", schedule.len()),
        ));
    }
    let (h, w, _) = backend.latent_shape();
    let mut z = source_traj.at(steps)?.clone();
    let mut records = Vec::with_capacity(steps);
    let mut masks = Vec::new();
    for g in 0..steps {
        let from = steps - g;
        let flags = schedule.step(g);
        let blending = flags.blend && !matches!(inputs.mask_source, MaskSource::None);
        let mut hooks = InjectionHooks {
            cache,
            mapping: &inputs.mapping,
            attn_layers: &config.attn_layers,
            res_layers: &config.res_layers,
            alpha: config.alpha as f32,
            k: config.top_k,
            flags,
            record_ca: blending && matches!(inputs.mask_source, MaskSource::Word { .. }),
            recorded: Vec::new(),
        };
        let v = {
            let mut field = BackendField::new(backend, &inputs.target, &mut hooks);
            checked_velocity(&mut field, &z)?
        };
        z = euler_step(&z, &v, from - 1, &flow_schedule);
        let mut mask_ones = None;
        if blending {
            let mask = match &inputs.mask_source {
                MaskSource::User(m) => m.clone(),
                MaskSource::Word { source_tokens, .. } => {
                    word_mask(&hooks.recorded, inputs, source_tokens, cache, (h, w))
                        .map_err(|e| e.at_step(from))?
                }
                MaskSource::None => unreachable!("blending requires a mask source"),
            }
            .with_step(from - 1);
            let src = source_traj.at(from - 1)?;
            z = blend_latents(&z, src, &mask).map_err(|e| e.at_step(from))?;
            mask_ones = Some(mask.count_ones());
            masks.push(mask);
        }
        records.push(StepRecord {
            gen_step: g,
            from_step: from,
            flags,
            mask_ones,
        });
    }
    Ok(Generation {
        latent: z,
        records,
        masks,
    })
}

/// Plain sampling from `traj[start]` under `cond`, without hooks.
pub fn plain_reconstruction(
    traj: &Trajectory,
    start: usize,
    cond: &Conditioning,
    backend: &dyn Backend,
    steps: usize,
) -> Result<LatentGrid> {
    let schedule = backend.schedule(steps);
    let mut no_hooks = NoHooks;
    let mut field = BackendField::new(backend, cond, &mut no_hooks);
    Ok(sample_from(traj.at(start)?, &schedule, &mut field)?.last().clone())
}

/// Summary of one edit, rendered as key-value lines plus a step table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub source_prompt: Option<String>,
    pub target_prompt: String,
    pub config: EditConfig,
    pub counts: ScheduleCounts,
    pub mask_source: String,
    pub mapped_tokens: usize,
    pub target_tokens: usize,
    pub records: Vec<StepRecord>,
}

impl RunReport {
    pub fn blended_steps(&self) -> usize {
        self.records.iter().filter(|r| r.mask_ones.is_some()).count()
    }

    pub fn blending_enabled(&self) -> bool {
        self.mask_source != "none" && self.counts.blend > 0
    }

    /// Mean fraction of latent cells inside the mask over blended steps.
    pub fn mean_mask_coverage(&self, cells: usize) -> Option<f64> {
        let ones: Vec<usize> = self.records.iter().filter_map(|r| r.mask_ones).collect();
        if ones.is_empty() || cells == 0 {
            return None;
        }
        Some(ones.iter().sum::<usize>() as f64 / (ones.len() * cells) as f64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# reflex run report");
        let _ = writeln!(
            s,
            "source_prompt = {}",
            self.source_prompt.as_deref().unwrap_or("(none)")
        );
        let _ = writeln!(s, "target_prompt = {}", self.target_prompt);
        let _ = writeln!(s, "mask_source = {}", self.mask_source);
        let _ = writeln!(
            s,
            "blending = {}",
            if self.blending_enabled() { "enabled" } else { "disabled" }
        );
        let _ = writeln!(s, "ca_steps = {}", self.counts.ca);
        let _ = writeln!(s, "sa_steps = {}", self.counts.sa);
        let _ = writeln!(s, "sa_adapt_steps = {}", self.counts.sa_adapt);
        let _ = writeln!(s, "res_steps = {}", self.counts.res);
        let _ = writeln!(s, "blend_steps = {}", self.counts.blend);
        let _ = writeln!(s, "blended_steps = {}", self.blended_steps());
        let _ = writeln!(s, "mapped_tokens = {}/{}", self.mapped_tokens, self.target_tokens);
        let _ = writeln!(s, "\n[config]");
        s.push_str(&self.config.to_kv_text());
        let _ = writeln!(s, "\n[steps]");
        let _ = writeln!(s, "gen_step from_step ca sa sa_adapt res blend mask_ones");
        for r in &self.records {
            let b = |f: bool| if f { 1 } else { 0 };
            let ones = match r.mask_ones {
                Some(n) => format!("{n}"),
                None => "-".into(),
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                r.gen_step,
                r.from_step,
                b(r.flags.ca),
                b(r.flags.sa),
                b(r.flags.sa_adapt),
                b(r.flags.res),
                b(r.flags.blend),
                ones
            );
        }
        s
    }
}

/// Result of [`reflex_edit`], with intermediates kept for auditing.
#[derive(Debug, Clone)]
pub struct EditOutput {
    /// Decoded `[H, W, 3]` image at the backend's native resolution.
    pub image: Tensor,
    pub latent: LatentGrid,
    pub report: RunReport,
    pub source_traj: Trajectory,
    pub cache: FeatureCache,
    pub masks: Vec<EditMask>,
}

pub fn reflex_edit(request: &EditRequest, backend: &dyn Backend) -> Result<EditOutput> {
    request.validate(backend)?;
    let (cache, traj) = extract_mid_step(
        &request.image,
        request.source_prompt.as_deref(),
        &request.config,
        backend,
    )?;
    edit_with_cache(request, &cache, &traj, backend)
}

/// The generation half of [`reflex_edit`], reusing an extraction. Valid
/// while the request's source, seed, `T`, `n_noising`, `t_prime` and layer
/// sets match the ones the cache was built with.
pub fn edit_with_cache(
    request: &EditRequest,
    cache: &FeatureCache,
    traj: &Trajectory,
    backend: &dyn Backend,
) -> Result<EditOutput> {
    request.validate(backend)?;
    let config = &request.config;
    let schedule = build_schedule(config, request.source_prompt.is_some());
    let inputs = GenerationInputs::from_request(request, backend)?;
    let gen = generate_with_injection(&inputs, config, cache, traj, &schedule, backend)?;
    let image = backend.decode(&gen.latent)?;
    let report = RunReport {
        source_prompt: request.source_prompt.clone(),
        target_prompt: request.target_prompt.clone(),
        config: config.clone(),
        counts: schedule.counts(),
        mask_source: inputs.mask_source.label(),
        mapped_tokens: inputs.mapping.mapped_count(),
        target_tokens: inputs.mapping.target_len(),
        records: gen.records,
    };
    Ok(EditOutput {
        image,
        latent: gen.latent,
        report,
        source_traj: traj.clone(),
        cache: cache.clone(),
        masks: gen.masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{BackendSpec, ToyBackend};

    fn small_config() -> EditConfig {
        EditConfig {
            steps: 6,
            t_prime: 3,
            n_noising: 1,
            attn_layers: LayerSet::range(2, 5),
            res_layers: LayerSet::range(1, 2),
            ..EditConfig::default()
        }
    }

    fn small_backend() -> ToyBackend {
        ToyBackend::new(BackendSpec {
            n_double: 2,
            n_single: 4,
            d_model: 16,
            n_heads: 2,
            latent_shape: [4, 4, 4],
            d_text: 8,
            vocab_size: 64,
            ..BackendSpec::default()
        })
        .unwrap()
    }

    fn image(h: usize, w: usize) -> Tensor {
        let data = (0..h * w * 3)
            .map(|i| ((i * 37 % 101) as f32) / 100.0)
            .collect();
        Tensor::new(alloc::vec![h, w, 3], data).unwrap()
    }

    #[test]
    fn default_schedule_counts() {
        let cfg = EditConfig::default();
        let c = build_schedule(&cfg, true).counts();
        assert_eq!((c.ca, c.sa, c.res, c.blend), (11, 7, 4, 19));
        let c = build_schedule(&cfg, false).counts();
        assert_eq!((c.ca, c.sa, c.res), (0, 11, 7));
    }

    #[test]
    fn adaptation_starts_after_auto_offset() {
        let cfg = EditConfig::default();
        let s = build_schedule(&cfg, true);
        assert!(!s.step(1).sa_adapt && s.step(2).sa_adapt && !s.step(7).sa_adapt);
        let s = build_schedule(&cfg, false);
        assert!(!s.step(3).sa_adapt && s.step(4).sa_adapt);
    }

    #[test]
    fn zero_fractions_disable_everything() {
        let cfg = EditConfig {
            frac_ca: 0.0,
            frac_sa: 0.0,
            frac_res: 0.0,
            m_frac: 0.0,
            ..EditConfig::default()
        };
        assert_eq!(build_schedule(&cfg, true), InjectionSchedule::inactive(28));
    }

    #[test]
    fn blended_word_must_be_in_source() {
        let b = small_backend();
        let mut req = EditRequest::new(image(16, 16), "a red cat");
        req.source_prompt = Some("a cat".into());
        req.config = small_config();
        req.config.blended_word = Some("dog".into());
        assert!(matches!(req.validate(&b), Err(Error::Config { .. })));
    }

    #[test]
    fn extraction_is_deterministic_without_source() {
        let b = small_backend();
        let cfg = small_config();
        let img = image(16, 16);
        let (c1, t1) = extract_mid_step(&img, None, &cfg, &b).unwrap();
        let (c2, t2) = extract_mid_step(&img, None, &cfg, &b).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(t1, t2);
        assert_eq!(c1.attention_layers(), alloc::vec![2, 3, 4, 5]);
        assert_eq!(c1.residual_layers(), alloc::vec![1, 2]);
    }

    #[test]
    fn report_lists_schedule() {
        let b = small_backend();
        let mut req = EditRequest::new(image(16, 16), "a red cat");
        req.source_prompt = Some("a cat".into());
        req.config = small_config();
        req.config.blended_word = Some("cat".into());
        let out = reflex_edit(&req, &b).unwrap();
        let text = out.report.to_text();
        assert!(text.contains("ca_steps = 2\n"));
        assert!(text.contains("mask_source = word:cat\n"));
        assert_eq!(out.report.blended_steps(), 4);
        assert_eq!(out.masks.len(), 4);
    }
}
