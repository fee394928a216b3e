use reflex_core::mask::EditMask;
use reflex_core::pipeline::{
    build_schedule, extract_mid_step, plain_reconstruction, reflex_edit, source_conditioning,
    EditRequest,
};
use reflex_core::{Backend, BackendSpec, EditConfig, LayerSet, Tensor, ToyBackend};

fn backend() -> ToyBackend {
    ToyBackend::new(BackendSpec::default()).unwrap()
}

fn config() -> EditConfig {
    EditConfig {
        steps: 8,
        t_prime: 4,
        n_noising: 2,
        attn_layers: LayerSet::range(5, 10),
        res_layers: LayerSet::range(3, 4),
        ..EditConfig::default()
    }
}

fn image() -> Tensor {
    Tensor::new(
        vec![32, 32, 3],
        (0..32 * 32 * 3).map(|i| ((i * 13) % 251) as f32 / 250.0).collect(),
    )
    .unwrap()
}

fn request(source: Option<&str>, target: &str, config: EditConfig) -> EditRequest {
    EditRequest {
        image: image(),
        source_prompt: source.map(Into::into),
        target_prompt: target.into(),
        config,
        user_mask: None,
    }
}

#[test]
fn bypass_equals_plain_reconstruction() {
    let b = backend();
    let cfg = EditConfig {
        frac_ca: 0.0,
        frac_sa: 0.0,
        frac_res: 0.0,
        m_frac: 0.0,
        ..config()
    };
    let prompt = "a cat on a mat";
    let out = reflex_edit(&request(Some(prompt), prompt, cfg.clone()), &b).unwrap();
    let (_, traj) = extract_mid_step(&image(), Some(prompt), &cfg, &b).unwrap();
    let cond = source_conditioning(&b, Some(prompt));
    let plain = plain_reconstruction(&traj, cfg.steps, &cond, &b, cfg.steps).unwrap();
    assert_eq!(out.latent, plain);
    assert_eq!(out.image, b.decode(&plain).unwrap());
}

#[test]
fn user_mask_confines_the_edit() {
    let b = backend();
    let cfg = EditConfig { m_frac: 1.0, ..config() };
    let mask = EditMask::from_fn(16, 16, |y, x| (4..10).contains(&y) && (2..12).contains(&x));
    let mut req = request(Some("a cat on a mat"), "a dog on a mat", cfg);
    req.user_mask = Some(mask.clone());
    let out = reflex_edit(&req, &b).unwrap();
    let z0 = out.source_traj.at(0).unwrap();
    let c = 4;
    let mut inside_differs = false;
    for (p, &on) in mask.bits().iter().enumerate() {
        let got = &out.latent.data().data()[p * c..(p + 1) * c];
        let src = &z0.data().data()[p * c..(p + 1) * c];
        if on {
            inside_differs |= got != src;
        } else {
            assert_eq!(got, src, "cell {p}");
        }
    }
    assert!(inside_differs);
}

#[test]
fn empty_mask_reproduces_source_latent() {
    let b = backend();
    let cfg = EditConfig { m_frac: 1.0, ..config() };
    let mut req = request(Some("a cat on a mat"), "a dog on a mat", cfg);
    req.user_mask = Some(EditMask::filled(16, 16, false));
    let out = reflex_edit(&req, &b).unwrap();
    assert_eq!(out.latent.data(), out.source_traj.at(0).unwrap().data());
}

#[test]
fn word_masks_never_touch_the_common_background() {
    let b = backend();
    let cfg = EditConfig {
        m_frac: 1.0,
        blended_word: Some("cat".into()),
        ..config()
    };
    let out = reflex_edit(&request(Some("a cat on a mat"), "a red cat on a mat", cfg), &b).unwrap();
    assert_eq!(out.masks.len(), 8);
    let z0 = out.source_traj.at(0).unwrap();
    let c = 4;
    for p in 0..256 {
        if out.masks.iter().all(|m| !m.bits()[p]) {
            assert_eq!(
                &out.latent.data().data()[p * c..(p + 1) * c],
                &z0.data().data()[p * c..(p + 1) * c]
            );
        }
    }
}

#[test]
fn edits_are_deterministic() {
    let b = backend();
    let cfg = EditConfig {
        blended_word: Some("cat".into()),
        ..config()
    };
    let req = request(Some("a cat on a mat"), "a dog on a mat", cfg);
    let a = reflex_edit(&req, &b).unwrap();
    let c = reflex_edit(&req, &b).unwrap();
    assert_eq!(a.latent, c.latent);
    assert_eq!(a.report.to_text(), c.report.to_text());
    assert_eq!(a.masks, c.masks);
}

#[test]
fn full_inversion_extraction_and_no_source_requests() {
    let b = backend();
    let cfg = EditConfig { t_prime: 8, ..config() };
    let (cache, traj) = extract_mid_step(&image(), None, &cfg, &b).unwrap();
    assert_eq!(cache.extraction_step(), 8);
    assert_eq!(traj.len(), 9);
    let out = reflex_edit(&request(None, "a dog", config()), &b).unwrap();
    let counts = out.report.counts;
    assert_eq!(counts, build_schedule(&config(), false).counts());
    assert_eq!(counts.ca, 0);
    assert!(out.report.to_text().contains("blending = disabled\n"));
}

#[test]
fn misconfigured_layers_are_rejected() {
    let b = backend();
    let err = reflex_edit(&request(None, "a dog", EditConfig::default()), &b).unwrap_err();
    assert!(err.to_string().contains("attn_layers"), "{err}");
}
