//! Files on disk: tensor containers, trajectory and cache dumps, PNG images
//! and masks, config files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use reflex_core::attention::FeatureCache;
use reflex_core::flow::{TimestepSchedule, Trajectory};
use reflex_core::mask::EditMask;
use reflex_core::{EditConfig, Tensor};

use crate::error::{Error, Result};

pub fn write_container(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.to_container_bytes()?).map_err(Error::io(path))
}

pub fn read_container(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Ok(Tensor::from_container_bytes(&bytes)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

/// One container per step plus `index.txt` with `step file t` lines.
pub fn save_trajectory(dir: &Path, traj: &Trajectory, schedule: &TimestepSchedule) -> Result<()> {
    create_dir(dir)?;
    let mut index = String::from("# step file t\n");
    for z in traj.latents() {
        let name = format!("step_{:04}.rtn", z.step_index());
        write_container(&dir.join(&name), z.data())?;
        let t = schedule.values().get(z.step_index()).copied().unwrap_or(z.t_value());
        let _ = writeln!(index, "{} {} {}", z.step_index(), name, t);
    }
    let path = dir.join("index.txt");
    fs::write(&path, index).map_err(Error::io(path))
}

/// Reads an index written by [`save_trajectory`] as `(step, file, t)` rows.
pub fn read_trajectory_index(dir: &Path) -> Result<Vec<(usize, PathBuf, f32)>> {
    let path = dir.join("index.txt");
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Manifest {
            path: path.clone(),
            line: i + 1,
            reason: format!("expected `step file t`, got `{line}`"),
        };
        let mut parts = line.split_whitespace();
        let step = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let file = parts.next().ok_or_else(bad)?;
        let t = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        rows.push((step, dir.join(file), t));
    }
    Ok(rows)
}

/// One container per cached tensor plus `manifest.txt` with
/// `layer head kind extraction_step file` lines (`-` for no head).
pub fn save_cache(dir: &Path, cache: &FeatureCache) -> Result<()> {
    create_dir(dir)?;
    let step = cache.extraction_step();
    let mut manifest = String::from("# layer head kind extraction_step file\n");
    for (&(layer, head), feats) in cache.attention_entries() {
        for (kind, t) in [("i2t_ca", &feats.ca), ("i2i_sa", &feats.sa)] {
            let name = format!("l{layer:02}_h{head}_{kind}.rtn");
            write_container(&dir.join(&name), t)?;
            let _ = writeln!(manifest, "{layer} {head} {kind} {step} {name}");
        }
    }
    for (&layer, t) in cache.residual_entries() {
        let name = format!("l{layer:02}_residual.rtn");
        write_container(&dir.join(&name), t)?;
        let _ = writeln!(manifest, "{layer} - residual {step} {name}");
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(Error::io(path))
}

/// Loads an 8-bit RGB image as `[H, W, 3]` in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Tensor::new(vec![h as usize, w as usize, 3], data)?)
}

pub fn to_rgb8(image: &Tensor) -> Result<RgbImage> {
    let dims = image.dims();
    if dims.len() != 3 || dims[2] != 3 {
        return Err(reflex_core::Error::Dimension(format!("expected [H, W, 3], got {dims:?}")).into());
    }
    let raw = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(RgbImage::from_raw(dims[1] as u32, dims[0] as u32, raw).expect("buffer sized from dims"))
}

pub fn save_image(path: &Path, image: &Tensor) -> Result<()> {
    to_rgb8(image)?.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Nearest-neighbour upscale by an integer factor.
pub fn upscale(image: &Tensor, factor: usize) -> Tensor {
    let d = image.dims();
    let (h, w, c) = (d[0], d[1], d[2]);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            let p = ((y / factor) * w + x / factor) * c;
            out.extend_from_slice(&image.data()[p..p + c]);
        }
    }
    Tensor::new(vec![oh, ow, c], out).expect("sized above")
}

/// Loads a grayscale mask (`> 127` is inside) and resizes it to
/// `height x width` by nearest neighbour.
pub fn load_mask(path: &Path, height: usize, width: usize) -> Result<EditMask> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let bits = img.pixels().map(|p| p.0[0] > 127).collect();
    let mask = EditMask::new(bits, h as usize, w as usize)?;
    Ok(mask.resize_nearest(height, width))
}

pub fn save_mask(path: &Path, mask: &EditMask) -> Result<()> {
    let raw = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer sized from mask");
    img.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Reads a `key = value` config file (defaults for missing keys), then
/// applies `key=value` overrides and validates.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<EditConfig> {
    let mut cfg = EditConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        cfg.apply_kv_text(&text)?;
    }
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| {
            reflex_core::Error::Config {
                field: o.clone(),
                constraint: "override must look like key=value".into(),
            }
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}
