//! PCA views of cached residual features.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use reflex_core::attention::FeatureCache;
use reflex_core::Tensor;

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{pca_project, Pca};

/// Maps the three PCA components of each image token to RGB, each
/// component min-max scaled to `[0, 1]`, as a `[h, w, 3]` image.
pub fn pca_image(pca: &Pca, height: usize, width: usize) -> Result<Tensor> {
    let p = &pca.projection;
    let (n, k) = p.expect_matrix("projection")?;
    if n != height * width || k != 3 {
        return Err(Error::Metric(format!(
            "projection is {n}x{k}, need {}x3",
            height * width
        )));
    }
    let mut out = vec![0f32; n * 3];
    for c in 0..3 {
        let col: Vec<f32> = (0..n).map(|r| p.at(r, c)).collect();
        let lo = col.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = col.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (r, v) in col.into_iter().enumerate() {
            out[r * 3 + c] = (v - lo) / span;
        }
    }
    Ok(Tensor::new(vec![height, width, 3], out)?)
}

/// Writes `pca_lNN.png` per residual layer and `pca.txt` with the
/// explained-variance ratios.
pub fn analyze_cache(
    cache: &FeatureCache,
    grid: (usize, usize),
    dir: &Path,
    upscale: usize,
) -> Result<Vec<(usize, Pca)>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut summary = String::from("# layer ratio1 ratio2 ratio3\n");
    let mut out = Vec::new();
    for (&layer, feats) in cache.residual_entries() {
        let pca = pca_project(feats, 3)?;
        let img = pca_image(&pca, grid.0, grid.1)?;
        io::save_image(&dir.join(format!("pca_l{layer:02}.png")), &io::upscale(&img, upscale))?;
        let _ = writeln!(
            summary,
            "{layer} {:.6} {:.6} {:.6}",
            pca.ratios[0], pca.ratios[1], pca.ratios[2]
        );
        out.push((layer, pca));
    }
    let path = dir.join("pca.txt");
    fs::write(&path, summary).map_err(Error::io(&path))?;
    Ok(out)
}
