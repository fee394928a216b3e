//! Edit-quality metrics and PCA for feature visualisation.

use nalgebra::{DMatrix, SymmetricEigen};
use reflex_core::mask::EditMask;
use reflex_core::Tensor;

use crate::error::{Error, Result};

/// PSNR returned when the masked MSE is zero.
pub const PSNR_CAP_DB: f64 = 100.0;

fn image_hw(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.dims() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        ref d => Err(Error::Metric(format!("expected an [H, W] or [H, W, C] image, got {d:?}"))),
    }
}

/// `10 log10(max^2 / MSE)` over pixels where `mask` is set, all channels.
pub fn psnr_masked(a: &Tensor, b: &Tensor, mask: &EditMask, max_value: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Metric(format!("image shapes differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (h, w, c) = image_hw(a)?;
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::Metric(format!(
            "mask is {}x{}, images are {h}x{w}",
            mask.height(),
            mask.width()
        )));
    }
    let count = mask.count_ones();
    if count == 0 {
        return Err(Error::Metric("PSNR mask is empty".into()));
    }
    let mut sum = 0f64;
    for (p, _) in mask.bits().iter().enumerate().filter(|(_, &on)| on) {
        for ch in 0..c {
            let d = a.data()[p * c + ch] as f64 - b.data()[p * c + ch] as f64;
            sum += d * d;
        }
    }
    let mse = sum / (count * c) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max_value * max_value / mse).log10()).min(PSNR_CAP_DB))
}

/// `|A ∩ B| / |A ∪ B|`; two empty masks count as a perfect match.
pub fn iou(a: &EditMask, b: &EditMask) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Metric(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        log::warn!("IoU of two empty masks, reporting 1");
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `[N, components]`
    pub projection: Tensor,
    /// Explained-variance ratio per component, descending.
    pub ratios: Vec<f64>,
    /// Principal directions as rows, `[components, d]`.
    pub axes: Vec<Vec<f64>>,
}

/// Projects mean-centred rows of `features` (`[N, d]`) onto the top
/// eigenvectors of their covariance. Each axis is signed so its largest
/// magnitude entry is positive.
pub fn pca_project(features: &Tensor, components: usize) -> Result<Pca> {
    let (n, d) = features.expect_matrix("features")?;
    if components == 0 || n < components || d < components {
        return Err(Error::Metric(format!(
            "cannot take {components} components of a {n}x{d} matrix"
        )));
    }
    let mut x = DMatrix::from_row_slice(n, d, &features.data().iter().map(|&v| v as f64).collect::<Vec<_>>());
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = (x.transpose() * &x) / denom;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= f64::EPSILON * d as f64 {
        log::warn!("PCA input has zero variance; projection is zero");
        return Ok(Pca {
            projection: Tensor::zeros(&[n, components]),
            ratios: vec![0.0; components],
            axes: vec![vec![0.0; d]; components],
        });
    }
    let mut axes = Vec::with_capacity(components);
    let mut ratios = Vec::with_capacity(components);
    for &k in order.iter().take(components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        axes.push(v);
        ratios.push(eig.eigenvalues[k].max(0.0) / total);
    }
    let mut proj = Vec::with_capacity(n * components);
    for r in 0..n {
        let row = x.row(r);
        for a in &axes {
            proj.push(row.iter().zip(a).map(|(p, q)| p * q).sum::<f64>() as f32);
        }
    }
    Ok(Pca {
        projection: Tensor::new(vec![n, components], proj)?,
        ratios,
        axes,
    })
}
