//! Edit-mask generation from I2T-CA saliency and latent blending.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::LatentGrid;
use crate::tensor::Tensor;

pub const DEFAULT_SIGMA: f64 = 2.0;
pub const DEFAULT_RADIUS: usize = 4;
pub const DEFAULT_BINS: usize = 256;

/// Non-negative per-pixel saliency `[h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    values: Tensor,
}

impl SaliencyMap {
    pub fn new(values: Tensor) -> Result<Self> {
        values.expect_matrix("saliency map")?;
        if !values.is_finite() {
            return Err(Error::Mask("saliency map has non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

/// Binary mask over the latent grid; `true` marks the edit region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditMask {
    bits: Vec<bool>,
    height: usize,
    width: usize,
    step_index: usize,
}

impl EditMask {
    pub fn new(bits: Vec<bool>, height: usize, width: usize) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Mask(format!(
                "{} mask bits for a {height}x{width} grid",
                bits.len()
            )));
        }
        Ok(Self {
            bits,
            height,
            width,
            step_index: 0,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            bits: vec![value; height * width],
            height,
            width,
            step_index: 0,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            bits,
            height,
            width,
            step_index: 0,
        }
    }

    pub fn with_step(mut self, step_index: usize) -> Self {
        self.step_index = step_index;
        self
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    /// Nearest-neighbour resample to another grid size.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |y, x| {
            self.get(y * self.height / height, x * self.width / width)
        })
        .with_step(self.step_index)
    }
}

/// Mean I2T-CA over the word's token columns, then over all given blocks
/// (one per layer/head), reshaped to `[height, width]`.
pub fn word_saliency(
    ca_blocks: &[&Tensor],
    word_span: &[usize],
    height: usize,
    width: usize,
) -> Result<SaliencyMap> {
    if word_span.is_empty() {
        return Err(Error::Mask("blended word has no tokens".into()));
    }
    if ca_blocks.is_empty() {
        return Err(Error::Mask("no I2T-CA blocks to aggregate".into()));
    }
    let n = height * width;
    let mut acc = vec![0f64; n];
    for block in ca_blocks {
        let (rows, cols) = block.expect_matrix("I2T-CA")?;
        if rows != n {
            return Err(Error::Mask(format!(
                "I2T-CA has {rows} image rows, grid is {height}x{width}"
            )));
        }
        if let Some(&bad) = word_span.iter().find(|&&c| c >= cols) {
            return Err(Error::Mask(format!(
                "word token {bad} outside {cols} text columns"
            )));
        }
        for (r, a) in acc.iter_mut().enumerate() {
            let row = block.row(r);
            let s: f64 = word_span.iter().map(|&c| row[c] as f64).sum();
            *a += s / word_span.len() as f64;
        }
    }
    let scale = ca_blocks.len() as f64;
    let data = acc.into_iter().map(|v| (v / scale) as f32).collect();
    SaliencyMap::new(Tensor::new(vec![height, width], data)?)
}

/// Normalized Gaussian weights for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|d| libm::exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Mirror an out-of-range index back into `0..n` (edge sample repeated).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

/// Separable truncated Gaussian blur with reflective borders.
pub fn gaussian_smooth(map: &SaliencyMap, sigma: f64, radius: usize) -> Result<SaliencyMap> {
    if !(sigma > 0.0) {
        return Err(Error::Mask(format!("sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma, radius);
    let (h, w) = (map.height(), map.width());
    let src = map.values().data();
    let r = radius as isize;
    let mut tmp = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[y * w + reflect_index(x as isize + i as isize - r, w)] as f64)
                .sum();
        }
    }
    let mut out = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[reflect_index(y as isize + i as isize - r, h) * w + x])
                .sum();
            out[y * w + x] = v as f32;
        }
    }
    SaliencyMap::new(Tensor::new(vec![h, w], out)?)
}

/// Little-endian base-2^64 natural number, just wide enough for the exact
/// Otsu comparisons below.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Limbs(Vec<u64>);

impl Limbs {
    fn from_u128(v: u128) -> Self {
        Limbs(vec![v as u64, (v >> 64) as u64]).trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
        self
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn mul(&self, other: &Limbs) -> Limbs {
        let mut out = vec![0u64; self.0.len() + other.0.len()];
        for (i, &a) in self.0.iter().enumerate() {
            let mut carry = 0u128;
            for (j, &b) in other.0.iter().enumerate() {
                let t = out[i + j] as u128 + a as u128 * b as u128 + carry;
                out[i + j] = t as u64;
                carry = t >> 64;
            }
            out[i + other.0.len()] = carry as u64;
        }
        Limbs(out).trimmed()
    }

    /// `|self - other|`.
    fn abs_diff(&self, other: &Limbs) -> Limbs {
        let (big, small) = if self >= other { (self, other) } else { (other, self) };
        let mut out = big.0.clone();
        let mut borrow = 0u64;
        for (i, d) in out.iter_mut().enumerate() {
            let s = small.0.get(i).copied().unwrap_or(0);
            let (r1, b1) = d.overflowing_sub(s);
            let (r2, b2) = r1.overflowing_sub(borrow);
            *d = r2;
            borrow = (b1 || b2) as u64;
        }
        Limbs(out).trimmed()
    }
}

impl PartialOrd for Limbs {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Limbs {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.iter().rev().cmp(other.0.iter().rev()))
    }
}

/// Between-class variance up to the constant `1 / total^2`, as the exact
/// fraction `num / den = (s0 n1 - s1 n0)^2 / (n0 n1)`. Empty classes give
/// zero.
fn between_class_fraction(n0: u128, s0: u128, n1: u128, s1: u128) -> (Limbs, Limbs) {
    if n0 == 0 || n1 == 0 {
        return (Limbs(Vec::new()), Limbs::from_u128(1));
    }
    let (n0, s0, n1, s1) = (
        Limbs::from_u128(n0),
        Limbs::from_u128(s0),
        Limbs::from_u128(n1),
        Limbs::from_u128(s1),
    );
    let d = s0.mul(&n1).abs_diff(&s1.mul(&n0));
    (d.mul(&d), n0.mul(&n1))
}

/// Otsu threshold over a histogram: the bin `b` maximizing between-class
/// variance when bins `0..=b` form the lower class. Ties resolve to the
/// lowest bin. Returns `None` when no split has positive variance.
///
/// Comparisons are exact for any `u64` counts.
pub fn otsu_bin(hist: &[u64]) -> Option<usize> {
    let total_n: u128 = hist.iter().map(|&c| c as u128).sum();
    let total_s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best: Option<(usize, Limbs, Limbs)> = None;
    for (b, &c) in hist.iter().enumerate() {
        n0 += c as u128;
        s0 += b as u128 * c as u128;
        let (num, den) = between_class_fraction(n0, s0, total_n - n0, total_s - s0);
        if num.is_zero() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => num.mul(bd) > bn.mul(&den),
        };
        if better {
            best = Some((b, num, den));
        }
    }
    best.map(|(b, _, _)| b)
}

/// Min-max normalizes the map into `bins` bins and thresholds it with Otsu's
/// method; pixels in bins above the threshold bin form the mask. A constant
/// map yields an all-ones mask.
pub fn otsu_threshold(map: &SaliencyMap, bins: usize) -> Result<EditMask> {
    if bins < 2 {
        return Err(Error::Mask(format!("need at least 2 bins, got {bins}")));
    }
    let (h, w) = (map.height(), map.width());
    let vals = map.values().data();
    let (lo, hi) = vals
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        log::warn!("saliency map is constant; using an all-ones edit mask");
        return Ok(EditMask::filled(h, w, true));
    }
    let span = (hi - lo) as f64;
    let bin_of = |v: f32| (((v - lo) as f64 / span * bins as f64) as usize).min(bins - 1);
    let mut hist = vec![0u64; bins];
    for &v in vals {
        hist[bin_of(v)] += 1;
    }
    let threshold = otsu_bin(&hist).unwrap_or(0);
    EditMask::new(vals.iter().map(|&v| bin_of(v) > threshold).collect(), h, w)
}

/// `mask * z_t + (1 - mask) * z_source`, per latent pixel across channels.
pub fn blend_latents(z_t: &LatentGrid, z_source: &LatentGrid, mask: &EditMask) -> Result<LatentGrid> {
    if z_t.shape() != z_source.shape() {
        return Err(Error::Blend(format!(
            "latent shapes differ: {:?} vs {:?}",
            z_t.shape(),
            z_source.shape()
        )));
    }
    if z_t.step_index() != z_source.step_index() {
        return Err(Error::Blend(format!(
            "latent steps differ: {} vs {}",
            z_t.step_index(),
            z_source.step_index()
        )));
    }
    let (h, w, c) = z_t.shape();
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::Blend(format!(
            "mask is {}x{}, latent grid is {h}x{w}",
            mask.height(),
            mask.width()
        )));
    }
    let mut data = z_source.data().clone();
    let tgt = z_t.data().data();
    for (p, &on) in mask.bits().iter().enumerate() {
        if on {
            data.data_mut()[p * c..(p + 1) * c].copy_from_slice(&tgt[p * c..(p + 1) * c]);
        }
    }
    LatentGrid::new(data, z_t.step_index(), z_t.t_value())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, f: impl FnMut(usize, usize) -> f32) -> SaliencyMap {
        SaliencyMap::new(Tensor::from_fn2(h, w, f)).unwrap()
    }

    #[test]
    fn saliency_single_column_reshapes() {
        let ca = Tensor::from_fn2(6, 3, |i, j| (i * 3 + j) as f32);
        let s = word_saliency(&[&ca], &[1], 2, 3).unwrap();
        assert_eq!(s.values().data(), &[1.0, 4.0, 7.0, 10.0, 13.0, 16.0]);
        assert_eq!(s.values().dims(), &[2, 3]);
    }

    #[test]
    fn saliency_uniform_and_averaged() {
        let u = Tensor::full(&[4, 5], 0.2);
        let s = word_saliency(&[&u], &[0, 3], 2, 2).unwrap();
        assert!(s.values().data().iter().all(|&v| (v - 0.2).abs() < 1e-7));
        let a = Tensor::from_fn2(4, 2, |i, _| i as f32);
        let b = Tensor::from_fn2(4, 2, |i, _| 10.0 - i as f32);
        let s = word_saliency(&[&a, &b], &[1], 2, 2).unwrap();
        assert!(s.values().data().iter().all(|&v| v == 5.0));
        assert!(word_saliency(&[&a], &[], 2, 2).is_err());
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(2.0, 4);
        assert_eq!(k.len(), 9);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_constant_and_impulse() {
        let c = map(8, 8, |_, _| 0.75);
        let s = gaussian_smooth(&c, 2.0, 4).unwrap();
        assert!(s.values().data().iter().all(|&v| (v - 0.75).abs() < 1e-6));

        let imp = map(15, 15, |y, x| if (y, x) == (7, 7) { 1.0 } else { 0.0 });
        let s = gaussian_smooth(&imp, 1.5, 3).unwrap();
        let k = gaussian_kernel(1.5, 3);
        for dy in 0..7 {
            for dx in 0..7 {
                let got = s.values().at(4 + dy, 4 + dx) as f64;
                assert!((got - k[dy] * k[dx]).abs() < 1e-7);
            }
        }
        assert!(gaussian_smooth(&c, 0.0, 2).is_err());
    }

    #[test]
    fn reflect_covers_small_grids() {
        assert_eq!(reflect_index(-1, 5), 0);
        assert_eq!(reflect_index(-2, 5), 1);
        assert_eq!(reflect_index(5, 5), 4);
        assert_eq!(reflect_index(-3, 1), 0);
        assert_eq!(reflect_index(7, 2), 0);
    }

    #[test]
    fn otsu_two_values_separate() {
        let m = map(4, 4, |y, x| if (y + x) % 3 == 0 { 1.0 } else { 0.0 });
        let mask = otsu_threshold(&m, 256).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(mask.get(y, x), (y + x) % 3 == 0);
            }
        }
    }

    #[test]
    fn otsu_constant_is_all_ones() {
        let mask = otsu_threshold(&map(3, 3, |_, _| 0.4), 256).unwrap();
        assert_eq!(mask.count_ones(), 9);
        assert!(otsu_threshold(&map(3, 3, |_, _| 0.4), 1).is_err());
    }

    #[test]
    fn otsu_bin_small_cases() {
        assert_eq!(otsu_bin(&[5, 0, 0, 5]), Some(0));
        assert_eq!(otsu_bin(&[0, 3, 0, 0]), None);
        assert_eq!(otsu_bin(&[4, 4, 0, 0, 0, 0, 4, 4]), Some(1));
    }

    fn latent(h: usize, w: usize, c: usize, base: f32, step: usize) -> LatentGrid {
        let n = h * w * c;
        let data = (0..n).map(|i| base + i as f32).collect();
        LatentGrid::new(Tensor::new(vec![h, w, c], data).unwrap(), step, 0.5).unwrap()
    }

    #[test]
    fn blend_extremes_and_half() {
        let a = latent(2, 4, 3, 0.0, 5);
        let b = latent(2, 4, 3, 100.0, 5);
        assert_eq!(blend_latents(&a, &b, &EditMask::filled(2, 4, true)).unwrap(), a);
        assert_eq!(
            blend_latents(&a, &b, &EditMask::filled(2, 4, false)).unwrap().data(),
            b.data()
        );
        let left = EditMask::from_fn(2, 4, |_, x| x < 2);
        let out = blend_latents(&a, &b, &left).unwrap();
        for y in 0..2 {
            for x in 0..4 {
                for ch in 0..3 {
                    let i = (y * 4 + x) * 3 + ch;
                    let want = if x < 2 { a.data().data()[i] } else { b.data().data()[i] };
                    assert_eq!(out.data().data()[i], want);
                }
            }
        }
    }

    #[test]
    fn blend_mismatches() {
        let a = latent(2, 2, 1, 0.0, 3);
        assert!(blend_latents(&a, &latent(2, 2, 1, 0.0, 4), &EditMask::filled(2, 2, true)).is_err());
        assert!(blend_latents(&a, &latent(2, 3, 1, 0.0, 3), &EditMask::filled(2, 2, true)).is_err());
        assert!(blend_latents(&a, &a, &EditMask::filled(3, 2, true)).is_err());
    }

    #[test]
    fn mask_resize_nearest() {
        let m = EditMask::from_fn(2, 2, |y, x| y == x);
        let big = m.resize_nearest(4, 4);
        assert!(big.get(0, 1) && big.get(3, 3) && !big.get(0, 2));
        assert_eq!(big.resize_nearest(2, 2), m);
    }

    #[test]
    fn limb_arithmetic() {
        let m = Limbs::from_u128(u128::MAX);
        assert_eq!(m.mul(&m), Limbs(vec![1, 0, u64::MAX - 1, u64::MAX]));
        let a = Limbs::from_u128(1 << 70);
        let b = Limbs::from_u128(5);
        assert_eq!(a.abs_diff(&b), Limbs::from_u128((1 << 70) - 5));
        assert_eq!(b.abs_diff(&a), Limbs::from_u128((1 << 70) - 5));
        assert!(a > b && Limbs::from_u128(0).is_zero());
    }

    #[test]
    fn huge_counts_still_break_ties_low() {
        let c = u64::MAX / 4;
        let hist = [c, 0, 0, c];
        assert_eq!(otsu_bin(&hist), Some(0));
    }

}
