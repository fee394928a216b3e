//! Independent reference implementations used by the integration and
//! acceptance tests. They favour obviousness over speed: full sorts instead
//! of selection, direct 2-D convolution, exhaustive rational Otsu.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Matrix = Vec<Vec<f32>>;

pub fn to_rows(t: &reflex_core::Tensor) -> Matrix {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn from_rows(m: &Matrix) -> reflex_core::Tensor {
    let cols = m.first().map_or(0, |r| r.len());
    reflex_core::Tensor::new(vec![m.len(), cols], m.concat()).unwrap()
}

/// Indices of the `k` largest values, largest first, lower index winning ties.
pub fn topk_by_sort(row: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k.min(row.len()));
    idx
}

/// Per-row I2I-SA rule: inside the source top-k set, target values scaled
/// so the set keeps the source mass; elsewhere the source value. A row with
/// zero target mass on the set stays the source row.
pub fn i2i_sa(target: &Matrix, source: &Matrix, k: usize) -> (Matrix, Vec<Vec<usize>>) {
    let mut out = source.clone();
    let mut sets = Vec::new();
    for (i, src) in source.iter().enumerate() {
        let set = topk_by_sort(src, k);
        let s: f64 = set.iter().map(|&j| src[j] as f64).sum();
        let t: f64 = set.iter().map(|&j| target[i][j] as f64).sum();
        if t != 0.0 {
            for &j in &set {
                out[i][j] = (s * (target[i][j] as f64 / t)) as f32;
            }
        }
        sets.push(set);
    }
    (out, sets)
}

/// Columnwise I2T-CA rule.
pub fn i2t_ca(target: &Matrix, source: &Matrix, f: &[Option<usize>], alpha: f32) -> Matrix {
    target
        .iter()
        .enumerate()
        .map(|(r, row)| {
            (0..row.len())
                .map(|i| match f[i] {
                    Some(s) => source[r][s],
                    None => alpha * row[i],
                })
                .collect()
        })
        .collect()
}

/// Mirror padding that repeats the edge sample: `-1 -> 0`, `n -> n - 1`.
pub fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D convolution with a normalised `(2r+1)^2` Gaussian window.
pub fn gaussian_blur_2d(map: &Matrix, sigma: f64, radius: usize) -> Vec<Vec<f64>> {
    let (h, w) = (map.len(), map[0].len());
    let r = radius as isize;
    let mut weights = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            weights.push((dy, dx, (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = weights.iter().map(|w| w.2).sum();
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    weights
                        .iter()
                        .map(|&(dy, dx, wt)| {
                            let yy = mirror(y as isize + dy, h);
                            let xx = mirror(x as isize + dx, w);
                            wt * map[yy][xx] as f64
                        })
                        .sum::<f64>()
                        / total
                })
                .collect()
        })
        .collect()
}

/// Exhaustive Otsu: the lowest bin `b` maximising `w0 w1 (mu0 - mu1)^2`
/// with bins `0..=b` as the lower class, in exact rationals. `None` when
/// every split has zero between-class variance.
pub fn otsu_exhaustive(hist: &[u64]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let big = |v: u128| BigInt::from(v);
    let mut best: Option<(usize, BigRational)> = None;
    for b in 0..hist.len() {
        let (lo, hi) = hist.split_at(b + 1);
        let n0: u128 = lo.iter().map(|&c| c as u128).sum();
        let n1: u128 = hi.iter().map(|&c| c as u128).sum();
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u128 = lo.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
        let s1: u128 = hi
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + b + 1) as u128 * c as u128)
            .sum();
        let n = BigRational::from_integer(big(total as u128));
        let w0 = BigRational::from_integer(big(n0)) / &n;
        let w1 = BigRational::from_integer(big(n1)) / &n;
        let mu0 = BigRational::new(big(s0), big(n0));
        let mu1 = BigRational::new(big(s1), big(n1));
        let diff = mu0 - mu1;
        let var = w0 * w1 * (&diff * &diff);
        if var == BigRational::from_integer(BigInt::from(0)) {
            continue;
        }
        if best.as_ref().map_or(true, |(_, v)| var > *v) {
            best = Some((b, var));
        }
    }
    best.map(|(b, _)| b)
}

/// A row-stochastic matrix from random logits.
pub fn softmax_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix {
    (0..rows)
        .map(|_| {
            let logits: Vec<f32> = (0..cols).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
            let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let e: Vec<f32> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f32 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// A row-stochastic matrix from a few quantised levels, so rows have ties.
pub fn tied_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    (0..rows)
        .map(|_| {
            let raw: Vec<f32> = (0..cols).map(|_| rng.random_range(0..4u8) as f32).collect();
            let s: f32 = raw.iter().sum();
            if s == 0.0 {
                vec![1.0 / cols as f32; cols]
            } else {
                raw.into_iter().map(|v| v / s).collect()
            }
        })
        .collect()
}

/// 256-bin histograms: random, sparse, mirror-symmetric (guaranteed ties
/// across the centre) and two-spike plateaus (every split in between ties).
pub fn histogram(rng: &mut ChaCha8Rng, case: usize) -> Vec<u64> {
    let mut h = vec![0u64; 256];
    match case % 4 {
        0 => h.iter_mut().for_each(|c| *c = rng.random_range(0..1000)),
        1 => {
            for _ in 0..rng.random_range(2..12) {
                h[rng.random_range(0..256)] += rng.random_range(1..500);
            }
        }
        2 => {
            for i in 0..128 {
                let c = if rng.random_bool(0.3) { rng.random_range(0..200) } else { 0 };
                h[i] = c;
                h[255 - i] = c;
            }
            let k = rng.random_range(0..128);
            h[k] += 1;
            h[255 - k] += 1;
        }
        _ => {
            let a = rng.random_range(0..100);
            let b = rng.random_range(a + 2..256);
            let c = rng.random_range(1..1000);
            h[a] = c;
            h[b] = c;
        }
    }
    h
}
