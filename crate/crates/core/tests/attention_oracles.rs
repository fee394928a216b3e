mod oracles;

use oracles::{from_rows, i2i_sa, i2t_ca, softmax_rows, tied_rows, to_rows};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflex_core::attention::{
    adapt_i2i_sa, adapt_i2t_ca, apply_row_overrides, decompose_joint_attention, topk_rows,
    Representation, RowOverrides,
};
use reflex_core::{Tensor, TokenMapping};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn i2i_sa_matches_sorted_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let n = rng.random_range(1..=32);
        let k = rng.random_range(0..=n + 2);
        let (src, mut tgt) = if case % 3 == 0 {
            (tied_rows(&mut rng, n, n), tied_rows(&mut rng, n, n))
        } else {
            (softmax_rows(&mut rng, n, n, 6.0), softmax_rows(&mut rng, n, n, 6.0))
        };
        if case % 7 == 0 {
            tgt[0] = vec![0.0; n];
        }
        let got = to_rows(&adapt_i2i_sa(&from_rows(&tgt), &from_rows(&src), k).unwrap());
        let (want, sets) = i2i_sa(&tgt, &src, k);
        for i in 0..n {
            let mut sorted = sets[i].clone();
            sorted.sort_unstable();
            let topk = topk_rows(&from_rows(&src), k).unwrap();
            assert_eq!(topk.row(i), &sorted[..], "case {case} row {i}");
            for j in 0..n {
                if sets[i].contains(&j) {
                    assert!(
                        rel_close(got[i][j] as f64, want[i][j] as f64, 1e-6),
                        "case {case} ({i},{j}): {} vs {}",
                        got[i][j],
                        want[i][j]
                    );
                } else {
                    assert_eq!(got[i][j].to_bits(), src[i][j].to_bits());
                }
            }
        }
    }
}

#[test]
fn i2i_sa_small_k_is_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.random_range(1..=16);
        let src = from_rows(&softmax_rows(&mut rng, n, n, 4.0));
        let tgt = from_rows(&softmax_rows(&mut rng, n, n, 4.0));
        assert_eq!(adapt_i2i_sa(&tgt, &src, 0).unwrap(), src);
        assert_eq!(adapt_i2i_sa(&tgt, &src, 1).unwrap(), src);
    }
}

#[test]
fn i2t_ca_matches_column_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let n = rng.random_range(1..=24);
        let (lt, ls) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let tgt = softmax_rows(&mut rng, n, lt, 3.0);
        let src = softmax_rows(&mut rng, n, ls, 3.0);
        let f: Vec<Option<usize>> = (0..lt)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(0..ls)))
            .collect();
        let alpha = rng.random_range(1.0..8.0f32);
        let mapping = TokenMapping::new(f.clone(), ls).unwrap();
        let got = adapt_i2t_ca(&from_rows(&tgt), &from_rows(&src), &mapping, alpha).unwrap();
        assert_eq!(to_rows(&got), i2t_ca(&tgt, &src, &f, alpha));
    }
}

#[test]
fn decomposition_of_37x37() {
    let full = Tensor::from_fn2(37, 37, |i, j| (i * 37 + j) as f32);
    for l in [0, 1, 7, 36, 37] {
        let b = decompose_joint_attention(&full, l, 0, 0, Representation::Probabilities).unwrap();
        assert_eq!(b.t2t.dims(), &[l, l]);
        assert_eq!(b.i2t.dims(), &[37 - l, l]);
        assert_eq!(b.t2i.dims(), &[l, 37 - l]);
        assert_eq!(b.i2i.dims(), &[37 - l, 37 - l]);
        for i in 0..37 - l {
            for j in 0..37 - l {
                assert_eq!(b.i2i.at(i, j), full.at(l + i, l + j));
            }
        }
        assert_eq!(b.recompose(), full);
    }
}

#[test]
fn row_overrides_touch_only_image_rows() {
    let full = Tensor::from_fn2(6, 6, |i, j| (i * 6 + j) as f32);
    let mut edited = full.clone();
    let overrides = RowOverrides {
        i2t: Some(Tensor::full(&[4, 2], -1.0)),
        i2i: Some(Tensor::full(&[4, 4], -2.0)),
    };
    apply_row_overrides(&mut edited, 2, &overrides);
    for i in 0..6 {
        for j in 0..6 {
            let want = match (i < 2, j < 2) {
                (true, _) => full.at(i, j),
                (false, true) => -1.0,
                (false, false) => -2.0,
            };
            assert_eq!(edited.at(i, j), want);
        }
    }
}

proptest! {
    #[test]
    fn decompose_recompose_identity(
        n in 1usize..20,
        split in 0usize..20,
        seed in any::<u64>(),
    ) {
        let l = split.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = Tensor::from_fn2(n, n, |_, _| rng.random_range(-5.0..5.0));
        let b = decompose_joint_attention(&full, l, 0, 0, Representation::Logits).unwrap();
        prop_assert_eq!(b.recompose(), full);
    }

    #[test]
    fn i2i_sa_preserves_row_mass(n in 2usize..20, k in 0usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = softmax_rows(&mut rng, n, n, 5.0);
        let tgt = softmax_rows(&mut rng, n, n, 5.0);
        let out = adapt_i2i_sa(&from_rows(&tgt), &from_rows(&src), k).unwrap();
        for i in 0..n {
            let a: f64 = out.row(i).iter().map(|&v| v as f64).sum();
            let b: f64 = src[i].iter().map(|&v| v as f64).sum();
            prop_assert!((a - b).abs() < 1e-5, "row {} mass {} vs {}", i, a, b);
        }
    }

    #[test]
    fn i2t_ca_argmax_of_unmapped_columns_ignores_alpha(
        n in 1usize..12,
        lt in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tgt = from_rows(&softmax_rows(&mut rng, n, lt, 3.0));
        let src = from_rows(&softmax_rows(&mut rng, n, 3, 3.0));
        let mapping = TokenMapping::unmapped(lt);
        let argmax = |t: &Tensor| -> Vec<usize> {
            (0..n)
                .map(|r| {
                    (0..lt).fold(0, |best, c| if t.at(r, c) > t.at(r, best) { c } else { best })
                })
                .collect()
        };
        let a1 = adapt_i2t_ca(&tgt, &src, &mapping, 1.0).unwrap();
        let a4 = adapt_i2t_ca(&tgt, &src, &mapping, 4.0).unwrap();
        prop_assert_eq!(argmax(&a1), argmax(&a4));
    }
}
