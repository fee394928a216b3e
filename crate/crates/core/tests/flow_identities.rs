use proptest::prelude::*;
use reflex_core::flow::{
    euler_invert, euler_sample, gaussian_noise, interpolate, noised_invert, reconstruct_from_step,
    TimestepSchedule,
};
use reflex_core::{LatentGrid, Result, Tensor};

fn latent(vals: Vec<f32>, step: usize, s: &TimestepSchedule) -> LatentGrid {
    let n = vals.len();
    LatentGrid::new(Tensor::new(vec![1, 1, n], vals).unwrap(), step, s.t(step)).unwrap()
}

fn constant(c: f32) -> impl FnMut(&LatentGrid) -> Result<Tensor> {
    move |z: &LatentGrid| Ok(Tensor::full(z.data().dims(), c))
}

#[test]
fn constant_field_round_trip_is_exact_on_dyadic_grid() {
    let s = TimestepSchedule::uniform(8);
    let z0 = latent(vec![0.5, -1.25, 3.0, 0.0], 0, &s);
    let inv = euler_invert(&z0, &s, &mut constant(0.75)).unwrap();
    let back = euler_sample(inv.last(), &s, &mut constant(0.75)).unwrap();
    assert_eq!(back.last().data(), z0.data());
}

#[test]
fn constant_field_round_trip_at_28_steps_is_tight() {
    let s = TimestepSchedule::uniform(28);
    let z0 = latent(vec![0.3, -0.7, 1.1], 0, &s);
    let inv = euler_invert(&z0, &s, &mut constant(0.4)).unwrap();
    let back = euler_sample(inv.last(), &s, &mut constant(0.4)).unwrap();
    for (a, b) in back.last().data().data().iter().zip(z0.data().data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn linear_field_value() {
    let s = TimestepSchedule::uniform(4);
    let mut id = |z: &LatentGrid| Ok(z.data().clone());
    let out = euler_sample(&latent(vec![1.0], 4, &s), &s, &mut id).unwrap();
    assert!((out.last().data().data()[0] as f64 - 0.31640625).abs() < 1e-9);
}

#[test]
fn noised_inversion_without_noising_is_plain_inversion() {
    let s = TimestepSchedule::uniform(10);
    let z0 = latent(vec![0.2, -0.4, 0.9], 0, &s);
    let mut f = |z: &LatentGrid| {
        let d = z.data().data().iter().map(|v| 0.5 * v.sin() - z.t_value()).collect();
        Ok(Tensor::new(z.data().dims().to_vec(), d).unwrap())
    };
    let noise = gaussian_noise(&[1, 1, 3], 3);
    let a = noised_invert(&z0, 0, &noise, &s, &mut f).unwrap();
    let b = euler_invert(&z0, &s, &mut f).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noise_equal_to_latent_is_a_fixed_point_of_noising() {
    let s = TimestepSchedule::uniform(12);
    let z0 = latent(vec![0.2, -0.4, 0.9, 7.5], 0, &s);
    let traj = noised_invert(&z0, 6, z0.data(), &s, &mut constant(0.0)).unwrap();
    for z in traj.latents() {
        assert_eq!(z.data(), z0.data());
    }
}

#[test]
fn reconstruct_from_zero_is_identity() {
    let s = TimestepSchedule::uniform(5);
    let z0 = latent(vec![1.0, 2.0], 0, &s);
    let traj = euler_invert(&z0, &s, &mut constant(1.0)).unwrap();
    let rec = reconstruct_from_step(&traj, 0, &s, &mut constant(1.0)).unwrap();
    assert_eq!(rec, z0);
}

proptest! {
    #[test]
    fn noising_prefix_is_linear_interpolation(
        vals in proptest::collection::vec(-3.0f32..3.0, 1..8),
        n in 1usize..6,
        seed in any::<u64>(),
    ) {
        let s = TimestepSchedule::uniform(8);
        let z0 = latent(vals.clone(), 0, &s);
        let noise = gaussian_noise(&[1, 1, vals.len()], seed);
        let traj = noised_invert(&z0, n, &noise, &s, &mut constant(0.1)).unwrap();
        for i in 1..=n {
            prop_assert_eq!(traj.at(i).unwrap().data(), &interpolate(z0.data(), &noise, s.t(i)));
        }
        prop_assert_eq!(traj.last().step_index(), 8);
    }

    #[test]
    fn inversion_then_sampling_undoes_constant_fields(
        vals in proptest::collection::vec(-8i32..8, 1..6),
        c in -4i32..4,
    ) {
        // Quarter-integers on a power-of-two grid keep every product exact.
        let s = TimestepSchedule::uniform(16);
        let z0 = latent(vals.iter().map(|&v| v as f32 / 4.0).collect(), 0, &s);
        let c = c as f32 / 4.0;
        let inv = euler_invert(&z0, &s, &mut constant(c)).unwrap();
        let back = euler_sample(inv.last(), &s, &mut constant(c)).unwrap();
        prop_assert_eq!(back.last().data(), z0.data());
    }
}
