//! Rectified-flow Euler sampling and inversion.
//!
//! Step index `i` corresponds to time `t_i`, with `t_0 = 0` (data) and
//! `t_T = 1` (noise). Sampling walks `T -> 0`:
//!
//! ```text
//! z_{i-1} = z_i + (t_{i-1} - t_i) * V(z_i, t_i)
//! ```
//!
//! and inversion walks `start -> T` by reversing that update:
//!
//! ```text
//! z_i = z_{i-1} + (t_i - t_{i-1}) * V(z_{i-1}, t_{i-1})
//! ```

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::EditConfig;
use crate::error::{Error, Result};
use crate::latent::LatentGrid;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSchedule {
    t_values: Vec<f32>,
}

impl TimestepSchedule {
    /// `t_i = i / T`.
    pub fn uniform(steps: usize) -> Self {
        assert!(steps > 0, "schedule needs at least one step");
        let t_values = (0..=steps)
            .map(|i| if i == steps { 1.0 } else { i as f32 / steps as f32 })
            .collect();
        Self { t_values }
    }

    /// Custom schedule indexed by step: `t_values[0] == 0`, `t_values[T] == 1`,
    /// strictly increasing in between.
    pub fn from_values(t_values: Vec<f32>) -> Result<Self> {
        let ok = t_values.len() >= 2
            && t_values[0] == 0.0
            && *t_values.last().unwrap() == 1.0
            && t_values.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::Dimension(
                "schedule must rise strictly from t_0 = 0 to t_T = 1".into(),
            ));
        }
        Ok(Self { t_values })
    }

    pub fn steps(&self) -> usize {
        self.t_values.len() - 1
    }

    pub fn t(&self, step: usize) -> f32 {
        self.t_values[step]
    }

    pub fn values(&self) -> &[f32] {
        &self.t_values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Inversion,
    Generation,
}

/// Latents visited by one sampling or inversion run, in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    latents: Vec<LatentGrid>,
    direction: Direction,
}

impl Trajectory {
    pub fn new(latents: Vec<LatentGrid>, direction: Direction) -> Result<Self> {
        let step = match direction {
            Direction::Inversion => 1isize,
            Direction::Generation => -1,
        };
        for w in latents.windows(2) {
            if w[1].step_index() as isize - w[0].step_index() as isize != step {
                return Err(Error::Dimension(format!(
                    "trajectory jumps from step {} to {}",
                    w[0].step_index(),
                    w[1].step_index()
                )));
            }
        }
        Ok(Self { latents, direction })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn latents(&self) -> &[LatentGrid] {
        &self.latents
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn first(&self) -> &LatentGrid {
        &self.latents[0]
    }

    pub fn last(&self) -> &LatentGrid {
        self.latents.last().expect("trajectory is never empty")
    }

    /// Latent tagged with `step`, if this trajectory visited it.
    pub fn get(&self, step: usize) -> Option<&LatentGrid> {
        let first = self.latents.first()?.step_index();
        let pos = match self.direction {
            Direction::Inversion => step.checked_sub(first)?,
            Direction::Generation => first.checked_sub(step)?,
        };
        self.latents.get(pos)
    }

    pub fn at(&self, step: usize) -> Result<&LatentGrid> {
        self.get(step).ok_or(Error::MissingStep(step))
    }

    /// Steps visited, in visiting order.
    pub fn steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.latents.iter().map(|z| z.step_index())
    }
}

/// A velocity field `V(z, t)`. The latent carries its step and `t` tag;
/// any conditioning lives inside the implementor.
pub trait VelocityField {
    fn velocity(&mut self, latent: &LatentGrid) -> Result<Tensor>;
}

impl<F> VelocityField for F
where
    F: FnMut(&LatentGrid) -> Result<Tensor>,
{
    fn velocity(&mut self, latent: &LatentGrid) -> Result<Tensor> {
        self(latent)
    }
}

pub(crate) fn checked_velocity(field: &mut dyn VelocityField, z: &LatentGrid) -> Result<Tensor> {
    let step = z.step_index();
    let v = field.velocity(z).map_err(|e| e.at_step(step))?;
    if v.dims() != z.data().dims() {
        return Err(Error::Dimension(format!(
            "velocity shape {:?} does not match latent {:?}",
            v.dims(),
            z.data().dims()
        ))
        .at_step(step));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite { step, layer: None });
    }
    Ok(v)
}

/// One Euler update `z + (t_to - t_from) * v`, tagged with `to_step`.
pub fn euler_step(
    z: &LatentGrid,
    velocity: &Tensor,
    to_step: usize,
    schedule: &TimestepSchedule,
) -> LatentGrid {
    let t_to = schedule.t(to_step);
    let dt = t_to - schedule.t(z.step_index());
    let mut data = z.data().clone();
    for (x, v) in data.data_mut().iter_mut().zip(velocity.data()) {
        *x += dt * v;
    }
    LatentGrid::new(data, to_step, t_to).expect("shape preserved")
}

/// Samples from `z` (at any step) down to step 0.
pub fn sample_from(
    z: &LatentGrid,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    let start = z.step_index();
    if start > schedule.steps() {
        return Err(Error::MissingStep(start));
    }
    let mut latents = Vec::with_capacity(start + 1);
    latents.push(z.clone());
    for i in (1..=start).rev() {
        let cur = latents.last().unwrap();
        let v = checked_velocity(field, cur)?;
        let next = euler_step(cur, &v, i - 1, schedule);
        latents.push(next);
    }
    Trajectory::new(latents, Direction::Generation)
}

/// Full sampling run from the noise latent `z_T`.
pub fn euler_sample(
    z_noise: &LatentGrid,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    if z_noise.step_index() != schedule.steps() {
        return Err(Error::Dimension(format!(
            "sampling must start at step {}, latent is tagged {}",
            schedule.steps(),
            z_noise.step_index()
        )));
    }
    sample_from(z_noise, schedule, field)
}

/// Inverts from `z_start` (tagged with its step) up to step `T`.
pub fn euler_invert(
    z_start: &LatentGrid,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    let start = z_start.step_index();
    let steps = schedule.steps();
    if start >= steps {
        return Err(Error::Dimension(format!(
            "inversion start step {start} must be < T ({steps})"
        )));
    }
    invert_into(alloc::vec![z_start.clone()], steps, schedule, field)
}

fn invert_into(
    mut latents: Vec<LatentGrid>,
    to_step: usize,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    let start = latents.last().unwrap().step_index();
    for i in start + 1..=to_step {
        let cur = latents.last().unwrap();
        let v = checked_velocity(field, cur)?;
        let next = euler_step(cur, &v, i, schedule);
        latents.push(next);
    }
    Trajectory::new(latents, Direction::Inversion)
}

/// Standard-normal noise shaped like `dims`, from a seeded ChaCha stream.
pub fn gaussian_noise(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(dims.to_vec(), data).expect("length matches dims")
}

/// Forward interpolation `z_0 + t * (eps - z_0)`, i.e. `t * eps + (1 - t) * z_0`.
pub fn interpolate(z0: &Tensor, noise: &Tensor, t: f32) -> Tensor {
    let data = z0
        .data()
        .iter()
        .zip(noise.data())
        .map(|(&x, &e)| x + t * (e - x))
        .collect();
    Tensor::new(z0.dims().to_vec(), data).unwrap()
}

/// Noised inversion: steps `1..=n` are forward interpolations of `z_0`
/// toward `noise`; steps `n+1..=to_step` continue by Euler inversion from `z_n`.
pub fn noised_invert_to(
    z0: &LatentGrid,
    n_noising: usize,
    noise: &Tensor,
    to_step: usize,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    let steps = schedule.steps();
    if z0.step_index() != 0 {
        return Err(Error::Dimension("noised inversion starts from step 0".into()));
    }
    if n_noising >= steps {
        return Err(Error::config("n_noising", format!("must be < T ({steps})")));
    }
    if to_step > steps {
        return Err(Error::MissingStep(to_step));
    }
    if noise.dims() != z0.data().dims() {
        return Err(Error::Dimension(format!(
            "noise shape {:?} does not match latent {:?}",
            noise.dims(),
            z0.data().dims()
        )));
    }
    let mut latents = Vec::with_capacity(to_step + 1);
    latents.push(z0.clone());
    for i in 1..=n_noising.min(to_step) {
        let t = schedule.t(i);
        latents.push(LatentGrid::new(interpolate(z0.data(), noise, t), i, t)?);
    }
    invert_into(latents, to_step, schedule, field)
}

/// Noised inversion all the way to step `T`.
pub fn noised_invert(
    z0: &LatentGrid,
    n_noising: usize,
    noise: &Tensor,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<Trajectory> {
    noised_invert_to(z0, n_noising, noise, schedule.steps(), schedule, field)
}

/// Samples from the trajectory's latent at `start` back to step 0.
pub fn reconstruct_from_step(
    traj: &Trajectory,
    start: usize,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
) -> Result<LatentGrid> {
    let z = traj.at(start)?;
    Ok(sample_from(z, schedule, field)?.last().clone())
}

/// For each step `s`: noised-invert `z_0` to `s`, sample back to 0 and
/// report the mean squared error against `z_0`. Results follow `steps` order.
///
/// One inversion to `max(steps)` serves all entries, since shorter
/// inversions are prefixes of it.
pub fn reconstruction_sweep(
    z0: &LatentGrid,
    config: &EditConfig,
    schedule: &TimestepSchedule,
    field: &mut dyn VelocityField,
    steps: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let Some(&max) = steps.iter().max() else {
        return Ok(Vec::new());
    };
    if let Some(&bad) = steps.iter().find(|&&s| s == 0 || s > schedule.steps()) {
        return Err(Error::MissingStep(bad));
    }
    let noise = gaussian_noise(z0.data().dims(), config.seed);
    let traj = noised_invert_to(z0, config.n_noising, &noise, max, schedule, field)?;
    steps
        .iter()
        .map(|&s| {
            let rec = reconstruct_from_step(&traj, s, schedule, field)?;
            Ok((s, rec.data().mse(z0.data())?))
        })
        .collect()
}
