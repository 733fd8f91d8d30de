//! Rectified-flow noising and Euler sampling.

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dit::DitModel;
use crate::error::{Error, Result};
use crate::rng::{stream, tags};
use crate::token_space::{Branch, FeatureGrid};

/// `x_t = (1 - σ)·x0 + σ·ε`.
pub fn forward_noising(x0: &FeatureGrid, eps: &FeatureGrid, sigma: f64) -> Result<FeatureGrid> {
    if x0.shape() != eps.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", x0.shape(), eps.shape())));
    }
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} outside [0, 1]")));
    }
    Ok(FeatureGrid::new(&x0.data * (1.0 - sigma) + &eps.data * sigma, Branch::Noisy))
}

pub(crate) fn gaussian_grid<R: Rng + ?Sized>(shape: (usize, usize, usize), rng: &mut R) -> FeatureGrid {
    FeatureGrid::new(Array3::from_shape_simple_fn(shape, || StandardNormal.sample(rng)), Branch::Noisy)
}

/// Initial noise of [`sample`] for a given seed.
pub fn sample_noise(model: &DitModel, seed: u64) -> FeatureGrid {
    let c = &model.config;
    gaussian_grid((c.grid, c.grid, c.d_model), &mut stream(seed, tags::SAMPLE_NOISE, 0))
}

/// Sampler position: the current latent and its noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub x_t: FeatureGrid,
    pub sigma: f64,
    pub step: usize,
}

/// Integer timestep used for the sampler's `i`-th substep.
pub fn substep_timestep(i: usize, steps: usize, total: u32) -> u32 {
    let sigma = 1.0 - i as f64 / steps as f64;
    (sigma * total as f64).round() as u32
}

/// One Euler substep from `σ_i = 1 - i/steps` to `σ_{i+1}`.
pub fn euler_step(model: &DitModel, state: &FlowState, line: &FeatureGrid, reference: &FeatureGrid, steps: usize) -> Result<FlowState> {
    let t = substep_timestep(state.step, steps, model.config.schedule.total_steps);
    let v = model.predict_velocity(&state.x_t, line, reference, t)?;
    let dt = 1.0 / steps as f64;
    Ok(FlowState {
        x_t: FeatureGrid::new(&state.x_t.data - &(v.data * dt), Branch::Noisy),
        sigma: 1.0 - (state.step + 1) as f64 / steps as f64,
        step: state.step + 1,
    })
}

/// Integrates the velocity field from `x_T` at σ = 1 down to σ = 0.
pub fn sample_from(model: &DitModel, x_t: FeatureGrid, line: &FeatureGrid, reference: &FeatureGrid, steps: usize) -> Result<FeatureGrid> {
    if steps == 0 {
        return Err(Error::InvalidArgument("sampling needs at least one step".into()));
    }
    let mut state = FlowState { x_t, sigma: 1.0, step: 0 };
    while state.step < steps {
        state = euler_step(model, &state, line, reference, steps)?;
    }
    Ok(state.x_t)
}

/// Seeded sampling: Gaussian `x_T` from `seed`, then [`sample_from`].
pub fn sample(model: &DitModel, line: &FeatureGrid, reference: &FeatureGrid, steps: usize, seed: u64) -> Result<FeatureGrid> {
    sample_from(model, sample_noise(model, seed), line, reference, steps)
}
