//! Discriminative Bayesian filter over SE(3).
//!
//! The state is the feature pose in the current sensor frame. Prediction moves
//! it by the sensor's own motion between steps; correction fuses the predicted
//! belief with the new observation, observation first.

use nalgebra::Vector6;

use crate::error::Result;
use crate::se3::{Mat6, Pose};
use crate::uncertainty::{fuse, propagate, PoseBelief, DEFAULT_FUSION_ITERS};

/// Default per-step dynamics noise stdev (mm for translation, deg for rotation).
pub const DEFAULT_SIGMA_PHI: f64 = 0.5;

/// Per-step tangent-space noise of the state dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsNoise {
    pub cov: Mat6,
}

impl DynamicsNoise {
    pub fn from_cov(cov: Mat6) -> Self {
        Self { cov }
    }

    /// `sigma^2 * I`, with every component in internal units (mm, rad).
    pub fn isotropic(sigma: f64) -> Self {
        Self::from_cov(Mat6::identity() * sigma * sigma)
    }

    /// One stdev for all components, read as mm for translation and degrees for
    /// rotation.
    pub fn from_mm_deg(sigma: f64) -> Self {
        let r = sigma.to_radians();
        let d = Vector6::new(sigma * sigma, sigma * sigma, sigma * sigma, r * r, r * r, r * r);
        Self::from_cov(Mat6::from_diagonal(&d))
    }
}

impl Default for DynamicsNoise {
    fn default() -> Self {
        Self::from_mm_deg(DEFAULT_SIGMA_PHI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub filtered: PoseBelief,
    /// Sensor pose at the last update; `None` until one is supplied.
    pub prev_sensor_pose: Option<Pose>,
    pub step_index: u64,
}

/// Starts the filter from the first observation.
pub fn filter_init(obs: PoseBelief) -> FilterState {
    FilterState {
        filtered: obs,
        prev_sensor_pose: None,
        step_index: 0,
    }
}

/// Starts the filter from the first observation taken at `sensor_pose`.
pub fn filter_init_at(obs: PoseBelief, sensor_pose: Pose) -> FilterState {
    FilterState {
        prev_sensor_pose: Some(sensor_pose),
        ..filter_init(obs)
    }
}

/// Relative transform `X_k^-1 X_{k-1}` mapping the previous state into the current sensor frame.
pub fn dynamics_transform(s: &FilterState, sensor_pose_k: &Pose) -> Pose {
    match &s.prev_sensor_pose {
        Some(prev) => sensor_pose_k.inverse() * *prev,
        None => Pose::identity(),
    }
}

pub fn filter_predict(s: &FilterState, sensor_pose_k: &Pose, noise: &DynamicsNoise) -> PoseBelief {
    propagate(&s.filtered, &dynamics_transform(s, sensor_pose_k), &noise.cov)
}

pub fn filter_correct(belief: &PoseBelief, obs: &PoseBelief) -> Result<PoseBelief> {
    Ok(fuse(obs, belief, DEFAULT_FUSION_ITERS)?.belief)
}

/// Predict with an explicit dynamics transform, then correct if an observation is present.
pub fn filter_step_with_transform(
    s: &FilterState,
    obs: Option<&PoseBelief>,
    t_bar: &Pose,
    noise: &DynamicsNoise,
) -> Result<FilterState> {
    let belief = propagate(&s.filtered, t_bar, &noise.cov);
    let filtered = match obs {
        Some(o) => filter_correct(&belief, o)?,
        None => belief,
    };
    Ok(FilterState {
        filtered,
        prev_sensor_pose: s.prev_sensor_pose,
        step_index: s.step_index + 1,
    })
}

/// One full predict/correct cycle. A missing observation runs prediction only.
pub fn filter_step(
    s: &FilterState,
    obs: Option<&PoseBelief>,
    sensor_pose_k: &Pose,
    noise: &DynamicsNoise,
) -> Result<FilterState> {
    let t_bar = dynamics_transform(s, sensor_pose_k);
    let mut next = filter_step_with_transform(s, obs, &t_bar, noise)?;
    next.prev_sensor_pose = Some(*sensor_pose_k);
    Ok(next)
}
