//! Tangent-space feedforward/feedback control of sensor pose.
//!
//! Errors are computed as twists in internal units (mm, rad) and rescaled to
//! (mm, deg) before they reach the PID gains, so gains act on mm and degree
//! errors and produce mm/s and deg/s. Control twists leave this module in
//! internal units (mm/s, rad/s), expressed in the current sensor frame.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::se3::{adjoint, log_map, Pose, Twist};

/// Below this distance to the target the alignment controller is silenced (mm).
pub const ALIGNMENT_CUTOFF_MM: f64 = 120.0;
/// A push is complete once the target is closer than the tip radius (mm).
pub const TIP_RADIUS_MM: f64 = 20.0;
/// EWMA decay applied to the error before differentiation.
pub const DEFAULT_EWMA_DECAY: f64 = 0.5;

/// Converts a twist in (mm, rad) to (mm, deg).
pub fn to_mm_deg(t: &Twist) -> [f64; 6] {
    let mut v = t.to_array();
    for x in &mut v[3..] {
        *x = x.to_degrees();
    }
    v
}

/// Converts a (mm, deg) 6-vector to a twist in (mm, rad).
pub fn from_mm_deg(v: &[f64; 6]) -> Twist {
    let mut w = *v;
    for x in &mut w[3..] {
        *x = x.to_radians();
    }
    Twist::from_array(w)
}

/// Per-component closed interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clip<const N: usize> {
    pub lo: [f64; N],
    pub hi: [f64; N],
}

impl<const N: usize> Clip<N> {
    pub fn symmetric(bound: f64) -> Self {
        Self {
            lo: [-bound; N],
            hi: [bound; N],
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo; N],
            hi: [hi; N],
        }
    }

    fn apply(&self, v: &mut [f64; N]) {
        for ((x, lo), hi) in v.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(*lo, *hi);
        }
    }

    fn validate(&self) -> Result<()> {
        for i in 0..N {
            if !(self.lo[i] < self.hi[i]) {
                return Err(Error::InvalidArgument(format!(
                    "clip component {i}: lower bound {} is not below upper bound {}",
                    self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }
}

/// Diagonal PID gains and limits for an `N`-channel controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidConfig<const N: usize> {
    pub kp: [f64; N],
    pub ki: [f64; N],
    pub kd: [f64; N],
    pub integral_clip: Option<Clip<N>>,
    pub output_clip: Option<Clip<N>>,
    pub ewma_decay: f64,
}

pub type MimoPid = PidConfig<6>;
pub type SisoPid = PidConfig<1>;

impl<const N: usize> PidConfig<N> {
    pub fn proportional(kp: [f64; N]) -> Self {
        Self {
            kp,
            ki: [0.0; N],
            kd: [0.0; N],
            integral_clip: None,
            output_clip: None,
            ewma_decay: DEFAULT_EWMA_DECAY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gains = self.kp.iter().chain(&self.ki).chain(&self.kd);
        if gains.clone().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidArgument("gains must be finite and non-negative".into()));
        }
        if !(self.ewma_decay > 0.0 && self.ewma_decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "EWMA decay must lie in (0, 1), got {}",
                self.ewma_decay
            )));
        }
        if let Some(c) = &self.integral_clip {
            c.validate()?;
        }
        if let Some(c) = &self.output_clip {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidState<const N: usize> {
    pub integral: [f64; N],
    pub smoothed_error: [f64; N],
    /// Time of the last update (s).
    pub time: f64,
    pub steps: u64,
}

impl<const N: usize> Default for PidState<N> {
    fn default() -> Self {
        Self {
            integral: [0.0; N],
            smoothed_error: [0.0; N],
            time: 0.0,
            steps: 0,
        }
    }
}

/// One PID update with backward-Euler integral and a derivative of the
/// EWMA-smoothed error. The first update after a reset has zero derivative.
pub fn pid_update<const N: usize>(
    cfg: &PidConfig<N>,
    st: &PidState<N>,
    e: &[f64; N],
    dt: f64,
) -> Result<([f64; N], PidState<N>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut integral = st.integral;
    for i in 0..N {
        integral[i] += e[i] * dt;
    }
    if let Some(c) = &cfg.integral_clip {
        c.apply(&mut integral);
    }
    let mut smoothed = *e;
    let mut derivative = [0.0; N];
    if st.steps > 0 {
        for i in 0..N {
            smoothed[i] = cfg.ewma_decay * st.smoothed_error[i] + (1.0 - cfg.ewma_decay) * e[i];
            derivative[i] = (smoothed[i] - st.smoothed_error[i]) / dt;
        }
    }
    let mut u = [0.0; N];
    for i in 0..N {
        u[i] = cfg.kp[i] * e[i] + cfg.ki[i] * integral[i] + cfg.kd[i] * derivative[i];
    }
    if let Some(c) = &cfg.output_clip {
        c.apply(&mut u);
    }
    Ok((
        u,
        PidState {
            integral,
            smoothed_error: smoothed,
            time: st.time + dt,
            steps: st.steps + 1,
        },
    ))
}

/// Reference contact pose and feedforward velocity of a servo controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoConfig {
    /// Desired sensor pose in the feature frame, `X_fs'`.
    pub reference_pose: Pose,
    /// Feedforward twist in the reference sensor frame (mm/s, deg/s).
    pub feedforward: [f64; 6],
}

impl ServoConfig {
    pub fn new(reference_euler_mm_deg: [f64; 6], feedforward: [f64; 6]) -> Self {
        Self {
            reference_pose: Pose::from_euler_xyz_deg(reference_euler_mm_deg),
            feedforward,
        }
    }
}

/// `log(X^-1 X_ref)`: the right perturbation taking `observed` to `reference`.
pub fn pose_error(observed: &Pose, reference: &Pose) -> Result<Twist> {
    log_map(&(observed.inverse() * *reference))
}

/// Reference sensor pose in the current sensor frame, `X_ss' = X_sf X_fs'`.
pub fn servo_error(feature_in_sensor: &Pose, reference_sensor_in_feature: &Pose) -> Pose {
    *feature_in_sensor * *reference_sensor_in_feature
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoOutput {
    /// Control twist in the current sensor frame (mm/s, rad/s).
    pub u: Twist,
    /// `X_ss'`.
    pub error_pose: Pose,
    /// `log(X_ss')` in (mm, deg).
    pub error_mm_deg: [f64; 6],
}

/// MIMO PID on the tangent-space servo error plus the feedforward mapped into the sensor frame.
pub fn servo_control(
    cfg: &ServoConfig,
    pid: &MimoPid,
    st: &PidState<6>,
    feature_in_sensor: &Pose,
    dt: f64,
) -> Result<(ServoOutput, PidState<6>)> {
    let error_pose = servo_error(feature_in_sensor, &cfg.reference_pose);
    let e = to_mm_deg(&log_map(&error_pose)?);
    let (fb, st) = pid_update(pid, st, &e, dt)?;
    let u = from_mm_deg(&fb) + adjoint(&error_pose) * from_mm_deg(&cfg.feedforward);
    Ok((
        ServoOutput {
            u,
            error_pose,
            error_mm_deg: e,
        },
        st,
    ))
}

/// Target bearing (deg) and distance (mm) in the reference sensor frame.
///
/// Bearing is `atan2(y, z)` of the target position in that frame, so it is
/// measured from the sensor axis towards its y axis.
pub fn target_geometry(error_pose: &Pose, world_sensor: &Pose, world_target: &Pose) -> (f64, f64) {
    let t = error_pose.inverse() * world_sensor.inverse() * *world_target;
    let p: &Vector3<f64> = t.translation();
    (p.y.atan2(p.z).to_degrees(), p.y.hypot(p.z))
}

/// Parameters of the target alignment loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentConfig {
    pub pid: SisoPid,
    pub reference_bearing_deg: f64,
    pub cutoff_mm: f64,
    pub done_radius_mm: f64,
}

impl AlignmentConfig {
    pub fn new(pid: SisoPid) -> Self {
        Self {
            pid,
            reference_bearing_deg: 0.0,
            cutoff_mm: ALIGNMENT_CUTOFF_MM,
            done_radius_mm: TIP_RADIUS_MM,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PushState {
    pub servo: PidState<6>,
    pub align: PidState<1>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushOutput {
    pub servo: ServoOutput,
    pub bearing_deg: f64,
    pub distance_mm: f64,
    /// Alignment velocity along the reference sensor y axis (mm/s), after gating.
    pub alignment_mm_s: f64,
    pub done: bool,
}

/// Servo control plus a sideways alignment velocity that steers towards the target.
#[allow(clippy::too_many_arguments)]
pub fn push_control(
    servo_cfg: &ServoConfig,
    servo_pid: &MimoPid,
    align: &AlignmentConfig,
    st: &PushState,
    feature_in_sensor: &Pose,
    world_sensor: &Pose,
    world_target: &Pose,
    dt: f64,
) -> Result<(PushOutput, PushState)> {
    let (mut servo, servo_st) = servo_control(servo_cfg, servo_pid, &st.servo, feature_in_sensor, dt)?;
    let (bearing, distance) = target_geometry(&servo.error_pose, world_sensor, world_target);
    let bearing_error = align.reference_bearing_deg - bearing;
    let ([a], align_st) = pid_update(&align.pid, &st.align, &[bearing_error], dt)?;
    let alignment = if distance < align.cutoff_mm { 0.0 } else { a };
    let lateral = Twist::from_array([0.0, alignment, 0.0, 0.0, 0.0, 0.0]);
    servo.u += adjoint(&servo.error_pose) * lateral;
    Ok((
        PushOutput {
            servo,
            bearing_deg: bearing,
            distance_mm: distance,
            alignment_mm_s: alignment,
            done: distance < align.done_radius_mm,
        },
        PushState {
            servo: servo_st,
            align: align_st,
        },
    ))
}
