//! Deterministic kinematic contact simulation.
//!
//! The sensor tip is a sphere of radius [`TIP_RADIUS_MM`] centred on the sensor
//! frame origin, with the sensor z axis pointing out through the tip. Arms are
//! velocity-integrating kinematic chains. A surface contact is described in a
//! feature frame whose z axis is the inward normal and whose tangential origin
//! and heading are fixed at contact onset (the shear anchor), so that
//! tangential slip and twist since onset read as `(x, y, gamma)` shear.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{from_mm_deg, push_control, servo_control, to_mm_deg, PidState, PushState, TIP_RADIUS_MM};
use crate::error::{Error, Result};
use crate::filter::{filter_init_at, filter_step, DynamicsNoise, FilterState, DEFAULT_SIGMA_PHI};
use crate::params::ControllerParams;
use crate::se3::{exp_map, log_map, Pose, Twist};
use crate::sensing::{pose_to_contact, surrogate_observe, ContactPose, SurrogateNoiseProfile, GAMMA_MAX_DEG, SHEAR_RADIUS_MM};
use crate::uncertainty::belief_from_tangent;

pub const DEFAULT_DT: f64 = 1.0 / 30.0;
pub const DEFAULT_STEP_BUDGET: usize = 10_000;
/// Arms beyond this distance from the world origin along any axis abort the run (mm).
pub const WORKSPACE_HALF_EXTENT_MM: f64 = 1000.0;
/// Approach speed along the sensor axis before the first contact (mm/s).
pub const SEEK_SPEED_MM_S: f64 = 5.0;
/// Post-transient statistics ignore the first seconds of each segment.
pub const TRANSIENT_S: f64 = 5.0;

// ---------------------------------------------------------------- surfaces

/// Nearest surface point to a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub point: Vector3<f64>,
    /// Unit outward normal at `point`.
    pub normal: Vector3<f64>,
    /// Signed distance of the query along `normal`; negative inside.
    pub distance: f64,
}

/// Height profile `z = h(y)` extruded along x: a plateau for `y < 0`, a
/// half-cosine descent over half a wavelength, then flat ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampProfile {
    pub amplitude_mm: f64,
    pub wavelength_mm: f64,
}

impl Default for RampProfile {
    fn default() -> Self {
        Self {
            amplitude_mm: 20.0,
            wavelength_mm: 300.0,
        }
    }
}

impl RampProfile {
    fn k(&self) -> f64 {
        2.0 * PI / self.wavelength_mm
    }

    pub fn height(&self, y: f64) -> f64 {
        if y <= 0.0 {
            self.amplitude_mm
        } else if y >= self.wavelength_mm / 2.0 {
            0.0
        } else {
            0.5 * self.amplitude_mm * (1.0 + (self.k() * y).cos())
        }
    }

    pub fn slope(&self, y: f64) -> f64 {
        if y <= 0.0 || y >= self.wavelength_mm / 2.0 {
            0.0
        } else {
            -0.5 * self.amplitude_mm * self.k() * (self.k() * y).sin()
        }
    }

    fn curvature(&self, y: f64) -> f64 {
        if y <= 0.0 || y >= self.wavelength_mm / 2.0 {
            0.0
        } else {
            -0.5 * self.amplitude_mm * self.k() * self.k() * (self.k() * y).cos()
        }
    }

    /// Nearest profile point by Newton iteration on the squared distance.
    pub fn nearest(&self, c: &Vector3<f64>) -> SurfacePoint {
        let mut y = c.y;
        for _ in 0..50 {
            let (h, dh, ddh) = (self.height(y), self.slope(y), self.curvature(y));
            let g = (y - c.y) + (h - c.z) * dh;
            let gp = 1.0 + dh * dh + (h - c.z) * ddh;
            let step = g / gp.max(1e-3);
            y -= step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        let point = Vector3::new(c.x, y, self.height(y));
        let normal = Vector3::new(0.0, -self.slope(y), 1.0).normalize();
        SurfacePoint {
            point,
            normal,
            distance: (c - point).dot(&normal),
        }
    }
}

/// Object footprint in its body plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    /// Convex polygon, vertices counter-clockwise about the centroid (mm).
    Polygon(Vec<[f64; 2]>),
    Circle { radius: f64 },
}

fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl Footprint {
    pub fn regular_polygon(sides: usize, circumradius: f64, first_vertex_deg: f64) -> Self {
        let verts = (0..sides)
            .map(|i| {
                let a = (first_vertex_deg + 360.0 * i as f64 / sides as f64).to_radians();
                [circumradius * a.cos(), circumradius * a.sin()]
            })
            .collect();
        Footprint::Polygon(verts)
    }

    /// Largest distance from the centroid to the boundary.
    pub fn radius(&self) -> f64 {
        match self {
            Footprint::Circle { radius } => *radius,
            Footprint::Polygon(v) => v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max),
        }
    }

    /// Distance from the centroid to the boundary along `-u`, where pushes start.
    pub fn back_extent(&self) -> f64 {
        self.nearest(&Vector2::new(-1e3, 0.0)).0.x.abs()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Footprint::Circle { radius } if *radius > 0.0 => Ok(()),
            Footprint::Polygon(v) if v.len() >= 3 => {
                for i in 0..v.len() {
                    let a = Vector2::from(v[i]);
                    let b = Vector2::from(v[(i + 1) % v.len()]);
                    let c = Vector2::from(v[(i + 2) % v.len()]);
                    if cross2(&(b - a), &(c - b)) <= 0.0 {
                        return Err(Error::InvalidArgument("polygon footprint must be convex and counter-clockwise".into()));
                    }
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument("degenerate footprint".into())),
        }
    }

    /// Nearest boundary point, unit outward normal and signed distance of `q`.
    pub fn nearest(&self, q: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>, f64) {
        match self {
            Footprint::Circle { radius } => {
                let r = q.norm();
                let n = if r > 1e-12 { q / r } else { Vector2::new(-1.0, 0.0) };
                (n * *radius, n, r - radius)
            }
            Footprint::Polygon(v) => {
                let mut best = (Vector2::zeros(), Vector2::zeros(), f64::INFINITY);
                let mut inside = true;
                for i in 0..v.len() {
                    let a = Vector2::from(v[i]);
                    let d = Vector2::from(v[(i + 1) % v.len()]) - a;
                    if cross2(&d, &(q - a)) < 0.0 {
                        inside = false;
                    }
                    let t = ((q - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                    let p = a + d * t;
                    let dist = (q - p).norm();
                    if dist < best.2 {
                        best = (p, Vector2::new(d.y, -d.x).normalize(), dist);
                    }
                }
                let (p, edge_normal, dist) = best;
                if inside {
                    (p, edge_normal, -dist)
                } else {
                    let n = if dist > 1e-9 { (q - p) / dist } else { edge_normal };
                    (p, n, dist)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    BlueSquare,
    BlueCircle,
    RedSquare,
    YellowHexagon,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::BlueSquare, Shape::BlueCircle, Shape::RedSquare, Shape::YellowHexagon];

    /// Footprints with a flat face towards `-u` wherever the shape has one.
    pub fn footprint(self) -> Footprint {
        let square = |side: f64| Footprint::regular_polygon(4, side / 2.0 * 2f64.sqrt(), 45.0);
        match self {
            Shape::BlueSquare => square(80.0),
            Shape::BlueCircle => Footprint::Circle { radius: 40.0 },
            Shape::RedSquare => square(60.0),
            Shape::YellowHexagon => Footprint::regular_polygon(6, 40.0, 30.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightClass {
    #[default]
    Short,
    Tall,
}

/// Planar object on a table whose plane is the world yz-plane (normal +x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    /// Centroid `(y, z)` on the table (mm).
    pub position: [f64; 2],
    pub heading_deg: f64,
    pub footprint: Footprint,
    pub height_class: HeightClass,
}

impl ObjectState {
    pub fn new(position: [f64; 2], footprint: Footprint, height_class: HeightClass) -> Result<Self> {
        footprint.validate()?;
        Ok(Self {
            position,
            heading_deg: 0.0,
            footprint,
            height_class,
        })
    }

    fn rot2(&self) -> nalgebra::Rotation2<f64> {
        nalgebra::Rotation2::new(self.heading_deg.to_radians())
    }

    /// Body frame: x along the table normal, footprint `(u, v)` on world `(y, z)`.
    pub fn body_pose(&self) -> Pose {
        Pose::new(
            Rotation3::from_axis_angle(&Vector3::x_axis(), self.heading_deg.to_radians()).into_inner(),
            Vector3::new(0.0, self.position[0], self.position[1]),
        )
    }

    /// Nearest boundary point, outward normal and signed distance in world `(y, z)`.
    pub fn nearest_2d(&self, q: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>, f64) {
        let r = self.rot2();
        let c = Vector2::from(self.position);
        let (p, n, d) = self.footprint.nearest(&(r.inverse() * (q - c)));
        (c + r * p, r * n, d)
    }

    /// The object extends indefinitely along the table normal.
    pub fn nearest(&self, c: &Vector3<f64>) -> SurfacePoint {
        let (p, n, d) = self.nearest_2d(&Vector2::new(c.y, c.z));
        SurfacePoint {
            point: Vector3::new(c.x, p.x, p.y),
            normal: Vector3::new(0.0, n.x, n.y),
            distance: d,
        }
    }
}

/// Parameters of the quasi-static push law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushModel {
    /// Rotation per mm of advance at a moment arm equal to the footprint radius (rad/mm).
    pub kappa: f64,
    /// Tip penetration the object sustains before it starts to slide (mm).
    pub push_depth_mm: f64,
    /// Sideways sensor motion drags the contact up to this fraction of the normal advance.
    pub friction_coefficient: f64,
}

impl Default for PushModel {
    fn default() -> Self {
        Self {
            kappa: 0.02,
            push_depth_mm: 3.0,
            friction_coefficient: 0.5,
        }
    }
}

/// Contact points further than this from the footprint boundary are rejected (mm).
pub const BOUNDARY_TOLERANCE_MM: f64 = 1e-6;

/// Translates the object by `advance` along `push_direction` and turns it by
/// `kappa * (arm / radius) * advance`, where `arm` is the signed moment arm
/// `(contact - centroid) x push_direction`.
pub fn step_pushed_object(
    o: &ObjectState,
    contact_point: &Vector2<f64>,
    push_direction: &Vector2<f64>,
    advance: f64,
    kappa: f64,
) -> Result<ObjectState> {
    let (_, _, d) = o.nearest_2d(contact_point);
    if d.abs() > BOUNDARY_TOLERANCE_MM {
        return Err(Error::ContactOffBoundary { distance: d.abs() });
    }
    let dir = push_direction.normalize();
    let c = Vector2::from(o.position);
    let arm = cross2(&(contact_point - c), &dir);
    let dtheta = kappa * (arm / o.footprint.radius()) * advance;
    let p = c + dir * advance;
    Ok(ObjectState {
        position: [p.x, p.y],
        heading_deg: o.heading_deg + dtheta.to_degrees(),
        ..o.clone()
    })
}

/// Contact point, direction and length of the object motion caused by a
/// sensor tip moving from `before` to `after` (world `(y, z)`), or `None` when
/// the tip does not press beyond the push depth.
///
/// The normal part is the penetration beyond the push depth. The tangential
/// part is the sideways tip motion, limited by Coulomb friction to
/// `friction_coefficient` times the normal part; any excess slides.
pub fn push_increment(
    o: &ObjectState,
    before: &Vector2<f64>,
    after: &Vector2<f64>,
    model: &PushModel,
) -> Option<(Vector2<f64>, Vector2<f64>, f64)> {
    let (point, normal, dist) = o.nearest_2d(after);
    let normal_advance = TIP_RADIUS_MM - dist - model.push_depth_mm;
    if normal_advance <= 0.0 {
        return None;
    }
    let tangent = Vector2::new(-normal.y, normal.x);
    let limit = model.friction_coefficient * normal_advance;
    let drag = (after - before).dot(&tangent).clamp(-limit, limit);
    let motion = -normal * normal_advance + tangent * drag;
    let advance = motion.norm();
    Some((point, motion / advance, advance))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    /// Plane `z = 0` of `pose`, outward normal along its z axis.
    Flat { pose: Pose },
    Ramp(RampProfile),
    Hemisphere { center: Vector3<f64>, radius: f64 },
    Object(ObjectState),
}

impl Surface {
    pub fn nearest(&self, c: &Vector3<f64>) -> SurfacePoint {
        match self {
            Surface::Flat { pose } => {
                let n = pose.rotation().column(2).into_owned();
                let d = (c - pose.translation()).dot(&n);
                SurfacePoint {
                    point: c - n * d,
                    normal: n,
                    distance: d,
                }
            }
            Surface::Ramp(r) => r.nearest(c),
            Surface::Hemisphere { center, radius } => {
                let v = c - center;
                let r = v.norm();
                let n = if r > 1e-12 { v / r } else { Vector3::z() };
                SurfacePoint {
                    point: center + n * *radius,
                    normal: n,
                    distance: r - radius,
                }
            }
            Surface::Object(o) => o.nearest(c),
        }
    }

    /// Frame that carries the surface, and with it the shear anchor.
    pub fn body_pose(&self) -> Pose {
        match self {
            Surface::Flat { pose } => *pose,
            Surface::Object(o) => o.body_pose(),
            _ => Pose::identity(),
        }
    }
}

// ---------------------------------------------------------------- arm and contact

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmState {
    pub end_effector: Pose,
    /// Last commanded twist in the end-effector frame (mm/s, rad/s).
    pub commanded_twist: Twist,
}

impl ArmState {
    pub fn at(pose: Pose) -> Self {
        Self {
            end_effector: pose,
            commanded_twist: Twist::zero(),
        }
    }
}

/// `X <- X exp(u dt)` with `u` a body twist in (mm/s, rad/s).
pub fn integrate_arm(a: &ArmState, u: &Twist, dt: f64) -> Result<ArmState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(ArmState {
        end_effector: (a.end_effector * exp_map(&u.scaled(dt))).renormalized_if_drifted(),
        commanded_twist: *u,
    })
}

/// Tangential origin and heading of the feature frame, stored in the surface body frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShearState {
    anchor: Option<(Vector3<f64>, Vector3<f64>)>,
}

impl ShearState {
    pub fn in_contact(&self) -> bool {
        self.anchor.is_some()
    }
}

fn tangent_part(v: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    v - n * v.dot(n)
}

fn any_perpendicular(n: &Vector3<f64>) -> Vector3<f64> {
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    tangent_part(&seed, n).normalize()
}

fn feature_frame(sp: &SurfacePoint, anchor_point: &Vector3<f64>, x_dir: &Vector3<f64>) -> Pose {
    let n_in = -sp.normal;
    let origin = anchor_point - n_in * (anchor_point - sp.point).dot(&n_in) + sp.normal * TIP_RADIUS_MM;
    let x = tangent_part(x_dir, &n_in);
    let x = if x.norm() > 1e-9 { x.normalize() } else { any_perpendicular(&n_in) };
    let y = n_in.cross(&x);
    Pose::new(Matrix3::from_columns(&[x, y, n_in]), origin)
}

/// World pose of the feature frame touched by `sensor`, or `None` without contact.
///
/// Shear beyond the sensing envelope slides the anchor so that the reported
/// shear saturates at [`SHEAR_RADIUS_MM`] and [`GAMMA_MAX_DEG`]. Losing contact
/// clears the anchor.
pub fn contact_frame(surface: &Surface, sensor: &Pose, shear: &mut ShearState) -> Option<Pose> {
    let sp = surface.nearest(sensor.translation());
    if TIP_RADIUS_MM - sp.distance <= 0.0 {
        shear.anchor = None;
        return None;
    }
    let body = surface.body_pose();
    let body_inv = body.inverse();
    let (anchor_body, x_body) = *shear.anchor.get_or_insert_with(|| {
        let n_in = -sp.normal;
        let sx = tangent_part(&sensor.rotation().column(0).into_owned(), &n_in);
        let sx = if sx.norm() > 1e-9 { sx.normalize() } else { any_perpendicular(&n_in) };
        (body_inv.transform_point(&sp.point), body_inv.rotation() * sx)
    });
    let mut anchor = body.transform_point(&anchor_body);
    let mut x_dir = body.rotation() * x_body;
    let mut frame = feature_frame(&sp, &anchor, &x_dir);

    let c = pose_to_contact(&(frame.inverse() * *sensor));
    if c.gamma.abs() > GAMMA_MAX_DEG {
        let excess = (c.gamma - GAMMA_MAX_DEG.copysign(c.gamma)).to_radians();
        let axis = Unit::new_normalize(-sp.normal);
        x_dir = Rotation3::from_axis_angle(&axis, excess) * tangent_part(&x_dir, &axis);
        frame = feature_frame(&sp, &anchor, &x_dir);
    }
    let c = pose_to_contact(&(frame.inverse() * *sensor));
    let r = c.shear_radius();
    if r > SHEAR_RADIUS_MM {
        let slip = frame.rotation() * Vector3::new(c.x, c.y, 0.0);
        anchor = frame.translation() - sp.normal * TIP_RADIUS_MM + slip * (1.0 - SHEAR_RADIUS_MM / r);
        frame = feature_frame(&sp, &anchor, &x_dir);
    }
    shear.anchor = Some((body_inv.transform_point(&anchor), body_inv.rotation() * x_dir));
    Some(frame)
}

/// True contact pose of `sensor` against `surface`, or `None` when the tip does not penetrate.
pub fn true_contact(surface: &Surface, sensor: &Pose, shear: &mut ShearState) -> Option<ContactPose> {
    contact_frame(surface, sensor, shear).map(|f| pose_to_contact(&(f.inverse() * *sensor)))
}

// ---------------------------------------------------------------- tasks

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Track,
    FollowRamp,
    FollowHemisphere,
    PushSingle,
    PushDual,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Track => "track",
            Task::FollowRamp => "follow_ramp",
            Task::FollowHemisphere => "follow_hemisphere",
            Task::PushSingle => "push_single",
            Task::PushDual => "push_dual",
        }
    }

    pub fn default_controller(self) -> ControllerParams {
        match self {
            Task::Track => ControllerParams::tracking(),
            Task::FollowRamp | Task::FollowHemisphere => ControllerParams::surface_following(),
            Task::PushSingle | Task::PushDual => ControllerParams::pushing(),
        }
    }
}

/// Leader motion for the tracking task: `v_j(t) = (2 pi b_j / T) cos(2 pi t / T + phi_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderTrajectory {
    /// Amplitudes (mm, deg).
    pub amplitude: [f64; 6],
    pub phase_rad: [f64; 6],
    pub period_s: f64,
    pub periods: f64,
}

impl Default for LeaderTrajectory {
    fn default() -> Self {
        Self {
            amplitude: [75.0, 75.0, 75.0, 25.0, 25.0, 25.0],
            phase_rad: [PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            period_s: 30.0,
            periods: 3.0,
        }
    }
}

impl LeaderTrajectory {
    /// Body-frame velocity at time `t` (mm/s, deg/s).
    pub fn velocity(&self, t: f64) -> [f64; 6] {
        let w = 2.0 * PI / self.period_s;
        std::array::from_fn(|j| w * self.amplitude[j] * (w * t + self.phase_rad[j]).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HemisphereTask {
    pub radius_mm: f64,
    pub paths: usize,
    /// Each path stops once the contact is this far from the apex (deg).
    pub max_polar_deg: f64,
}

impl Default for HemisphereTask {
    fn default() -> Self {
        Self {
            radius_mm: 100.0,
            paths: 8,
            max_polar_deg: 60.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampTask {
    pub profile: RampProfile,
    pub start_y_mm: f64,
    pub end_y_mm: f64,
}

impl Default for RampTask {
    fn default() -> Self {
        Self {
            profile: RampProfile::default(),
            start_y_mm: -30.0,
            end_y_mm: 300.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushTask {
    pub shape: Shape,
    pub height_class: HeightClass,
    /// Initial sensor position `(y, z)` on the table (mm).
    pub start_mm: [f64; 2],
    pub target_mm: [f64; 2],
    /// Sensor height above the table (mm).
    pub sensor_height_mm: f64,
    pub model: PushModel,
}

impl Default for PushTask {
    fn default() -> Self {
        Self {
            shape: Shape::BlueSquare,
            height_class: HeightClass::Short,
            start_mm: [-250.0, 100.0],
            target_mm: [0.0, 375.0],
            sensor_height_mm: 45.0,
            model: PushModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub task: Task,
    pub controller: ControllerParams,
    pub noise: SurrogateNoiseProfile,
    /// Filter dynamics noise stdev (mm, deg).
    pub sigma_phi: f64,
    pub dt: f64,
    pub step_budget: usize,
    pub tracking: LeaderTrajectory,
    pub ramp: RampTask,
    pub hemisphere: HemisphereTask,
    pub push: PushTask,
}

impl SimConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            controller: task.default_controller(),
            noise: SurrogateNoiseProfile::default(),
            sigma_phi: DEFAULT_SIGMA_PHI,
            dt: DEFAULT_DT,
            step_budget: DEFAULT_STEP_BUDGET,
            tracking: LeaderTrajectory::default(),
            ramp: RampTask::default(),
            hemisphere: HemisphereTask::default(),
            push: PushTask::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_phi > 0.0 && self.sigma_phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_phi must be positive, got {}", self.sigma_phi)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.step_budget == 0 {
            return Err(Error::InvalidArgument("dt and step budget must be positive".into()));
        }
        self.noise.validate()?;
        self.controller.validate()?;
        if matches!(self.task, Task::PushSingle | Task::PushDual) && self.controller.alignment.is_none() {
            return Err(Error::InvalidArgument("pushing needs an [alignment] section".into()));
        }
        if self.task == Task::PushDual && self.controller.stabiliser.is_none() {
            return Err(Error::InvalidArgument("dual-arm pushing needs a [stabiliser] section".into()));
        }
        if !(self.tracking.period_s > 0.0 && self.tracking.periods > 0.0) {
            return Err(Error::InvalidArgument("tracking period and count must be positive".into()));
        }
        if !(self.push.model.kappa >= 0.0 && self.push.model.push_depth_mm > 0.0 && self.push.model.push_depth_mm < TIP_RADIUS_MM) {
            return Err(Error::InvalidArgument("push model needs kappa >= 0 and 0 < push depth < tip radius".into()));
        }
        if !(self.hemisphere.radius_mm > TIP_RADIUS_MM && self.hemisphere.paths > 0 && self.hemisphere.max_polar_deg > 0.0) {
            return Err(Error::InvalidArgument("hemisphere needs radius above the tip radius and at least one path".into()));
        }
        if !(self.ramp.end_y_mm > self.ramp.start_y_mm) {
            return Err(Error::InvalidArgument("ramp traverse must end beyond its start".into()));
        }
        self.push.shape.footprint().validate()
    }
}

// ---------------------------------------------------------------- logging

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Trajectory or traverse finished.
    Completed,
    TargetReached,
    StepBudgetExhausted,
    LeftWorkspace,
    Failed(String),
}

impl Termination {
    pub fn is_abort(&self) -> bool {
        !matches!(self, Termination::Completed | Termination::TargetReached)
    }
}

/// One control cycle. Rotations are in degrees throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub segment: usize,
    pub t: f64,
    /// Servoing arm pose, xyz (mm) and extrinsic-xyz Euler (deg).
    pub arm: [f64; 6],
    /// Leader in tracking, stabilising follower in dual-arm pushing.
    pub partner: Option<[f64; 6]>,
    pub true_contact: Option<[f64; 6]>,
    /// Observed exponential coordinates (mm, deg).
    pub observed_mu: Option<[f64; 6]>,
    pub filtered_mu: Option<[f64; 6]>,
    /// Filtered covariance diagonal (mm², deg²).
    pub filtered_cov_diag: Option<[f64; 6]>,
    /// Control twist (mm/s, deg/s).
    pub control: [f64; 6],
    pub bearing_deg: Option<f64>,
    pub distance_mm: Option<f64>,
    /// Signed distance of the tip centre from the contacted surface (mm).
    pub separation_mm: Option<f64>,
    /// Object centroid `(y, z)` (mm) and heading (deg).
    pub object: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub task: Task,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
}

const POSE_COLS: [&str; 6] = ["x_mm", "y_mm", "z_mm", "rx_deg", "ry_deg", "rz_deg"];
const CONTACT_COLS: [&str; 6] = ["x_mm", "y_mm", "z_mm", "alpha_deg", "beta_deg", "gamma_deg"];
const TWIST_COLS: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];

pub fn trajectory_header() -> Vec<String> {
    let mut h: Vec<String> = ["step", "segment", "t_s"].iter().map(|s| s.to_string()).collect();
    let block = |prefix: &str, cols: &[&str]| cols.iter().map(|c| format!("{prefix}_{c}")).collect::<Vec<_>>();
    h.extend(block("arm", &POSE_COLS));
    h.extend(block("partner", &POSE_COLS));
    h.extend(block("true", &CONTACT_COLS));
    h.extend(block("obs_mu", &POSE_COLS));
    h.extend(block("fil_mu", &POSE_COLS));
    h.extend(["x_mm2", "y_mm2", "z_mm2", "rx_deg2", "ry_deg2", "rz_deg2"].iter().map(|c| format!("fil_cov_{c}")));
    h.extend(TWIST_COLS[..3].iter().map(|c| format!("u_{c}_mm_s")));
    h.extend(TWIST_COLS[3..].iter().map(|c| format!("u_{c}_deg_s")));
    h.extend(["bearing_deg", "distance_mm", "separation_mm", "object_y_mm", "object_z_mm", "object_heading_deg"].map(String::from));
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn push_opt<const N: usize>(row: &mut Vec<String>, v: &Option<[f64; N]>) {
    match v {
        Some(a) => row.extend(a.iter().map(|x| fmt(*x))),
        None => row.extend(std::iter::repeat_n(String::new(), N)),
    }
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(trajectory_header())?;
        for r in &self.records {
            let mut row = vec![r.step.to_string(), r.segment.to_string(), fmt(r.t)];
            row.extend(r.arm.iter().map(|x| fmt(*x)));
            push_opt(&mut row, &r.partner);
            push_opt(&mut row, &r.true_contact);
            push_opt(&mut row, &r.observed_mu);
            push_opt(&mut row, &r.filtered_mu);
            push_opt(&mut row, &r.filtered_cov_diag);
            row.extend(r.control.iter().map(|x| fmt(*x)));
            push_opt(&mut row, &r.bearing_deg.map(|x| [x]));
            push_opt(&mut row, &r.distance_mm.map(|x| [x]));
            push_opt(&mut row, &r.separation_mm.map(|x| [x]));
            push_opt(&mut row, &r.object);
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Post-transient means of contact depth and tilt over steps in contact.
    pub fn steady_state_contact(&self, transient_s: f64) -> Option<(f64, f64)> {
        let mut seg_start = BTreeMap::new();
        for r in &self.records {
            seg_start.entry(r.segment).or_insert(r.t);
        }
        let (mut n, mut depth, mut tilt) = (0usize, 0.0, 0.0);
        for r in &self.records {
            if r.t - seg_start[&r.segment] < transient_s {
                continue;
            }
            if let Some(c) = r.true_contact {
                let c = ContactPose::from_array(c);
                n += 1;
                depth += c.z;
                tilt += c.tilt_deg();
            }
        }
        (n > 0).then(|| (depth / n as f64, tilt / n as f64))
    }

    /// Summary values for the run metadata.
    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("steps".to_string(), self.records.len() as f64);
        if let Some(last) = self.records.last() {
            m.insert("sim_time_s".into(), last.t);
            if let Some(d) = last.distance_mm {
                m.insert("final_distance_mm".into(), d);
            }
            if let Some(o) = last.object {
                m.insert("object_y_mm".into(), o[0]);
                m.insert("object_z_mm".into(), o[1]);
                m.insert("object_heading_deg".into(), o[2]);
            }
        }
        if let Some((d, t)) = self.steady_state_contact(TRANSIENT_S) {
            m.insert("mean_depth_mm".into(), d);
            m.insert("mean_tilt_deg".into(), t);
        }
        let contact = self.records.iter().filter(|r| r.true_contact.is_some()).count();
        m.insert("contact_fraction".into(), contact as f64 / self.records.len().max(1) as f64);
        m
    }
}

/// JSON sidecar written next to each trajectory CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata<'a> {
    pub task: Task,
    pub seed: u64,
    pub termination: &'a Termination,
    pub aborted: bool,
    pub summary: BTreeMap<String, f64>,
    pub config: &'a SimConfig,
}

impl TrajectoryLog {
    pub fn metadata<'a>(&'a self, cfg: &'a SimConfig) -> RunMetadata<'a> {
        RunMetadata {
            task: self.task,
            seed: self.seed,
            termination: &self.termination,
            aborted: self.termination.is_abort(),
            summary: self.summary(),
            config: cfg,
        }
    }
}

// ---------------------------------------------------------------- closed loop

/// Pose as xyz (mm) and extrinsic-xyz Euler angles (deg).
fn pose_row(p: &Pose) -> [f64; 6] {
    p.to_euler_xyz_deg()
}

/// One servoing arm: contact state, estimator and its last readings.
struct SensorArm {
    arm: ArmState,
    shear: ShearState,
    filter: Option<FilterState>,
    contact: Option<ContactPose>,
    separation: f64,
    observed: Option<Twist>,
}

impl SensorArm {
    fn new(pose: Pose) -> Self {
        Self {
            arm: ArmState::at(pose),
            shear: ShearState::default(),
            filter: None,
            contact: None,
            separation: f64::INFINITY,
            observed: None,
        }
    }

    /// Contact, observation and filter update at the current pose.
    fn sense(&mut self, surface: &Surface, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<()> {
        let pose = self.arm.end_effector;
        self.separation = surface.nearest(pose.translation()).distance;
        self.contact = true_contact(surface, &pose, &mut self.shear);
        let obs = self.contact.map(|c| surrogate_observe(&c, &cfg.noise, rng));
        self.observed = obs.map(|o| o.mu);
        let belief = obs.map(|o| belief_from_tangent(&o));
        let noise = DynamicsNoise::from_mm_deg(cfg.sigma_phi);
        self.filter = match (&self.filter, belief) {
            (Some(s), b) => Some(filter_step(s, b.as_ref(), &pose, &noise)?),
            (None, Some(b)) => Some(filter_init_at(b, pose)),
            (None, None) => None,
        };
        Ok(())
    }

    fn estimate(&self) -> Option<Pose> {
        self.filter.as_ref().map(|s| s.filtered.mean)
    }

    fn seek() -> Twist {
        Twist::from_array([0.0, 0.0, SEEK_SPEED_MM_S, 0.0, 0.0, 0.0])
    }

    fn record(&self, step: usize, segment: usize, t: f64, u: &Twist) -> Result<StepRecord> {
        let (fil_mu, cov) = match &self.filter {
            Some(s) => {
                let mu = to_mm_deg(&log_map(&s.filtered.mean)?);
                let d = s.filtered.cov.diagonal();
                let cov = std::array::from_fn(|i| if i < 3 { d[i] } else { d[i] * (180.0 / PI).powi(2) });
                (Some(mu), Some(cov))
            }
            None => (None, None),
        };
        Ok(StepRecord {
            step,
            segment,
            t,
            arm: pose_row(&self.arm.end_effector),
            partner: None,
            true_contact: self.contact.map(|c| c.to_array()),
            observed_mu: self.observed.map(|m| to_mm_deg(&m)),
            filtered_mu: fil_mu,
            filtered_cov_diag: cov,
            control: to_mm_deg(u),
            bearing_deg: None,
            distance_mm: None,
            separation_mm: self.separation.is_finite().then_some(self.separation),
            object: None,
        })
    }
}

fn in_workspace(p: &Pose) -> bool {
    p.translation().iter().all(|v| v.abs() <= WORKSPACE_HALF_EXTENT_MM)
}

/// Sensor pointing down (-z world) with its y axis along +y world.
fn downward(position: Vector3<f64>) -> Pose {
    Pose::new(Matrix3::from_columns(&[-Vector3::x(), Vector3::y(), -Vector3::z()]), position)
}

struct Run<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    records: Vec<StepRecord>,
    step: usize,
}

impl Run<'_> {
    fn t(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    fn budget_left(&self) -> bool {
        self.step < self.cfg.step_budget
    }
}

/// Executes one task in closed loop. Identical `(cfg, seed)` give identical logs.
pub fn run_task(cfg: &SimConfig, seed: u64) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        records: Vec::new(),
        step: 0,
    };
    let outcome = match cfg.task {
        Task::Track => run_track(&mut run),
        Task::FollowRamp => run_ramp(&mut run),
        Task::FollowHemisphere => run_hemisphere(&mut run),
        Task::PushSingle => run_push(&mut run, false),
        Task::PushDual => run_push(&mut run, true),
    };
    let termination = outcome.unwrap_or_else(|e| Termination::Failed(e.to_string()));
    Ok(TrajectoryLog {
        task: cfg.task,
        seed,
        records: run.records,
        termination,
    })
}

fn run_track(run: &mut Run) -> Result<Termination> {
    let cfg = run.cfg;
    let table = &cfg.controller.servo;
    let (servo, pid) = (table.servo(false), table.pid()?);
    let standoff = TIP_RADIUS_MM - table.reference_pose_mm_deg[2];
    let mut leader = ArmState::at(Pose::identity());
    let facing = Pose::new(
        Rotation3::from_axis_angle(&Vector3::x_axis(), PI).into_inner(),
        Vector3::new(0.0, 0.0, standoff),
    );
    let mut follower = SensorArm::new(leader.end_effector * facing);
    let mut st = PidState::default();
    let duration = cfg.tracking.period_s * cfg.tracking.periods;
    while run.t() < duration - 1e-9 {
        if !run.budget_left() {
            return Ok(Termination::StepBudgetExhausted);
        }
        let surface = Surface::Flat { pose: leader.end_effector };
        follower.sense(&surface, cfg, &mut run.rng)?;
        let u = match follower.estimate() {
            Some(x_sf) => {
                let (out, next) = servo_control(&servo, &pid, &st, &x_sf, cfg.dt)?;
                st = next;
                out.u
            }
            None => SensorArm::seek(),
        };
        let mut rec = follower.record(run.step, 0, run.t(), &u)?;
        rec.partner = Some(pose_row(&leader.end_effector));
        run.records.push(rec);
        let v = from_mm_deg(&cfg.tracking.velocity(run.t()));
        follower.arm = integrate_arm(&follower.arm, &u, cfg.dt)?;
        leader = integrate_arm(&leader, &v, cfg.dt)?;
        run.step += 1;
        if !in_workspace(&follower.arm.end_effector) || !in_workspace(&leader.end_effector) {
            return Ok(Termination::LeftWorkspace);
        }
    }
    Ok(Termination::Completed)
}

/// Runs a surface-following segment from `start` until `stop` holds.
fn follow_segment(
    run: &mut Run,
    surface: &Surface,
    start: Pose,
    feedforward: [f64; 6],
    segment: usize,
    stop: impl Fn(&Pose) -> bool,
) -> Result<Option<Termination>> {
    let cfg = run.cfg;
    let table = &cfg.controller.servo;
    let mut servo = table.servo(false);
    servo.feedforward = feedforward;
    let pid = table.pid()?;
    let mut arm = SensorArm::new(start);
    let mut st = PidState::default();
    while !stop(&arm.arm.end_effector) {
        if !run.budget_left() {
            return Ok(Some(Termination::StepBudgetExhausted));
        }
        arm.sense(surface, cfg, &mut run.rng)?;
        let u = match arm.estimate() {
            Some(x_sf) => {
                let (out, next) = servo_control(&servo, &pid, &st, &x_sf, cfg.dt)?;
                st = next;
                out.u
            }
            None => SensorArm::seek(),
        };
        run.records.push(arm.record(run.step, segment, run.t(), &u)?);
        arm.arm = integrate_arm(&arm.arm, &u, cfg.dt)?;
        run.step += 1;
        if !in_workspace(&arm.arm.end_effector) {
            return Ok(Some(Termination::LeftWorkspace));
        }
    }
    Ok(None)
}

fn run_ramp(run: &mut Run) -> Result<Termination> {
    let cfg = run.cfg;
    let ramp = cfg.ramp;
    let depth = cfg.controller.servo.reference_pose_mm_deg[2];
    let y0 = ramp.start_y_mm;
    let start = downward(Vector3::new(0.0, y0, ramp.profile.height(y0) + TIP_RADIUS_MM - depth));
    let ff = cfg.controller.servo.feedforward_mm_s_deg_s;
    let end = ramp.end_y_mm;
    let surface = Surface::Ramp(ramp.profile);
    Ok(follow_segment(run, &surface, start, ff, 0, |p| p.translation().y >= end)?.unwrap_or(Termination::Completed))
}

fn run_hemisphere(run: &mut Run) -> Result<Termination> {
    let cfg = run.cfg;
    let h = cfg.hemisphere;
    let depth = cfg.controller.servo.reference_pose_mm_deg[2];
    let surface = Surface::Hemisphere {
        center: Vector3::zeros(),
        radius: h.radius_mm,
    };
    let ff = cfg.controller.servo.feedforward_mm_s_deg_s;
    let speed = ff[0].hypot(ff[1]);
    let max_cos = h.max_polar_deg.to_radians().cos();
    for path in 0..h.paths {
        let heading = 2.0 * PI * path as f64 / h.paths as f64;
        let mut path_ff = ff;
        path_ff[0] = speed * heading.cos();
        path_ff[1] = speed * heading.sin();
        let start = downward(Vector3::new(0.0, 0.0, h.radius_mm + TIP_RADIUS_MM - depth));
        let stop = |p: &Pose| {
            let v = p.translation();
            v.z / v.norm() < max_cos
        };
        if let Some(t) = follow_segment(run, &surface, start, path_ff, path, stop)? {
            return Ok(t);
        }
    }
    Ok(Termination::Completed)
}

fn run_push(run: &mut Run, dual: bool) -> Result<Termination> {
    let cfg = run.cfg;
    let p = &cfg.push;
    let tall = p.height_class == HeightClass::Tall;
    let params = &cfg.controller;
    let (leader_servo, leader_pid) = (params.servo.servo(tall), params.servo.pid()?);
    let align = params
        .alignment
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("missing alignment parameters".into()))?
        .config(dual)?;

    let footprint = p.shape.footprint();
    let standoff = TIP_RADIUS_MM - p.model.push_depth_mm;
    let back = footprint.back_extent();
    let front = footprint.nearest(&Vector2::new(1e3, 0.0)).0.x;
    let centroid = [p.start_mm[0] + standoff + back, p.start_mm[1]];
    let mut object = ObjectState::new(centroid, footprint, p.height_class)?;

    // sensor x down the table normal; leader faces +y, follower faces -y
    let h = p.sensor_height_mm;
    let leader_rot = Matrix3::from_columns(&[-Vector3::x(), Vector3::z(), Vector3::y()]);
    let follower_rot = Matrix3::from_columns(&[-Vector3::x(), -Vector3::z(), -Vector3::y()]);
    let mut leader = SensorArm::new(Pose::new(leader_rot, Vector3::new(h, p.start_mm[0], p.start_mm[1])));
    let mut follower = dual.then(|| {
        let y = centroid[0] + front + TIP_RADIUS_MM - params.stabiliser.as_ref().map_or(3.0, |s| s.reference_pose_mm_deg[2]);
        SensorArm::new(Pose::new(follower_rot, Vector3::new(h, y, centroid[1])))
    });
    let stab = match &params.stabiliser {
        Some(s) if dual => Some((s.servo(tall), s.pid()?)),
        _ => None,
    };
    let target = Pose::from_translation(Vector3::new(h, p.target_mm[0], p.target_mm[1]));
    let mut st = PushState::default();
    let mut st_f = PidState::default();

    loop {
        if !run.budget_left() {
            return Ok(Termination::StepBudgetExhausted);
        }
        let surface = Surface::Object(object.clone());
        leader.sense(&surface, cfg, &mut run.rng)?;
        let mut done = false;
        let (u, bearing, distance) = match leader.estimate() {
            Some(x_sf) => {
                let (out, next) = push_control(
                    &leader_servo,
                    &leader_pid,
                    &align,
                    &st,
                    &x_sf,
                    &leader.arm.end_effector,
                    &target,
                    cfg.dt,
                )?;
                st = next;
                done = out.done;
                (out.servo.u, Some(out.bearing_deg), Some(out.distance_mm))
            }
            None => (SensorArm::seek(), None, None),
        };
        let mut u_f = Twist::zero();
        if let (Some(f), Some((servo, pid))) = (follower.as_mut(), stab.as_ref()) {
            f.sense(&surface, cfg, &mut run.rng)?;
            u_f = match f.estimate() {
                Some(x_sf) => {
                    let (out, next) = servo_control(servo, pid, &st_f, &x_sf, cfg.dt)?;
                    st_f = next;
                    out.u
                }
                None => SensorArm::seek(),
            };
        }
        let mut rec = leader.record(run.step, 0, run.t(), &u)?;
        rec.partner = follower.as_ref().map(|f| pose_row(&f.arm.end_effector));
        rec.bearing_deg = bearing;
        rec.distance_mm = distance;
        rec.object = Some([object.position[0], object.position[1], object.heading_deg]);
        run.records.push(rec);
        if done {
            return Ok(Termination::TargetReached);
        }

        let before = leader.arm.end_effector.translation().yz();
        leader.arm = integrate_arm(&leader.arm, &u, cfg.dt)?;
        if let Some(f) = follower.as_mut() {
            f.arm = integrate_arm(&f.arm, &u_f, cfg.dt)?;
        }
        let after = leader.arm.end_effector.translation().yz();
        if let Some((point, dir, advance)) = push_increment(&object, &before, &after, &p.model) {
            object = step_pushed_object(&object, &point, &dir, advance, p.model.kappa)?;
        }
        run.step += 1;
        let arms_ok = in_workspace(&leader.arm.end_effector) && follower.as_ref().is_none_or(|f| in_workspace(&f.arm.end_effector));
        if !arms_ok {
            return Ok(Termination::LeftWorkspace);
        }
    }
}
