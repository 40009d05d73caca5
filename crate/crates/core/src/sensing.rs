//! Contact pose-and-shear geometry, training-range samplers, a stochastic
//! stand-in for the pose-and-shear estimation network, and the loss and
//! activation formulas used to train such networks.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{log_map, Mat6, Pose, Twist};
use crate::uncertainty::TangentGaussian;

/// Translational shear disk radius of the training envelope (mm).
pub const SHEAR_RADIUS_MM: f64 = 5.0;
/// Contact depth range of the training envelope (mm).
pub const DEPTH_RANGE_MM: (f64, f64) = (0.5, 6.0);
/// Half-angle of the contact spherical cap (deg).
pub const CAP_ANGLE_DEG: f64 = 25.0;
/// Rotational shear range is `[-GAMMA_MAX_DEG, GAMMA_MAX_DEG]`.
pub const GAMMA_MAX_DEG: f64 = 5.0;
/// Size of a training set.
pub const DEFAULT_DATASET_SIZE: usize = 6000;

/// Estimator MAE targets per twist component (mm, mm, mm, deg, deg, deg).
pub const TARGET_MAE: [f64; 6] = [0.426, 0.422, 0.123, 0.45, 0.64, 1.16];

/// Surface contact pose `(x, y, z)` in mm and `(alpha, beta, gamma)` in degrees.
///
/// `(z, alpha, beta)` describe the normal contact and `(x, y, gamma)` the
/// tangential shear that follows it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ContactPose {
    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            x,
            y,
            z,
            alpha,
            beta,
            gamma,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn shear_radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Angle between the sensor axis and the surface normal (deg).
    pub fn tilt_deg(&self) -> f64 {
        let r = normal_rotation(self.alpha, self.beta);
        r[(2, 2)].clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Whether the pose lies inside the sampled training envelope.
    pub fn in_envelope(&self) -> bool {
        const EPS: f64 = 1e-9;
        self.shear_radius() <= SHEAR_RADIUS_MM + EPS
            && self.z >= DEPTH_RANGE_MM.0 - EPS
            && self.z <= DEPTH_RANGE_MM.1 + EPS
            && self.tilt_deg() <= CAP_ANGLE_DEG + 1e-7
            && self.gamma.abs() <= GAMMA_MAX_DEG + EPS
    }
}

fn normal_rotation(alpha_deg: f64, beta_deg: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(alpha_deg.to_radians(), beta_deg.to_radians(), 0.0).into_inner()
}

/// Normal contact stage: tilt by `(alpha, beta)` then approach the surface by `z`.
pub fn normal_contact_pose(c: &ContactPose) -> Pose {
    Pose::new(normal_rotation(c.alpha, c.beta), Vector3::new(0.0, 0.0, c.z))
}

/// Shear stage: slide by `(x, y)` in the surface plane while turning `gamma` about the normal.
pub fn shear_pose(c: &ContactPose) -> Pose {
    Pose::new(
        Rotation3::from_axis_angle(&Vector3::z_axis(), c.gamma.to_radians()).into_inner(),
        Vector3::new(c.x, c.y, 0.0),
    )
}

/// Sensor pose in the feature frame, `X_fs = X_par * X_perp`.
pub fn contact_to_pose(c: &ContactPose) -> Pose {
    shear_pose(c) * normal_contact_pose(c)
}

/// Inverse of [`contact_to_pose`] for rotations inside the principal Euler branch.
pub fn pose_to_contact(p: &Pose) -> ContactPose {
    ContactPose::from_array(p.to_euler_xyz_deg())
}

/// Training label: exponential coordinates of the feature pose in the sensor frame.
pub fn pose_to_inverted_tangent(c: &ContactPose) -> Twist {
    log_map(&contact_to_pose(c).inverse()).expect("contact rotations stay far from pi")
}

/// Uniform sample over a disk of radius `r_max` (mm).
pub fn sample_disk<R: Rng + ?Sized>(rng: &mut R, r_max: f64) -> (f64, f64) {
    let r_prime: f64 = rng.random();
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    disk_point(r_max, r_prime, theta)
}

/// Disk sample for given uniform variates; `theta` in radians.
pub fn disk_point(r_max: f64, r_prime: f64, theta: f64) -> (f64, f64) {
    let r = r_max * r_prime.sqrt();
    (r * theta.cos(), r * theta.sin())
}

/// Uniform sample over a spherical cap of half-angle `phi_max` (deg); returns `(alpha, beta)` in deg.
pub fn sample_spherical_cap<R: Rng + ?Sized>(rng: &mut R, phi_max_deg: f64) -> (f64, f64) {
    let phi_prime: f64 = rng.random();
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    cap_point(phi_max_deg, phi_prime, theta)
}

/// Cap sample for given uniform variates; `theta` in radians.
pub fn cap_point(phi_max_deg: f64, phi_prime: f64, theta: f64) -> (f64, f64) {
    let phi = (1.0 - (1.0 - phi_max_deg.to_radians().cos()) * phi_prime).acos();
    let p = phi.sin() * theta.cos();
    let q = phi.sin() * theta.sin();
    let r = phi.cos();
    ((-q.asin()).to_degrees(), (-p.atan2(r)).to_degrees())
}

/// One contact pose drawn from the training envelope.
pub fn sample_contact<R: Rng + ?Sized>(rng: &mut R) -> ContactPose {
    let (x, y) = sample_disk(rng, SHEAR_RADIUS_MM);
    let z = rng.random_range(DEPTH_RANGE_MM.0..=DEPTH_RANGE_MM.1);
    let (alpha, beta) = sample_spherical_cap(rng, CAP_ANGLE_DEG);
    let gamma = rng.random_range(-GAMMA_MAX_DEG..=GAMMA_MAX_DEG);
    ContactPose::new(x, y, z, alpha, beta, gamma)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub contact: ContactPose,
    pub label: Twist,
}

pub fn generate_dataset<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be positive".into()));
    }
    Ok((0..n)
        .map(|_| {
            let contact = sample_contact(rng);
            Sample {
                contact,
                label: pose_to_inverted_tangent(&contact),
            }
        })
        .collect())
}

pub const DATASET_HEADER: [&str; 12] = [
    "x", "y", "z", "alpha", "beta", "gamma", "xi_1", "xi_2", "xi_3", "xi_4", "xi_5", "xi_6",
];

/// Writes a dataset as CSV: one header row, then one row per sample.
///
/// Units: `x,y,z` mm; `alpha,beta,gamma` deg; `xi_1..xi_3` mm; `xi_4..xi_6` rad.
pub fn write_dataset_csv<W: Write>(w: W, samples: &[Sample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DATASET_HEADER)?;
    for s in samples {
        let row: Vec<String> = s
            .contact
            .to_array()
            .iter()
            .chain(s.label.to_array().iter())
            .map(|v| v.to_string())
            .collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Noise model of the stand-in estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNoiseProfile {
    /// Per-component stdev: mm for components 0..3, deg for 3..6.
    pub sigma: [f64; 6],
    /// Tangential shear radius (mm) above which shear estimates alias.
    pub aliasing_slip_threshold: f64,
    /// Variance multiplier applied to the shear components while aliasing.
    pub aliasing_variance_factor: f64,
}

/// Twist components that carry tangential and rotational shear.
pub const SHEAR_COMPONENTS: [usize; 3] = [0, 1, 5];

impl Default for SurrogateNoiseProfile {
    fn default() -> Self {
        let k = (PI / 2.0).sqrt();
        Self {
            sigma: TARGET_MAE.map(|m| m * k),
            aliasing_slip_threshold: 4.0,
            aliasing_variance_factor: 4.0,
        }
    }
}

impl SurrogateNoiseProfile {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "surrogate sigmas must be positive, got {:?}",
                self.sigma
            )));
        }
        if !(self.aliasing_variance_factor >= 1.0) || !(self.aliasing_slip_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "aliasing threshold must be positive and its variance factor at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Stdevs in internal units (mm, rad) for a given true contact.
    pub fn effective_sigma(&self, truth: &ContactPose) -> Vector6<f64> {
        let mut s = Vector6::from_fn(|i, _| {
            if i < 3 {
                self.sigma[i]
            } else {
                self.sigma[i].to_radians()
            }
        });
        if truth.shear_radius() > self.aliasing_slip_threshold {
            let k = self.aliasing_variance_factor.sqrt();
            for i in SHEAR_COMPONENTS {
                s[i] *= k;
            }
        }
        s
    }
}

/// Simulated network output for a true contact: label plus Gaussian noise, with
/// the matching diagonal covariance.
pub fn surrogate_observe<R: Rng + ?Sized>(
    truth: &ContactPose,
    profile: &SurrogateNoiseProfile,
    rng: &mut R,
) -> TangentGaussian {
    let label = pose_to_inverted_tangent(truth);
    let sigma = profile.effective_sigma(truth);
    let noise = Vector6::from_fn(|i, _| {
        let n: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        n * sigma[i]
    });
    TangentGaussian::new(
        Twist(label.0 + noise),
        Mat6::from_diagonal(&sigma.component_mul(&sigma)),
    )
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Smooth clamp of `x` into `(x_min, x_max)`.
///
/// Above the midpoint the equivalent form `x_max + softplus(x_min - x) -
/// softplus(x_max - x)` keeps both terms small, so saturation stays monotone.
pub fn softbound(x: f64, x_min: f64, x_max: f64) -> f64 {
    if x > 0.5 * (x_min + x_max) {
        x_max + softplus(x_min - x) - softplus(x_max - x)
    } else {
        x_min + softplus(x - x_min) - softplus(x - x_max)
    }
}

/// Weights that balance mm-scale and rad-scale components.
pub const DEFAULT_MSE_WEIGHTS: [f64; 6] = [1.0, 1.0, 1.0, 100.0, 100.0, 100.0];

fn check_batch(a: &[[f64; 6]], b: &[[f64; 6]]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "batch length mismatch: {} predictions vs {} labels",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `(1/N) sum_i sum_j alpha_j (label_ij - pred_ij)^2`.
pub fn weighted_mse(preds: &[[f64; 6]], labels: &[[f64; 6]], alpha: &[f64; 6]) -> Result<f64> {
    check_batch(preds, labels)?;
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| (0..6).map(|j| alpha[j] * (l[j] - p[j]).powi(2)).sum::<f64>())
        .sum();
    Ok(total / preds.len() as f64)
}

/// Mean Gaussian negative log likelihood with per-output inverse stdevs, without
/// the constant `M/2 ln(2 pi)` term.
pub fn gdn_nll(
    preds_mu: &[[f64; 6]],
    preds_inv_sigma: &[[f64; 6]],
    labels: &[[f64; 6]],
) -> Result<f64> {
    check_batch(preds_mu, labels)?;
    check_batch(preds_inv_sigma, labels)?;
    if preds_inv_sigma.iter().flatten().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("inverse stdevs must be positive".into()));
    }
    let total: f64 = (0..labels.len())
        .map(|i| {
            (0..6)
                .map(|j| {
                    let s = preds_inv_sigma[i][j];
                    0.5 * (s * (labels[i][j] - preds_mu[i][j])).powi(2) - s.ln()
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}
