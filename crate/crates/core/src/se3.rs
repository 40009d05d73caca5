//! Rigid transforms in SE(3) and their tangent space se(3).
//!
//! Twists are ordered translation-first, `[rho; phi]`, so components 0..3
//! carry translation (mm) and components 3..6 carry rotation (rad).
//!
//! `exp_map`/`log_map` use the closed-form Rodrigues and V-matrix formulas.
//! The left Jacobian and its inverse are the series in `ad(xi)` truncated after
//! the second-order term, which is the accuracy level used by the fusion and
//! filtering code built on top of them.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Mat6 = Matrix6<f64>;

/// Below this rotation angle the exponential falls back to a Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-6;

/// `log_map` refuses rotations whose angle is within this margin of π.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

/// Rotation blocks drifting further than this from orthonormal are projected back.
pub const DRIFT_TOLERANCE: f64 = 1e-8;

const SKEW_TOLERANCE: f64 = 1e-9;

/// 3×3 skew-symmetric matrix such that `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A tangent vector of SE(3): `[rho; phi]` with rho in mm and phi in rad.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self(Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self(Vector6::from_column_slice(&v))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        out.copy_from_slice(self.0.as_slice());
        out
    }

    pub fn rho(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn phi(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }
}

impl From<Vector6<f64>> for Twist {
    fn from(v: Vector6<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for Twist {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist(self.0 + rhs.0)
    }
}

impl AddAssign for Twist {
    fn add_assign(&mut self, rhs: Twist) {
        self.0 += rhs.0;
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist(self.0 - rhs.0)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist(-self.0)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist(self.0 * s)
    }
}

impl Mul<Twist> for Mat6 {
    type Output = Twist;
    fn mul(self, t: Twist) -> Twist {
        Twist(self * t.0)
    }
}

/// A rigid transform with orthonormal rotation block (translation in mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.to_euler_xyz_deg();
        write!(
            f,
            "Pose(xyz: [{:.4}, {:.4}, {:.4}] mm, euler-xyz: [{:.4}, {:.4}, {:.4}] deg)",
            e[0], e[1], e[2], e[3], e[4], e[5]
        )
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose without checking the rotation block; see [`Pose::try_new`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose, rejecting rotation blocks that are not orthonormal with det +1.
    pub fn try_new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self::new(rotation, translation);
        let drift = pose.orthonormality_error();
        let det = rotation.determinant();
        if drift >= 1e-9 || (det - 1.0).abs() >= 1e-9 || !translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::NotRigid(format!(
                "|C^T C - I| = {drift:e}, det(C) = {det}"
            )));
        }
        Ok(pose)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn from_rotation(r: Matrix3<f64>) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Parses a homogeneous 4×4 matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - 1.0];
        if bottom.iter().any(|v| v.abs() > SKEW_TOLERANCE) {
            return Err(Error::NotRigid("bottom row is not [0 0 0 1]".into()));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::try_new(r, t)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Extrinsic-xyz Euler angles in radians: `C = Rz(gamma) Ry(beta) Rx(alpha)`.
    pub fn from_euler_xyz(translation: Vector3<f64>, alpha: f64, beta: f64, gamma: f64) -> Self {
        let r = Rotation3::from_euler_angles(alpha, beta, gamma);
        Self::new(r.into_inner(), translation)
    }

    /// Config/log convention: `[x, y, z, alpha, beta, gamma]` in mm and degrees.
    pub fn from_euler_xyz_deg(v: [f64; 6]) -> Self {
        Self::from_euler_xyz(
            Vector3::new(v[0], v[1], v[2]),
            v[3].to_radians(),
            v[4].to_radians(),
            v[5].to_radians(),
        )
    }

    pub fn to_euler_xyz_deg(&self) -> [f64; 6] {
        let (a, b, g) = Rotation3::from_matrix_unchecked(self.rotation).euler_angles();
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            a.to_degrees(),
            b.to_degrees(),
            g.to_degrees(),
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn compose(&self, rhs: &Pose) -> Self {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
        .renormalized_if_drifted()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let w = rotation_axis_sin(&self.rotation);
        let c = 0.5 * (self.rotation.trace() - 1.0);
        w.norm().atan2(c)
    }

    /// `|C^T C - I|_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Nearest rotation (polar decomposition) replacing the current block.
    pub fn renormalized(&self) -> Self {
        Self::new(nearest_rotation(&self.rotation), self.translation)
    }

    pub fn renormalized_if_drifted(self) -> Self {
        if self.orthonormality_error() > DRIFT_TOLERANCE {
            self.renormalized()
        } else {
            self
        }
    }

    /// Frobenius distance between the homogeneous matrices.
    pub fn matrix_distance(&self, other: &Pose) -> f64 {
        (self.matrix() - other.matrix()).norm()
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// `vee(C - C^T) / 2 = sin(theta) * axis`.
fn rotation_axis_sin(c: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(c[(2, 1)] - c[(1, 2)], c[(0, 2)] - c[(2, 0)], c[(1, 0)] - c[(0, 1)])
}

/// se(3) hat operator: `[[skew(phi), rho], [0, 0]]`.
pub fn hat(t: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&t.phi()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.rho());
    m
}

/// Inverse of [`hat`]; rejects matrices without a skew rotation block or with a non-zero bottom row.
pub fn vee(m: &Matrix4<f64>) -> Result<Twist> {
    let block = m.fixed_view::<3, 3>(0, 0);
    let sym = (block + block.transpose()).norm();
    if sym > SKEW_TOLERANCE {
        return Err(Error::NotInAlgebra(format!(
            "rotation block is not skew-symmetric (|B + B^T| = {sym:e})"
        )));
    }
    let bottom = m.fixed_view::<1, 4>(3, 0).norm();
    if bottom > SKEW_TOLERANCE {
        return Err(Error::NotInAlgebra(format!("bottom row is non-zero ({bottom:e})")));
    }
    Ok(Twist(Vector6::new(
        m[(0, 3)],
        m[(1, 3)],
        m[(2, 3)],
        m[(2, 1)],
        m[(0, 2)],
        m[(1, 0)],
    )))
}

/// SE(3) exponential map.
pub fn exp_map(t: &Twist) -> Pose {
    let phi = t.phi();
    let rho = t.rho();
    let theta = phi.norm();
    let w = skew(&phi);
    let w2 = w * w;
    let (rotation, v) = if theta < SMALL_ANGLE {
        (
            Matrix3::identity() + w + 0.5 * w2,
            Matrix3::identity() + 0.5 * w + (1.0 / 6.0) * w2,
        )
    } else {
        let half = 0.5 * theta;
        let a = theta.sin() / theta;
        // (1 - cos θ) / θ² without cancellation
        let b = 2.0 * (half.sin() / theta).powi(2);
        let c = (theta - theta.sin()) / (theta * theta * theta);
        (
            Matrix3::identity() + a * w + b * w2,
            Matrix3::identity() + b * w + c * w2,
        )
    };
    Pose::new(rotation, v * rho)
}

/// SE(3) logarithm. Fails when the rotation angle is within [`NEAR_PI_MARGIN`] of π.
pub fn log_map(p: &Pose) -> Result<Twist> {
    let c = p.rotation();
    let s_axis = rotation_axis_sin(c);
    let s = s_axis.norm();
    let cos = 0.5 * (c.trace() - 1.0);
    let theta = s.atan2(cos);
    if theta >= std::f64::consts::PI - NEAR_PI_MARGIN {
        return Err(Error::NearPi {
            angle: theta,
            margin: NEAR_PI_MARGIN,
        });
    }
    let phi = if theta < SMALL_ANGLE {
        s_axis * (1.0 + theta * theta / 6.0)
    } else {
        s_axis * (theta / s)
    };
    let w = skew(&phi);
    // V^{-1} = I - W/2 + k W², k = (1 - (θ/2) cot(θ/2)) / θ²
    let k = if theta < 1e-3 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - 0.5 * w + k * (w * w);
    Ok(Twist::new(v_inv * p.translation(), phi))
}

/// Adjoint of a pose: `[[C, skew(r) C], [0, C]]`.
pub fn adjoint(p: &Pose) -> Mat6 {
    let c = p.rotation();
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(c);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(c);
    ad.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(skew(p.translation()) * c));
    ad
}

/// Adjoint of a Lie-algebra element: `[[skew(phi), skew(rho)], [0, skew(phi)]]`.
pub fn ad_small(t: &Twist) -> Mat6 {
    let sp = skew(&t.phi());
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&sp);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&sp);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&t.rho()));
    ad
}

/// Left Jacobian truncated after second order: `I + A/2 + A²/6`, `A = ad(t)`.
pub fn left_jacobian(t: &Twist) -> Mat6 {
    let a = ad_small(t);
    Mat6::identity() + 0.5 * a + (1.0 / 6.0) * (a * a)
}

/// Inverse left Jacobian from the Bernoulli series truncated after second order:
/// `I - A/2 + A²/12`.
pub fn inv_left_jacobian(t: &Twist) -> Mat6 {
    let a = ad_small(t);
    Mat6::identity() - 0.5 * a + (1.0 / 12.0) * (a * a)
}

/// Which argument of [`bch_compose`] is assumed small.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallArg {
    First,
    Second,
}

/// First-order BCH approximation of `log(exp(t1) exp(t2))`.
pub fn bch_compose(t1: &Twist, t2: &Twist, which_small: SmallArg) -> Twist {
    match which_small {
        SmallArg::First => inv_left_jacobian(t2) * *t1 + *t2,
        SmallArg::Second => *t1 + inv_left_jacobian(&(-*t1)) * *t2,
    }
}
