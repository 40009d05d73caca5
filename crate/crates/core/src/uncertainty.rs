//! Concentrated Gaussians on SE(3).
//!
//! A [`PoseBelief`] describes `X = exp(eps^) * mean` with `eps ~ N(0, cov)`,
//! i.e. the perturbation acts on the left of the mean.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::se3::{adjoint, exp_map, inv_left_jacobian, left_jacobian, log_map, Mat6, Pose, Twist};

/// Eigenvalue floor used whenever a covariance has to be inverted.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Default number of fusion iterations.
pub const DEFAULT_FUSION_ITERS: usize = 5;

/// `|mu|` below which fusion is considered converged.
pub const FUSION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseBelief {
    pub mean: Pose,
    pub cov: Mat6,
}

/// Gaussian over exponential coordinates of a pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentGaussian {
    pub mu: Twist,
    pub cov: Mat6,
}

impl PoseBelief {
    pub fn new(mean: Pose, cov: Mat6) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }

    pub fn identity_with(cov: Mat6) -> Self {
        Self::new(Pose::identity(), cov)
    }
}

impl TangentGaussian {
    pub fn new(mu: Twist, cov: Mat6) -> Self {
        Self {
            mu,
            cov: symmetrize(&cov),
        }
    }
}

pub fn symmetrize(m: &Mat6) -> Mat6 {
    0.5 * (m + m.transpose())
}

pub fn min_eigenvalue(m: &Mat6) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue(m: &Mat6) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Inverse of a symmetric matrix with eigenvalues clamped at [`EIGEN_FLOOR`].
pub fn inverse_clamped(m: &Mat6) -> Mat6 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(EIGEN_FLOOR));
    let q = eig.eigenvectors;
    symmetrize(&(q * Mat6::from_diagonal(&inv) * q.transpose()))
}

/// Inverse of a covariance that must be positive definite.
pub fn checked_inverse(m: &Mat6) -> Result<Mat6> {
    let lmin = min_eigenvalue(m);
    if !(lmin > EIGEN_FLOOR) {
        return Err(Error::SingularCovariance {
            min_eigenvalue: lmin,
        });
    }
    Ok(inverse_clamped(m))
}

/// `mean = exp(mu)`, `cov = J(mu) cov J(mu)^T`.
pub fn belief_from_tangent(g: &TangentGaussian) -> PoseBelief {
    let j = left_jacobian(&g.mu);
    PoseBelief::new(exp_map(&g.mu), j * g.cov * j.transpose())
}

/// Inverse of [`belief_from_tangent`]: `mu = log(mean)`, `cov = J^-1 cov J^-T`.
///
/// `J^-1` here is the exact inverse of the truncated [`left_jacobian`], so the
/// two conversions are mutually inverse.
pub fn belief_to_tangent(b: &PoseBelief) -> Result<TangentGaussian> {
    let mu = log_map(&b.mean)?;
    let j_inv = left_jacobian(&mu)
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("left Jacobian is singular".into()))?;
    Ok(TangentGaussian::new(mu, j_inv * b.cov * j_inv.transpose()))
}

/// Pushes a belief through a known transform `t_mean` with additive tangent noise.
pub fn propagate(b: &PoseBelief, t_mean: &Pose, noise_cov: &Mat6) -> PoseBelief {
    let ad = adjoint(t_mean);
    PoseBelief::new(t_mean * &b.mean, ad * b.cov * ad.transpose() + noise_cov)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionResult {
    pub belief: PoseBelief,
    /// Iterations actually executed.
    pub iterations: usize,
    /// Whether the last update fell below [`FUSION_TOLERANCE`].
    pub converged: bool,
    /// Norm of the last operating-point update.
    pub last_step: f64,
}

/// Normalised product of two concentrated Gaussians by iterated relinearisation.
///
/// The operating point starts at `b1.mean`; each iteration solves the
/// information-form update about it and moves it by `exp(mu)`. Runs at most
/// `iters` iterations and stops early once `|mu| < FUSION_TOLERANCE`.
pub fn fuse(b1: &PoseBelief, b2: &PoseBelief, iters: usize) -> Result<FusionResult> {
    if iters == 0 {
        return Err(Error::InvalidArgument("fusion needs at least one iteration".into()));
    }
    let info1 = checked_inverse(&b1.cov)?;
    let info2 = checked_inverse(&b2.cov)?;
    let inv1 = b1.mean.inverse();
    let inv2 = b2.mean.inverse();

    let mut op = b1.mean;
    let mut cov = b1.cov;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < iters {
        iterations += 1;
        let xi1 = log_map(&(op * inv1))?;
        let xi2 = log_map(&(op * inv2))?;
        let j1 = inv_left_jacobian(&xi1);
        let j2 = inv_left_jacobian(&xi2);
        let a1 = j1.transpose() * info1;
        let a2 = j2.transpose() * info2;
        let info = symmetrize(&(a1 * j1 + a2 * j2));
        cov = inverse_clamped(&info);
        let mu = Twist(-(cov * (a1 * xi1.0 + a2 * xi2.0)));
        op = exp_map(&mu) * op;
        last_step = mu.norm();
        if last_step < FUSION_TOLERANCE {
            break;
        }
    }
    Ok(FusionResult {
        belief: PoseBelief::new(op, cov),
        iterations,
        converged: last_step < FUSION_TOLERANCE,
        last_step,
    })
}
