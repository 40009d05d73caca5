//! Normalised product of two concentrated Gaussians on SE(3).

use nalgebra::Vector6;
use tactile_servo::se3::{exp_map, log_map, Mat6, Pose, Twist};
use tactile_servo::uncertainty::{fuse, PoseBelief, DEFAULT_FUSION_ITERS};

fn main() -> tactile_servo::Result<()> {
    let tight = Mat6::from_diagonal(&Vector6::new(0.1, 0.1, 0.1, 1e-3, 1e-3, 1e-3));
    let loose = tight * 4.0;
    let a = PoseBelief::new(Pose::identity(), tight);
    let b = PoseBelief::new(exp_map(&Twist::from_array([1.0, 0.5, 0.0, 0.0, 0.0, 0.08])), loose);

    let r = fuse(&a, &b, DEFAULT_FUSION_ITERS)?;
    println!("fused mean (tangent) = {:?}", log_map(&r.belief.mean)?.to_array());
    println!("fused cov diagonal   = {:?}", r.belief.cov.diagonal().as_slice());
    println!("{} iterations, converged: {}, last step {:.1e}", r.iterations, r.converged, r.last_step);
    Ok(())
}
