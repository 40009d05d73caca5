//! Exponential and log maps, adjoints and first-order BCH composition.

use tactile_servo::se3::{adjoint, bch_compose, exp_map, log_map, SmallArg, Twist};

fn main() -> tactile_servo::Result<()> {
    // 10 mm along x while turning 90 degrees about z
    let t = Twist::from_array([10.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2]);
    let pose = exp_map(&t);
    println!("exp(t) = {pose}");
    println!("log(exp(t)) = {:?}", log_map(&pose)?.to_array());

    // Ad(X) maps a twist in the body frame to the same motion seen from the base frame
    let body = Twist::from_array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    println!("Ad(X) * e_x = {:?}", (adjoint(&pose) * body).to_array());

    // first-order BCH is accurate while both arguments stay moderate
    let small = Twist::from_array([0.01, -0.02, 0.0, 0.01, 0.0, 0.02]);
    let base = Twist::from_array([0.2, 0.0, 0.1, 0.0, 0.1, 0.15]);
    let exact = log_map(&(exp_map(&small) * exp_map(&base)))?;
    let approx = bch_compose(&small, &base, SmallArg::First);
    println!("BCH error for a small left perturbation: {:.2e}", (exact - approx).norm());
    Ok(())
}
