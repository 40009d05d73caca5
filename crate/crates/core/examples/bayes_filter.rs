//! Filtering noisy contact estimates while the sensor moves over a fixed feature.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactile_servo::filter::{filter_init_at, filter_step, DynamicsNoise};
use tactile_servo::se3::{exp_map, log_map, Twist};
use tactile_servo::sensing::{pose_to_inverted_tangent, surrogate_observe, ContactPose, SurrogateNoiseProfile};
use tactile_servo::uncertainty::belief_from_tangent;

fn main() -> tactile_servo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let profile = SurrogateNoiseProfile::default();
    let noise = DynamicsNoise::from_mm_deg(0.1);

    // the feature stays put in the world while the sensor slides along y
    let contact_at = |k: usize| ContactPose::new(0.0, -2.0 + 0.02 * k as f64, 3.0, 2.0, -1.0, 0.0);
    let sensor_at = |k: usize| exp_map(&Twist::from_array([0.0, 0.02 * k as f64, 0.0, 0.0, 0.0, 0.0]));

    let obs = |k: usize, rng: &mut ChaCha8Rng| belief_from_tangent(&surrogate_observe(&contact_at(k), &profile, rng));
    let mut state = filter_init_at(obs(0, &mut rng), sensor_at(0));
    let (mut raw_err, mut fil_err) = (0.0, 0.0);
    let steps = 200;
    for k in 1..=steps {
        let o = obs(k, &mut rng);
        state = filter_step(&state, Some(&o), &sensor_at(k), &noise)?;
        let truth = pose_to_inverted_tangent(&contact_at(k));
        raw_err += (log_map(&o.mean)? - truth).rho().norm() / steps as f64;
        fil_err += (log_map(&state.filtered.mean)? - truth).rho().norm() / steps as f64;
    }
    println!("mean translation error: raw {raw_err:.3} mm, filtered {fil_err:.3} mm");
    Ok(())
}
