//! Sampling contact poses and their labels, and observing them through the surrogate estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactile_servo::sensing::{generate_dataset, surrogate_observe, write_dataset_csv, SurrogateNoiseProfile};

fn main() -> tactile_servo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = generate_dataset(&mut rng, 1000)?;
    let mean_radius = samples.iter().map(|s| s.contact.shear_radius()).sum::<f64>() / samples.len() as f64;
    println!("{} samples, mean shear radius {mean_radius:.3} mm", samples.len());

    let first = &samples[0];
    let obs = surrogate_observe(&first.contact, &SurrogateNoiseProfile::default(), &mut rng);
    println!("contact {:?}", first.contact.to_array());
    println!("label   {:?}", first.label.to_array());
    println!("observed {:?}", obs.mu.to_array());

    let mut out = Vec::new();
    write_dataset_csv(&mut out, &samples[..3])?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
