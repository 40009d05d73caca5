//! Synthetic noise-level sweep of the Bayesian filter.
//!
//! A sequence of random contacts is observed through the surrogate estimator.
//! The filter's dynamics transform between consecutive contacts is the true
//! relative motion perturbed by `exp(psi)`, `psi ~ N(0, sigma_psi^2)`, and the
//! filter is told the same noise level. Errors are measured in exponential
//! coordinates against the labels (mm for translation, deg for rotation).

use std::io::Write;

use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{filter_init, filter_step_with_transform, DynamicsNoise};
use crate::se3::{exp_map, log_map, Twist};
use crate::sensing::{pose_to_inverted_tangent, sample_contact, surrogate_observe, SurrogateNoiseProfile};
use crate::uncertainty::belief_from_tangent;

/// Noise levels swept by default (mm and deg).
pub const DEFAULT_LEVELS: [f64; 4] = [10.0, 1.0, 0.1, 0.01];
pub const DEFAULT_SWEEP_STEPS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma_psi: f64,
    pub raw_mae: [f64; 6],
    pub filtered_mae: [f64; 6],
}

/// Error of `estimate` against `label`, rotational components converted to degrees.
fn abs_error_mm_deg(estimate: &Twist, label: &Twist) -> Vector6<f64> {
    Vector6::from_fn(|i, _| {
        let d = (estimate[i] - label[i]).abs();
        if i < 3 {
            d
        } else {
            d.to_degrees()
        }
    })
}

/// Runs one sequence and returns `(raw_mae, filtered_mae)`.
pub fn run_sequence(
    sigma_psi: f64,
    steps: usize,
    seed: u64,
    profile: &SurrogateNoiseProfile,
) -> Result<([f64; 6], [f64; 6])> {
    if !(sigma_psi > 0.0) || steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need sigma_psi > 0 and at least 2 steps (got {sigma_psi}, {steps})"
        )));
    }
    // contacts and observations share one stream so every level sees the same data
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi_rng = ChaCha8Rng::seed_from_u64(seed);
    psi_rng.set_stream(1);
    let noise = DynamicsNoise::from_mm_deg(sigma_psi);
    let psi_sigma = noise.cov.diagonal().map(f64::sqrt);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut raw = Vector6::zeros();
    let mut fil = Vector6::zeros();
    let mut prev_truth = None;
    let mut state = None;
    for _ in 0..steps {
        let contact = sample_contact(&mut data_rng);
        let label = pose_to_inverted_tangent(&contact);
        let truth = exp_map(&label);
        let obs_t = surrogate_observe(&contact, profile, &mut data_rng);
        let obs = belief_from_tangent(&obs_t);
        let next = match (state, prev_truth) {
            (Some(s), Some(prev)) => {
                let psi = Twist(Vector6::from_fn(|i, _| psi_sigma[i] * unit.sample(&mut psi_rng)));
                let t = exp_map(&psi) * truth * crate::se3::Pose::inverse(&prev);
                filter_step_with_transform(&s, Some(&obs), &t, &noise)?
            }
            _ => filter_init(obs),
        };
        raw += abs_error_mm_deg(&obs_t.mu, &label);
        fil += abs_error_mm_deg(&log_map(&next.filtered.mean)?, &label);
        state = Some(next);
        prev_truth = Some(truth);
    }
    let n = steps as f64;
    let to_arr = |v: Vector6<f64>| {
        let mut a = [0.0; 6];
        a.copy_from_slice((v / n).as_slice());
        a
    };
    Ok((to_arr(raw), to_arr(fil)))
}

/// Mean per-component MAE over `seeds` for each level. Levels run in parallel.
pub fn filter_sweep(
    levels: &[f64],
    steps: usize,
    seeds: &[u64],
    profile: &SurrogateNoiseProfile,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() || levels.is_empty() {
        return Err(Error::InvalidArgument("need at least one level and one seed".into()));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&level| {
                scope.spawn(move || -> Result<SweepRow> {
                    let mut raw = [0.0; 6];
                    let mut fil = [0.0; 6];
                    for &seed in seeds {
                        let (r, f) = run_sequence(level, steps, seed, profile)?;
                        for i in 0..6 {
                            raw[i] += r[i] / seeds.len() as f64;
                            fil[i] += f[i] / seeds.len() as f64;
                        }
                    }
                    Ok(SweepRow {
                        sigma_psi: level,
                        raw_mae: raw,
                        filtered_mae: fil,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

pub const SWEEP_HEADER: [&str; 13] = [
    "sigma_psi", "raw_x_mm", "raw_y_mm", "raw_z_mm", "raw_rx_deg", "raw_ry_deg", "raw_rz_deg",
    "fil_x_mm", "fil_y_mm", "fil_z_mm", "fil_rx_deg", "fil_ry_deg", "fil_rz_deg",
];

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        let mut rec = vec![r.sigma_psi.to_string()];
        rec.extend(r.raw_mae.iter().chain(r.filtered_mae.iter()).map(|v| format!("{v:.6}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
