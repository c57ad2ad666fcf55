use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cube::Measurement;
use crate::error::{CoreError, Result};

/// Accepted distance between achieved and requested SNR.
pub const SNR_TOLERANCE_DB: f64 = 0.2;

const MAX_PROBES: usize = 200;
/// Upper bound on the Poisson rate of any single pixel.
const MAX_RATE: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyMeasurement {
    pub measurement: Measurement,
    pub achieved_snr_db: f64,
    /// Photon scale `alpha` in `Poisson(alpha * y) / alpha`.
    pub photon_scale: f64,
}

/// `10 log10(‖clean‖² / ‖noisy - clean‖²)`. Infinite when the two agree.
pub fn snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    let noise: f64 = clean.iter().zip(noisy).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (signal / noise).log10()
}

fn sample_scaled(y: &[f64], alpha: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    y.iter()
        .map(|&v| {
            let rate = alpha * v;
            if rate > 0.0 {
                // rate is finite and positive here, construction cannot fail
                let dist = Poisson::new(rate).expect("positive finite Poisson rate");
                dist.sample(&mut rng) / alpha
            } else {
                0.0
            }
        })
        .collect()
}

/// Contaminate `y` with Poisson shot noise at a requested SNR.
///
/// The photon scale is found by bisection in log space; every probe reuses
/// the same seed, so the achieved SNR varies smoothly with the scale and the
/// returned measurement is a deterministic function of `(y, target, seed)`.
pub fn add_poisson_noise(y: &Measurement, target_snr_db: f64, rng_seed: u64) -> Result<NoisyMeasurement> {
    if !(5.0..=60.0).contains(&target_snr_db) {
        return Err(CoreError::InvalidArgument(format!(
            "target SNR {target_snr_db} dB outside [5, 60]"
        )));
    }
    let data = y.as_slice();
    if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CoreError::InvalidArgument(format!(
            "Poisson noise needs a finite nonnegative measurement, found {bad}"
        )));
    }
    let sum: f64 = data.iter().sum();
    let sum_sq: f64 = data.iter().map(|v| v * v).sum();
    let peak = data.iter().cloned().fold(0.0, f64::max);
    if sum_sq == 0.0 {
        return Err(CoreError::UnattainableSnr {
            target_db: target_snr_db,
            reason: "measurement is identically zero".into(),
        });
    }

    // E‖ỹ - y‖² = Σy / α, so this α hits the target in expectation.
    let guess = 10f64.powf(target_snr_db / 10.0) * sum / sum_sq;
    let mut lo = (guess / 1e3).ln();
    let mut hi = (guess * 1e3).min(MAX_RATE / peak).ln();

    let probe = |log_alpha: f64| {
        let alpha = log_alpha.exp();
        let noisy = sample_scaled(data, alpha, rng_seed);
        let snr = snr_db(data, &noisy);
        (alpha, noisy, snr)
    };

    let (_, _, snr_lo) = probe(lo);
    let (_, _, snr_hi) = probe(hi);
    if !(snr_lo < target_snr_db && target_snr_db < snr_hi) {
        return Err(CoreError::UnattainableSnr {
            target_db: target_snr_db,
            reason: format!("bracket [{snr_lo:.2}, {snr_hi:.2}] dB does not contain target"),
        });
    }

    for _ in 0..MAX_PROBES {
        let mid = 0.5 * (lo + hi);
        let (alpha, noisy, snr) = probe(mid);
        if (snr - target_snr_db).abs() <= SNR_TOLERANCE_DB {
            return Ok(NoisyMeasurement {
                measurement: Measurement::from_vec(y.rows(), y.cols(), noisy)?,
                achieved_snr_db: snr,
                photon_scale: alpha,
            });
        }
        if snr < target_snr_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(CoreError::UnattainableSnr {
        target_db: target_snr_db,
        reason: "bisection exhausted".into(),
    })
}
