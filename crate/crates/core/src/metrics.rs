//! Image-quality metrics for reconstructed cubes.
//!
//! PSNR and SSIM are computed per spectral channel and then averaged over
//! channels. References are assumed normalized to a peak of 1.

use serde::{Deserialize, Serialize};

use crate::cube::SpectralCube;
use crate::error::{CoreError, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrReport {
    /// Mean of per-channel PSNR; `+inf` when some channel matches exactly.
    #[serde(with = "crate::serde_float")]
    pub avg_db: f64,
    #[serde(with = "crate::serde_float::vec")]
    pub per_channel: Vec<f64>,
    /// Every channel has zero error.
    pub identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimReport {
    pub avg: f64,
    pub per_channel: Vec<f64>,
}

/// Axis-aligned spatial rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(default)]
    pub name: String,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "crate::serde_float")]
    pub psnr_db: f64,
    pub psnr_identical: bool,
    pub ssim: f64,
    #[serde(with = "crate::serde_float::vec")]
    pub psnr_per_channel: Vec<f64>,
    pub ssim_per_channel: Vec<f64>,
    #[serde(default)]
    pub spectral_correlation: Vec<(String, f64)>,
}

pub fn psnr(reference: &SpectralCube, estimate: &SpectralCube) -> Result<PsnrReport> {
    reference.check_same_shape(estimate)?;
    let per_channel: Vec<f64> = (0..reference.bands())
        .map(|m| {
            let a = reference.channel(m);
            let b = estimate.channel(m);
            let mse = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
            10.0 * (1.0 / mse).log10()
        })
        .collect();
    let identical = per_channel.iter().all(|v| v.is_infinite() && *v > 0.0);
    let avg_db = per_channel.iter().sum::<f64>() / per_channel.len() as f64;
    Ok(PsnrReport {
        avg_db,
        per_channel,
        identical,
    })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable Gaussian filtering.
fn filter_valid(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let n = SSIM_WINDOW;
    let (or, oc) = (rows - n + 1, cols - n + 1);
    let mut tmp = vec![0.0; rows * oc];
    for u in 0..rows {
        for v in 0..oc {
            let row = &img[u * cols + v..u * cols + v + n];
            tmp[u * oc + v] = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for u in 0..or {
        for v in 0..oc {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                acc += wk * tmp[(u + k) * oc + v];
            }
            out[u * oc + v] = acc;
        }
    }
    out
}

/// SSIM of one `rows x cols` image pair, averaged over window positions.
pub fn ssim_channel(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(CoreError::InvalidArgument(format!(
            "image {rows}x{cols} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let w = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
    let mu_a = filter_valid(a, rows, cols, &w);
    let mu_b = filter_valid(b, rows, cols, &w);
    let e_aa = filter_valid(&aa, rows, cols, &w);
    let e_bb = filter_valid(&bb, rows, cols, &w);
    let e_ab = filter_valid(&ab, rows, cols, &w);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

pub fn ssim(reference: &SpectralCube, estimate: &SpectralCube) -> Result<SsimReport> {
    reference.check_same_shape(estimate)?;
    let (bands, rows, cols) = reference.dims();
    let per_channel = (0..bands)
        .map(|m| ssim_channel(reference.channel(m), estimate.channel(m), rows, cols))
        .collect::<Result<Vec<_>>>()?;
    let avg = per_channel.iter().sum::<f64>() / bands as f64;
    Ok(SsimReport { avg, per_channel })
}

/// Mean spectrum over a region, one value per channel.
pub fn region_spectrum(cube: &SpectralCube, region: &Region) -> Result<Vec<f64>> {
    let (bands, rows, cols) = cube.dims();
    if region.height == 0 || region.width == 0 || region.row + region.height > rows || region.col + region.width > cols
    {
        return Err(CoreError::InvalidArgument(format!(
            "region {region:?} outside {rows}x{cols}"
        )));
    }
    let count = (region.height * region.width) as f64;
    Ok((0..bands)
        .map(|m| {
            let mut acc = 0.0;
            for u in region.row..region.row + region.height {
                for v in region.col..region.col + region.width {
                    acc += cube.get(m, u, v);
                }
            }
            acc / count
        })
        .collect())
}

/// Pearson correlation between two spectra.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::DimensionMismatch("spectra lengths differ".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&p, &q) in a.iter().zip(b) {
        sab += (p - ma) * (q - mb);
        saa += (p - ma) * (p - ma);
        sbb += (q - mb) * (q - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(CoreError::InvalidArgument("zero-variance spectrum".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of the region-mean spectra of reference and estimate.
pub fn spectral_correlation(reference: &SpectralCube, estimate: &SpectralCube, region: &Region) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    pearson(
        &region_spectrum(reference, region)?,
        &region_spectrum(estimate, region)?,
    )
}

/// PSNR, SSIM and optional per-region spectral correlation in one report.
pub fn evaluate(reference: &SpectralCube, estimate: &SpectralCube, regions: &[Region]) -> Result<MetricReport> {
    let p = psnr(reference, estimate)?;
    let s = ssim(reference, estimate)?;
    let spectral_correlation = regions
        .iter()
        .map(|r| spectral_correlation(reference, estimate, r).map(|c| (r.name.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        psnr_db: p.avg_db,
        psnr_identical: p.identical,
        ssim: s.avg,
        psnr_per_channel: p.per_channel,
        ssim_per_channel: s.per_channel,
        spectral_correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(seed: u64, bands: usize, rows: usize, cols: usize) -> SpectralCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralCube::from_vec(bands, rows, cols, (0..bands * rows * cols).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn psnr_identical_flagged() {
        let c = random_cube(1, 2, 4, 4);
        let r = psnr(&c, &c).unwrap();
        assert!(r.identical);
        assert!(r.avg_db.is_infinite());
    }

    #[test]
    fn psnr_uniform_error() {
        let a = SpectralCube::filled(3, 5, 5, 0.5);
        let b = SpectralCube::filled(3, 5, 5, 0.6);
        let r = psnr(&a, &b).unwrap();
        assert!((r.avg_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_scalar_loop() {
        let a = random_cube(2, 3, 6, 7);
        let b = random_cube(3, 3, 6, 7);
        let r = psnr(&a, &b).unwrap();
        let mut sum = 0.0;
        for m in 0..3 {
            let mut se = 0.0;
            for u in 0..6 {
                for v in 0..7 {
                    let d = a.get(m, u, v) - b.get(m, u, v);
                    se += d * d;
                }
            }
            sum += 10.0 * (42.0 / se).log10();
        }
        assert!((r.avg_db - sum / 3.0).abs() <= 1e-10);
    }

    #[test]
    fn ssim_identical_exactly_one() {
        let c = random_cube(4, 2, 16, 16);
        assert_eq!(ssim(&c, &c).unwrap().avg, 1.0);
    }

    #[test]
    fn ssim_inverted_binary_is_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..256).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        assert!(ssim_channel(&a, &b, 16, 16).unwrap() < 0.0);
    }

    #[test]
    fn ssim_constant_luminance_term() {
        let (p, q) = (0.4, 0.55);
        let a = vec![p; 144];
        let b = vec![q; 144];
        let c1 = SSIM_K1 * SSIM_K1;
        let expect = (2.0 * p * q + c1) / (p * p + q * q + c1);
        assert!((ssim_channel(&a, &b, 12, 12).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_window_too_large() {
        assert!(ssim_channel(&[0.0; 100], &[0.0; 100], 10, 10).is_err());
    }

    #[test]
    fn ssim_and_psnr_symmetric() {
        let a = random_cube(6, 2, 14, 13);
        let b = random_cube(7, 2, 14, 13);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let a = random_cube(8, 2, 12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise: Vec<f64> = (0..a.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let data = a.as_slice().iter().zip(&noise).map(|(x, n)| x + amp * n).collect();
            let b = SpectralCube::from_vec(2, 12, 12, data).unwrap();
            let p = psnr(&a, &b).unwrap().avg_db;
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn spectral_correlation_cases() {
        let mut a = SpectralCube::zeros(5, 4, 4);
        for m in 0..5 {
            a.channel_mut(m).fill(0.1 * m as f64 + 0.05);
        }
        let region = Region {
            name: "r".into(),
            row: 1,
            col: 1,
            height: 2,
            width: 2,
        };
        assert!((spectral_correlation(&a, &a, &region).unwrap() - 1.0).abs() < 1e-12);
        let affine = a.map(|v| 2.5 * v + 0.3);
        assert!((spectral_correlation(&a, &affine, &region).unwrap() - 1.0).abs() < 1e-12);
        let mut rev = a.clone();
        for m in 0..5 {
            let src = a.channel(4 - m).to_vec();
            rev.channel_mut(m).copy_from_slice(&src);
        }
        assert!((spectral_correlation(&a, &rev, &region).unwrap() + 1.0).abs() < 1e-12);
        let flat = SpectralCube::filled(5, 4, 4, 0.3);
        assert!(spectral_correlation(&a, &flat, &region).is_err());
        let outside = Region { row: 3, ..region };
        assert!(spectral_correlation(&a, &a, &outside).is_err());
    }
}
