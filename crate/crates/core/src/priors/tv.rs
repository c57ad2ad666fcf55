//! Isotropic total-variation denoising by dual projection.
//!
//! Solves `min_z ½‖z − f‖² + σ·TV(z)` per channel by accelerated projected
//! gradient on the dual field `p` (`|p| ≤ 1` pointwise), `z = f − σ·div p`.
//! The returned iterate is the best primal point visited, so the primal
//! objective trace is nonincreasing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::SpectralCube;
use crate::error::{CoreError, Result};

/// Dual step, `1/‖div‖²` for the forward-difference stencil.
const TAU: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Neumann: zero gradient across the image border.
    #[default]
    Reflective,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvChannelOutput {
    pub image: Vec<f64>,
    /// Primal objective of the accepted iterate, starting with the input.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn gradient(w: &[f64], rows: usize, cols: usize, boundary: Boundary, gx: &mut [f64], gy: &mut [f64]) {
    for u in 0..rows {
        for v in 0..cols {
            let i = u * cols + v;
            gx[i] = if v + 1 < cols {
                w[i + 1] - w[i]
            } else if boundary == Boundary::Periodic {
                w[u * cols] - w[i]
            } else {
                0.0
            };
            gy[i] = if u + 1 < rows {
                w[i + cols] - w[i]
            } else if boundary == Boundary::Periodic {
                w[v] - w[i]
            } else {
                0.0
            };
        }
    }
}

/// Negative adjoint of [`gradient`].
fn divergence(px: &[f64], py: &[f64], rows: usize, cols: usize, boundary: Boundary, out: &mut [f64]) {
    for u in 0..rows {
        for v in 0..cols {
            let i = u * cols + v;
            let dx = match boundary {
                Boundary::Periodic => {
                    let left = if v == 0 { u * cols + cols - 1 } else { i - 1 };
                    px[i] - px[left]
                }
                Boundary::Reflective => {
                    let cur = if v + 1 < cols { px[i] } else { 0.0 };
                    let prev = if v > 0 { px[i - 1] } else { 0.0 };
                    cur - prev
                }
            };
            let dy = match boundary {
                Boundary::Periodic => {
                    let up = if u == 0 { (rows - 1) * cols + v } else { i - cols };
                    py[i] - py[up]
                }
                Boundary::Reflective => {
                    let cur = if u + 1 < rows { py[i] } else { 0.0 };
                    let prev = if u > 0 { py[i - cols] } else { 0.0 };
                    cur - prev
                }
            };
            out[i] = dx + dy;
        }
    }
}

/// Isotropic discrete total variation of a `rows x cols` image.
pub fn total_variation(img: &[f64], rows: usize, cols: usize, boundary: Boundary) -> f64 {
    let n = rows * cols;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    gradient(img, rows, cols, boundary, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// `½‖z − f‖² + σ·TV(z)`.
pub fn tv_objective(z: &[f64], f: &[f64], rows: usize, cols: usize, sigma: f64, boundary: Boundary) -> f64 {
    let fit: f64 = z.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + sigma * total_variation(z, rows, cols, boundary)
}

/// Denoise one channel. `sigma == 0` returns the input untouched.
pub fn tv_denoise_channel(
    f: &[f64],
    rows: usize,
    cols: usize,
    sigma: f64,
    iters: usize,
    tolerance: f64,
    boundary: Boundary,
) -> Result<TvChannelOutput> {
    if f.len() != rows * cols {
        return Err(CoreError::DimensionMismatch(format!(
            "channel has {} values, expected {rows}x{cols}",
            f.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("TV denoiser input".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "TV weight {sigma} must be finite and nonnegative"
        )));
    }

    let start = tv_objective(f, f, rows, cols, sigma, boundary);
    if sigma == 0.0 {
        return Ok(TvChannelOutput {
            image: f.to_vec(),
            objective_trace: vec![start],
            iterations: 0,
        });
    }

    let n = rows * cols;
    // accepted dual field, previous one, and the extrapolated point
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
    let (mut qx, mut qy) = (vec![0.0; n], vec![0.0; n]);
    let (mut rx, mut ry) = (vec![0.0; n], vec![0.0; n]);
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut candidate = vec![0.0; n];

    let mut best = f.to_vec();
    let mut best_obj = start;
    let mut trace = vec![start];
    let mut done = 0;
    let mut t = 1.0f64;

    for _ in 0..iters {
        divergence(&rx, &ry, rows, cols, boundary, &mut div);
        for i in 0..n {
            w[i] = div[i] - f[i] / sigma;
        }
        gradient(&w, rows, cols, boundary, &mut gx, &mut gy);

        std::mem::swap(&mut px, &mut qx);
        std::mem::swap(&mut py, &mut qy);
        let mut change = 0.0;
        let mut size = 0.0;
        for i in 0..n {
            let ax = rx[i] + TAU * gx[i];
            let ay = ry[i] + TAU * gy[i];
            let scale = (ax * ax + ay * ay).sqrt().max(1.0);
            px[i] = ax / scale;
            py[i] = ay / scale;
            change += (px[i] - qx[i]).powi(2) + (py[i] - qy[i]).powi(2);
            size += px[i] * px[i] + py[i] * py[i];
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            rx[i] = px[i] + beta * (px[i] - qx[i]);
            ry[i] = py[i] + beta * (py[i] - qy[i]);
        }
        t = t_next;
        done += 1;

        divergence(&px, &py, rows, cols, boundary, &mut div);
        for i in 0..n {
            candidate[i] = f[i] - sigma * div[i];
        }
        let obj = tv_objective(&candidate, f, rows, cols, sigma, boundary);
        if obj <= best_obj {
            best_obj = obj;
            best.copy_from_slice(&candidate);
        }
        trace.push(best_obj);

        if size == 0.0 {
            // gradient of f is zero everywhere: f is already the minimizer
            break;
        }
        if (change / size).sqrt() < tolerance {
            break;
        }
    }

    Ok(TvChannelOutput {
        image: best,
        objective_trace: trace,
        iterations: done,
    })
}

/// Channel-by-channel 2D TV denoising of a cube.
pub fn tv_denoise_cube(
    img: &SpectralCube,
    sigma: f64,
    iters: usize,
    tolerance: f64,
    boundary: Boundary,
) -> Result<SpectralCube> {
    let (bands, rows, cols) = img.dims();
    let channels: Vec<Vec<f64>> = (0..bands)
        .into_par_iter()
        .map(|m| tv_denoise_channel(img.channel(m), rows, cols, sigma, iters, tolerance, boundary).map(|o| o.image))
        .collect::<Result<_>>()?;
    SpectralCube::from_vec(bands, rows, cols, channels.concat())
}
