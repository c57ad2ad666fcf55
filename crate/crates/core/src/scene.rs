//! Synthetic test scenes and coded apertures.
//!
//! Scenes are a handful of materials, each a smooth spectral signature,
//! laid out as shaded piecewise-smooth regions with one striped texture
//! patch. They stand in for real hyperspectral captures in tests and demos.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{Mask, Plane, SpectralCube, WavelengthGrid};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Bernoulli(0.5) open/closed pixels.
    Binary,
    /// Continuous transmission, uniform on `[0, 1]`.
    Real,
}

pub fn random_mask(rows: usize, cols: usize, kind: MaskKind, seed: u64) -> Result<Mask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| match kind {
            MaskKind::Binary => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    0.0
                }
            }
            MaskKind::Real => rng.gen::<f64>(),
        })
        .collect();
    Mask::new(Plane::from_vec(rows, cols, data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub bands: usize,
    pub rows: usize,
    pub cols: usize,
    pub first_nm: f64,
    pub last_nm: f64,
    pub materials: usize,
    pub shapes: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(bands: usize, rows: usize, cols: usize, seed: u64) -> Self {
        Self {
            bands,
            rows,
            cols,
            first_nm: 450.0,
            last_nm: 650.0,
            materials: 5,
            shapes: 7,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: SpectralCube,
    pub wavelengths: WavelengthGrid,
}

/// One or two Gaussian bumps over a floor, peak normalized to `[0.55, 0.95]`.
fn signature(rng: &mut ChaCha8Rng, nm: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1.0);
    let bumps = rng.gen_range(1..=2);
    let floor = rng.gen_range(0.05..0.2);
    let mut s = vec![floor; nm.len()];
    for _ in 0..bumps {
        let center = rng.gen_range(lo - 0.1 * span..hi + 0.1 * span);
        let width = rng.gen_range(0.15..0.5) * span;
        let height = rng.gen_range(0.4..1.0);
        for (v, &l) in s.iter_mut().zip(nm) {
            let d = (l - center) / width;
            *v += height * (-0.5 * d * d).exp();
        }
    }
    let peak = s.iter().cloned().fold(0.0, f64::max);
    let target = rng.gen_range(0.55..0.95);
    s.iter_mut().for_each(|v| *v *= target / peak);
    s
}

enum Shape {
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
    Disc { r: f64, c: f64, radius: f64 },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, r1, c1 } => u >= r0 && u < r1 && v >= c0 && v < c1,
            Shape::Disc { r, c, radius } => (u - r).powi(2) + (v - c).powi(2) <= radius * radius,
        }
    }
}

pub fn synthetic_scene(spec: &SceneSpec) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wavelengths = WavelengthGrid::linspace(spec.first_nm, spec.last_nm, spec.bands)?;
    let nm = wavelengths.as_slice();
    let sigs: Vec<Vec<f64>> = (0..spec.materials.max(2))
        .map(|_| signature(&mut rng, nm, spec.first_nm, spec.last_nm))
        .collect();

    let (rows, cols) = (spec.rows as f64, spec.cols as f64);
    let shapes: Vec<(Shape, usize, [f64; 3])> = (0..spec.shapes)
        .map(|_| {
            let shape = if rng.gen::<bool>() {
                let h = rng.gen_range(0.15..0.45) * rows;
                let w = rng.gen_range(0.15..0.45) * cols;
                let r0 = rng.gen_range(0.0..rows - h);
                let c0 = rng.gen_range(0.0..cols - w);
                Shape::Rect {
                    r0,
                    c0,
                    r1: r0 + h,
                    c1: c0 + w,
                }
            } else {
                let radius = rng.gen_range(0.08..0.22) * rows.min(cols);
                Shape::Disc {
                    r: rng.gen_range(radius..rows - radius),
                    c: rng.gen_range(radius..cols - radius),
                    radius,
                }
            };
            let material = rng.gen_range(1..sigs.len());
            // linear shading a + g_r * u + g_c * v
            let shade = [
                rng.gen_range(0.7..1.0),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ];
            (shape, material, shade)
        })
        .collect();

    let tex_r0 = rng.gen_range(0.0..rows * 0.6);
    let tex_c0 = rng.gen_range(0.0..cols * 0.6);
    let tex = Shape::Rect {
        r0: tex_r0,
        c0: tex_c0,
        r1: tex_r0 + 0.35 * rows,
        c1: tex_c0 + 0.35 * cols,
    };
    let tex_period = rng.gen_range(5.0..9.0);
    let tex_angle = rng.gen_range(0.0..PI);
    let bg_grad = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];

    let mut cube = SpectralCube::zeros(spec.bands, spec.rows, spec.cols);
    for u in 0..spec.rows {
        for v in 0..spec.cols {
            let (uf, vf) = (u as f64, v as f64);
            let (un, vn) = (uf / rows - 0.5, vf / cols - 0.5);
            let mut material = 0;
            let mut shade = 0.8 + bg_grad[0] * un + bg_grad[1] * vn;
            for (shape, m, s) in &shapes {
                if shape.contains(uf, vf) {
                    material = *m;
                    shade = s[0] + s[1] * un + s[2] * vn;
                }
            }
            if tex.contains(uf, vf) {
                let phase = (uf * tex_angle.cos() + vf * tex_angle.sin()) * 2.0 * PI / tex_period;
                shade *= 0.75 + 0.25 * phase.sin();
            }
            for (m, &sv) in sigs[material].iter().enumerate() {
                cube.set(m, u, v, (sv * shade).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Scene { cube, wavelengths })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_deterministic_and_normalized() {
        let spec = SceneSpec::new(8, 32, 32, 3);
        let a = synthetic_scene(&spec).unwrap();
        let b = synthetic_scene(&spec).unwrap();
        assert_eq!(a.cube, b.cube);
        assert!(a.cube.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.wavelengths.len(), 8);
        let mean: f64 = a.cube.as_slice().iter().sum::<f64>() / a.cube.len() as f64;
        assert!(mean > 0.05 && mean < 0.95);
    }

    #[test]
    fn masks() {
        let m = random_mask(16, 16, MaskKind::Binary, 1).unwrap();
        assert!(m.plane().as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        let r = random_mask(16, 16, MaskKind::Real, 1).unwrap();
        assert!(r.plane().as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
