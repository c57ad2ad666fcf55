//! Matrix-free CASSI sensing operator.
//!
//! Channel `m` (zero based) of the cube is multiplied by the coded aperture,
//! shifted by `step * m` columns along the dispersion axis, and all channels
//! are summed on the detector. The detector is therefore
//! `rows x (cols + step * (bands - 1))` pixels.
//!
//! Nothing here materializes `H`; [`dense_oracle`] exists only for
//! verification on small problems.

mod noise;

pub use noise::{add_poisson_noise, snr_db, NoisyMeasurement};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Mask, Measurement, Plane, SpectralCube};
use crate::error::{CoreError, Result};

/// Default unknown count above which [`dense_oracle`] refuses to build `H`.
pub const DENSE_ORACLE_CAP: usize = 4096;

/// Integer dispersion shift, in detector pixels per spectral channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub step: usize,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self { step: 2 }
    }
}

impl ShiftSpec {
    pub fn new(step: usize) -> Self {
        Self { step }
    }

    /// Detector width for a cube `cols` wide with `bands` channels.
    pub fn measurement_cols(&self, cols: usize, bands: usize) -> usize {
        cols + self.step * (bands - 1)
    }
}

/// Mask, shift geometry and the cached diagonal of `H Hᵀ`.
///
/// Immutable after construction; share it freely between threads.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    mask: Mask,
    shift: ShiftSpec,
    bands: usize,
    hth: Plane,
}

impl SensingOperator {
    pub fn new(mask: Mask, shift: ShiftSpec, bands: usize) -> Result<Self> {
        if bands == 0 {
            return Err(CoreError::InvalidArgument("operator needs at least one band".into()));
        }
        let rows = mask.rows();
        let cols = mask.cols();
        let width = shift.measurement_cols(cols, bands);
        let mut hth = Plane::zeros(rows, width);
        for u in 0..rows {
            for m in 0..bands {
                let off = shift.step * m;
                for v in 0..cols {
                    let w = mask.get(u, v);
                    let cur = hth.get(u, v + off);
                    hth.set(u, v + off, cur + w * w);
                }
            }
        }
        Ok(Self {
            mask,
            shift,
            bands,
            hth,
        })
    }

    #[inline]
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    #[inline]
    pub fn shift(&self) -> ShiftSpec {
        self.shift
    }

    #[inline]
    pub fn bands(&self) -> usize {
        self.bands
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.mask.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.mask.cols()
    }

    /// Cube dims `(bands, rows, cols)` this operator accepts.
    pub fn cube_dims(&self) -> (usize, usize, usize) {
        (self.bands, self.rows(), self.cols())
    }

    /// Detector dims `(rows, cols + step * (bands - 1))`.
    pub fn measurement_dims(&self) -> (usize, usize) {
        (self.rows(), self.shift.measurement_cols(self.cols(), self.bands))
    }

    pub fn unknowns(&self) -> usize {
        self.bands * self.rows() * self.cols()
    }

    /// `Diag(H Hᵀ)` laid out as a measurement. Entries no channel reaches are 0.
    #[inline]
    pub fn hth_diag(&self) -> &Plane {
        &self.hth
    }

    fn check_cube(&self, x: &SpectralCube) -> Result<()> {
        if x.dims() != self.cube_dims() {
            return Err(CoreError::DimensionMismatch(format!(
                "cube is {:?}, operator expects {:?}",
                x.dims(),
                self.cube_dims()
            )));
        }
        Ok(())
    }

    fn check_measurement(&self, y: &Measurement) -> Result<()> {
        if y.dims() != self.measurement_dims() {
            return Err(CoreError::DimensionMismatch(format!(
                "measurement is {:?}, operator expects {:?}",
                y.dims(),
                self.measurement_dims()
            )));
        }
        Ok(())
    }

    /// `y = H x`.
    pub fn encode(&self, x: &SpectralCube) -> Result<Measurement> {
        self.check_cube(x)?;
        let (rows, width) = self.measurement_dims();
        let mut out = Plane::zeros(rows, width);
        self.encode_into(x, &mut out);
        Ok(out)
    }

    /// `y = H x` into a preallocated buffer of measurement shape.
    ///
    /// Each output row is accumulated in increasing channel order, so the
    /// result does not depend on how rows are scheduled across threads.
    pub fn encode_into(&self, x: &SpectralCube, out: &mut Measurement) {
        debug_assert_eq!(x.dims(), self.cube_dims());
        debug_assert_eq!(out.dims(), self.measurement_dims());
        let cols = self.cols();
        let width = out.cols();
        let step = self.shift.step;
        let bands = self.bands;
        let mask = self.mask.plane();
        out.as_mut_slice()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(u, row)| {
                row.fill(0.0);
                let mrow = mask.row(u);
                for m in 0..bands {
                    let off = step * m;
                    let xrow = &x.channel(m)[u * cols..(u + 1) * cols];
                    for ((o, &w), &xv) in row[off..off + cols].iter_mut().zip(mrow).zip(xrow) {
                        *o += w * xv;
                    }
                }
            });
    }

    /// `x = Hᵀ y`.
    pub fn adjoint(&self, y: &Measurement) -> Result<SpectralCube> {
        self.check_measurement(y)?;
        let (bands, rows, cols) = self.cube_dims();
        let mut out = SpectralCube::zeros(bands, rows, cols);
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    /// `x = Hᵀ y` into a preallocated cube.
    pub fn adjoint_into(&self, y: &Measurement, out: &mut SpectralCube) {
        debug_assert_eq!(y.dims(), self.measurement_dims());
        debug_assert_eq!(out.dims(), self.cube_dims());
        let rows = self.rows();
        let cols = self.cols();
        let step = self.shift.step;
        let mask = self.mask.plane();
        out.as_mut_slice()
            .par_chunks_mut(rows * cols)
            .enumerate()
            .for_each(|(m, chan)| {
                let off = step * m;
                for u in 0..rows {
                    let yrow = &y.row(u)[off..off + cols];
                    let mrow = mask.row(u);
                    let orow = &mut chan[u * cols..(u + 1) * cols];
                    for ((o, &w), &yv) in orow.iter_mut().zip(mrow).zip(yrow) {
                        *o = w * yv;
                    }
                }
            });
    }
}

/// Free-function form of [`SensingOperator::encode`].
pub fn encode(op: &SensingOperator, x: &SpectralCube) -> Result<Measurement> {
    op.encode(x)
}

/// Free-function form of [`SensingOperator::adjoint`].
pub fn adjoint(op: &SensingOperator, y: &Measurement) -> Result<SpectralCube> {
    op.adjoint(y)
}

/// Free-function form of [`SensingOperator::hth_diag`].
pub fn hth_diag(op: &SensingOperator) -> Plane {
    op.hth_diag().clone()
}

/// Row-major dense matrix, used by verification code only.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

/// Explicit `H = [D_1, ..., D_bands]` with `D_m` the masked, shifted selection
/// for channel `m`.
///
/// Columns follow the cube layout (channel, row, col); rows follow the
/// measurement layout (row, col).
pub fn dense_oracle(op: &SensingOperator) -> Result<DenseMatrix> {
    dense_oracle_capped(op, DENSE_ORACLE_CAP)
}

pub fn dense_oracle_capped(op: &SensingOperator, cap: usize) -> Result<DenseMatrix> {
    let unknowns = op.unknowns();
    if unknowns > cap {
        return Err(CoreError::OracleTooLarge { unknowns, cap });
    }
    let (bands, rows, cols) = op.cube_dims();
    let (_, width) = op.measurement_dims();
    let step = op.shift().step;
    let mut h = DenseMatrix::zeros(rows * width, unknowns);
    for m in 0..bands {
        for u in 0..rows {
            for v in 0..cols {
                let j = (m * rows + u) * cols + v;
                let i = u * width + v + step * m;
                h.set(i, j, op.mask().get(u, v));
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked_example() -> SensingOperator {
        let mask = Mask::new(Plane::from_vec(1, 2, vec![1.0, 0.5]).unwrap()).unwrap();
        SensingOperator::new(mask, ShiftSpec::new(1), 2).unwrap()
    }

    fn random_op(rng: &mut ChaCha8Rng, bands: usize, rows: usize, cols: usize, step: usize) -> SensingOperator {
        let mask = Plane::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen::<f64>()).collect()).unwrap();
        SensingOperator::new(Mask::new(mask).unwrap(), ShiftSpec::new(step), bands).unwrap()
    }

    fn random_cube(rng: &mut ChaCha8Rng, dims: (usize, usize, usize)) -> SpectralCube {
        let n = dims.0 * dims.1 * dims.2;
        SpectralCube::from_vec(
            dims.0,
            dims.1,
            dims.2,
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn encode_worked_example() {
        let op = worked_example();
        let (a, b, c, e) = (0.3, 0.7, 1.1, 2.0);
        let x = SpectralCube::from_vec(2, 1, 2, vec![a, b, c, e]).unwrap();
        let y = op.encode(&x).unwrap();
        assert_eq!(y.as_slice(), &[a, 0.5 * b + c, 0.5 * e]);
    }

    #[test]
    fn adjoint_worked_example() {
        let op = worked_example();
        let (p, q, r) = (0.2, -1.5, 4.0);
        let y = Plane::from_vec(1, 3, vec![p, q, r]).unwrap();
        let x = op.adjoint(&y).unwrap();
        assert_eq!(x.channel(0), &[p, 0.5 * q]);
        assert_eq!(x.channel(1), &[q, 0.5 * r]);
    }

    #[test]
    fn hth_diag_worked_example() {
        assert_eq!(worked_example().hth_diag().as_slice(), &[1.0, 1.25, 0.25]);
    }

    #[test]
    fn hth_diag_single_band_ones() {
        let op = SensingOperator::new(Mask::ones(3, 4), ShiftSpec::new(2), 1).unwrap();
        assert!(op.hth_diag().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dense_oracle_worked_example() {
        let h = dense_oracle(&worked_example()).unwrap();
        assert_eq!((h.rows, h.cols), (3, 4));
        assert_eq!(h.data, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn dense_oracle_identity_mask_single_band_is_identity() {
        let op = SensingOperator::new(Mask::ones(2, 3), ShiftSpec::new(2), 1).unwrap();
        let h = dense_oracle(&op).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(h.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn dense_oracle_cap() {
        let op = SensingOperator::new(Mask::ones(32, 32), ShiftSpec::new(1), 8).unwrap();
        assert!(matches!(
            dense_oracle(&op),
            Err(CoreError::OracleTooLarge {
                unknowns: 8192,
                cap: 4096
            })
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_op(&mut rng, 3, 4, 5, 2);
        let y = op.encode(&SpectralCube::zeros(3, 4, 5)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
        let x = op.adjoint(&Plane::zeros(4, 9)).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_instance_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = random_op(&mut rng, 3, 4, 4, 2);
        let h = dense_oracle(&op).unwrap();
        let x = random_cube(&mut rng, op.cube_dims());
        let y = op.encode(&x).unwrap();
        let hx = h.matvec(x.as_slice());
        for (a, b) in y.as_slice().iter().zip(&hx) {
            assert!((a - b).abs() <= 1e-12);
        }
        let hht = h.matmul(&h.transpose());
        for i in 0..hht.rows {
            for j in 0..hht.cols {
                if i == j {
                    assert_eq!(hht.get(i, i), op.hth_diag().as_slice()[i]);
                } else {
                    assert_eq!(hht.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let op = worked_example();
        assert!(op.encode(&SpectralCube::zeros(3, 1, 2)).is_err());
        assert!(op.adjoint(&Plane::zeros(1, 2)).is_err());
    }

    #[test]
    fn shape_law() {
        for (bands, step) in [(1, 0), (28, 2), (8, 1), (5, 3)] {
            let op = SensingOperator::new(Mask::ones(4, 6), ShiftSpec::new(step), bands).unwrap();
            assert_eq!(op.measurement_dims(), (4, 6 + step * (bands - 1)));
        }
        // 28 channels at two pixels each spread the detector 54 columns wider.
        assert_eq!(ShiftSpec::new(2).measurement_cols(256, 28), 256 + 54);
    }

    #[test]
    fn hth_entries_without_contribution_are_zero() {
        let mask = Plane::from_vec(1, 3, vec![1.0, 0.0, 1.0]).unwrap();
        let op = SensingOperator::new(Mask::new(mask).unwrap(), ShiftSpec::new(4), 2).unwrap();
        // width 7; channel 0 covers cols 0..3, channel 1 covers 4..7; col 3 is untouched
        assert_eq!(op.hth_diag().as_slice(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let op = random_op(&mut rng, 3, 5, 6, 2);
                let x1 = random_cube(&mut rng, op.cube_dims());
                let x2 = random_cube(&mut rng, op.cube_dims());
                let combo = x1.zip_map(&x2, |p, q| a * p + b * q).unwrap();
                let lhs = op.encode(&combo).unwrap();
                let (y1, y2) = (op.encode(&x1).unwrap(), op.encode(&x2).unwrap());
                for ((l, p), q) in lhs.as_slice().iter().zip(y1.as_slice()).zip(y2.as_slice()) {
                    prop_assert!((l - (a * p + b * q)).abs() <= 1e-12);
                }
            }

            #[test]
            fn adjointness(seed in any::<u64>(), step in 0usize..4, bands in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let op = random_op(&mut rng, bands, 4, 7, step);
                let x = random_cube(&mut rng, op.cube_dims());
                let (r, c) = op.measurement_dims();
                let y = Plane::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let hx = op.encode(&x).unwrap();
                let hty = op.adjoint(&y).unwrap();
                let rel = (hx.dot(&y) - x.dot(&hty)).abs() / (hx.norm() * y.norm()).max(f64::MIN_POSITIVE);
                prop_assert!(rel <= 1e-10);
            }
        }
    }
}
