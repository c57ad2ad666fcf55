//! Dense containers for spectral cubes and 2D planes (masks, measurements).
//!
//! Cubes are stored channel-major: index `(m, u, v)` lives at
//! `m * rows * cols + u * cols + v`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A 3D spectral data cube with `bands` channels of `rows x cols` pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCube {
    bands: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SpectralCube {
    pub fn zeros(bands: usize, rows: usize, cols: usize) -> Self {
        Self::filled(bands, rows, cols, 0.0)
    }

    pub fn filled(bands: usize, rows: usize, cols: usize, value: f64) -> Self {
        Self {
            bands,
            rows,
            cols,
            data: vec![value; bands * rows * cols],
        }
    }

    pub fn from_vec(bands: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if bands == 0 || rows == 0 || cols == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "cube dims must be positive, got {bands}x{rows}x{cols}"
            )));
        }
        if data.len() != bands * rows * cols {
            return Err(CoreError::DimensionMismatch(format!(
                "cube payload has {} values, header says {bands}x{rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self {
            bands,
            rows,
            cols,
            data,
        })
    }

    #[inline]
    pub fn bands(&self) -> usize {
        self.bands
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(bands, rows, cols)`
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bands, self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, m: usize, u: usize, v: usize) -> usize {
        (m * self.rows + u) * self.cols + v
    }

    #[inline]
    pub fn get(&self, m: usize, u: usize, v: usize) -> f64 {
        self.data[self.index(m, u, v)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, u: usize, v: usize, value: f64) {
        let i = self.index(m, u, v);
        self.data[i] = value;
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[m * n..(m + 1) * n]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        let n = self.rows * self.cols;
        &mut self.data[m * n..(m + 1) * n]
    }

    pub fn same_shape(&self, other: &SpectralCube) -> bool {
        self.dims() == other.dims()
    }

    pub fn check_same_shape(&self, other: &SpectralCube) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(CoreError::DimensionMismatch(format!(
                "cube shapes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpectralCube {
        SpectralCube {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..self.with_data(Vec::new())
        }
    }

    /// Element-wise combination of two equally shaped cubes.
    pub fn zip_map(&self, other: &SpectralCube, f: impl Fn(f64, f64) -> f64) -> Result<SpectralCube> {
        self.check_same_shape(other)?;
        Ok(SpectralCube {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.with_data(Vec::new())
        })
    }

    pub fn clipped(&self, lo: f64, hi: f64) -> SpectralCube {
        self.map(|x| x.clamp(lo, hi))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SpectralCube) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Same shape, new payload. The caller guarantees the length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> SpectralCube {
        debug_assert!(data.is_empty() || data.len() == self.data.len());
        SpectralCube {
            bands: self.bands,
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// A single 2D array. Masks and detector measurements are both planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "plane dims must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch(format!(
                "plane payload has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.cols + v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[u * self.cols + v] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.cols..(u + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Coded aperture transmission, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask(Plane);

impl Mask {
    pub fn new(plane: Plane) -> Result<Self> {
        if !plane.is_finite() {
            return Err(CoreError::InvalidArgument("mask contains non-finite values".into()));
        }
        if let Some(bad) = plane.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(CoreError::InvalidArgument(format!("mask value {bad} outside [0, 1]")));
        }
        if plane.as_slice().iter().all(|&x| x == 0.0) {
            return Err(CoreError::InvalidArgument("mask is identically zero".into()));
        }
        Ok(Self(plane))
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self(Plane::filled(rows, cols, 1.0))
    }

    #[inline]
    pub fn plane(&self) -> &Plane {
        &self.0
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.cols
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.0.get(u, v)
    }
}

/// Snapshot on the detector: `rows x (cols + step * (bands - 1))`.
pub type Measurement = Plane;

/// Per-channel center wavelengths in nm. Strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid(Vec<f64>);

impl WavelengthGrid {
    pub fn new(nm: Vec<f64>) -> Result<Self> {
        if nm.is_empty() {
            return Err(CoreError::InvalidArgument("empty wavelength grid".into()));
        }
        if nm.iter().any(|x| !x.is_finite()) || nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidArgument(
                "wavelengths must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self(nm))
    }

    /// `bands` channels evenly spaced over `[start, end]`.
    pub fn linspace(start: f64, end: f64, bands: usize) -> Result<Self> {
        if bands == 1 {
            return Self::new(vec![start]);
        }
        let step = (end - start) / (bands - 1) as f64;
        Self::new((0..bands).map(|i| start + step * i as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
