//! The `.scube` container: a little-endian f32 cube with an optional
//! wavelength trailer.
//!
//! ```text
//! "SCUB" | version u8 = 1 | n_λ u32 | n_x u32 | n_y u32 | n_λ·n_x·n_y f32
//! [ 0x57 | n_λ f32 ]
//! ```

use std::path::Path;

use cassi_core::{Mask, Measurement, Plane, SpectralCube, WavelengthGrid};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SCUB";
pub const VERSION: u8 = 1;
pub const WAVELENGTH_MARKER: u8 = 0x57;
const HEADER_LEN: usize = 4 + 1 + 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScubeFile {
    pub bands: usize,
    pub rows: usize,
    pub cols: usize,
    /// `[channel][row][col]`
    pub data: Vec<f32>,
    pub wavelengths: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScubeError {
    Truncated { needed: usize, found: usize },
    BadMagic([u8; 4]),
    BadVersion(u8),
    ZeroDim,
    TrailingBytes(usize),
    BadMarker(u8),
}

impl std::fmt::Display for ScubeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScubeError::Truncated { needed, found } => write!(f, "truncated: need {needed} bytes, found {found}"),
            ScubeError::BadMagic(m) => write!(f, "bad magic {m:?}"),
            ScubeError::BadVersion(v) => write!(f, "unsupported version {v}"),
            ScubeError::ZeroDim => f.write_str("zero dimension in header"),
            ScubeError::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            ScubeError::BadMarker(b) => write!(f, "unknown trailer marker {b:#04x}"),
        }
    }
}

impl std::error::Error for ScubeError {}

fn u32_at(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

impl ScubeFile {
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, ScubeError> {
        if bytes.len() < HEADER_LEN {
            return Err(ScubeError::Truncated {
                needed: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(ScubeError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(ScubeError::BadVersion(bytes[4]));
        }
        let (bands, rows, cols) = (u32_at(bytes, 5), u32_at(bytes, 9), u32_at(bytes, 13));
        if bands == 0 || rows == 0 || cols == 0 {
            return Err(ScubeError::ZeroDim);
        }
        let payload = bands
            .checked_mul(rows)
            .and_then(|n| n.checked_mul(cols))
            .and_then(|n| n.checked_mul(4))
            .unwrap_or(usize::MAX);
        let body_end = HEADER_LEN.saturating_add(payload);
        if bytes.len() < body_end {
            return Err(ScubeError::Truncated {
                needed: body_end,
                found: bytes.len(),
            });
        }
        let data = f32s(&bytes[HEADER_LEN..body_end]);
        let rest = &bytes[body_end..];
        let wavelengths = match rest.first() {
            None => None,
            Some(&WAVELENGTH_MARKER) => {
                let needed = 1 + 4 * bands;
                if rest.len() < needed {
                    return Err(ScubeError::Truncated {
                        needed: body_end + needed,
                        found: bytes.len(),
                    });
                }
                if rest.len() > needed {
                    return Err(ScubeError::TrailingBytes(rest.len() - needed));
                }
                Some(f32s(&rest[1..]))
            }
            Some(&other) => return Err(ScubeError::BadMarker(other)),
        };
        Ok(Self {
            bands,
            rows,
            cols,
            data,
            wavelengths,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len() + 1 + 4 * self.bands);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for d in [self.bands, self.rows, self.cols] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(w) = &self.wavelengths {
            out.push(WAVELENGTH_MARKER);
            for v in w {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_cube(cube: &SpectralCube, wavelengths: Option<&WavelengthGrid>) -> Self {
        Self {
            bands: cube.bands(),
            rows: cube.rows(),
            cols: cube.cols(),
            data: cube.as_slice().iter().map(|&v| v as f32).collect(),
            wavelengths: wavelengths.map(|w| w.as_slice().iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn from_plane(plane: &Plane) -> Self {
        Self {
            bands: 1,
            rows: plane.rows(),
            cols: plane.cols(),
            data: plane.as_slice().iter().map(|&v| v as f32).collect(),
            wavelengths: None,
        }
    }

    pub fn to_cube(&self) -> cassi_core::Result<SpectralCube> {
        SpectralCube::from_vec(
            self.bands,
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    /// Single-channel payload as a plane.
    pub fn to_plane(&self) -> cassi_core::Result<Plane> {
        if self.bands != 1 {
            return Err(cassi_core::CoreError::DimensionMismatch(format!(
                "expected a single-channel file, found {} channels",
                self.bands
            )));
        }
        Plane::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn to_mask(&self) -> cassi_core::Result<Mask> {
        Mask::new(self.to_plane()?)
    }

    pub fn to_measurement(&self) -> cassi_core::Result<Measurement> {
        self.to_plane()
    }

    pub fn wavelength_grid(&self) -> Option<cassi_core::Result<WavelengthGrid>> {
        self.wavelengths
            .as_ref()
            .map(|w| WavelengthGrid::new(w.iter().map(|&v| f64::from(v)).collect()))
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_scube(path: &Path) -> Result<(ScubeFile, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let file = ScubeFile::decode(&bytes).map_err(|e| CliError::parse(path, e))?;
    Ok((file, bytes))
}

pub fn write_scube(path: &Path, file: &ScubeFile, force: bool) -> Result<Vec<u8>> {
    let bytes = file.encode();
    crate::write_output(path, &bytes, force)?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScubeFile {
        ScubeFile {
            bands: 2,
            rows: 1,
            cols: 3,
            data: vec![0.0, 1.5, -2.25, f32::MAX, f32::MIN_POSITIVE, 7.0],
            wavelengths: Some(vec![450.0, 550.0]),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..4], b"SCUB");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &1u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &3u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &0.0f32.to_le_bytes());
        assert_eq!(bytes[17 + 24], 0x57);
        assert_eq!(bytes.len(), 17 + 24 + 1 + 8);
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(ScubeFile::decode(&f.encode()).unwrap(), f);
        let bare = ScubeFile {
            wavelengths: None,
            ..sample()
        };
        assert_eq!(ScubeFile::decode(&bare.encode()).unwrap(), bare);
    }

    #[test]
    fn rejects_malformed() {
        let good = sample().encode();
        assert!(matches!(
            ScubeFile::decode(&good[..10]),
            Err(ScubeError::Truncated { .. })
        ));
        assert!(matches!(
            ScubeFile::decode(&good[..30]),
            Err(ScubeError::Truncated { .. })
        ));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(ScubeFile::decode(&bad), Err(ScubeError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(ScubeFile::decode(&bad), Err(ScubeError::BadVersion(2)));
        let mut bad = good.clone();
        bad[17 + 24] = 0x11;
        assert_eq!(ScubeFile::decode(&bad), Err(ScubeError::BadMarker(0x11)));
        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(ScubeFile::decode(&bad), Err(ScubeError::TrailingBytes(1)));
        let mut bad = good;
        bad[5..9].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(ScubeFile::decode(&bad), Err(ScubeError::ZeroDim));
    }
}
