//! Plug-in denoisers for the `u` step of the splitting.

mod tv;

pub use tv::{total_variation, tv_denoise_channel, tv_denoise_cube, tv_objective, Boundary, TvChannelOutput};

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cube::SpectralCube;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    Tv,
    Identity,
}

impl DenoiserKind {
    pub fn name(self) -> &'static str {
        match self {
            DenoiserKind::Tv => "tv",
            DenoiserKind::Identity => "identity",
        }
    }
}

impl FromStr for DenoiserKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(DenoiserKind::Tv),
            "identity" => Ok(DenoiserKind::Identity),
            other => Err(CoreError::UnknownDenoiser(other.to_string())),
        }
    }
}

/// Which denoiser to run and how hard.
///
/// `sigma` is the effective weight handed to the denoiser; the solver
/// derives it from the prior weight and the splitting penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    pub sigma: f64,
    pub iters: usize,
    pub tolerance: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl DenoiserSpec {
    pub fn identity() -> Self {
        Self {
            kind: DenoiserKind::Identity,
            sigma: 0.0,
            iters: 1,
            tolerance: 0.0,
            boundary: Boundary::Reflective,
        }
    }

    pub fn tv(sigma: f64, iters: usize, tolerance: f64) -> Self {
        Self {
            kind: DenoiserKind::Tv,
            sigma,
            iters,
            tolerance,
            boundary: Boundary::Reflective,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "denoiser sigma {} must be >= 0",
                self.sigma
            )));
        }
        if self.kind == DenoiserKind::Tv && self.iters == 0 {
            return Err(CoreError::InvalidConfig(
                "TV denoiser needs at least one iteration".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(CoreError::InvalidConfig("denoiser tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// `½‖z − img‖² + σ·TV(z)` minimized channel by channel.
pub fn tv_denoise(img: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube> {
    spec.validate()?;
    tv_denoise_cube(img, spec.sigma, spec.iters, spec.tolerance, spec.boundary)
}

/// Run the denoiser named by `spec.kind`.
pub fn apply_denoiser(u_in: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube> {
    spec.validate()?;
    match spec.kind {
        DenoiserKind::Identity => Ok(u_in.clone()),
        DenoiserKind::Tv => tv_denoise(u_in, spec),
    }
}

pub trait Denoiser: Send + Sync {
    fn denoise(&self, img: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube>;
}

struct Builtin;

impl Denoiser for Builtin {
    fn denoise(&self, img: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube> {
        apply_denoiser(img, spec)
    }
}

/// Name-indexed denoisers. Ships `tv` and `identity`; trained models can be
/// registered under new names.
#[derive(Clone)]
pub struct DenoiserRegistry {
    entries: BTreeMap<String, Arc<dyn Denoiser>>,
}

impl Default for DenoiserRegistry {
    fn default() -> Self {
        let mut entries: BTreeMap<String, Arc<dyn Denoiser>> = BTreeMap::new();
        entries.insert("tv".into(), Arc::new(Builtin));
        entries.insert("identity".into(), Arc::new(Builtin));
        Self { entries }
    }
}

impl DenoiserRegistry {
    pub fn register(&mut self, name: impl Into<String>, denoiser: Arc<dyn Denoiser>) {
        self.entries.insert(name.into(), denoiser);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn apply(&self, name: &str, img: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube> {
        let d = self
            .entries
            .get(name)
            .ok_or_else(|| CoreError::UnknownDenoiser(name.to_string()))?;
        d.denoise(img, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(seed: u64) -> SpectralCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralCube::from_vec(3, 8, 9, (0..3 * 72).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn identity_is_bit_identical() {
        let c = random_cube(1);
        assert_eq!(apply_denoiser(&c, &DenoiserSpec::identity()).unwrap(), c);
    }

    #[test]
    fn tv_constant_input_unchanged() {
        let c = SpectralCube::filled(2, 6, 6, 0.25);
        assert_eq!(apply_denoiser(&c, &DenoiserSpec::tv(0.2, 30, 0.0)).unwrap(), c);
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let c = random_cube(2);
        let spec = DenoiserSpec::tv(0.05, 40, 1e-5);
        assert_eq!(apply_denoiser(&c, &spec).unwrap(), tv_denoise(&c, &spec).unwrap());
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(
            "bm3d".parse::<DenoiserKind>(),
            Err(CoreError::UnknownDenoiser(_))
        ));
        let reg = DenoiserRegistry::default();
        assert!(reg
            .apply("hsi-net", &random_cube(3), &DenoiserSpec::identity())
            .is_err());
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["identity", "tv"]);
    }

    #[test]
    fn cube_denoise_is_per_channel() {
        let c = random_cube(4);
        let spec = DenoiserSpec::tv(0.1, 25, 0.0);
        let out = tv_denoise(&c, &spec).unwrap();
        let (_, rows, cols) = c.dims();
        for m in 0..3 {
            let ch = tv_denoise_channel(c.channel(m), rows, cols, 0.1, 25, 0.0, Boundary::Reflective).unwrap();
            assert_eq!(out.channel(m), ch.image.as_slice());
        }
    }
}
