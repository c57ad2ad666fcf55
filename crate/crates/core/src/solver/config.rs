use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::priors::DenoiserKind;
use crate::untrained_prior::{EarlyStopSchedule, GeneratorConfig, DEFAULT_LEAKY_SLOPE, DEFAULT_LEARNING_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Generator prior with both fidelity terms.
    PnpDip,
    /// As `PnpDip`, plus a TV branch whose penalty decays.
    PnpDipTv,
    /// Generator prior with the measurement term only inside the generator loss.
    SingleFidelity,
    /// One long generator fit on the measurement loss, no splitting.
    SoleDip,
    /// Classical TV-regularized ADMM, no generator.
    AdmmTv,
}

impl SolverMode {
    pub const ALL: [SolverMode; 5] = [
        SolverMode::PnpDip,
        SolverMode::PnpDipTv,
        SolverMode::SingleFidelity,
        SolverMode::SoleDip,
        SolverMode::AdmmTv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverMode::PnpDip => "pnp_dip",
            SolverMode::PnpDipTv => "pnp_dip_tv",
            SolverMode::SingleFidelity => "single_fidelity",
            SolverMode::SoleDip => "sole_dip",
            SolverMode::AdmmTv => "admm_tv",
        }
    }

    pub fn uses_generator(self) -> bool {
        self != SolverMode::AdmmTv
    }

    /// Whether the `u`, `v` splitting variables exist in this mode.
    pub fn uses_tv_branch(self) -> bool {
        matches!(self, SolverMode::PnpDipTv | SolverMode::AdmmTv)
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        SolverMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown solver mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Architecture knobs; cube dims come from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSettings {
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub precision: Precision,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            learning_rate: DEFAULT_LEARNING_RATE,
            precision: Precision::F32,
        }
    }
}

impl NetworkSettings {
    pub fn generator_config(&self, bands: usize, rows: usize, cols: usize) -> GeneratorConfig {
        GeneratorConfig {
            bands,
            rows,
            cols,
            widths: self.widths.clone(),
            leaky_slope: self.leaky_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSettings {
    pub iters: usize,
    pub tolerance: f64,
}

impl Default for TvSettings {
    fn default() -> Self {
        Self {
            iters: 50,
            tolerance: 1e-4,
        }
    }
}

/// TV-only pre-run whose output seeds the prior image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartSettings {
    pub outer_iters: usize,
    pub eta: f64,
    pub lambda: f64,
    pub eta_decay: f64,
}

impl Default for WarmStartSettings {
    fn default() -> Self {
        let tv = SolverConfig::for_mode(SolverMode::AdmmTv);
        Self {
            outer_iters: tv.outer_iters,
            eta: tv.eta,
            lambda: tv.lambda,
            eta_decay: tv.eta_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Seed of the fixed network input `e`.
    pub input: u64,
    /// Base seed for parameter re-initialization; outer iteration `k` uses `init + k`.
    pub init: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { input: 0, init: 1 }
    }
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            input: seed.wrapping_mul(2),
            init: seed.wrapping_mul(2).wrapping_add(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Proximity weight between `x` and the generator image.
    pub mu: f64,
    /// Measurement weight inside the generator loss.
    pub rho: f64,
    /// TV splitting penalty at the first outer iteration.
    pub eta: f64,
    /// `η_k = η · eta_decay^k`.
    pub eta_decay: f64,
    /// TV weight; the denoiser runs with `σ = λ / η_k`.
    pub lambda: f64,
    pub outer_iters: usize,
    pub schedule: EarlyStopSchedule,
    /// Sole-generator mode step count; defaults to the schedule total.
    pub sole_iters: Option<usize>,
    pub network: NetworkSettings,
    pub tv: TvSettings,
    /// Denoiser applied to `p + b` in single-fidelity mode.
    pub single_fidelity_denoiser: DenoiserKind,
    pub warm_start: bool,
    pub warm_start_settings: WarmStartSettings,
    /// Start from `Hᵀy ⊘ (Diag(HHᵀ) + μ)` instead of raw `Hᵀy`.
    pub normalized_init: bool,
    pub seeds: Seeds,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_mode(SolverMode::PnpDip)
    }
}

impl SolverConfig {
    /// Desk-scale defaults for a mode.
    pub fn for_mode(mode: SolverMode) -> Self {
        let (eta, eta_decay, lambda) = match mode {
            SolverMode::PnpDip | SolverMode::SingleFidelity | SolverMode::SoleDip => (0.0, 1.0, 0.0),
            SolverMode::PnpDipTv => (0.01, 0.95, 0.0005),
            SolverMode::AdmmTv => (0.1, 1.0, 0.005),
        };
        let outer_iters = match mode {
            SolverMode::AdmmTv => 60,
            _ => 20,
        };
        Self {
            mode,
            mu: 0.01,
            rho: 0.001,
            eta,
            eta_decay,
            lambda,
            outer_iters,
            schedule: EarlyStopSchedule::DESK_SCALE,
            sole_iters: None,
            network: NetworkSettings::default(),
            tv: TvSettings::default(),
            single_fidelity_denoiser: DenoiserKind::Identity,
            warm_start: false,
            warm_start_settings: WarmStartSettings {
                outer_iters: 60,
                eta: 0.1,
                lambda: 0.005,
                eta_decay: 1.0,
            },
            normalized_init: false,
            seeds: Seeds::default(),
        }
    }

    /// Full-scale outer count and inner schedule.
    pub fn full_scale(mut self) -> Self {
        self.outer_iters = 80;
        self.schedule = EarlyStopSchedule::FULL_SCALE;
        self
    }

    pub fn eta_at(&self, k: usize) -> f64 {
        self.eta * self.eta_decay.powi(k as i32)
    }

    pub fn sole_steps(&self) -> usize {
        self.sole_iters.unwrap_or_else(|| self.schedule.total(self.outer_iters))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.mu) || !nonneg(self.rho) || !nonneg(self.eta) || !nonneg(self.lambda) {
            return bad("μ, ρ, η and λ must be finite and nonnegative".into());
        }
        if !(self.eta_decay > 0.0 && self.eta_decay <= 1.0) {
            return bad(format!("η decay {} outside (0, 1]", self.eta_decay));
        }
        if self.outer_iters == 0 {
            return bad("need at least one outer iteration".into());
        }
        if self.mode.uses_generator() {
            if self.mode != SolverMode::SoleDip && self.mu <= 0.0 {
                return bad("μ must be > 0 when the generator branch is active".into());
            }
            if self.schedule.base == 0 && self.schedule.step == 0 {
                return bad("inner schedule never runs".into());
            }
            if self.schedule.cap == 0 {
                return bad("inner schedule cap must be >= 1".into());
            }
            if self.mode == SolverMode::SoleDip && self.sole_steps() == 0 {
                return bad("sole mode needs at least one step".into());
            }
            if self.network.widths.is_empty()
                || !self.network.learning_rate.is_finite()
                || self.network.learning_rate <= 0.0
            {
                return bad("network needs widths and a positive learning rate".into());
            }
        }
        match self.mode {
            SolverMode::PnpDip => {
                if self.lambda != 0.0 || self.eta != 0.0 {
                    return bad("pnp_dip runs without the TV branch: set λ = η = 0".into());
                }
            }
            SolverMode::PnpDipTv | SolverMode::AdmmTv => {
                if self.eta <= 0.0 {
                    return bad(format!("{} needs η > 0", self.mode));
                }
            }
            SolverMode::SingleFidelity | SolverMode::SoleDip => {}
        }
        if self.mode.uses_tv_branch() && self.tv.iters == 0 {
            return bad("TV denoiser needs at least one iteration".into());
        }
        if self.warm_start {
            let w = &self.warm_start_settings;
            if w.outer_iters == 0
                || !w.eta.is_finite()
                || w.eta <= 0.0
                || !nonneg(w.lambda)
                || !(w.eta_decay > 0.0 && w.eta_decay <= 1.0)
            {
                return bad("invalid warm start settings".into());
            }
        }
        Ok(())
    }
}
