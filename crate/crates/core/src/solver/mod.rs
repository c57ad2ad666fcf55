//! Plug-and-play ADMM with an untrained generator prior.
//!
//! Each outer iteration updates, in order, `x` (closed form), `u` and `v`
//! (TV branch, when present), the generator image `p = T_Θ(e)` (fresh
//! parameters, fit for a growing number of Adam steps) and finally `b`.

mod config;
mod updates;

pub use config::{NetworkSettings, Precision, Seeds, SolverConfig, SolverMode, TvSettings, WarmStartSettings};
pub use updates::{b_update, u_update, v_update, x_update};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cube::{Measurement, SpectralCube};
use crate::error::{CoreError, Result};
use crate::forward_model::SensingOperator;
use crate::metrics::{self, MetricReport};
use crate::priors::{apply_denoiser, DenoiserKind, DenoiserSpec};
use crate::untrained_prior::{
    train_inner_loop, DipLossSpec, GeneratorConfig, InnerLoopOutput, InnerSchedule, SeedInput,
};

/// What happened in one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub k: usize,
    pub eta: f64,
    /// TV weight used in the `u` step, when it ran.
    pub sigma: Option<f64>,
    pub inner_iters: usize,
    pub inner_loss_first: Option<f64>,
    pub inner_loss_last: Option<f64>,
    /// `‖y − Hx‖`
    pub fidelity: f64,
    /// `‖y − Hx‖ / ‖y‖`
    pub fidelity_ratio: f64,
    /// `‖x − p − b‖` with the fresh generator image and the previous `b`.
    pub prior_residual: Option<f64>,
    #[serde(default, with = "crate::serde_float::option")]
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub warm_start_s: f64,
    pub x_update_s: f64,
    pub denoise_s: f64,
    pub generator_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartSummary {
    pub outer_iters: usize,
    #[serde(default, with = "crate::serde_float::option")]
    pub psnr_db: Option<f64>,
}

/// Everything a run reports. Timings aside, it is a pure function of the
/// config, the seeds and the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SolverConfig,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Full loss trace of the sole-generator fit.
    #[serde(default)]
    pub sole_loss_trace: Vec<f64>,
    pub warm_start: Option<WarmStartSummary>,
    /// Total Adam steps taken across all inner loops.
    pub generator_steps: usize,
    /// Whether `u`, `v` were ever allocated.
    pub splitting_allocated: bool,
    pub final_metrics: Option<MetricReport>,
    pub timings: StageTimings,
    #[serde(default)]
    pub output_paths: Vec<String>,
}

impl RunReport {
    fn new(config: &SolverConfig) -> Self {
        Self {
            config: config.clone(),
            diagnostics: Vec::new(),
            sole_loss_trace: Vec::new(),
            warm_start: None,
            generator_steps: 0,
            splitting_allocated: false,
            final_metrics: None,
            timings: StageTimings::default(),
            output_paths: Vec::new(),
        }
    }

    pub fn final_psnr(&self) -> Option<f64> {
        self.final_metrics.as_ref().map(|m| m.psnr_db)
    }
}

/// A run that stopped early. `partial` holds everything recorded so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: CoreError,
    pub partial: Box<RunReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} outer iterations)",
            self.error,
            self.partial.diagnostics.len()
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Problem<'a> {
    op: &'a SensingOperator,
    y: &'a Measurement,
    truth: Option<&'a SpectralCube>,
    y_norm: f64,
}

impl Problem<'_> {
    fn fidelity(&self, x: &SpectralCube) -> Result<(f64, f64)> {
        let hx = self.op.encode(x)?;
        let r: f64 = hx
            .as_slice()
            .iter()
            .zip(self.y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok((r, if self.y_norm > 0.0 { r / self.y_norm } else { r }))
    }

    fn psnr(&self, x: &SpectralCube) -> Result<Option<f64>> {
        match self.truth {
            Some(t) => Ok(Some(metrics::psnr(t, &x.clipped(0.0, 1.0))?.avg_db)),
            None => Ok(None),
        }
    }
}

fn check_state(name: &str, c: &SpectralCube) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(CoreError::Diverged(format!("{name} became non-finite")))
    }
}

fn train(
    config: &SolverConfig,
    problem: &Problem<'_>,
    spec: &DipLossSpec<'_>,
    gen_cfg: &GeneratorConfig,
    e: &SeedInput,
    schedule: InnerSchedule,
) -> Result<InnerLoopOutput> {
    let lr = config.network.learning_rate;
    match config.network.precision {
        Precision::F32 => train_inner_loop::<f32>(problem.op, problem.y, spec, gen_cfg, e, schedule, lr),
        Precision::F64 => train_inner_loop::<f64>(problem.op, problem.y, spec, gen_cfg, e, schedule, lr),
    }
}

/// Reconstruct a cube from `y`. `ground_truth` only feeds the diagnostics.
pub fn run(
    config: &SolverConfig,
    op: &SensingOperator,
    y: &Measurement,
    ground_truth: Option<&SpectralCube>,
) -> std::result::Result<(SpectralCube, RunReport), RunFailure> {
    let mut report = RunReport::new(config);
    let started = Instant::now();
    let result = run_inner(config, op, y, ground_truth, &mut report);
    report.timings.total_s = started.elapsed().as_secs_f64();
    match result {
        Ok(out) => {
            if let Some(t) = ground_truth {
                report.final_metrics = metrics::evaluate(t, &out, &[]).ok();
            }
            Ok((out, report))
        }
        Err(error) => Err(RunFailure {
            error,
            partial: Box::new(report),
        }),
    }
}

fn run_inner(
    config: &SolverConfig,
    op: &SensingOperator,
    y: &Measurement,
    ground_truth: Option<&SpectralCube>,
    report: &mut RunReport,
) -> Result<SpectralCube> {
    config.validate()?;
    if y.dims() != op.measurement_dims() {
        return Err(CoreError::DimensionMismatch(format!(
            "measurement {:?} vs operator {:?}",
            y.dims(),
            op.measurement_dims()
        )));
    }
    if !y.is_finite() {
        return Err(CoreError::NonFinite("measurement".into()));
    }
    if let Some(t) = ground_truth {
        if t.dims() != op.cube_dims() {
            return Err(CoreError::DimensionMismatch("ground truth vs operator".into()));
        }
    }
    let problem = Problem {
        op,
        y,
        truth: ground_truth,
        y_norm: y.norm(),
    };
    let (bands, rows, cols) = op.cube_dims();
    let gen_cfg = config.network.generator_config(bands, rows, cols);
    if config.mode.uses_generator() {
        gen_cfg.validate()?;
    }

    let mut p = op.adjoint(y)?;
    if config.normalized_init {
        let mut scaled = y.clone();
        for (s, &d) in scaled.as_mut_slice().iter_mut().zip(op.hth_diag().as_slice()) {
            *s /= d + config.mu;
        }
        p = op.adjoint(&scaled)?;
    }

    if config.warm_start && config.mode != SolverMode::AdmmTv {
        let t0 = Instant::now();
        let w = &config.warm_start_settings;
        let mut tv_cfg = SolverConfig::for_mode(SolverMode::AdmmTv);
        tv_cfg.outer_iters = w.outer_iters;
        tv_cfg.eta = w.eta;
        tv_cfg.lambda = w.lambda;
        tv_cfg.eta_decay = w.eta_decay;
        tv_cfg.tv = config.tv.clone();
        tv_cfg.normalized_init = config.normalized_init;
        let mut tv_report = RunReport::new(&tv_cfg);
        let warm = run_inner(&tv_cfg, op, y, ground_truth, &mut tv_report)?;
        report.warm_start = Some(WarmStartSummary {
            outer_iters: w.outer_iters,
            psnr_db: problem.psnr(&warm)?,
        });
        report.timings.warm_start_s = t0.elapsed().as_secs_f64();
        p = warm;
    }

    if config.mode == SolverMode::SoleDip {
        return run_sole(config, &problem, &gen_cfg, report);
    }

    let e = SeedInput::for_config(&gen_cfg, config.seeds.input);
    let zeros = || SpectralCube::zeros(bands, rows, cols);
    let mut b = zeros();
    let mut splitting = if config.mode.uses_tv_branch() {
        report.splitting_allocated = true;
        Some((p.clone(), zeros()))
    } else {
        None
    };
    let mut x = p.clone();

    for k in 0..config.outer_iters {
        let eta = config.eta_at(k);
        let mut diag = IterationDiagnostics {
            k,
            eta,
            sigma: None,
            inner_iters: 0,
            inner_loss_first: None,
            inner_loss_last: None,
            fidelity: 0.0,
            fidelity_ratio: 0.0,
            prior_residual: None,
            psnr_db: None,
        };

        // x
        let t0 = Instant::now();
        x = match config.mode {
            SolverMode::SingleFidelity => {
                let pb = p.zip_map(&b, |a, c| a + c)?;
                match config.single_fidelity_denoiser {
                    DenoiserKind::Identity => pb,
                    DenoiserKind::Tv => {
                        let sigma = config.lambda / config.mu;
                        diag.sigma = Some(sigma);
                        let spec = DenoiserSpec::tv(sigma, config.tv.iters, config.tv.tolerance);
                        apply_denoiser(&pb, &spec)?
                    }
                }
            }
            SolverMode::AdmmTv => {
                let (u, v) = splitting.as_ref().expect("TV branch allocated");
                x_update(op, y, None, Some((u, v)), 0.0, eta)?
            }
            _ => {
                let split = splitting.as_ref().map(|(u, v)| (u, v));
                x_update(op, y, Some((&p, &b)), split, config.mu, eta)?
            }
        };
        check_state("x", &x)?;
        report.timings.x_update_s += t0.elapsed().as_secs_f64();

        // u, v
        if let Some((u, v)) = splitting.as_mut() {
            let t0 = Instant::now();
            let sigma = config.lambda / eta;
            diag.sigma = Some(sigma);
            let spec = DenoiserSpec::tv(sigma, config.tv.iters, config.tv.tolerance);
            *u = u_update(&x, v, &spec)?;
            *v = v_update(v, &x, u)?;
            check_state("u", u)?;
            check_state("v", v)?;
            report.timings.denoise_s += t0.elapsed().as_secs_f64();
        }

        // Θ, then b
        if config.mode.uses_generator() {
            let t0 = Instant::now();
            let iters = config.schedule.iters_at(k);
            let spec = match config.mode {
                SolverMode::SingleFidelity => DipLossSpec::single(config.mu, &x, &b),
                _ => DipLossSpec::dual(config.rho, config.mu, &x, &b),
            };
            let schedule = InnerSchedule {
                iters,
                seed: config.seeds.init.wrapping_add(k as u64),
            };
            let fit = train(config, &problem, &spec, &gen_cfg, &e, schedule)?;
            report.generator_steps += iters;
            report.timings.generator_s += t0.elapsed().as_secs_f64();
            diag.inner_iters = iters;
            diag.inner_loss_first = fit.losses.first().copied();
            diag.inner_loss_last = fit.losses.last().copied();
            p = fit.prior;

            let resid: f64 = x
                .as_slice()
                .iter()
                .zip(p.as_slice())
                .zip(b.as_slice())
                .map(|((xv, pv), bv)| (xv - pv - bv) * (xv - pv - bv))
                .sum();
            diag.prior_residual = Some(resid.sqrt());
            b = b_update(&b, &x, &p)?;
            check_state("b", &b)?;
        }

        let (fid, ratio) = problem.fidelity(&x)?;
        diag.fidelity = fid;
        diag.fidelity_ratio = ratio;
        diag.psnr_db = problem.psnr(&x)?;
        report.diagnostics.push(diag);
    }

    Ok(x.clipped(0.0, 1.0))
}

fn run_sole(
    config: &SolverConfig,
    problem: &Problem<'_>,
    gen_cfg: &GeneratorConfig,
    report: &mut RunReport,
) -> Result<SpectralCube> {
    let e = SeedInput::for_config(gen_cfg, config.seeds.input);
    let iters = config.sole_steps();
    let t0 = Instant::now();
    let schedule = InnerSchedule {
        iters,
        seed: config.seeds.init,
    };
    let fit = train(config, problem, &DipLossSpec::sole(), gen_cfg, &e, schedule)?;
    report.timings.generator_s += t0.elapsed().as_secs_f64();
    report.generator_steps += iters;
    let (fid, ratio) = problem.fidelity(&fit.prior)?;
    report.diagnostics.push(IterationDiagnostics {
        k: 0,
        eta: 0.0,
        sigma: None,
        inner_iters: iters,
        inner_loss_first: fit.losses.first().copied(),
        inner_loss_last: fit.losses.last().copied(),
        fidelity: fid,
        fidelity_ratio: ratio,
        prior_residual: None,
        psnr_db: problem.psnr(&fit.prior)?,
    });
    report.sole_loss_trace = fit.losses;
    Ok(fit.prior.clipped(0.0, 1.0))
}
