//! Untrained generator prior: the network `T_Θ(e)`, its training losses,
//! exact gradients and the Adam loop that refits it inside every outer
//! iteration of the solver.

mod adam;
mod loss;
mod network;
mod scalar;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LEARNING_RATE};
pub use loss::{DipLossSpec, DipObjective, LossMode, OutputGradient};
pub use network::{GeneratorConfig, Layer, LayerKind, Network, Tape, DEFAULT_LEAKY_SLOPE};
pub use scalar::Scalar;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{Measurement, SpectralCube};
use crate::error::{CoreError, Result};
use crate::forward_model::SensingOperator;

/// Upper end of the uniform law the seed input is drawn from.
pub const SEED_INPUT_SCALE: f64 = 0.1;

/// Flat parameter vector; per-layer views come from [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams<T> {
    pub values: Vec<T>,
}

/// The fixed network input `e`, i.i.d. uniform on `[0, 0.1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedInput {
    cube: SpectralCube,
}

impl SeedInput {
    pub fn new(bands: usize, rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..bands * rows * cols)
            .map(|_| rng.gen_range(0.0..SEED_INPUT_SCALE))
            .collect();
        Self {
            cube: SpectralCube::from_vec(bands, rows, cols, data).expect("consistent dims"),
        }
    }

    pub fn for_config(cfg: &GeneratorConfig, seed: u64) -> Self {
        Self::new(cfg.bands, cfg.rows, cfg.cols, seed)
    }

    pub fn cube(&self) -> &SpectralCube {
        &self.cube
    }

    fn cast<T: Scalar>(&self) -> Vec<T> {
        self.cube.as_slice().iter().map(|&v| T::of(v)).collect()
    }
}

/// He-uniform kernels scaled by fan-in, zero biases.
pub fn init_generator<T: Scalar>(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratorParams<T>> {
    let net = Network::new(cfg)?;
    Ok(init_params(&net, seed))
}

fn init_params<T: Scalar>(net: &Network, seed: u64) -> GeneratorParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = net.config().leaky_slope;
    let mut values = vec![T::zero(); net.param_count()];
    for layer in net.layers() {
        if layer.weight_len == 0 {
            continue;
        }
        let bound = (6.0 / ((1.0 + slope * slope) * layer.fan_in() as f64)).sqrt();
        for w in &mut values[layer.offset..layer.offset + layer.weight_len] {
            *w = T::of(rng.gen_range(-bound..bound));
        }
    }
    GeneratorParams { values }
}

fn to_cube<T: Scalar>(cfg: &GeneratorConfig, out: &[T]) -> SpectralCube {
    SpectralCube::from_vec(cfg.bands, cfg.rows, cfg.cols, out.iter().map(|v| v.as_f64()).collect())
        .expect("network output has cube shape")
}

fn check_input(cfg: &GeneratorConfig, e: &SeedInput) -> Result<()> {
    if e.cube.dims() != (cfg.bands, cfg.rows, cfg.cols) {
        return Err(CoreError::DimensionMismatch(format!(
            "seed input {:?} vs generator {:?}",
            e.cube.dims(),
            (cfg.bands, cfg.rows, cfg.cols)
        )));
    }
    Ok(())
}

/// `T_Θ(e)` as a cube with values in `(0, 1)`.
pub fn generator_forward<T: Scalar>(
    params: &GeneratorParams<T>,
    cfg: &GeneratorConfig,
    e: &SeedInput,
) -> Result<SpectralCube> {
    let net = Network::new(cfg)?;
    check_input(cfg, e)?;
    let out = net.infer(&params.values, &e.cast::<T>());
    let cube = to_cube(cfg, &out);
    if !cube.is_finite() {
        return Err(CoreError::NonFinite("generator output".into()));
    }
    Ok(cube)
}

/// Training loss and its exact gradient w.r.t. every parameter.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad<T: Scalar>(
    params: &GeneratorParams<T>,
    cfg: &GeneratorConfig,
    e: &SeedInput,
    op: &SensingOperator,
    y: &Measurement,
    spec: &DipLossSpec<'_>,
) -> Result<(f64, Vec<T>)> {
    let net = Network::new(cfg)?;
    check_input(cfg, e)?;
    let mut objective = DipObjective::new(op, y, spec)?;
    let input = e.cast::<T>();
    evaluate(&net, &mut objective, &params.values, &input)
}

fn evaluate<T: Scalar>(
    net: &Network,
    objective: &mut DipObjective<'_>,
    params: &[T],
    input: &[T],
) -> Result<(f64, Vec<T>)> {
    let tape = net.forward(params, input);
    let t = to_cube(net.config(), tape.output());
    let og = objective.evaluate(&t);
    if !og.loss.is_finite() {
        return Err(CoreError::NonFinite(format!("DIP loss {}", og.loss)));
    }
    let d_out: Vec<T> = og.grad.iter().map(|&g| T::of(g)).collect();
    Ok((og.loss, net.backward(params, &tape, &d_out)))
}

/// How long each inner fit runs and which seed initializes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSchedule {
    pub iters: usize,
    pub seed: u64,
}

/// Growing inner-iteration count `min(cap, base + step * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopSchedule {
    pub base: usize,
    pub step: usize,
    pub cap: usize,
}

impl EarlyStopSchedule {
    pub const FULL_SCALE: Self = Self {
        base: 100,
        step: 25,
        cap: 900,
    };
    pub const DESK_SCALE: Self = Self {
        base: 50,
        step: 10,
        cap: 300,
    };

    pub fn iters_at(&self, outer: usize) -> usize {
        (self.base + self.step * outer).min(self.cap)
    }

    /// Total inner steps over `outer_iters` outer iterations.
    pub fn total(&self, outer_iters: usize) -> usize {
        (0..outer_iters).map(|k| self.iters_at(k)).sum()
    }
}

impl Default for EarlyStopSchedule {
    fn default() -> Self {
        Self::DESK_SCALE
    }
}

#[derive(Debug, Clone)]
pub struct InnerLoopOutput {
    /// `T_Θ(e)` after the last Adam step.
    pub prior: SpectralCube,
    /// Loss before each Adam step.
    pub losses: Vec<f64>,
}

/// Fit fresh generator parameters for `schedule.iters` Adam steps and
/// return the resulting image. The parameters are dropped afterwards.
pub fn train_inner_loop<T: Scalar>(
    op: &SensingOperator,
    y: &Measurement,
    spec: &DipLossSpec<'_>,
    cfg: &GeneratorConfig,
    e: &SeedInput,
    schedule: InnerSchedule,
    learning_rate: f64,
) -> Result<InnerLoopOutput> {
    if schedule.iters == 0 {
        return Err(CoreError::InvalidConfig(
            "inner loop needs at least one iteration".into(),
        ));
    }
    let net = Network::new(cfg)?;
    check_input(cfg, e)?;
    if op.cube_dims() != (cfg.bands, cfg.rows, cfg.cols) {
        return Err(CoreError::DimensionMismatch("generator vs operator dims".into()));
    }
    let mut objective = DipObjective::new(op, y, spec)?;
    let input = e.cast::<T>();
    let mut params = init_params::<T>(&net, schedule.seed).values;
    let mut adam = AdamState::<T>::new(params.len(), learning_rate);
    let mut losses = Vec::with_capacity(schedule.iters);

    for step in 0..schedule.iters {
        let (loss, grad) = match evaluate(&net, &mut objective, &params, &input) {
            Ok(v) => v,
            Err(_) => {
                return Err(CoreError::Diverged(format!(
                    "inner loop step {step}: non-finite loss after trace {losses:?}"
                )))
            }
        };
        losses.push(loss);
        adam.step(&mut params, &grad);
    }

    let out = net.infer(&params, &input);
    let prior = to_cube(cfg, &out);
    if !prior.is_finite() {
        return Err(CoreError::Diverged("generator output non-finite after training".into()));
    }
    Ok(InnerLoopOutput { prior, losses })
}
