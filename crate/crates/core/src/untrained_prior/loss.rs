use serde::{Deserialize, Serialize};

use crate::cube::{Measurement, SpectralCube};
use crate::error::{CoreError, Result};
use crate::forward_model::SensingOperator;

/// Which training objective the generator minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `(ρ/2)‖y − H T‖² + (μ/2)‖x − T − b‖²`
    Dual,
    /// `½‖y − H T‖² + μ‖x − T − b‖²`
    Single,
    /// `‖y − H T‖²`
    Sole,
}

#[derive(Debug, Clone, Copy)]
pub struct DipLossSpec<'a> {
    pub mode: LossMode,
    pub rho: f64,
    pub mu: f64,
    pub target: Option<&'a SpectralCube>,
    pub offset: Option<&'a SpectralCube>,
}

impl<'a> DipLossSpec<'a> {
    pub fn dual(rho: f64, mu: f64, target: &'a SpectralCube, offset: &'a SpectralCube) -> Self {
        Self {
            mode: LossMode::Dual,
            rho,
            mu,
            target: Some(target),
            offset: Some(offset),
        }
    }

    pub fn single(mu: f64, target: &'a SpectralCube, offset: &'a SpectralCube) -> Self {
        Self {
            mode: LossMode::Single,
            rho: 1.0,
            mu,
            target: Some(target),
            offset: Some(offset),
        }
    }

    pub fn sole() -> Self {
        Self {
            mode: LossMode::Sole,
            rho: 1.0,
            mu: 0.0,
            target: None,
            offset: None,
        }
    }
}

/// A [`DipLossSpec`] bound to a problem, with `x − b` precomputed.
#[derive(Debug, Clone)]
pub struct DipObjective<'a> {
    op: &'a SensingOperator,
    y: &'a Measurement,
    mode: LossMode,
    rho: f64,
    mu: f64,
    anchor: Option<SpectralCube>,
    hx: Measurement,
    residual_back: SpectralCube,
}

/// Loss value and its gradient w.r.t. the generator output.
#[derive(Debug, Clone)]
pub struct OutputGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl<'a> DipObjective<'a> {
    pub fn new(op: &'a SensingOperator, y: &'a Measurement, spec: &DipLossSpec<'_>) -> Result<Self> {
        if y.dims() != op.measurement_dims() {
            return Err(CoreError::DimensionMismatch(format!(
                "measurement {:?} vs operator {:?}",
                y.dims(),
                op.measurement_dims()
            )));
        }
        let anchor = match spec.mode {
            LossMode::Sole => None,
            LossMode::Dual | LossMode::Single => {
                if !(spec.mu.is_finite() && spec.mu > 0.0) {
                    return Err(CoreError::InvalidConfig("proximity weight μ must be > 0".into()));
                }
                if spec.mode == LossMode::Dual && !(spec.rho.is_finite() && spec.rho >= 0.0) {
                    return Err(CoreError::InvalidConfig("measurement weight ρ must be >= 0".into()));
                }
                let (x, b) = match (spec.target, spec.offset) {
                    (Some(x), Some(b)) => (x, b),
                    _ => {
                        return Err(CoreError::InvalidConfig(
                            "dual and single losses need target x and offset b".into(),
                        ))
                    }
                };
                if x.dims() != op.cube_dims() {
                    return Err(CoreError::DimensionMismatch("loss target vs operator".into()));
                }
                Some(x.zip_map(b, |a, c| a - c)?)
            }
        };
        let (bands, rows, cols) = op.cube_dims();
        let (mr, mc) = op.measurement_dims();
        Ok(Self {
            op,
            y,
            mode: spec.mode,
            rho: spec.rho,
            mu: spec.mu,
            anchor,
            hx: Measurement::zeros(mr, mc),
            residual_back: SpectralCube::zeros(bands, rows, cols),
        })
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    /// Loss and `d loss / d t` at generator output `t`.
    pub fn evaluate(&mut self, t: &SpectralCube) -> OutputGradient {
        self.op.encode_into(t, &mut self.hx);
        let mut resid_sq = 0.0;
        for (h, &yv) in self.hx.as_mut_slice().iter_mut().zip(self.y.as_slice()) {
            let r = yv - *h;
            resid_sq += r * r;
            *h = r;
        }
        self.op.adjoint_into(&self.hx, &mut self.residual_back);
        let back = self.residual_back.as_slice();

        let (meas_w, prox_w) = match self.mode {
            LossMode::Dual => (self.rho, self.mu),
            LossMode::Single => (1.0, 2.0 * self.mu),
            LossMode::Sole => (2.0, 0.0),
        };
        let mut loss = 0.5 * meas_w * resid_sq;
        let grad = match &self.anchor {
            Some(anchor) => {
                let mut prox_sq = 0.0;
                let g = back
                    .iter()
                    .zip(anchor.as_slice())
                    .zip(t.as_slice())
                    .map(|((&hr, &a), &tv)| {
                        let d = a - tv;
                        prox_sq += d * d;
                        -meas_w * hr - prox_w * d
                    })
                    .collect();
                loss += 0.5 * prox_w * prox_sq;
                g
            }
            None => back.iter().map(|&hr| -meas_w * hr).collect(),
        };
        OutputGradient { loss, grad }
    }
}
