use crate::cube::{Measurement, SpectralCube};
use crate::error::{CoreError, Result};
use crate::forward_model::SensingOperator;
use crate::priors::{apply_denoiser, DenoiserSpec};

/// Closed-form minimizer of
/// `½‖y − Hx‖² + (μ/2)‖x − p − b‖² + (η/2)‖x − u − v‖²`.
///
/// With `c = (μ(p + b) + η(u + v)) / (μ + η)` and `H Hᵀ` diagonal,
/// `x = c + Hᵀ[(y − Hc) ⊘ (Diag(H Hᵀ) + μ + η)]`.
///
/// `generator = (p, b)` and `splitting = (u, v)`; a missing pair drops its
/// term, so its weight is never read.
pub fn x_update(
    op: &SensingOperator,
    y: &Measurement,
    generator: Option<(&SpectralCube, &SpectralCube)>,
    splitting: Option<(&SpectralCube, &SpectralCube)>,
    mu: f64,
    eta: f64,
) -> Result<SpectralCube> {
    let mu = if generator.is_some() { mu } else { 0.0 };
    let eta = if splitting.is_some() { eta } else { 0.0 };
    if !(mu >= 0.0 && eta >= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "penalties must be >= 0 (μ={mu}, η={eta})"
        )));
    }
    let zeta = mu + eta;
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(CoreError::InvalidArgument("x-update needs μ + η > 0".into()));
    }
    let (bands, rows, cols) = op.cube_dims();
    let mut c = SpectralCube::zeros(bands, rows, cols);
    if let Some((p, b)) = generator {
        p.check_same_shape(&c)?;
        b.check_same_shape(&c)?;
        let w = mu / zeta;
        for ((o, &pv), &bv) in c.as_mut_slice().iter_mut().zip(p.as_slice()).zip(b.as_slice()) {
            *o += w * (pv + bv);
        }
    }
    if let Some((u, v)) = splitting {
        u.check_same_shape(&c)?;
        v.check_same_shape(&c)?;
        let w = eta / zeta;
        for ((o, &uv), &vv) in c.as_mut_slice().iter_mut().zip(u.as_slice()).zip(v.as_slice()) {
            *o += w * (uv + vv);
        }
    }
    let mut r = op.encode(&c)?;
    if r.dims() != y.dims() {
        return Err(CoreError::DimensionMismatch("measurement vs operator".into()));
    }
    for ((rv, &yv), &d) in r
        .as_mut_slice()
        .iter_mut()
        .zip(y.as_slice())
        .zip(op.hth_diag().as_slice())
    {
        *rv = (yv - *rv) / (d + zeta);
    }
    let correction = op.adjoint(&r)?;
    for (o, &dv) in c.as_mut_slice().iter_mut().zip(correction.as_slice()) {
        *o += dv;
    }
    Ok(c)
}

/// `u = D_σ(x − v)`.
pub fn u_update(x: &SpectralCube, v: &SpectralCube, spec: &DenoiserSpec) -> Result<SpectralCube> {
    let diff = x.zip_map(v, |a, b| a - b)?;
    apply_denoiser(&diff, spec)
}

/// `v' = v − (x − u)`.
pub fn v_update(v: &SpectralCube, x: &SpectralCube, u: &SpectralCube) -> Result<SpectralCube> {
    dual_step(v, x, u)
}

/// `b' = b − (x − p)`.
pub fn b_update(b: &SpectralCube, x: &SpectralCube, p: &SpectralCube) -> Result<SpectralCube> {
    dual_step(b, x, p)
}

fn dual_step(dual: &SpectralCube, x: &SpectralCube, z: &SpectralCube) -> Result<SpectralCube> {
    dual.check_same_shape(x)?;
    dual.check_same_shape(z)?;
    let data = dual
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .zip(z.as_slice())
        .map(|((&d, &xv), &zv)| d - (xv - zv))
        .collect();
    Ok(dual.with_data(data))
}
