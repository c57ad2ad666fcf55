//! Skip-free encoder/decoder generator with hand-written reverse mode.
//!
//! Layout for `widths = [w0, .., w{L-1}]` and `bands` spectral channels:
//!
//! ```text
//! encoder   level l:  conv3x3(c -> w_l), leaky, avgpool2
//! bottleneck:         conv3x3(w_{L-1} -> w_{L-1}), leaky
//! decoder   level l:  convT2x2/s2(c -> w_l), leaky, conv3x3(w_l -> w_l), leaky
//! head:               conv3x3(w_0 -> bands), logistic
//! ```
//!
//! Every tensor is channel-major `[c][row][col]`, matching [`SpectralCube`].
//!
//! [`SpectralCube`]: crate::cube::SpectralCube

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{CoreError, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub bands: usize,
    pub rows: usize,
    pub cols: usize,
    /// One entry per encoder/decoder level.
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
}

impl GeneratorConfig {
    /// Three levels, widths (16, 32, 64).
    pub fn desk_scale(bands: usize, rows: usize, cols: usize) -> Self {
        Self {
            bands,
            rows,
            cols,
            widths: vec![16, 32, 64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn levels(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.rows == 0 || self.cols == 0 {
            return Err(CoreError::InvalidConfig("generator dims must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(CoreError::InvalidConfig(
                "generator needs >= 1 level with positive widths".into(),
            ));
        }
        let factor = 1usize << self.levels();
        if !self.rows.is_multiple_of(factor) || !self.cols.is_multiple_of(factor) {
            return Err(CoreError::InvalidConfig(format!(
                "cube {}x{} not divisible by 2^{} = {factor}",
                self.rows,
                self.cols,
                self.levels()
            )));
        }
        if !(self.leaky_slope.is_finite() && (0.0..1.0).contains(&self.leaky_slope)) {
            return Err(CoreError::InvalidConfig("leaky slope must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3,
    ConvT2,
    AvgPool2,
    LeakyRelu,
    Logistic,
}

#[derive(Debug, Clone, Copy)]
pub struct Layer {
    pub kind: LayerKind,
    pub in_shape: (usize, usize, usize),
    pub out_shape: (usize, usize, usize),
    /// Start of this layer's weights in the flat parameter vector.
    pub offset: usize,
    pub weight_len: usize,
    pub bias_len: usize,
}

impl Layer {
    pub fn param_len(&self) -> usize {
        self.weight_len + self.bias_len
    }

    /// Inputs feeding one output unit; drives the init bound.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv3 => self.in_shape.0 * 9,
            LayerKind::ConvT2 => self.in_shape.0,
            _ => 0,
        }
    }
}

/// The fixed layer graph for a config. Holds no parameters.
#[derive(Debug, Clone)]
pub struct Network {
    config: GeneratorConfig,
    layers: Vec<Layer>,
    param_count: usize,
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<T>>,
    /// im2col buffers of the 3x3 convolutions, indexed by layer.
    cols: Vec<Vec<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("tape holds at least the input")
    }

    /// Input of layer `i`.
    pub fn activation(&self, i: usize) -> &[T] {
        &self.acts[i]
    }
}

impl Network {
    pub fn new(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut shape = (config.bands, config.rows, config.cols);

        let mut push = |kind: LayerKind, out_c: usize, shape: &mut (usize, usize, usize)| {
            let (c, h, w) = *shape;
            let (out_shape, weight_len, bias_len) = match kind {
                LayerKind::Conv3 => ((out_c, h, w), out_c * c * 9, out_c),
                LayerKind::ConvT2 => ((out_c, 2 * h, 2 * w), out_c * 4 * c, out_c),
                LayerKind::AvgPool2 => ((c, h / 2, w / 2), 0, 0),
                LayerKind::LeakyRelu | LayerKind::Logistic => ((c, h, w), 0, 0),
            };
            layers.push(Layer {
                kind,
                in_shape: *shape,
                out_shape,
                offset,
                weight_len,
                bias_len,
            });
            offset += weight_len + bias_len;
            *shape = out_shape;
        };

        for &w in &config.widths {
            push(LayerKind::Conv3, w, &mut shape);
            push(LayerKind::LeakyRelu, 0, &mut shape);
            push(LayerKind::AvgPool2, 0, &mut shape);
        }
        let deepest = *config.widths.last().expect("validated non-empty");
        push(LayerKind::Conv3, deepest, &mut shape);
        push(LayerKind::LeakyRelu, 0, &mut shape);
        for &w in config.widths.iter().rev() {
            push(LayerKind::ConvT2, w, &mut shape);
            push(LayerKind::LeakyRelu, 0, &mut shape);
            push(LayerKind::Conv3, w, &mut shape);
            push(LayerKind::LeakyRelu, 0, &mut shape);
        }
        push(LayerKind::Conv3, config.bands, &mut shape);
        push(LayerKind::Logistic, 0, &mut shape);

        Ok(Self {
            config: config.clone(),
            layers,
            param_count: offset,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn input_len(&self) -> usize {
        self.config.bands * self.config.rows * self.config.cols
    }

    pub fn output_len(&self) -> usize {
        self.input_len()
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward<T: Scalar>(&self, params: &[T], input: &[T]) -> Tape<T> {
        assert_eq!(params.len(), self.param_count, "parameter vector length");
        assert_eq!(input.len(), self.input_len(), "generator input length");
        let slope = T::of(self.config.leaky_slope);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut cols = vec![Vec::new(); self.layers.len()];
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = acts.last().expect("non-empty");
            let (oc, oh, ow) = layer.out_shape;
            let mut y = vec![T::zero(); oc * oh * ow];
            match layer.kind {
                LayerKind::Conv3 => {
                    let (w, b) = split_params(params, layer);
                    let col = im2col3(x, layer.in_shape);
                    conv3_forward(w, b, &col, layer, &mut y);
                    cols[i] = col;
                }
                LayerKind::ConvT2 => {
                    let (w, b) = split_params(params, layer);
                    convt2_forward(w, b, x, layer, &mut y);
                }
                LayerKind::AvgPool2 => pool2_forward(x, layer.in_shape, &mut y),
                LayerKind::LeakyRelu => {
                    for (o, &v) in y.iter_mut().zip(x) {
                        *o = if v > T::zero() { v } else { slope * v };
                    }
                }
                LayerKind::Logistic => {
                    for (o, &v) in y.iter_mut().zip(x) {
                        *o = logistic(v);
                    }
                }
            }
            acts.push(y);
        }
        Tape { acts, cols }
    }

    /// Output only.
    pub fn infer<T: Scalar>(&self, params: &[T], input: &[T]) -> Vec<T> {
        let mut tape = self.forward(params, input);
        tape.acts.pop().expect("non-empty")
    }

    /// Gradient of a scalar loss w.r.t. all parameters, given `d loss / d output`.
    pub fn backward<T: Scalar>(&self, params: &[T], tape: &Tape<T>, d_output: &[T]) -> Vec<T> {
        assert_eq!(d_output.len(), self.output_len(), "output gradient length");
        let slope = T::of(self.config.leaky_slope);
        let mut grad = vec![T::zero(); self.param_count];
        let mut delta = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.acts[i];
            let y = &tape.acts[i + 1];
            let need_input_grad = i > 0;
            let (c, h, w) = layer.in_shape;
            match layer.kind {
                LayerKind::Conv3 => {
                    let (wts, _) = split_params(params, layer);
                    let (gw, gb) = split_params_mut(&mut grad, layer);
                    delta = conv3_backward(wts, &tape.cols[i], &delta, layer, gw, gb, need_input_grad);
                }
                LayerKind::ConvT2 => {
                    let (wts, _) = split_params(params, layer);
                    let (gw, gb) = split_params_mut(&mut grad, layer);
                    delta = convt2_backward(wts, x, &delta, layer, gw, gb, need_input_grad);
                }
                LayerKind::AvgPool2 => {
                    let mut dx = vec![T::zero(); c * h * w];
                    pool2_backward(&delta, layer.in_shape, &mut dx);
                    delta = dx;
                }
                LayerKind::LeakyRelu => {
                    for (d, &v) in delta.iter_mut().zip(x) {
                        if v <= T::zero() {
                            *d *= slope;
                        }
                    }
                }
                LayerKind::Logistic => {
                    for (d, &s) in delta.iter_mut().zip(y) {
                        *d *= s * (T::one() - s);
                    }
                }
            }
        }
        grad
    }
}

#[inline]
fn logistic<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn split_params<'a, T>(params: &'a [T], layer: &Layer) -> (&'a [T], &'a [T]) {
    let all = &params[layer.offset..layer.offset + layer.param_len()];
    all.split_at(layer.weight_len)
}

fn split_params_mut<'a, T>(params: &'a mut [T], layer: &Layer) -> (&'a mut [T], &'a mut [T]) {
    let all = &mut params[layer.offset..layer.offset + layer.param_len()];
    all.split_at_mut(layer.weight_len)
}

/// `[c*9 + ky*3 + kx][y*w + x] = input[c][y + ky - 1][x + kx - 1]`, zero padded.
fn im2col3<T: Scalar>(input: &[T], (c, h, w): (usize, usize, usize)) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    for ch in 0..c {
        let src = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ch * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y + ky;
                    if sy == 0 || sy > h {
                        continue;
                    }
                    let sy = sy - 1;
                    let dst = &mut row[y * w + x_lo..y * w + x_hi];
                    let s0 = sy * w + x_lo + kx - 1;
                    dst.copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col3`]: scatter-add columns back to an image.
fn col2im3<T: Scalar>(col: &[T], (c, h, w): (usize, usize, usize)) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let dst = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ch * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y + ky;
                    if sy == 0 || sy > h {
                        continue;
                    }
                    let sy = sy - 1;
                    let s0 = sy * w + x_lo + kx - 1;
                    for (d, &v) in dst[s0..s0 + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&row[y * w + x_lo..y * w + x_hi])
                    {
                        *d += v;
                    }
                }
            }
        }
    }
    out
}

fn conv3_forward<T: Scalar>(weights: &[T], bias: &[T], col: &[T], layer: &Layer, out: &mut [T]) {
    let (c, h, w) = layer.in_shape;
    let oc = layer.out_shape.0;
    let (k, hw) = (c * 9, h * w);
    for (o, chunk) in out.chunks_mut(hw).enumerate() {
        chunk.fill(bias[o]);
    }
    T::gemm(oc, k, hw, T::one(), weights, (k, 1), col, (hw, 1), T::one(), out);
}

fn conv3_backward<T: Scalar>(
    weights: &[T],
    col: &[T],
    delta: &[T],
    layer: &Layer,
    gw: &mut [T],
    gb: &mut [T],
    need_input_grad: bool,
) -> Vec<T> {
    let (c, h, w) = layer.in_shape;
    let oc = layer.out_shape.0;
    let (k, hw) = (c * 9, h * w);
    for (o, chunk) in delta.chunks(hw).enumerate() {
        gb[o] += chunk.iter().copied().sum::<T>();
    }
    // dW = delta · colᵀ
    T::gemm(oc, hw, k, T::one(), delta, (hw, 1), col, (1, hw), T::one(), gw);
    if !need_input_grad {
        return Vec::new();
    }
    // dcol = Wᵀ · delta
    let mut dcol = vec![T::zero(); k * hw];
    T::gemm(
        k,
        oc,
        hw,
        T::one(),
        weights,
        (1, k),
        delta,
        (hw, 1),
        T::zero(),
        &mut dcol,
    );
    col2im3(&dcol, layer.in_shape)
}

/// Weights are `[(o*4 + a*2 + b)][c]`; `out[o][2i+a][2j+b] += W · in[c][i][j]`.
fn convt2_forward<T: Scalar>(weights: &[T], bias: &[T], input: &[T], layer: &Layer, out: &mut [T]) {
    let (c, h, w) = layer.in_shape;
    let oc = layer.out_shape.0;
    let hw = h * w;
    let mut tmp = vec![T::zero(); oc * 4 * hw];
    T::gemm(
        oc * 4,
        c,
        hw,
        T::one(),
        weights,
        (c, 1),
        input,
        (hw, 1),
        T::zero(),
        &mut tmp,
    );
    let ow = 2 * w;
    for o in 0..oc {
        let plane = &mut out[o * 4 * hw..(o + 1) * 4 * hw];
        for a in 0..2 {
            for b in 0..2 {
                let src = &tmp[(o * 4 + a * 2 + b) * hw..][..hw];
                for i in 0..h {
                    let drow = &mut plane[(2 * i + a) * ow..(2 * i + a + 1) * ow];
                    for j in 0..w {
                        drow[2 * j + b] = src[i * w + j] + bias[o];
                    }
                }
            }
        }
    }
}

fn convt2_backward<T: Scalar>(
    weights: &[T],
    input: &[T],
    delta: &[T],
    layer: &Layer,
    gw: &mut [T],
    gb: &mut [T],
    need_input_grad: bool,
) -> Vec<T> {
    let (c, h, w) = layer.in_shape;
    let oc = layer.out_shape.0;
    let hw = h * w;
    let ow = 2 * w;
    let mut gathered = vec![T::zero(); oc * 4 * hw];
    for o in 0..oc {
        let plane = &delta[o * 4 * hw..(o + 1) * 4 * hw];
        gb[o] += plane.iter().copied().sum::<T>();
        for a in 0..2 {
            for b in 0..2 {
                let dst = &mut gathered[(o * 4 + a * 2 + b) * hw..][..hw];
                for i in 0..h {
                    let srow = &plane[(2 * i + a) * ow..(2 * i + a + 1) * ow];
                    for j in 0..w {
                        dst[i * w + j] = srow[2 * j + b];
                    }
                }
            }
        }
    }
    // dW = gathered · inputᵀ
    T::gemm(
        oc * 4,
        hw,
        c,
        T::one(),
        &gathered,
        (hw, 1),
        input,
        (1, hw),
        T::one(),
        gw,
    );
    if !need_input_grad {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); c * hw];
    T::gemm(
        c,
        oc * 4,
        hw,
        T::one(),
        weights,
        (1, c),
        &gathered,
        (hw, 1),
        T::zero(),
        &mut dx,
    );
    dx
}

fn pool2_forward<T: Scalar>(input: &[T], (c, h, w): (usize, usize, usize), out: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for i in 0..oh {
            let r0 = &src[2 * i * w..(2 * i + 1) * w];
            let r1 = &src[(2 * i + 1) * w..(2 * i + 2) * w];
            for j in 0..ow {
                dst[i * ow + j] = quarter * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
            }
        }
    }
}

fn pool2_backward<T: Scalar>(delta: &[T], (c, h, w): (usize, usize, usize), dx: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    for ch in 0..c {
        let src = &delta[ch * oh * ow..(ch + 1) * oh * ow];
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let g = quarter * src[i * ow + j];
                dst[2 * i * w + 2 * j] = g;
                dst[2 * i * w + 2 * j + 1] = g;
                dst[(2 * i + 1) * w + 2 * j] = g;
                dst[(2 * i + 1) * w + 2 * j + 1] = g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            bands: 2,
            rows: 4,
            cols: 4,
            widths: vec![3, 4],
            leaky_slope: 0.1,
        }
    }

    #[test]
    fn layer_shapes_round_trip() {
        let net = Network::new(&tiny()).unwrap();
        let last = net.layers().last().unwrap();
        assert_eq!(last.out_shape, (2, 4, 4));
        assert_eq!(net.layers()[0].in_shape, (2, 4, 4));
        // 2 levels: (conv, leaky, pool) x2 + (conv, leaky) + (convT, leaky, conv, leaky) x2 + (conv, logistic)
        assert_eq!(net.layers().len(), 6 + 2 + 8 + 2);
    }

    #[test]
    fn indivisible_dims_rejected() {
        let mut cfg = tiny();
        cfg.rows = 6;
        assert!(matches!(Network::new(&cfg), Err(CoreError::InvalidConfig(_))));
    }

    #[test]
    fn im2col_col2im_adjoint() {
        let shape = (2, 3, 5);
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let cvec: Vec<f64> = (0..n * 9).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        let col = im2col3(&x, shape);
        let back = col2im3(&cvec, shape);
        let lhs: f64 = col.iter().zip(&cvec).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn conv3_matches_direct_loop() {
        let layer = Layer {
            kind: LayerKind::Conv3,
            in_shape: (2, 3, 4),
            out_shape: (3, 3, 4),
            offset: 0,
            weight_len: 3 * 2 * 9,
            bias_len: 3,
        };
        let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let wts: Vec<f64> = (0..54).map(|i| (i as f64 * 0.11).cos()).collect();
        let bias = vec![0.1, -0.2, 0.3];
        let mut out = vec![0.0; 36];
        conv3_forward(&wts, &bias, &im2col3(&x, layer.in_shape), &layer, &mut out);
        for o in 0..3 {
            for y in 0..3i64 {
                for xx in 0..4i64 {
                    let mut acc = bias[o];
                    for c in 0..2 {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                if (0..3).contains(&sy) && (0..4).contains(&sx) {
                                    acc += wts[((o * 2 + c) * 9) + (ky * 3 + kx) as usize]
                                        * x[c * 12 + (sy * 4 + sx) as usize];
                                }
                            }
                        }
                    }
                    assert!((out[o * 12 + (y * 4 + xx) as usize] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_params_give_half() {
        let net = Network::new(&tiny()).unwrap();
        let params = vec![0.0f64; net.param_count()];
        let out = net.infer(&params, &vec![0.05; net.input_len()]);
        assert!(out.iter().all(|&v| v == 0.5));
    }
}
