//! Layer kernels. Activations are single-sample `f64` tensors; parameters
//! come from a 64-bit working copy of the model.

use rand::Rng as _;

use super::tensor::{ModelParams, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub type Act = Tensor<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `[in] -> [out]`, params `{name}.weight: [out, in]`, `{name}.bias: [out]`.
    Dense { name: String, inputs: usize, outputs: usize },
    /// `[C, H, W] -> [O, H', W']`, stride 1, zero padding `pad`.
    Conv2d { name: String, in_channels: usize, out_channels: usize, kernel: usize, pad: usize },
    /// `[C, T] -> [O, T - k + 1]`, valid sliding window, stride 1.
    Conv1d { name: String, in_channels: usize, out_channels: usize, kernel: usize },
    /// 2x2 max pooling, stride 2, on `[C, H, W]`.
    MaxPool2,
    /// `[C, T] -> [2C]`: per-channel mean over time, then per-channel max.
    GlobalMeanMax,
    Flatten,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

/// Per-layer state kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub enum Aux {
    None,
    Columns(Vec<f64>),
    Argmax(Vec<usize>),
}

fn weight_key(name: &str) -> String {
    format!("{name}.weight")
}

fn bias_key(name: &str) -> String {
    format!("{name}.bias")
}

impl Layer {
    pub fn dense(name: &str, inputs: usize, outputs: usize) -> Self {
        Layer::Dense { name: name.into(), inputs, outputs }
    }

    pub fn conv2d(name: &str, in_channels: usize, out_channels: usize, kernel: usize, pad: usize) -> Self {
        Layer::Conv2d { name: name.into(), in_channels, out_channels, kernel, pad }
    }

    pub fn conv1d(name: &str, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Layer::Conv1d { name: name.into(), in_channels, out_channels, kernel }
    }

    /// Parameter tensors this layer owns: `(name, shape, fan_in)`.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, usize)> {
        match self {
            Layer::Dense { name, inputs, outputs } => vec![
                (weight_key(name), vec![*outputs, *inputs], *inputs),
                (bias_key(name), vec![*outputs], *inputs),
            ],
            Layer::Conv2d { name, in_channels, out_channels, kernel, .. } => {
                let fan_in = in_channels * kernel * kernel;
                vec![
                    (weight_key(name), vec![*out_channels, *in_channels, *kernel, *kernel], fan_in),
                    (bias_key(name), vec![*out_channels], fan_in),
                ]
            }
            Layer::Conv1d { name, in_channels, out_channels, kernel } => {
                let fan_in = in_channels * kernel;
                vec![
                    (weight_key(name), vec![*out_channels, *in_channels, *kernel], fan_in),
                    (bias_key(name), vec![*out_channels], fan_in),
                ]
            }
            _ => Vec::new(),
        }
    }

    /// He-uniform weights, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`; zero biases.
    pub fn init_params(&self, params: &mut ModelParams<f32>, rng: &mut Rng) -> Result<()> {
        for (name, shape, fan_in) in self.param_specs() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
            };
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::ShapeMismatch { expected: self.expected_input(), actual: input.to_vec() };
        Ok(match self {
            Layer::Dense { inputs, outputs, .. } => {
                if input != [*inputs] {
                    return Err(bad());
                }
                vec![*outputs]
            }
            Layer::Conv2d { in_channels, out_channels, kernel, pad, .. } => {
                if input.len() != 3 || input[0] != *in_channels || input[1] + 2 * pad < *kernel || input[2] + 2 * pad < *kernel {
                    return Err(bad());
                }
                vec![*out_channels, input[1] + 2 * pad + 1 - kernel, input[2] + 2 * pad + 1 - kernel]
            }
            Layer::Conv1d { in_channels, out_channels, kernel, .. } => {
                if input.len() != 2 || input[0] != *in_channels || input[1] < *kernel {
                    return Err(bad());
                }
                vec![*out_channels, input[1] + 1 - kernel]
            }
            Layer::MaxPool2 => {
                if input.len() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0 {
                    return Err(bad());
                }
                vec![input[0], input[1] / 2, input[2] / 2]
            }
            Layer::GlobalMeanMax => {
                if input.len() != 2 {
                    return Err(bad());
                }
                vec![2 * input[0]]
            }
            Layer::Flatten => vec![input.iter().product()],
            _ => input.to_vec(),
        })
    }

    fn expected_input(&self) -> Vec<usize> {
        match self {
            Layer::Dense { inputs, .. } => vec![*inputs],
            Layer::Conv2d { in_channels, .. } => vec![*in_channels, 0, 0],
            Layer::Conv1d { in_channels, .. } => vec![*in_channels, 0],
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, w: &ModelParams<f64>, x: &Act) -> Result<(Act, Aux)> {
        let out_shape = self.output_shape(x.shape())?;
        let xs = x.data();
        Ok(match self {
            Layer::Dense { name, inputs, outputs } => {
                let wt = w.get(&weight_key(name))?.data();
                let b = w.get(&bias_key(name))?.data();
                let mut y = vec![0.0; *outputs];
                for o in 0..*outputs {
                    let row = &wt[o * inputs..(o + 1) * inputs];
                    y[o] = b[o] + dot(row, xs);
                }
                (Act::from_raw(out_shape, y), Aux::None)
            }
            Layer::Conv2d { name, in_channels, out_channels, kernel, pad } => {
                let wt = w.get(&weight_key(name))?.data();
                let b = w.get(&bias_key(name))?.data();
                let (h, wd) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let cols = im2col(xs, *in_channels, h, wd, *kernel, *pad, oh, ow);
                let r = in_channels * kernel * kernel;
                let npix = oh * ow;
                let mut y = vec![0.0; out_channels * npix];
                for o in 0..*out_channels {
                    let yo = &mut y[o * npix..(o + 1) * npix];
                    yo.iter_mut().for_each(|v| *v = b[o]);
                    for c in 0..r {
                        axpy(wt[o * r + c], &cols[c * npix..(c + 1) * npix], yo);
                    }
                }
                (Act::from_raw(out_shape, y), Aux::Columns(cols))
            }
            Layer::Conv1d { name, in_channels, out_channels, kernel } => {
                let wt = w.get(&weight_key(name))?.data();
                let b = w.get(&bias_key(name))?.data();
                let t_in = x.shape()[1];
                let t_out = out_shape[1];
                let mut y = vec![0.0; out_channels * t_out];
                for o in 0..*out_channels {
                    let yo = &mut y[o * t_out..(o + 1) * t_out];
                    yo.iter_mut().for_each(|v| *v = b[o]);
                    for c in 0..*in_channels {
                        for k in 0..*kernel {
                            let wv = wt[(o * in_channels + c) * kernel + k];
                            axpy(wv, &xs[c * t_in + k..c * t_in + k + t_out], yo);
                        }
                    }
                }
                (Act::from_raw(out_shape, y), Aux::None)
            }
            Layer::MaxPool2 => {
                let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h / 2, wd / 2);
                let mut y = vec![0.0; c * oh * ow];
                let mut arg = vec![0usize; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = usize::MAX;
                            let mut best_v = f64::NEG_INFINITY;
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let i = (ch * h + 2 * oy + dy) * wd + 2 * ox + dx;
                                if xs[i] > best_v || best == usize::MAX {
                                    best_v = xs[i];
                                    best = i;
                                }
                            }
                            let o = (ch * oh + oy) * ow + ox;
                            y[o] = best_v;
                            arg[o] = best;
                        }
                    }
                }
                (Act::from_raw(out_shape, y), Aux::Argmax(arg))
            }
            Layer::GlobalMeanMax => {
                let (c, t) = (x.shape()[0], x.shape()[1]);
                let mut y = vec![0.0; 2 * c];
                let mut arg = vec![0usize; c];
                for ch in 0..c {
                    let row = &xs[ch * t..(ch + 1) * t];
                    y[ch] = row.iter().sum::<f64>() / t as f64;
                    let mut best = 0;
                    for (i, v) in row.iter().enumerate() {
                        if *v > row[best] {
                            best = i;
                        }
                    }
                    y[c + ch] = row[best];
                    arg[ch] = ch * t + best;
                }
                (Act::from_raw(out_shape, y), Aux::Argmax(arg))
            }
            Layer::Flatten => (Act::from_raw(out_shape, xs.to_vec()), Aux::None),
            Layer::Relu => (Act::from_raw(out_shape, xs.iter().map(|&v| v.max(0.0)).collect()), Aux::None),
            Layer::LeakyRelu(alpha) => {
                (Act::from_raw(out_shape, xs.iter().map(|&v| if v > 0.0 { v } else { alpha * v }).collect()), Aux::None)
            }
            Layer::Tanh => (Act::from_raw(out_shape, xs.iter().map(|v| v.tanh()).collect()), Aux::None),
            Layer::Sigmoid => (Act::from_raw(out_shape, xs.iter().map(|&v| sigmoid(v)).collect()), Aux::None),
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input. `x`/`y` are the forward input and
    /// output, `gy` the gradient with respect to `y`.
    pub fn backward(
        &self,
        w: &ModelParams<f64>,
        x: &Act,
        y: &Act,
        aux: &Aux,
        gy: &[f64],
        grads: &mut ModelParams<f64>,
    ) -> Result<Vec<f64>> {
        let xs = x.data();
        Ok(match self {
            Layer::Dense { name, inputs, outputs } => {
                let wt = w.get(&weight_key(name))?.data();
                {
                    let gw = grads.get_mut(&weight_key(name))?.data_mut();
                    for o in 0..*outputs {
                        axpy(gy[o], xs, &mut gw[o * inputs..(o + 1) * inputs]);
                    }
                }
                let gb = grads.get_mut(&bias_key(name))?.data_mut();
                gb.iter_mut().zip(gy).for_each(|(g, v)| *g += v);
                let mut gx = vec![0.0; *inputs];
                for o in 0..*outputs {
                    axpy(gy[o], &wt[o * inputs..(o + 1) * inputs], &mut gx);
                }
                gx
            }
            Layer::Conv2d { name, in_channels, out_channels, kernel, pad } => {
                let Aux::Columns(cols) = aux else { unreachable!("conv2d aux") };
                let wt = w.get(&weight_key(name))?.data();
                let (h, wd) = (x.shape()[1], x.shape()[2]);
                let (oh, ow) = (y.shape()[1], y.shape()[2]);
                let npix = oh * ow;
                let r = in_channels * kernel * kernel;
                {
                    let gw = grads.get_mut(&weight_key(name))?.data_mut();
                    for o in 0..*out_channels {
                        let go = &gy[o * npix..(o + 1) * npix];
                        for c in 0..r {
                            gw[o * r + c] += dot(go, &cols[c * npix..(c + 1) * npix]);
                        }
                    }
                }
                let gb = grads.get_mut(&bias_key(name))?.data_mut();
                for o in 0..*out_channels {
                    gb[o] += gy[o * npix..(o + 1) * npix].iter().sum::<f64>();
                }
                let mut gcols = vec![0.0; r * npix];
                for o in 0..*out_channels {
                    let go = &gy[o * npix..(o + 1) * npix];
                    for c in 0..r {
                        axpy(wt[o * r + c], go, &mut gcols[c * npix..(c + 1) * npix]);
                    }
                }
                col2im(&gcols, *in_channels, h, wd, *kernel, *pad, oh, ow)
            }
            Layer::Conv1d { name, in_channels, out_channels, kernel } => {
                let wt = w.get(&weight_key(name))?.data();
                let t_in = x.shape()[1];
                let t_out = y.shape()[1];
                {
                    let gw = grads.get_mut(&weight_key(name))?.data_mut();
                    for o in 0..*out_channels {
                        let go = &gy[o * t_out..(o + 1) * t_out];
                        for c in 0..*in_channels {
                            for k in 0..*kernel {
                                gw[(o * in_channels + c) * kernel + k] +=
                                    dot(go, &xs[c * t_in + k..c * t_in + k + t_out]);
                            }
                        }
                    }
                }
                let gb = grads.get_mut(&bias_key(name))?.data_mut();
                for o in 0..*out_channels {
                    gb[o] += gy[o * t_out..(o + 1) * t_out].iter().sum::<f64>();
                }
                let mut gx = vec![0.0; in_channels * t_in];
                for o in 0..*out_channels {
                    let go = &gy[o * t_out..(o + 1) * t_out];
                    for c in 0..*in_channels {
                        for k in 0..*kernel {
                            let wv = wt[(o * in_channels + c) * kernel + k];
                            axpy(wv, go, &mut gx[c * t_in + k..c * t_in + k + t_out]);
                        }
                    }
                }
                gx
            }
            Layer::MaxPool2 => {
                let Aux::Argmax(arg) = aux else { unreachable!("maxpool aux") };
                let mut gx = vec![0.0; xs.len()];
                for (o, &i) in arg.iter().enumerate() {
                    gx[i] += gy[o];
                }
                gx
            }
            Layer::GlobalMeanMax => {
                let Aux::Argmax(arg) = aux else { unreachable!("pool aux") };
                let (c, t) = (x.shape()[0], x.shape()[1]);
                let mut gx = vec![0.0; c * t];
                for ch in 0..c {
                    let g = gy[ch] / t as f64;
                    gx[ch * t..(ch + 1) * t].iter_mut().for_each(|v| *v += g);
                    gx[arg[ch]] += gy[c + ch];
                }
                gx
            }
            Layer::Flatten => gy.to_vec(),
            Layer::Relu => xs.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
            Layer::LeakyRelu(alpha) => xs.iter().zip(gy).map(|(&v, &g)| if v > 0.0 { g } else { alpha * g }).collect(),
            Layer::Tanh => y.data().iter().zip(gy).map(|(&t, &g)| g * (1.0 - t * t)).collect(),
            Layer::Sigmoid => y.data().iter().zip(gy).map(|(&s, &g)| g * s * (1.0 - s)).collect(),
        })
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, oh: usize, ow: usize) -> Vec<f64> {
    let npix = oh * ow;
    let mut cols = vec![0.0; c * k * k * npix];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = x[(ch * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, oh: usize, ow: usize) -> Vec<f64> {
    let npix = oh * ow;
    let mut x = vec![0.0; c * h * w];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * npix..(row + 1) * npix];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[(ch * h + iy as usize) * w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}
