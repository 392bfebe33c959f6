//! Central finite-difference gradient verification.
//!
//! Only the forward pass is used here, so the comparison is independent of
//! the backpropagation code it checks. Perturbations are applied to the
//! 64-bit working copy of the parameters.

use super::layers::{Act, Layer};
use super::network::Network;
use super::tensor::ModelParams;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(name, relative error)` per parameter tensor, plus `"<input>"`.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_tensor.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `||a - n|| / max(||a|| + ||n||, 1e-12)` over one tensor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-12)
}

/// Numeric gradient of `loss(net(params, input))` with respect to every
/// parameter and the input.
pub fn numeric_gradients(
    net: &Network,
    params: &ModelParams<f64>,
    input: &Act,
    loss: &dyn Fn(&Act) -> f64,
    step: f64,
) -> Result<(ModelParams<f64>, Vec<f64>)> {
    let eval = |p: &ModelParams<f64>, x: &Act| -> Result<f64> { Ok(loss(&net.forward(p, x)?)) };
    let mut grads = params.zeros_like::<f64>();
    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.get(name)?.len();
        for i in 0..n {
            let orig = work.get(name)?.data()[i];
            work.get_mut(name)?.data_mut()[i] = orig + step;
            let plus = eval(&work, input)?;
            work.get_mut(name)?.data_mut()[i] = orig - step;
            let minus = eval(&work, input)?;
            work.get_mut(name)?.data_mut()[i] = orig;
            grads.get_mut(name)?.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
    }
    let mut x = input.clone();
    let mut gx = vec![0.0; input.len()];
    for i in 0..input.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let plus = eval(params, &x)?;
        x.data_mut()[i] = orig - step;
        let minus = eval(params, &x)?;
        x.data_mut()[i] = orig;
        gx[i] = (plus - minus) / (2.0 * step);
    }
    Ok((grads, gx))
}

/// Compares backpropagated gradients of `loss` against central differences.
/// `loss` returns the scalar loss and its gradient with respect to the
/// network output.
pub fn check_gradients(
    net: &Network,
    params: &ModelParams<f64>,
    input: &Act,
    loss: &dyn Fn(&Act) -> (f64, Vec<f64>),
    step: f64,
) -> Result<GradCheckReport> {
    let trace = net.trace(params, input)?;
    let (_, g_out) = loss(trace.output());
    let mut analytic = params.zeros_like::<f64>();
    let g_in = net.backward(params, &trace, &g_out, &mut analytic)?;
    let (numeric, n_in) = numeric_gradients(net, params, input, &|y| loss(y).0, step)?;
    let mut per_tensor = Vec::new();
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        per_tensor.push((name.to_string(), relative_error(a.data(), n.data())));
    }
    per_tensor.push(("<input>".to_string(), relative_error(&g_in, &n_in)));
    Ok(GradCheckReport { per_tensor })
}

/// Smallest distance from a non-differentiable point over the forward pass:
/// ReLU inputs near zero, and gaps between the two largest entries of a
/// max-pooling window. Central differences are only meaningful when this
/// exceeds the step by a wide margin.
pub fn kink_margin(net: &Network, params: &ModelParams<f64>, input: &Act) -> Result<f64> {
    let trace = net.trace(params, input)?;
    let mut margin = f64::INFINITY;
    for (layer, x) in net.layers().iter().zip(&trace.acts) {
        match layer {
            Layer::Relu | Layer::LeakyRelu(_) => {
                margin = x.data().iter().fold(margin, |m, v| m.min(v.abs()));
            }
            Layer::MaxPool2 => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                for ch in 0..c {
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let mut window: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                                .iter()
                                .map(|(dy, dx)| x.data()[(ch * h + 2 * oy + dy) * w + 2 * ox + dx])
                                .collect();
                            margin = margin.min(top_two_gap(&mut window));
                        }
                    }
                }
            }
            Layer::GlobalMeanMax => {
                let t = x.shape()[1];
                for row in x.data().chunks(t) {
                    margin = margin.min(top_two_gap(&mut row.to_vec()));
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

fn top_two_gap(values: &mut [f64]) -> f64 {
    if values.len() < 2 {
        return f64::INFINITY;
    }
    values.sort_by(|a, b| b.total_cmp(a));
    values[0] - values[1]
}
