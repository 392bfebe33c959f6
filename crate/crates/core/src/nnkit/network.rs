use super::layers::{Act, Aux, Layer};
use super::tensor::{ModelParams, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A feed-forward stack of layers. A zero in `input_shape` accepts any
/// extent along that axis (used for variable-length sequences).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

/// Forward activations (`acts[i]` is the input of layer `i`, the last entry
/// is the output) and per-layer auxiliary state.
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Act>,
    aux: Vec<Aux>,
}

impl Trace {
    pub fn output(&self) -> &Act {
        self.acts.last().expect("trace holds the input")
    }
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        Self { input_shape, layers }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn init(&self, rng: &mut Rng) -> Result<ModelParams<f32>> {
        let mut params = ModelParams::new();
        for layer in &self.layers {
            layer.init_params(&mut params, rng)?;
        }
        Ok(params)
    }

    /// Errors unless `params` holds exactly this network's tensors.
    pub fn check_params<T: Copy + Default>(&self, params: &ModelParams<T>) -> Result<()> {
        let mut expected = ModelParams::<f32>::new();
        for layer in &self.layers {
            for (name, shape, _) in layer.param_specs() {
                expected.insert(name, Tensor::zeros(shape))?;
            }
        }
        expected.check_same_layout(params)
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let ok = shape.len() == self.input_shape.len()
            && shape.iter().zip(&self.input_shape).all(|(&s, &e)| e == 0 || s == e);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.input_shape.clone(), actual: shape.to_vec() })
        }
    }

    pub fn forward(&self, w: &ModelParams<f64>, input: &Act) -> Result<Act> {
        self.check_input(input.shape())?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(w, &x)?.0;
        }
        Ok(x)
    }

    pub fn trace(&self, w: &ModelParams<f64>, input: &Act) -> Result<Trace> {
        self.check_input(input.shape())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        acts.push(input.clone());
        for layer in &self.layers {
            let (y, a) = layer.forward(w, acts.last().unwrap())?;
            acts.push(y);
            aux.push(a);
        }
        Ok(Trace { acts, aux })
    }

    /// Backpropagates `grad_output` through a trace, accumulating parameter
    /// gradients into `grads`. Returns the gradient with respect to the
    /// network input.
    pub fn backward(
        &self,
        w: &ModelParams<f64>,
        trace: &Trace,
        grad_output: &[f64],
        grads: &mut ModelParams<f64>,
    ) -> Result<Vec<f64>> {
        let mut g = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(w, &trace.acts[i], &trace.acts[i + 1], &trace.aux[i], &g, grads)?;
        }
        Ok(g)
    }
}

/// A network with its parameters, plus the 64-bit working copy that all
/// compute runs on. Inference takes `&self` and is thread-safe.
#[derive(Debug, Clone)]
pub struct Model {
    net: Network,
    params: ModelParams<f32>,
    shadow: ModelParams<f64>,
}

impl Model {
    pub fn new(net: Network, params: ModelParams<f32>) -> Result<Self> {
        net.check_params(&params)?;
        let shadow = params.to_f64();
        Ok(Self { net, params, shadow })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn shadow(&self) -> &ModelParams<f64> {
        &self.shadow
    }

    pub fn set_params(&mut self, params: ModelParams<f32>) -> Result<()> {
        self.net.check_params(&params)?;
        self.shadow = params.to_f64();
        self.params = params;
        Ok(())
    }

    /// Applies `update` to the stored parameters and refreshes the shadow.
    pub fn update_params<R>(&mut self, update: impl FnOnce(&mut ModelParams<f32>) -> R) -> R {
        let r = update(&mut self.params);
        self.shadow = self.params.to_f64();
        r
    }

    pub fn forward(&self, input: &Act) -> Result<Act> {
        self.net.forward(&self.shadow, input)
    }

    pub fn trace(&self, input: &Act) -> Result<Trace> {
        self.net.trace(&self.shadow, input)
    }

    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grads: &mut ModelParams<f64>) -> Result<Vec<f64>> {
        self.net.backward(&self.shadow, trace, grad_output, grads)
    }

    pub fn zero_grads(&self) -> ModelParams<f64> {
        self.params.zeros_like()
    }
}
