//! Dense feed-forward networks with exact reverse-mode gradients and an
//! Adam optimizer. Used for the generator, discriminator and surrogate.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "churn-recourse/mlp";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, computed
/// from the logit for stability.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    // softplus(z) - t·z
    let softplus = if logit > 0.0 {
        logit + (-logit).exp().ln_1p()
    } else {
        logit.exp().ln_1p()
    };
    softplus - target * logit
}

/// `d bce / d logit`.
#[inline]
pub fn bce_logit_grad(logit: f64, target: f64) -> f64 {
    sigmoid(logit) - target
}

/// Affine map followed by an elementwise activation. Weights are row-major
/// `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn preactivation(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input of layer `l`; the last entry is the network output.
    pub activations: Vec<Vec<f64>>,
    pub preactivations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pre-activation of the final layer (the logit for sigmoid heads).
    pub fn logits(&self) -> &[f64] {
        self.preactivations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parameter gradients shaped like the network, `(d_weights, d_bias)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(m: &Mlp) -> Self {
        Self {
            layers: m
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, b)| *a += b);
            b.iter_mut().zip(ob).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`, one activation per layer. Weights are drawn
    /// uniformly from `±1/sqrt(fan_in)`, biases start at zero.
    pub fn new<R: Rng>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::config("need one activation per layer and at least one layer"));
        }
        if sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = 1.0 / (inputs as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    activation,
                    weights: (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Format("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Format(format!("layer {i}: parameter shape mismatch")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(Error::Format(format!("layer {i}: input does not chain")));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::Format(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    /// Zeroes every weight and bias.
    pub fn zero_params(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = 0.0);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        for l in &self.layers {
            l.preactivation(&cur, &mut z);
            cur.clear();
            cur.extend(z.iter().map(|&v| l.activation.apply(v)));
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        Error::check_dim(self.input_dim(), x.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preactivations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for l in &self.layers {
            let mut z = Vec::with_capacity(l.outputs);
            l.preactivation(activations.last().expect("input pushed"), &mut z);
            let y = z.iter().map(|&v| l.activation.apply(v)).collect();
            preactivations.push(z);
            activations.push(y);
        }
        Ok(Trace { activations, preactivations })
    }

    /// Gradients of `upstream · output` w.r.t. parameters and input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        self.backward_trace(&trace, upstream)
    }

    pub fn backward_trace(&self, trace: &Trace, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        Error::check_dim(self.output_dim(), upstream.len())?;
        let last = self.layers.len() - 1;
        let act = self.layers[last].activation;
        let delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.preactivations[last])
            .zip(&trace.activations[last + 1])
            .map(|((g, &z), &y)| g * act.derivative(z, y))
            .collect();
        Ok(self.backprop(trace, delta))
    }

    /// Like [`Mlp::backward_trace`] but `delta` is already the gradient at the
    /// final pre-activation (e.g. `sigmoid(z) − t` for cross-entropy heads).
    pub fn backward_from_logits(&self, trace: &Trace, delta: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        Error::check_dim(self.output_dim(), delta.len())?;
        Ok(self.backprop(trace, delta.to_vec()))
    }

    fn backprop(&self, trace: &Trace, mut delta: Vec<f64>) -> (Gradients, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[l];
            let (gw, gb) = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] = d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(g, v)| *g = d * v);
            }
            let mut below = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                below.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
            }
            if l > 0 {
                let prev = &self.layers[l - 1];
                for ((b, &z), &y) in below
                    .iter_mut()
                    .zip(&trace.preactivations[l - 1])
                    .zip(&trace.activations[l])
                {
                    *b *= prev.activation.derivative(z, y);
                }
            }
            delta = below;
        }
        (grads, delta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct File<'a> {
            format: &'a str,
            version: u32,
            layers: &'a [Dense],
        }
        let f = File { format: FORMAT, version: VERSION, layers: &self.layers };
        std::fs::write(path, serde_json::to_vec(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            format: String,
            version: u32,
            layers: Vec<Dense>,
        }
        let f: File = serde_json::from_slice(&std::fs::read(path)?)?;
        if f.format != FORMAT || f.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                f.format,
                f.version
            )));
        }
        let m = Mlp { layers: f.layers };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moment accumulators, shaped like the network they update.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(m: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first: Gradients::zeros_like(m),
            second: Gradients::zeros_like(m),
        }
    }

    /// One bias-corrected Adam update of `m` along `-grads`.
    pub fn step(&mut self, m: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != m.layers.len() || self.first.layers.len() != m.layers.len() {
            return Err(Error::Dimension { expected: m.layers.len(), got: grads.layers.len() });
        }
        for (l, (gw, gb)) in m.layers.iter().zip(&grads.layers) {
            Error::check_dim(l.weights.len(), gw.len())?;
            Error::check_dim(l.bias.len(), gb.len())?;
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut [f64], g: &[f64], m1: &mut [f64], m2: &mut [f64]| {
            for i in 0..p.len() {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m1[i] / c1;
                let vh = m2[i] / c2;
                p[i] -= learning_rate * mh / (vh.sqrt() + epsilon);
            }
        };
        for (((layer, (gw, gb)), (m1w, m1b)), (m2w, m2b)) in m
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.layers.iter_mut())
            .zip(self.second.layers.iter_mut())
        {
            update(&mut layer.weights, gw, m1w, m2w);
            update(&mut layer.bias, gb, m1b, m2b);
        }
        Ok(())
    }
}
