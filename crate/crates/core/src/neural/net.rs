use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected network stored as one flat parameter vector.
///
/// Layer `l` maps `dims[l]` inputs to `dims[l + 1]` outputs; its weights are
/// stored row-major (one row per output) followed by its biases. Dropout is
/// applied to the output of every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<S: Scalar> {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    offsets: Vec<usize>,
    params: Vec<S>,
    dropout: f64,
    mode: Mode,
    generation: u64,
}

/// Intermediates retained by [`DenseNet::forward`] for [`DenseNet::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<S> {
    /// Input of each layer (after the previous layer's dropout).
    inputs: Vec<Vec<S>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<S>>,
    /// Dropout scale applied to each hidden unit (0 when dropped).
    masks: Vec<Option<Vec<S>>>,
    generation: u64,
}

fn offsets_for(dims: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0];
    for w in dims.windows(2) {
        let last = *offsets.last().unwrap();
        offsets.push(last + w[0] * w[1] + w[1]);
    }
    offsets
}

impl<S: Scalar> DenseNet<S> {
    /// Zero-initialized network; hidden layers use ReLU, the last is linear.
    pub fn zeros(dims: &[usize], dropout: f64) -> Result<Self, NeuralError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NeuralError::Layout(format!("bad layer sizes {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(NeuralError::Layout(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let layers = dims.len() - 1;
        let activations =
            (0..layers).map(|l| if l + 1 == layers { Activation::Linear } else { Activation::Relu }).collect();
        let offsets = offsets_for(dims);
        Ok(DenseNet {
            dims: dims.to_vec(),
            activations,
            params: vec![S::zero(); *offsets.last().unwrap()],
            offsets,
            dropout,
            mode: Mode::Train,
            generation: 0,
        })
    }

    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], dropout: f64, rng: &mut R) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(dims, dropout)?;
        for l in 0..net.layer_count() {
            let (fan_in, fan_out) = (net.dims[l], net.dims[l + 1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = S::of(rng.random_range(-limit..limit));
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit `(weights, biases, activation)` layers,
    /// with `weights[o][i]` connecting input `i` to output `o`.
    pub fn from_layers(layers: &[(Vec<Vec<f64>>, Vec<f64>, Activation)], dropout: f64) -> Result<Self, NeuralError> {
        let first = layers.first().ok_or_else(|| NeuralError::Layout("no layers".into()))?;
        let mut dims = vec![first.0.first().map_or(0, Vec::len)];
        for (w, b, _) in layers {
            if w.len() != b.len() || w.iter().any(|row| row.len() != *dims.last().unwrap()) {
                return Err(NeuralError::Layout("layer dimensions do not chain".into()));
            }
            dims.push(b.len());
        }
        let mut net = Self::zeros(&dims, dropout)?;
        net.activations = layers.iter().map(|l| l.2).collect();
        let mut k = 0;
        for (w, b, _) in layers {
            for v in w.iter().flatten().chain(b) {
                net.params[k] = S::of(*v);
                k += 1;
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [S] {
        self.generation += 1;
        &mut self.params
    }

    pub(crate) fn set_parts(&mut self, activations: Vec<Activation>, params: Vec<S>) {
        self.activations = activations;
        self.params = params;
        self.generation += 1;
    }

    fn check_input(&self, input: &[S]) -> Result<(), NeuralError> {
        if input.len() != self.input_dim() {
            return Err(NeuralError::InputDim { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &[S]) -> Vec<S> {
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let w = &self.params[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
        let b = &self.params[self.offsets[l] + fan_in * fan_out..self.offsets[l + 1]];
        (0..fan_out)
            .map(|o| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += *wi * *xi;
                }
                acc
            })
            .collect()
    }

    fn activate(act: Activation, z: &[S]) -> Vec<S> {
        match act {
            Activation::Relu => z.iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect(),
            Activation::Linear => z.to_vec(),
        }
    }

    /// Eval-mode output; never draws random numbers.
    pub fn predict(&self, input: &[S]) -> Result<Vec<S>, NeuralError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.layer_count() {
            x = Self::activate(self.activations[l], &self.affine(l, &x));
        }
        Ok(x)
    }

    /// Forward pass honouring the current mode. Dropout masks come from
    /// `rng` in train mode only.
    pub fn forward<R: Rng + ?Sized>(&self, input: &[S], rng: &mut R) -> Result<(Vec<S>, ForwardCache<S>), NeuralError> {
        self.check_input(input)?;
        let layers = self.layer_count();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
            masks: Vec::with_capacity(layers),
            generation: self.generation,
        };
        let keep = 1.0 - self.dropout;
        let scale = S::of(1.0 / keep);
        let mut x = input.to_vec();
        for l in 0..layers {
            let z = self.affine(l, &x);
            let mut a = Self::activate(self.activations[l], &z);
            let mask = if l + 1 < layers && self.mode == Mode::Train && self.dropout > 0.0 {
                let m: Vec<S> =
                    (0..a.len()).map(|_| if rng.random::<f64>() < self.dropout { S::zero() } else { scale }).collect();
                for (ai, mi) in a.iter_mut().zip(&m) {
                    *ai *= *mi;
                }
                Some(m)
            } else {
                None
            };
            cache.inputs.push(std::mem::replace(&mut x, a));
            cache.pre.push(z);
            cache.masks.push(mask);
        }
        Ok((x, cache))
    }

    /// Accumulates the gradient of `Σ output_grad · output` with respect to
    /// every parameter into `grads`.
    pub fn backward(&self, cache: &ForwardCache<S>, output_grad: &[S], grads: &mut [S]) -> Result<(), NeuralError> {
        if cache.generation != self.generation || cache.inputs.len() != self.layer_count() {
            return Err(NeuralError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NeuralError::OutputDim { expected: self.output_dim(), got: output_grad.len() });
        }
        if grads.len() != self.params.len() {
            return Err(NeuralError::ParamDim { expected: self.params.len(), got: grads.len() });
        }
        let mut delta = output_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            if let Some(mask) = &cache.masks[l] {
                for (d, m) in delta.iter_mut().zip(mask) {
                    *d *= *m;
                }
            }
            if self.activations[l] == Activation::Relu {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    if *z <= S::zero() {
                        *d = S::zero();
                    }
                }
            }
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.offsets[l];
            let x = &cache.inputs[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == S::zero() {
                    continue;
                }
                let row = &mut grads[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * *xi;
                }
                grads[off + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![S::zero(); fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == S::zero() {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * *wi;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// `self ← tau · source + (1 − tau) · self`, element-wise.
    pub fn soft_update_from(&mut self, source: &DenseNet<S>, tau: S) -> Result<(), NeuralError> {
        if source.dims != self.dims {
            return Err(NeuralError::Layout("soft update between differently shaped networks".into()));
        }
        let keep = S::one() - tau;
        for (t, o) in self.params_mut().iter_mut().zip(&source.params) {
            *t = tau * *o + keep * *t;
        }
        Ok(())
    }
}
