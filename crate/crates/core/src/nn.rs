//! Named parameter storage and equalized-learning-rate layers.
//!
//! Weights are stored with unit variance and scaled by `1/sqrt(fan_in)` at
//! run time, so one learning rate suits every layer.

use crate::error::{Error, Result};
use rand::Rng;
use tripatch_autograd::{Tensor, Var};

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.vars.push(Var::param(value));
        self.vars.len() - 1
    }

    pub fn get(&self, idx: usize) -> &Var {
        &self.vars[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn vars_mut(&mut self) -> &mut [Var] {
        &mut self.vars
    }

    pub fn param_count(&self) -> usize {
        self.vars.iter().map(|v| v.value().len()).sum()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .cloned()
            .zip(self.vars.iter().map(|v| v.value().clone()))
            .collect()
    }

    /// Replace every value by the tensor of the same name and shape.
    pub fn load(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        if tensors.len() != self.vars.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} tensors, found {}",
                self.vars.len(),
                tensors.len()
            )));
        }
        for ((name, var), (tn, t)) in self.names.iter().zip(self.vars.iter_mut()).zip(tensors) {
            if name != tn || var.shape() != t.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "parameter {name} {:?} does not match stored {tn} {:?}",
                    var.shape(),
                    t.shape()
                )));
            }
            *var = Var::param(t.clone());
        }
        Ok(())
    }
}

/// Fully connected layer `x W c + b` with `c = 1/sqrt(in)`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    weight: usize,
    bias: usize,
    gain: f64,
    bias_gain: f64,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias_init: f64, rng: &mut impl Rng) -> Self {
        Self::with_lr_mult(store, name, fan_in, fan_out, bias_init, 1.0, rng)
    }

    /// Layer whose parameters are stored divided by `lr_mult` and multiplied
    /// back in the forward pass, so Adam moves them `lr_mult` times slower.
    pub fn with_lr_mult(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias_init: f64,
        lr_mult: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::randn(&[fan_in, fan_out], rng).map(|v| v / lr_mult),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::full(&[fan_out], bias_init / lr_mult));
        Dense {
            weight,
            bias,
            gain: lr_mult / (fan_in as f64).sqrt(),
            bias_gain: lr_mult,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Var) -> Var {
        let b = store.get(self.bias);
        let b = if self.bias_gain == 1.0 { b.clone() } else { b.scale(self.bias_gain) };
        x.matmul(&store.get(self.weight).scale(self.gain)).add(&b)
    }
}

/// Same-padded NHWC convolution with a `[k·k·Cin, Cout]` weight.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    weight: usize,
    bias: Option<usize>,
    kernel: usize,
    gain: f64,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        cin: usize,
        cout: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = kernel * kernel * cin;
        let weight = store.add(format!("{name}.weight"), Tensor::randn(&[fan_in, cout], rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[cout])));
        Conv {
            weight,
            bias,
            kernel,
            gain: 1.0 / (fan_in as f64).sqrt(),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Var) -> Var {
        let y = x.conv2d(&store.get(self.weight).scale(self.gain), self.kernel);
        match self.bias {
            Some(b) => y.add(store.get(b)),
            None => y,
        }
    }
}

/// Style-modulated convolution: input channels scaled by a per-sample style
/// from `w`, optionally followed by demodulation of each output channel.
#[derive(Clone, Copy, Debug)]
pub struct ModConv {
    affine: Dense,
    weight: usize,
    bias: usize,
    kernel: usize,
    cin: usize,
    cout: usize,
    demodulate: bool,
    gain: f64,
}

impl ModConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        w_dim: usize,
        kernel: usize,
        cin: usize,
        cout: usize,
        demodulate: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let affine = Dense::new(store, &format!("{name}.affine"), w_dim, cin, 1.0, rng);
        let fan_in = kernel * kernel * cin;
        let weight = store.add(format!("{name}.weight"), Tensor::randn(&[fan_in, cout], rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        ModConv {
            affine,
            weight,
            bias,
            kernel,
            cin,
            cout,
            demodulate,
            gain: 1.0 / (fan_in as f64).sqrt(),
        }
    }

    /// `x`: `[B, H, W, Cin]`, `w`: `[B, w_dim]`.
    pub fn forward(&self, store: &ParamStore, x: &Var, w: &Var) -> Var {
        let b = x.shape()[0];
        let style = self.affine.forward(store, w);
        let weight = store.get(self.weight).scale(self.gain);
        let modulated = x.mul(&style.reshape(&[b, 1, 1, self.cin]));
        let mut y = modulated.conv2d(&weight, self.kernel);
        if self.demodulate {
            let k2 = self.kernel * self.kernel;
            let wsq = weight
                .square()
                .reshape(&[k2, self.cin * self.cout])
                .sum_to(&[1, self.cin * self.cout])
                .reshape(&[self.cin, self.cout]);
            let demod = style.square().matmul(&wsq).shift(1e-8).powf(-0.5);
            y = y.mul(&demod.reshape(&[b, 1, 1, self.cout]));
        }
        y.add(store.get(self.bias))
    }
}

/// `x / sqrt(mean(x²) + ε)` over the last axis of `[B, D]`.
pub fn pixel_norm(x: &Var) -> Var {
    let s = x.shape();
    let (b, d) = (s[0], s[1]);
    let ms = x.square().sum_to(&[b, 1]).scale(1.0 / d as f64).shift(1e-8);
    x.mul(&ms.powf(-0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tripatch_autograd::backward;

    #[test]
    fn lr_multiplier_keeps_the_function_and_shrinks_gradients() {
        let x = Var::constant(Tensor::randn(&[3, 5], &mut ChaCha8Rng::seed_from_u64(0)));
        let build = |mult: f64| {
            let mut store = ParamStore::default();
            let layer = Dense::with_lr_mult(&mut store, "d", 5, 4, 0.5, mult, &mut ChaCha8Rng::seed_from_u64(1));
            let y = layer.forward(&store, &x);
            let g = backward(&y.sum()).get_or_zeros(store.get(layer.weight));
            (y.value().clone(), g)
        };
        let (y1, g1) = build(1.0);
        let (y2, g2) = build(0.01);
        for (a, b) in y1.data().iter().zip(y2.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert!((0.01 * a - b).abs() <= 1e-12);
        }
    }
}
