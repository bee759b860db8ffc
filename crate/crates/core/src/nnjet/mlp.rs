use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Activation used on hidden layers. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sine,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Sine => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Activation::Sine),
            _ => None,
        }
    }
}

/// Frequency settings for SIREN-style initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirenInit {
    /// Frequency folded into the first layer.
    pub omega0: f64,
    /// Frequency for every later layer.
    pub omega: f64,
}

impl Default for SirenInit {
    fn default() -> Self {
        Self { omega0: 30.0, omega: 1.0 }
    }
}

/// A dense feed-forward network `z -> W_n(sin(... sin(W_0 z + b_0) ...)) + b_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activation: Activation,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output size, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {layer_sizes:?}")));
    }
    Ok(())
}

/// Half-width of the uniform weight distribution for `layer` under SIREN init.
///
/// The first layer draws from `U(-omega0/fan_in, omega0/fan_in)`; later layers
/// draw from `U(-sqrt(6/fan_in)/omega, sqrt(6/fan_in)/omega)`.
pub fn init_bound(layer_sizes: &[usize], layer: usize, init: SirenInit) -> f64 {
    let fan_in = layer_sizes[layer] as f64;
    if layer == 0 {
        init.omega0 / fan_in
    } else {
        (6.0 / fan_in).sqrt() / init.omega
    }
}

impl Mlp {
    /// Deterministic SIREN-style initialization.
    pub fn init(layer_sizes: &[usize], seed: u64, init: SirenInit) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if !(init.omega0 > 0.0 && init.omega > 0.0) {
            return Err(Error::Config("SIREN frequencies must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = init_bound(layer_sizes, l, init);
            // Biases follow the usual 1/sqrt(fan_in) rule, with the first
            // layer's frequency folded in like the weights.
            let bias_bound = if l == 0 { init.omega0 } else { 1.0 } / (fan_in as f64).sqrt();
            // Row-major draw order so the stream is independent of storage order.
            let mut w = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    w[(r, c)] = rng.gen_range(-bound..=bound);
                }
            }
            let b = DVector::from_fn(fan_out, |_, _| rng.gen_range(-bias_bound..=bias_bound));
            weights.push(w);
            biases.push(b);
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, activation: Activation::Sine })
    }

    /// A network with every parameter zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        let biases = layer_sizes[1..].iter().map(|&n| DVector::zeros(n)).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, activation: Activation::Sine })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Config("weight/bias count does not match layer sizes".into()));
        }
        for l in 0..layers {
            if weights[l].shape() != (layer_sizes[l + 1], layer_sizes[l]) {
                return Err(Error::Config(format!("layer {l} weight has the wrong shape")));
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::Config(format!("layer {l} bias has the wrong length")));
            }
        }
        let net = Self { layer_sizes, weights, biases, activation };
        if !net.is_finite() {
            return Err(Error::Numerical("network parameters must be finite".into()));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self, layer: usize) -> &DMatrix<f64> {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &DVector<f64> {
        &self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut DMatrix<f64> {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut DVector<f64> {
        &mut self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Single-point forward pass. The output dimension must be 1.
    pub fn eval(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if self.output_dim() != 1 {
            return Err(Error::Config("eval requires a scalar-output network".into()));
        }
        let mut z = DVector::from_column_slice(input);
        let last = self.num_layers() - 1;
        for l in 0..last {
            z = (&self.weights[l] * &z + &self.biases[l]).map(f64::sin);
        }
        Ok((&self.weights[last] * z + &self.biases[last])[0])
    }

    /// Forward pass over the columns of `inputs` (`input_dim x points`).
    pub fn eval_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        if inputs.nrows() != self.input_dim() || self.output_dim() != 1 {
            return Err(Error::Input(format!(
                "batch of {} rows for a network with {} inputs and {} outputs",
                inputs.nrows(),
                self.input_dim(),
                self.output_dim()
            )));
        }
        let last = self.num_layers() - 1;
        let mut z = inputs.clone();
        for l in 0..=last {
            let mut p = &self.weights[l] * &z;
            for mut col in p.column_iter_mut() {
                col += &self.biases[l];
            }
            if l < last {
                p.apply(|v| *v = v.sin());
            }
            z = p;
        }
        Ok(z.row(0).iter().copied().collect())
    }

    /// Parameters in canonical order: per layer, weights row-major then bias.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
            out.extend(b.iter());
        }
    }

    /// Inverse of [`Mlp::write_params`]; returns the number of values consumed.
    pub fn read_params(&mut self, flat: &[f64]) -> Result<usize> {
        let need = self.param_count();
        if flat.len() < need {
            return Err(Error::Internal(format!("need {need} parameters, got {}", flat.len())));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = flat[k];
                    k += 1;
                }
            }
            for v in b.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(k)
    }

    /// Equivalent network taking physical inputs when this one expects
    /// `z_i = scale_i * p_i + shift_i`.
    pub fn fold_input_affine(&self, scale: &[f64], shift: &[f64]) -> Result<Self> {
        if scale.len() != self.input_dim() || shift.len() != self.input_dim() {
            return Err(Error::Input("affine map dimension mismatch".into()));
        }
        let mut out = self.clone();
        let w0 = &self.weights[0];
        let shift_v = DVector::from_column_slice(shift);
        out.biases[0] = &self.biases[0] + w0 * shift_v;
        for c in 0..w0.ncols() {
            for r in 0..w0.nrows() {
                out.weights[0][(r, c)] = w0[(r, c)] * scale[c];
            }
        }
        Ok(out)
    }
}

/// `sum_i (sizes[i+1] * sizes[i] + sizes[i+1])`.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Sizes for `input -> hidden... -> 1`.
pub fn layer_sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}
