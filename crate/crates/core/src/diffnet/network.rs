use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ArtError, Result};

/// One affine layer `W x + b`, optionally followed by an element-wise ReLU.
///
/// Weights are stored row-major: row `j` holds the coefficients of output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    out_dim: usize,
    in_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    apply_relu: bool,
}

impl LayerSpec {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        apply_relu: bool,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(ArtError::InvalidNetwork(format!(
                "layer dimensions must be positive, got {out_dim}x{in_dim}"
            )));
        }
        if weights.len() != out_dim * in_dim {
            return Err(ArtError::dims(
                "layer weights",
                out_dim * in_dim,
                weights.len(),
            ));
        }
        if bias.len() != out_dim {
            return Err(ArtError::dims("layer bias", out_dim, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ArtError::InvalidNetwork(
                "layer parameters must be finite".into(),
            ));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
            bias,
            apply_relu,
        })
    }

    /// Builds a layer from nested rows with a zero bias.
    pub fn from_rows(rows: &[&[f64]], apply_relu: bool) -> Result<Self> {
        let out_dim = rows.len();
        let in_dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != in_dim) {
            return Err(ArtError::InvalidNetwork("ragged weight rows".into()));
        }
        let weights = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(out_dim, in_dim, weights, vec![0.0; out_dim], apply_relu)
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn apply_relu(&self) -> bool {
        self.apply_relu
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.in_dim..(row + 1) * self.in_dim]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// `W x + b` without the activation.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(x)
                    .fold(self.bias[j], |acc, (w, xi)| acc + w * xi)
            })
            .collect()
    }
}

/// Content hash of a network's parameters.
///
/// Cached region losses are tagged with the revision they were computed
/// against; any parameter change produces a different revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Revision(pub u64);

/// A feed-forward ReLU network `F = f_Q ∘ σ ∘ f_{Q-1} ∘ ... ∘ σ ∘ f_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(ArtError::InvalidNetwork("network has no layers".into()));
        };
        if last.apply_relu {
            return Err(ArtError::InvalidNetwork(
                "the final layer must be linear".into(),
            ));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(ArtError::InvalidNetwork(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Fresh network with ReLU on every hidden layer and weights drawn
    /// uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`. Biases start at zero.
    ///
    /// `dims` lists the width of every layer including input and output,
    /// e.g. `[2, 8, 8, 2]`.
    pub fn random(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(ArtError::InvalidNetwork(
                "need at least an input and an output width".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = 1.0 / (fan_in.max(1) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect();
                LayerSpec::new(fan_out, fan_in, weights, vec![0.0; fan_out], k + 1 < depth)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn revision(&self) -> Revision {
        let mut hasher = DefaultHasher::new();
        for layer in &self.layers {
            layer.out_dim.hash(&mut hasher);
            layer.in_dim.hash(&mut hasher);
            layer.apply_relu.hash(&mut hasher);
            for v in layer.weights.iter().chain(&layer.bias) {
                v.to_bits().hash(&mut hasher);
            }
        }
        Revision(hasher.finish())
    }

    pub(crate) fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(ArtError::dims("network input", self.input_dim(), len));
        }
        Ok(())
    }

    /// Concrete evaluation without recording a tape.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.affine(&a);
            if layer.apply_relu {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a
    }
}
