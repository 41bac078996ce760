//! Fully connected network with ReLU hidden layers and a linear head.
//!
//! Batches are row-major in the statistical sense: a batch is a `B × d`
//! matrix with one sample per row. The features handed to the information
//! metrics are the input of the head layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Layer widths `[d₀, h₁, …, C]` and one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl ArchDescriptor {
    /// ReLU on every hidden layer, identity on the head.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(Activation::Identity);
        Self { dims, activations }
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.dims.len() < 2 || self.dims.len() != self.activations.len() + 1 {
            return Err(TrainError::ShapeMismatch(format!(
                "{} widths for {} layers",
                self.dims.len(),
                self.activations.len()
            )));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(TrainError::ShapeMismatch("zero-width layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `B × d`: input of the head layer.
    pub features: DMatrix<f64>,
    /// `B × C`.
    pub logits: DMatrix<f64>,
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

/// Per-layer `(∂L/∂W, ∂L/∂b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Gradients {
    /// Same layout as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            push_row_major(&mut out, w);
            out.extend(b.iter());
        }
        out
    }

    /// Adds `dv[i]` to the head-weight row of class `labels[i]`.
    pub fn add_head_rows(&mut self, labels: &[usize], dv: &DMatrix<f64>) {
        let (w, _) = self.layers.last_mut().expect("at least one layer");
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..dv.ncols() {
                w[(y, j)] += dv[(i, j)];
            }
        }
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
}

impl Mlp {
    /// PyTorch-style init: weights and biases uniform in `±1/√fan_in`.
    pub fn new(arch: &ArchDescriptor, rng: &mut impl Rng) -> Result<Self, TrainError> {
        arch.validate()?;
        let layers = arch
            .dims
            .windows(2)
            .zip(&arch.activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(rng));
                let bias = DVector::from_fn(fan_out, |_, _| dist.sample(rng));
                Dense {
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, TrainError> {
        if layers.is_empty() {
            return Err(TrainError::ShapeMismatch("no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(TrainError::ShapeMismatch(format!("layer {k}: bias length")));
            }
            if k > 0 && layers[k - 1].outputs() != l.inputs() {
                return Err(TrainError::ShapeMismatch(format!("layer {k}: input width")));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|x| !x.is_finite()) {
                return Err(TrainError::ShapeMismatch(format!("layer {k}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn from_flat(arch: &ArchDescriptor, params: &[f64]) -> Result<Self, TrainError> {
        arch.validate()?;
        let layers = arch
            .dims
            .windows(2)
            .zip(&arch.activations)
            .map(|(w, &activation)| Dense {
                weight: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
                activation,
            })
            .collect();
        let mut m = Self { layers };
        m.set_flat_params(params)?;
        Ok(m)
    }

    pub fn arch(&self) -> ArchDescriptor {
        let mut dims = vec![self.layers[0].inputs()];
        dims.extend(self.layers.iter().map(|l| l.outputs()));
        ArchDescriptor {
            dims,
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn head(&self) -> &Dense {
        self.layers.last().expect("at least one layer")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.head().inputs()
    }

    pub fn classes(&self) -> usize {
        self.head().outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Per layer: weight in row-major order, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            push_row_major(&mut out, &l.weight);
            out.extend(l.bias.iter());
        }
        out
    }

    /// `true` at every flat index that belongs to a weight (not a bias).
    pub fn weight_positions(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(std::iter::repeat_n(true, l.weight.len()));
            out.extend(std::iter::repeat_n(false, l.bias.len()));
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), TrainError> {
        if params.len() != self.param_count() {
            return Err(TrainError::ShapeMismatch(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for r in 0..l.weight.nrows() {
                for c in 0..l.weight.ncols() {
                    l.weight[(r, c)] = it.next().expect("length checked");
                }
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<Forward, TrainError> {
        if x.ncols() != self.input_dim() {
            return Err(TrainError::ShapeMismatch(format!(
                "batch has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = &a * l.weight.transpose();
            for mut row in z.row_iter_mut() {
                row += l.bias.transpose();
            }
            let out = match l.activation {
                Activation::Identity => z.clone(),
                Activation::Relu => z.map(|v| v.max(0.0)),
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(Forward {
            features: inputs.last().expect("at least one layer").clone(),
            logits: a,
            inputs,
            pre,
        })
    }

    /// Class with the largest logit per row; ties go to the lowest index.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>, TrainError> {
        Ok(argmax_rows(&self.forward(x)?.logits))
    }

    /// Backpropagates `∂L/∂logits` and, optionally, an extra `∂L/∂features`.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_logits: &DMatrix<f64>,
        d_features: Option<&DMatrix<f64>>,
    ) -> Result<Gradients, TrainError> {
        if d_logits.shape() != fwd.logits.shape() {
            return Err(TrainError::ShapeMismatch("logit gradient shape".into()));
        }
        if let Some(df) = d_features {
            if df.shape() != fwd.features.shape() {
                return Err(TrainError::ShapeMismatch("feature gradient shape".into()));
            }
        }
        let n = self.layers.len();
        let mut grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); n];
        let mut g = d_logits.clone();
        for k in (0..n).rev() {
            let l = &self.layers[k];
            if l.activation == Activation::Relu {
                g.zip_apply(&fwd.pre[k], |gv, z| {
                    if z <= 0.0 {
                        *gv = 0.0
                    }
                });
            }
            let dw = g.transpose() * &fwd.inputs[k];
            let db = DVector::from_iterator(l.outputs(), g.column_iter().map(|c| c.sum()));
            grads[k] = (dw, db);
            if k > 0 {
                let mut below = &g * &l.weight;
                if k + 1 == n {
                    if let Some(df) = d_features {
                        below += df;
                    }
                }
                g = below;
            }
        }
        Ok(Gradients { layers: grads })
    }
}

pub fn argmax_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
