//! Synthetic datasets and input augmentation.

use infoplay_core::SeedStream;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Labeled,
    Unlabeled,
}

/// Inputs are stored `d₀ × N` (one column per sample); labels are
/// 0-based class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, classes: usize, split: Vec<Split>) -> Result<Self, TrainError> {
        let n = features.ncols();
        if labels.len() != n || split.len() != n {
            return Err(TrainError::ShapeMismatch(format!(
                "{n} samples, {} labels, {} split tags",
                labels.len(),
                split.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(TrainError::ShapeMismatch(format!("label {bad} with {classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// `B × d₀` batch of the given samples, in order.
    pub fn batch(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), self.dim(), |r, c| self.features[(c, indices[r])])
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// `size` samples of `split`, cycling through the classes in order and
    /// drawing from a seeded shuffle within each class.
    pub fn probe_indices(&self, split: Split, size: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); self.classes];
        for i in self.indices(split) {
            per_class[self.labels[i]].push(i);
        }
        for list in &mut per_class {
            list.shuffle(rng);
        }
        let mut cursor = vec![0; self.classes];
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            let before = out.len();
            for c in 0..self.classes {
                if out.len() == size {
                    break;
                }
                if cursor[c] < per_class[c].len() {
                    out.push(per_class[c][cursor[c]]);
                    cursor[c] += 1;
                }
            }
            if out.len() == before {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
}

/// Class means at `separation` times a random unit direction, plus unit
/// isotropic noise. Samples are stored class by class; within a class the
/// first `train_per_class` are tagged [`Split::Train`].
pub fn make_gaussian_mixture(spec: &MixtureSpec, seed: u64) -> Result<Dataset, TrainError> {
    if spec.classes < 2 {
        return Err(TrainError::config("data.classes", "need at least 2 classes"));
    }
    if spec.dim == 0 {
        return Err(TrainError::config("data.dim", "must be positive"));
    }
    let streams = SeedStream::new(seed).child("gaussian_mixture");
    let mut mean_rng = streams.rng("means");
    let mut noise_rng = streams.rng("noise");
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let dir: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut mean_rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            dir.iter().map(|x| spec.separation * x / norm).collect()
        })
        .collect();
    let per = spec.train_per_class + spec.test_per_class;
    let n = spec.classes * per;
    let mut features = DMatrix::zeros(spec.dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for k in 0..per {
            let col = labels.len();
            for r in 0..spec.dim {
                let e: f64 = StandardNormal.sample(&mut noise_rng);
                features[(r, col)] = means[c][r] + e;
            }
            labels.push(c);
            split.push(if k < spec.train_per_class {
                Split::Train
            } else {
                Split::Test
            });
        }
    }
    Dataset::new(features, labels, spec.classes, split)
}

/// All `p²` pairs `(a, b)` encoded as `onehot(a) ‖ onehot(b)` with label
/// `(a + b) mod p`; a seeded shuffle sends the first `⌊frac·p²⌋` to train.
pub fn make_modular_addition(p: usize, train_frac: f64, seed: u64) -> Result<Dataset, TrainError> {
    if p < 2 {
        return Err(TrainError::config("modulus", "must be at least 2"));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(TrainError::config("train_frac", "must lie in (0, 1)"));
    }
    let n = p * p;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeedStream::new(seed).rng("modular_addition/split"));
    let n_train = (train_frac * n as f64).floor() as usize;
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    let mut features = DMatrix::zeros(2 * p, n);
    let mut labels = Vec::with_capacity(n);
    for a in 0..p {
        for b in 0..p {
            let col = a * p + b;
            features[(a, col)] = 1.0;
            features[(p + b, col)] = 1.0;
            labels.push((a + b) % p);
        }
    }
    Dataset::new(features, labels, p, split)
}

/// Retags the train split for semi-supervised use: `labels_per_class`
/// samples of each class become [`Split::Labeled`] and `unlabeled` of the
/// remainder become [`Split::Unlabeled`]. Unused train samples keep their tag.
pub fn ssl_split(data: &Dataset, labels_per_class: usize, unlabeled: usize, seed: u64) -> Result<Dataset, TrainError> {
    let mut rng = SeedStream::new(seed).rng("ssl_split");
    let mut pool = data.indices(Split::Train);
    pool.shuffle(&mut rng);
    let mut taken = vec![0usize; data.classes];
    let mut rest = Vec::with_capacity(pool.len());
    let mut out = data.clone();
    for i in pool {
        let y = data.labels[i];
        if taken[y] < labels_per_class {
            taken[y] += 1;
            out.split[i] = Split::Labeled;
        } else {
            rest.push(i);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < labels_per_class) {
        return Err(TrainError::config(
            "labels_per_class",
            format!("class {c} has only {} training samples", taken[c]),
        ));
    }
    if rest.len() < unlabeled {
        return Err(TrainError::config(
            "unlabeled",
            format!("only {} training samples remain", rest.len()),
        ));
    }
    for &i in &rest[..unlabeled] {
        out.split[i] = Split::Unlabeled;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Weak,
    Strong,
}

pub const WEAK_SIGMA: f64 = 0.1;
pub const STRONG_SIGMA: f64 = 0.5;
pub const STRONG_DROPOUT: f64 = 0.1;

/// Additive Gaussian noise (σ 0.1 weak, 0.5 strong); the strong view also
/// zeroes each coordinate with probability 0.1. The draw depends only on
/// `(streams, call, strength)`.
pub fn augment(x: &DMatrix<f64>, strength: Strength, streams: &SeedStream, call: u64) -> DMatrix<f64> {
    let name = match strength {
        Strength::Weak => "weak",
        Strength::Strong => "strong",
    };
    let mut rng = streams.indexed("augment", call).rng(name);
    let mut out = x.clone();
    match strength {
        Strength::Weak => {
            for v in out.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += WEAK_SIGMA * e;
            }
        }
        Strength::Strong => {
            for v in out.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                let drop = rng.random::<f64>() < STRONG_DROPOUT;
                *v = if drop { 0.0 } else { *v + STRONG_SIGMA * e };
            }
        }
    }
    out
}

/// Weak and strong views of the same unlabeled rows, index-aligned.
#[derive(Debug, Clone)]
pub struct SslBatch {
    pub labeled: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub unlabeled_weak: DMatrix<f64>,
    pub unlabeled_strong: DMatrix<f64>,
    pub mu: usize,
}
