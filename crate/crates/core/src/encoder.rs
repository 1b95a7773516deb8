//! Surrogate encoders that map samples to the latent vectors used for
//! scoring and evaluation.
//!
//! Encoders see features only; labels are never an input.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::dataset::LabeledDataset;
use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::nn::{sgd_step, Mlp};
use crate::numerics::{mean_and_covariance, symmetric_eigen, Matrix};
use crate::rng;

/// Latent vectors, one per dataset sample and in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<f64>,
    dim: usize,
    source: String,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<f64>, dim: usize, source: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(config("embedding dimension must be at least 1"));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                expected: dim,
                found: vectors.len() % dim,
            });
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(config("embeddings must be finite"));
        }
        Ok(Self {
            vectors,
            dim,
            source: source.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    found: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(flat, dim, source)
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn refs(&self) -> Vec<&[f64]> {
        self.vectors.chunks_exact(self.dim).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&[f64]> {
        indices.iter().map(|&i| self.vector(i)).collect()
    }
}

/// Linear projection onto the leading principal axes of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaEncoder {
    mean: Vec<f64>,
    /// `components × d`, rows are unit principal axes.
    axes: Matrix,
    explained: Vec<f64>,
}

impl PcaEncoder {
    pub fn from_parts(mean: Vec<f64>, axes: Matrix, explained: Vec<f64>) -> Result<Self> {
        if axes.cols() != mean.len() || axes.rows() != explained.len() || axes.rows() == 0 {
            return Err(Error::Shape {
                expected: mean.len(),
                found: axes.cols(),
            });
        }
        Ok(Self {
            mean,
            axes,
            explained,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn axes(&self) -> &Matrix {
        &self.axes
    }

    /// Variance captured by each component, non-increasing.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    pub fn components(&self) -> usize {
        self.axes.rows()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.axes.rows())
            .map(|k| {
                self.axes
                    .row(k)
                    .iter()
                    .zip(x.iter().zip(self.mean.iter()))
                    .map(|(a, (xi, mi))| a * (xi - mi))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.axes.row(k)) {
                *o += zk * a;
            }
        }
        out
    }
}

pub fn pca_encoder(ds: &LabeledDataset, components: usize) -> Result<PcaEncoder> {
    if components == 0 || components > ds.dim() {
        return Err(config(format!(
            "PCA components must lie in 1..={}, got {components}",
            ds.dim()
        )));
    }
    let (mean, cov) = mean_and_covariance(&ds.sample_refs())?;
    let (values, vectors) = symmetric_eigen(&cov)?;
    let d = ds.dim();
    let mut axes = Matrix::zeros(components, d);
    for k in 0..components {
        // Sign convention: the largest-magnitude coordinate is positive.
        let col: Vec<f64> = (0..d).map(|i| vectors.get(i, k)).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if math::abs(v) > math::abs(best) { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in col.iter().enumerate() {
            axes.set(k, i, sign * v);
        }
    }
    let explained = values[..components].iter().map(|&v| v.max(0.0)).collect();
    PcaEncoder::from_parts(mean, axes, explained)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// A ReLU classifier whose last hidden layer serves as the embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierEncoder {
    net: Mlp,
    epochs_trained: usize,
    train_accuracy: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| math::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl ClassifierEncoder {
    pub fn from_parts(net: Mlp, epochs_trained: usize, train_accuracy: f64) -> Result<Self> {
        if net.sizes().len() < 3 {
            return Err(config("classifier encoder needs at least one hidden layer"));
        }
        Ok(Self {
            net,
            epochs_trained,
            train_accuracy,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.net.forward(x))
    }

    pub fn accuracy(&self, ds: &LabeledDataset) -> f64 {
        let hits = (0..ds.len())
            .filter(|&i| self.predict(ds.sample(i)) == ds.label(i))
            .count();
        hits as f64 / ds.len() as f64
    }

    pub fn embed_one(&self, x: &[f64]) -> Vec<f64> {
        self.net.forward_trace(x).penultimate().to_vec()
    }
}

/// Cross-entropy training with plain minibatch SGD and a seeded shuffle.
pub fn train_classifier(ds: &LabeledDataset, cfg: &ClassifierConfig) -> Result<ClassifierEncoder> {
    if cfg.epochs == 0 {
        return Err(config("classifier training needs at least one epoch"));
    }
    if cfg.hidden.is_empty() {
        return Err(config("classifier encoder needs at least one hidden layer"));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(config("batch size and learning rate must be positive"));
    }
    let present = ds.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(insufficient("classifier training needs at least 2 populated classes"));
    }
    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(ds.dim());
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(ds.classes());
    let mut init_rng = rng::seeded(rng::sub_seed(cfg.seed, 0));
    let mut net = Mlp::new(&sizes, &mut init_rng)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut grad = vec![0.0; net.num_params()];
    for epoch in 0..cfg.epochs {
        let mut rng = rng::seeded(rng::sub_seed(cfg.seed, epoch as u64 + 1));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let trace = net.forward_trace(ds.sample(i));
                let mut g_out = softmax(trace.output());
                g_out[ds.label(i)] -= 1.0;
                g_out.iter_mut().for_each(|g| *g *= scale);
                net.backward(&trace, &g_out, &mut grad);
            }
            sgd_step(net.params_mut(), &grad, cfg.learning_rate);
        }
    }
    let mut enc = ClassifierEncoder {
        net,
        epochs_trained: cfg.epochs,
        train_accuracy: 0.0,
    };
    enc.train_accuracy = enc.accuracy(ds);
    Ok(enc)
}

/// Any of the supported surrogate encoders.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Identity { dim: usize },
    Pca(PcaEncoder),
    Classifier(ClassifierEncoder),
}

impl Encoder {
    pub fn identity(dim: usize) -> Self {
        Self::Identity { dim }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Pca(p) => p.mean.len(),
            Self::Classifier(c) => c.net.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Pca(p) => p.components(),
            Self::Classifier(c) => {
                let s = c.net.sizes();
                s[s.len() - 2]
            }
        }
    }

    /// Short stable identifier recorded alongside scores and reports.
    pub fn id(&self) -> String {
        match self {
            Self::Identity { dim } => format!("identity-d{dim}"),
            Self::Pca(p) => format!("pca-d{}-k{}", p.mean.len(), p.components()),
            Self::Classifier(c) => {
                let widths: Vec<String> = c.net.sizes().iter().map(|w| format!("{w}")).collect();
                let fp = crate::rng::fnv1a(
                    &c.net
                        .params()
                        .iter()
                        .flat_map(|p| p.to_bits().to_le_bytes())
                        .collect::<Vec<u8>>(),
                );
                format!("classifier-{}-{:016x}", widths.join("x"), fp)
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Identity { .. } => x.to_vec(),
            Self::Pca(p) => p.project(x),
            Self::Classifier(c) => c.embed_one(x),
        }
    }

    pub fn embed(&self, ds: &LabeledDataset) -> Result<EmbeddingSet> {
        if ds.dim() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                found: ds.dim(),
            });
        }
        let mut flat = Vec::with_capacity(ds.len() * self.output_dim());
        for x in ds.samples() {
            flat.extend(self.encode(x));
        }
        EmbeddingSet::new(flat, self.output_dim(), self.id())
    }
}
