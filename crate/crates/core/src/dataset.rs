//! Labeled datasets and the synthetic generators that stand in for image
//! corpora at desk scale.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::rng::{self, normal};

/// Flattened feature vectors with class labels in `0..classes`.
///
/// Features are stored as `f64` but every generator quantizes through `f32`,
/// the precision of the on-disk format, so save/load round trips are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    name: String,
    classes: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    /// Validates lengths, labels and finiteness. Classes may be empty; use
    /// [`LabeledDataset::empty_classes`] to check coverage.
    pub fn new(
        name: impl Into<String>,
        classes: usize,
        dim: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(config("feature dimension must be at least 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Index {
                index: bad,
                len: classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(config("features must be finite"));
        }
        Ok(Self {
            name: name.into(),
            classes,
            dim,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn sample_refs(&self) -> Vec<&[f64]> {
        self.samples().collect()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of each class's samples, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn require_all_classes(&self) -> Result<()> {
        match self.empty_classes().first() {
            None => Ok(()),
            Some(j) => Err(insufficient(format!("class {j} has no samples"))),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// A subset together with the classes it no longer covers.
#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    pub dataset: LabeledDataset,
    pub empty_classes: Vec<usize>,
}

/// Restricts `ds` to `indices` (any order, no repeats), keeping dataset order.
pub fn subset(ds: &LabeledDataset, indices: &[usize]) -> Result<Subset> {
    if indices.is_empty() {
        return Err(insufficient("empty index set"));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Index {
                index: w[0],
                len: ds.len(),
            });
        }
    }
    if let Some(&last) = sorted.last() {
        if last >= ds.len() {
            return Err(Error::Index {
                index: last,
                len: ds.len(),
            });
        }
    }
    let mut features = Vec::with_capacity(sorted.len() * ds.dim);
    let mut labels = Vec::with_capacity(sorted.len());
    for &i in &sorted {
        features.extend_from_slice(ds.sample(i));
        labels.push(ds.label(i));
    }
    let dataset = LabeledDataset {
        name: ds.name.clone(),
        classes: ds.classes,
        dim: ds.dim,
        features,
        labels,
    };
    let empty_classes = dataset.empty_classes();
    Ok(Subset {
        dataset,
        empty_classes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    GaussianMixture,
    RingMixture,
    SpriteImages,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GaussianMixture => "gaussian_mixture",
            Self::RingMixture => "ring_mixture",
            Self::SpriteImages => "sprite_images",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_mixture" => Ok(Self::GaussianMixture),
            "ring_mixture" => Ok(Self::RingMixture),
            "sprite_images" => Ok(Self::SpriteImages),
            other => Err(config(format!("unknown generator `{other}`"))),
        }
    }
}

pub const SPRITE_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub classes: usize,
    pub per_class: usize,
    /// Ignored by `sprite_images`, which is always 8×8 = 64.
    pub dim: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(config("at least 2 classes are required"));
        }
        if self.per_class < 2 {
            return Err(config("at least 2 samples per class are required"));
        }
        if self.classes > usize::from(u16::MAX) {
            return Err(config("too many classes"));
        }
        match self.generator {
            Generator::GaussianMixture | Generator::RingMixture if self.dim < 2 => {
                Err(config("mixture generators need dimension >= 2"))
            }
            _ => Ok(()),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.generator {
            Generator::SpriteImages => SPRITE_SIDE * SPRITE_SIDE,
            _ => self.dim,
        }
    }
}

#[inline]
fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Draws a balanced dataset; a pure function of `spec`.
///
/// Samples are emitted class by class and then shuffled once, so every class
/// has exactly `per_class` members.
pub fn generate(spec: &DatasetSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let dim = spec.output_dim();
    let k = spec.classes;
    let n = k * spec.per_class;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    match spec.generator {
        Generator::GaussianMixture => {
            for c in 0..k {
                let angle = 2.0 * core::f64::consts::PI * c as f64 / k as f64;
                for _ in 0..spec.per_class {
                    let mut v: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
                    v[0] += 4.0 * math::cos(angle);
                    v[1] += 4.0 * math::sin(angle);
                    rows.push((v, c));
                }
            }
        }
        Generator::RingMixture => {
            for c in 0..k {
                let radius = 1.0 + 1.5 * c as f64;
                for _ in 0..spec.per_class {
                    let angle = rng.random_range(0.0..2.0 * core::f64::consts::PI);
                    let r = radius + 0.1 * normal(&mut rng);
                    let mut v: Vec<f64> = (0..dim).map(|_| 0.1 * normal(&mut rng)).collect();
                    v[0] = r * math::cos(angle);
                    v[1] = r * math::sin(angle);
                    rows.push((v, c));
                }
            }
        }
        Generator::SpriteImages => {
            let templates: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..dim)
                        .map(|_| if rng.random_bool(0.5) { 0.85 } else { 0.15 })
                        .collect()
                })
                .collect();
            for (c, template) in templates.iter().enumerate() {
                for _ in 0..spec.per_class {
                    let v = template
                        .iter()
                        .map(|&p| (p + 0.1 * normal(&mut rng)).clamp(0.0, 1.0))
                        .collect();
                    rows.push((v, c));
                }
            }
        }
    }
    rows.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (v, c) in rows {
        features.extend(v.into_iter().map(quantize));
        labels.push(c);
    }
    let name = format!(
        "{}-k{}-n{}-d{}-s{}",
        spec.generator, k, spec.per_class, dim, spec.seed
    );
    LabeledDataset::new(name, k, dim, features, labels)
}

/// Applies `f` to every sample (index, features), keeping labels.
pub fn map_samples(
    ds: &LabeledDataset,
    mut f: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<LabeledDataset> {
    let mut features = Vec::with_capacity(ds.features.len());
    for i in 0..ds.len() {
        let v = f(i, ds.sample(i));
        if v.len() != ds.dim {
            return Err(Error::Shape {
                expected: ds.dim,
                found: v.len(),
            });
        }
        features.extend(v);
    }
    LabeledDataset::new(
        ds.name.to_string(),
        ds.classes,
        ds.dim,
        features,
        ds.labels.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(generator: Generator, classes: usize, per_class: usize, dim: usize) -> DatasetSpec {
        DatasetSpec {
            generator,
            classes,
            per_class,
            dim,
            seed: 7,
        }
    }

    #[test]
    fn mixture_is_balanced() {
        let ds = generate(&spec(Generator::GaussianMixture, 3, 100, 2)).unwrap();
        assert_eq!(ds.len(), 300);
        assert_eq!(ds.class_counts(), vec![100, 100, 100]);
        assert!(ds.empty_classes().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        for g in [
            Generator::GaussianMixture,
            Generator::RingMixture,
            Generator::SpriteImages,
        ] {
            let s = spec(g, 3, 20, 4);
            assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        }
        let mut other = spec(Generator::GaussianMixture, 3, 20, 2);
        let a = generate(&other).unwrap();
        other.seed = 8;
        assert_ne!(a, generate(&other).unwrap());
    }

    #[test]
    fn sprites_are_64_pixels_in_unit_range() {
        let ds = generate(&spec(Generator::SpriteImages, 2, 10, 0)).unwrap();
        assert_eq!(ds.dim(), 64);
        assert!(ds.features().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn mixture_class_means_sit_on_radius_four() {
        let ds = generate(&spec(Generator::GaussianMixture, 4, 400, 2)).unwrap();
        for (c, idx) in ds.class_indices().iter().enumerate() {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| ds.sample(i)).collect();
            let m = crate::numerics::mean_vector(&rows).unwrap();
            let r = math::sqrt(m[0] * m[0] + m[1] * m[1]);
            assert!((r - 4.0).abs() < 0.3, "class {c} radius {r}");
        }
    }

    #[test]
    fn unknown_generator_is_config_error() {
        assert!(matches!("moons".parse::<Generator>(), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(Generator::GaussianMixture, 1, 10, 2)).is_err());
        assert!(generate(&spec(Generator::GaussianMixture, 2, 1, 2)).is_err());
    }

    #[test]
    fn subset_identity_and_order() {
        let ds = generate(&spec(Generator::GaussianMixture, 3, 5, 2)).unwrap();
        let all: Vec<usize> = (0..ds.len()).rev().collect();
        let s = subset(&ds, &all).unwrap();
        assert_eq!(s.dataset, ds);
        let picked = subset(&ds, &[9, 2, 4]).unwrap().dataset;
        assert_eq!(picked.sample(0), ds.sample(2));
        assert_eq!(picked.sample(1), ds.sample(4));
        assert_eq!(picked.sample(2), ds.sample(9));
        assert_eq!(picked.label(2), ds.label(9));
    }

    #[test]
    fn subset_guards() {
        let ds = generate(&spec(Generator::GaussianMixture, 3, 5, 2)).unwrap();
        assert!(matches!(subset(&ds, &[]), Err(Error::InsufficientData(_))));
        assert!(matches!(subset(&ds, &[15]), Err(Error::Index { .. })));
        assert!(matches!(subset(&ds, &[1, 1]), Err(Error::Index { .. })));
    }

    #[test]
    fn single_class_subset_flags_vanished_classes() {
        let ds = generate(&spec(Generator::GaussianMixture, 4, 5, 2)).unwrap();
        let idx = ds.class_indices()[2].clone();
        let s = subset(&ds, &idx).unwrap();
        assert_eq!(s.dataset.classes(), 4);
        assert_eq!(s.empty_classes, vec![0, 1, 3]);
    }

    #[test]
    fn new_rejects_bad_labels() {
        assert!(matches!(
            LabeledDataset::new("x", 2, 1, vec![0.0, 1.0], vec![0, 2]),
            Err(Error::Index { .. })
        ));
    }
}
