//! Embedding scores and coreset selection.
//!
//! Two scoring criteria are supported. The Gaussian score is the log-density
//! of each embedding under one Gaussian fitted to all embeddings (high means
//! typical). The moderate score is the squared distance to the coordinate-wise
//! median of the sample's class. Selection turns a score table and a data
//! ratio `R` into a [`Coreset`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::dataset::LabeledDataset;
use crate::encoder::EmbeddingSet;
use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::numerics::{
    check_fraction, fit_gaussian, kept_count, mahalanobis_sq, median, percentile_threshold,
    squared_distance, GaussianFit,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMethod {
    /// One global Gaussian over all embeddings, global top-R quota.
    Gaussian,
    /// A Gaussian per class with per-class quotas (ablation).
    GaussianPerClass,
    ModerateDs,
}

impl ScoreMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::GaussianPerClass => "gaussian_per_class",
            Self::ModerateDs => "moderate_ds",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "gaussian_per_class" => Ok(Self::GaussianPerClass),
            "moderate_ds" => Ok(Self::ModerateDs),
            other => Err(config(format!("unknown scoring method `{other}`"))),
        }
    }
}

/// Per-sample scores aligned with dataset indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub scores: Vec<f64>,
    pub method: ScoreMethod,
    pub encoder_id: String,
}

/// Selected sample indices (ascending) and their per-class tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct Coreset {
    pub indices: Vec<usize>,
    /// The requested ratio; see [`Coreset::kept_fraction`] for the realized one.
    pub data_ratio: f64,
    pub method: String,
    pub per_class_counts: Vec<usize>,
    pub total: usize,
}

impl Coreset {
    pub fn new(
        mut indices: Vec<usize>,
        labels: &[usize],
        classes: usize,
        data_ratio: f64,
        method: impl Into<String>,
    ) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        let mut per_class_counts = vec![0; classes];
        for &i in &indices {
            let l = *labels.get(i).ok_or(Error::Index {
                index: i,
                len: labels.len(),
            })?;
            if l >= classes {
                return Err(Error::Index {
                    index: l,
                    len: classes,
                });
            }
            per_class_counts[l] += 1;
        }
        Ok(Self {
            indices,
            data_ratio,
            method: method.into(),
            per_class_counts,
            total: labels.len(),
        })
    }

    /// Keeps every sample.
    pub fn full(ds: &LabeledDataset) -> Self {
        Self::new((0..ds.len()).collect(), ds.labels(), ds.classes(), 1.0, "full")
            .expect("indices are in range")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.indices.len() as f64 / self.total as f64
    }
}

fn gaussian_log_density(fit: &GaussianFit, z: &[f64]) -> Result<f64> {
    let q = mahalanobis_sq(fit, z)?;
    Ok(-0.5 * (q + fit.log_det() + fit.dimension() as f64 * math::LN_2PI))
}

/// Log-density of every embedding under one Gaussian fitted to all of them.
pub fn score_gaussian(emb: &EmbeddingSet, reg: f64) -> Result<ScoreTable> {
    let fit = fit_gaussian(&emb.refs(), reg)?;
    let scores = emb
        .refs()
        .iter()
        .map(|z| gaussian_log_density(&fit, z))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable {
        scores,
        method: ScoreMethod::Gaussian,
        encoder_id: emb.source().to_string(),
    })
}

fn class_members(labels: &[usize], classes: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: labels.len(),
        });
    }
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Index {
                index: l,
                len: classes,
            });
        }
        members[l].push(i);
    }
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(insufficient(format!("class {j} has no embeddings")));
    }
    Ok(members)
}

/// Log-density under a Gaussian fitted to the sample's own class.
pub fn score_gaussian_per_class(
    emb: &EmbeddingSet,
    labels: &[usize],
    classes: usize,
    reg: f64,
) -> Result<ScoreTable> {
    let members = class_members(labels, classes, emb.len())?;
    let mut scores = vec![0.0; emb.len()];
    for idx in &members {
        let fit = fit_gaussian(&emb.select(idx), reg)?;
        for &i in idx {
            scores[i] = gaussian_log_density(&fit, emb.vector(i))?;
        }
    }
    Ok(ScoreTable {
        scores,
        method: ScoreMethod::GaussianPerClass,
        encoder_id: emb.source().to_string(),
    })
}

/// Coordinate-wise median of a non-empty set of equal-length vectors.
pub fn coordinate_median(vectors: &[&[f64]]) -> Vec<f64> {
    let d = vectors[0].len();
    (0..d)
        .map(|j| {
            let column: Vec<f64> = vectors.iter().map(|v| v[j]).collect();
            median(&column)
        })
        .collect()
}

/// Squared distance from each embedding to its class's coordinate-wise median.
pub fn score_moderate(emb: &EmbeddingSet, labels: &[usize], classes: usize) -> Result<ScoreTable> {
    let members = class_members(labels, classes, emb.len())?;
    let mut scores = vec![0.0; emb.len()];
    for idx in &members {
        let center = coordinate_median(&emb.select(idx));
        for &i in idx {
            scores[i] = squared_distance(emb.vector(i), &center);
        }
    }
    Ok(ScoreTable {
        scores,
        method: ScoreMethod::ModerateDs,
        encoder_id: emb.source().to_string(),
    })
}

/// Within one class: the `k` members whose score is nearest the class's
/// median score, ties to the smaller index.
fn median_band(scores: &[f64], members: &[usize], k: usize) -> Vec<usize> {
    let class_scores: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
    let mid = median(&class_scores);
    let mut order: Vec<usize> = members.to_vec();
    order.sort_by(|&a, &b| {
        math::abs(scores[a] - mid)
            .total_cmp(&math::abs(scores[b] - mid))
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Builds the coreset for data ratio `ratio` from a score table.
///
/// * `gaussian`: the global top `max(1, round(R·n))` scores.
/// * `gaussian_per_class`: the top `max(1, round(R·n_j))` within each class.
/// * `moderate_ds`: per class, the `max(1, round(R·n_j))` samples whose
///   distance is closest to the class's median distance.
pub fn select(table: &ScoreTable, labels: &[usize], classes: usize, ratio: f64) -> Result<Coreset> {
    check_fraction(ratio)?;
    let n = table.scores.len();
    let indices = match table.method {
        ScoreMethod::Gaussian => {
            if labels.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    found: labels.len(),
                });
            }
            percentile_threshold(&table.scores, ratio)?
        }
        ScoreMethod::GaussianPerClass => {
            let members = class_members(labels, classes, n)?;
            let mut out = Vec::new();
            for idx in &members {
                let local: Vec<f64> = idx.iter().map(|&i| table.scores[i]).collect();
                out.extend(percentile_threshold(&local, ratio)?.into_iter().map(|j| idx[j]));
            }
            out
        }
        ScoreMethod::ModerateDs => {
            let members = class_members(labels, classes, n)?;
            let mut out = Vec::new();
            for idx in &members {
                out.extend(median_band(&table.scores, idx, kept_count(ratio, idx.len())));
            }
            out
        }
    };
    Coreset::new(indices, labels, classes, ratio, table.method.as_str())
}

/// Class-stratified uniform sampling without replacement.
pub fn select_uniform_random(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<Coreset> {
    check_fraction(ratio)?;
    let mut rng = rng::seeded(seed);
    let mut out = Vec::new();
    for idx in ds.class_indices() {
        if idx.is_empty() {
            continue;
        }
        let k = kept_count(ratio, idx.len());
        let mut idx = idx;
        let (chosen, _) = idx.partial_shuffle(&mut rng, k);
        out.extend_from_slice(chosen);
    }
    Coreset::new(out, ds.labels(), ds.classes(), ratio, "uniform_random")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DEFAULT_REG;

    fn emb(rows: &[&[f64]]) -> EmbeddingSet {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        EmbeddingSet::from_rows(&rows, "test").unwrap()
    }

    #[test]
    fn gaussian_score_closed_forms() {
        let fit = GaussianFit::from_moments(vec![0.0, 0.0], crate::numerics::Matrix::identity(2)).unwrap();
        let at_mean = gaussian_log_density(&fit, &[0.0, 0.0]).unwrap();
        assert!((at_mean + 1.837_877_066_409_345).abs() < 1e-12);
        let off = gaussian_log_density(&fit, &[1.0, 1.0]).unwrap();
        assert!((off - (-1.0 - math::LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_scores_use_one_global_fit() {
        // Four points with mean 0 and unbiased covariance exactly I.
        let s = math::sqrt(1.5);
        let e = emb(&[&[s, 0.0], &[-s, 0.0], &[0.0, s], &[0.0, -s]]);
        let t = score_gaussian(&e, 0.0).unwrap();
        for v in &t.scores {
            assert!((v - (-0.75 - math::LN_2PI)).abs() < 1e-12);
        }
        assert_eq!(t.method, ScoreMethod::Gaussian);
    }

    #[test]
    fn moderate_hand_example() {
        let e = emb(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]]);
        let t = score_moderate(&e, &[0; 5], 1).unwrap();
        assert_eq!(t.scores, vec![4.0, 1.0, 0.0, 1.0, 4.0]);
    }

    #[test]
    fn moderate_zero_at_median_and_quadratic_scaling() {
        let e = emb(&[&[1.0, 1.0], &[2.0, 3.0], &[5.0, 2.0], &[7.0, 9.0], &[8.0, 8.0]]);
        let labels = [0, 0, 0, 1, 1];
        let t = score_moderate(&e, &labels, 2).unwrap();
        assert_eq!(t.scores[1], squared_distance(&[2.0, 3.0], &[2.0, 2.0]));
        let c = 3.0;
        let scaled = emb(&[
            &[1.0 * c, 1.0 * c],
            &[2.0 * c, 3.0 * c],
            &[5.0 * c, 2.0 * c],
            &[7.0, 9.0],
            &[8.0, 8.0],
        ]);
        let t2 = score_moderate(&scaled, &labels, 2).unwrap();
        for i in 0..3 {
            assert!((t2.scores[i] - c * c * t.scores[i]).abs() < 1e-12);
        }
        assert_eq!(t2.scores[3], t.scores[3]);
        let single = emb(&[&[3.0, 4.0]]);
        assert_eq!(score_moderate(&single, &[0], 1).unwrap().scores, vec![0.0]);
    }

    #[test]
    fn moderate_rejects_empty_class() {
        let e = emb(&[&[0.0], &[1.0]]);
        assert!(matches!(
            score_moderate(&e, &[0, 0], 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn moderate_band_selection_example() {
        let table = ScoreTable {
            scores: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            method: ScoreMethod::ModerateDs,
            encoder_id: "x".into(),
        };
        let c = select(&table, &[0; 5], 1, 0.4).unwrap();
        assert_eq!(c.indices, vec![1, 2]);
        assert_eq!(c.per_class_counts, vec![2]);
    }

    #[test]
    fn gaussian_selection_example() {
        let table = ScoreTable {
            scores: vec![-5.0, -1.0, -3.0],
            method: ScoreMethod::Gaussian,
            encoder_id: "x".into(),
        };
        let c = select(&table, &[0, 1, 0], 2, 1.0 / 3.0).unwrap();
        assert_eq!(c.indices, vec![1]);
        assert_eq!(c.per_class_counts, vec![0, 1]);
        let all = select(&table, &[0, 1, 0], 2, 1.0).unwrap();
        assert_eq!(all.indices, vec![0, 1, 2]);
        assert!(select(&table, &[0, 1, 0], 2, 1.5).is_err());
    }

    #[test]
    fn per_class_gaussian_keeps_quota_per_class() {
        let e = emb(&[&[0.0, 0.1], &[0.2, 1.0], &[3.0, 0.5], &[1.0, 1.0], &[4.0, 4.0], &[5.0, 3.0], &[4.5, 6.0], &[9.0, 2.0]]);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let t = score_gaussian_per_class(&e, &labels, 2, DEFAULT_REG).unwrap();
        let c = select(&t, &labels, 2, 0.5).unwrap();
        assert_eq!(c.per_class_counts, vec![2, 2]);
    }

    fn mixture() -> LabeledDataset {
        crate::dataset::generate(&crate::dataset::DatasetSpec {
            generator: crate::dataset::Generator::GaussianMixture,
            classes: 10,
            per_class: 100,
            dim: 2,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn uniform_random_counts_and_determinism() {
        let ds = mixture();
        let c = select_uniform_random(&ds, 0.1, 9).unwrap();
        assert_eq!(c.per_class_counts, vec![10; 10]);
        assert_eq!(c, select_uniform_random(&ds, 0.1, 9).unwrap());
        assert_ne!(c.indices, select_uniform_random(&ds, 0.1, 10).unwrap().indices);
        assert_eq!(select_uniform_random(&ds, 1.0, 9).unwrap().len(), ds.len());
    }
}
