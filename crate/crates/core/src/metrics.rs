//! Distribution distances between real and generated samples, measured in
//! an encoder's feature space.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;

use crate::dataset::LabeledDataset;
use crate::encoder::Encoder;
use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::numerics::{mean_and_covariance, sqrt_psd, squared_distance, GaussianFit, Matrix};
use crate::rng;

/// Cap on the points per side that enter the MMD estimate.
pub const MMD_MAX_POINTS: usize = 2000;

/// `‖μa − μb‖² + tr Σa + tr Σb − 2 tr (Σa^½ Σb Σa^½)^½`, clamped at zero.
pub fn frechet_from_moments(mu_a: &[f64], cov_a: &Matrix, mu_b: &[f64], cov_b: &Matrix) -> Result<f64> {
    let d = mu_a.len();
    for len in [mu_b.len(), cov_a.rows(), cov_b.rows()] {
        if len != d {
            return Err(Error::Shape { expected: d, found: len });
        }
    }
    let root_a = sqrt_psd(cov_a)?;
    let inner = root_a.matmul(cov_b)?.matmul(&root_a)?.symmetrized();
    let cross = sqrt_psd(&inner)?.trace();
    let value = squared_distance(mu_a, mu_b) + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Fréchet distance between two fitted Gaussians.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    frechet_from_moments(a.mean(), a.covariance(), b.mean(), b.covariance())
}

/// Fréchet distance between the sample moments of two point sets. No
/// regularization is applied, so degenerate sets are accepted.
pub fn frechet_of_samples(a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    let (mu_a, cov_a) = mean_and_covariance(a)?;
    let (mu_b, cov_b) = mean_and_covariance(b)?;
    frechet_from_moments(&mu_a, &cov_a, &mu_b, &cov_b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled points; 1 if that is 0.
    Median,
}

/// Median Euclidean distance over all distinct pairs.
pub fn median_pairwise_distance(points: &[&[f64]]) -> f64 {
    let mut dists = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            dists.push(math::sqrt(squared_distance(points[i], points[j])));
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = dists.len();
    if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    }
}

fn kernel_mean(a: &[&[f64]], b: &[&[f64]], inv: f64) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += math::exp(-squared_distance(x, y) * inv);
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Biased squared MMD with the kernel `exp(−‖x − y‖² / (2σ²))`.
///
/// Returns the estimate and the bandwidth used.
pub fn mmd_sq_gaussian(x: &[&[f64]], y: &[&[f64]], bandwidth: Bandwidth) -> Result<(f64, f64)> {
    if x.is_empty() || y.is_empty() {
        return Err(insufficient("MMD needs points on both sides"));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().chain(y).find(|p| p.len() != d) {
        return Err(Error::Shape {
            expected: d,
            found: bad.len(),
        });
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(_) => return Err(config("bandwidth must be positive")),
        Bandwidth::Median => {
            let pooled: Vec<&[f64]> = x.iter().chain(y).copied().collect();
            let m = median_pairwise_distance(&pooled);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let inv = 1.0 / (2.0 * sigma * sigma);
    let value = kernel_mean(x, x, inv) + kernel_mean(y, y, inv) - 2.0 * kernel_mean(x, y, inv);
    Ok((value.max(0.0), sigma))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frechet: f64,
    pub mmd_sq: f64,
    pub bandwidth: f64,
    /// `None` where either side has fewer than two samples of the class.
    pub per_class_frechet: Vec<Option<f64>>,
    pub real_count: usize,
    pub generated_count: usize,
    pub encoder_id: String,
    pub seed: u64,
}

fn capped(points: Vec<&[f64]>, seed: u64) -> Vec<&[f64]> {
    if points.len() <= MMD_MAX_POINTS {
        return points;
    }
    let mut r = rng::seeded(seed);
    let mut picked = index::sample(&mut r, points.len(), MMD_MAX_POINTS).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| points[i]).collect()
}

/// Overall and per-class distances between `real` and `generated` in the
/// feature space of `encoder`. `seed` only matters when a side exceeds
/// [`MMD_MAX_POINTS`] and is subsampled for the MMD.
pub fn evaluate(real: &LabeledDataset, generated: &LabeledDataset, encoder: &Encoder, seed: u64) -> Result<EvalReport> {
    if real.classes() != generated.classes() {
        return Err(Error::Shape {
            expected: real.classes(),
            found: generated.classes(),
        });
    }
    let er = encoder.embed(real)?;
    let eg = encoder.embed(generated)?;
    let (rv, gv) = (er.refs(), eg.refs());
    let frechet = frechet_of_samples(&rv, &gv)?;
    let (mmd_sq, bandwidth) = mmd_sq_gaussian(
        &capped(rv.clone(), rng::sub_seed(seed, 0)),
        &capped(gv.clone(), rng::sub_seed(seed, 1)),
        Bandwidth::Median,
    )?;
    let real_idx = real.class_indices();
    let gen_idx = generated.class_indices();
    let mut per_class_frechet = Vec::with_capacity(real.classes());
    for (ri, gi) in real_idx.iter().zip(&gen_idx) {
        if ri.len() < 2 || gi.len() < 2 {
            per_class_frechet.push(None);
            continue;
        }
        let a: Vec<&[f64]> = ri.iter().map(|&i| rv[i]).collect();
        let b: Vec<&[f64]> = gi.iter().map(|&i| gv[i]).collect();
        per_class_frechet.push(Some(frechet_of_samples(&a, &b)?));
    }
    Ok(EvalReport {
        frechet,
        mmd_sq,
        bandwidth,
        per_class_frechet,
        real_count: real.len(),
        generated_count: generated.len(),
        encoder_id: encoder.id(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, DatasetSpec, Generator};
    use alloc::vec;

    #[test]
    fn one_dimensional_closed_form() {
        // Two 1-d Gaussians: (μa − μb)² + (σa − σb)².
        let a = Matrix::from_vec(1, 1, vec![4.0]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![9.0]).unwrap();
        let f = frechet_from_moments(&[1.0], &a, &[-1.0], &b).unwrap();
        assert!((f - (4.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn diagonal_closed_form() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![9.0, 0.0, 0.0, 1.0]).unwrap();
        let f = frechet_from_moments(&[0.0, 0.0], &a, &[3.0, 4.0], &b).unwrap();
        // 25 + (1 − 3)² + (2 − 1)²
        assert!((f - 30.0).abs() < 1e-10);
    }

    #[test]
    fn identical_sets_are_at_distance_zero() {
        let ds = generate(&DatasetSpec {
            generator: Generator::GaussianMixture,
            classes: 3,
            per_class: 40,
            dim: 4,
            seed: 5,
        })
        .unwrap();
        let r = evaluate(&ds, &ds, &Encoder::identity(4), 0).unwrap();
        assert!(r.frechet.abs() < 1e-9);
        assert_eq!(r.mmd_sq, 0.0);
        assert!(r.per_class_frechet.iter().all(|f| f.unwrap() < 1e-9));
    }

    #[test]
    fn mmd_fixed_bandwidth_by_hand() {
        let x: Vec<&[f64]> = vec![&[0.0]];
        let y: Vec<&[f64]> = vec![&[1.0]];
        let (v, s) = mmd_sq_gaussian(&x, &y, Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(s, 1.0);
        assert!((v - (2.0 - 2.0 * math::exp(-0.5))).abs() < 1e-15);
    }

    #[test]
    fn median_bandwidth_falls_back_to_one() {
        let x: Vec<&[f64]> = vec![&[2.0], &[2.0]];
        let (_, s) = mmd_sq_gaussian(&x, &x, Bandwidth::Median).unwrap();
        assert_eq!(s, 1.0);
        let pts: Vec<&[f64]> = vec![&[0.0], &[1.0], &[3.0]];
        assert_eq!(median_pairwise_distance(&pts), 2.0);
    }

    #[test]
    fn mismatched_classes_rejected() {
        let mk = |k| {
            generate(&DatasetSpec {
                generator: Generator::GaussianMixture,
                classes: k,
                per_class: 5,
                dim: 2,
                seed: 1,
            })
            .unwrap()
        };
        assert!(evaluate(&mk(2), &mk(3), &Encoder::identity(2), 0).is_err());
    }
}
