//! Class weights learned by distributionally robust optimization.
//!
//! A proxy denoiser is trained on the coreset while the class weights `α`
//! ascend the weighted excess loss `Σ_i α_i · max(0, ℓ_i(proxy) − ℓ_i(ref))`
//! over the probability simplex. The ascent is exponentiated gradient mixed
//! with a little of the uniform distribution, and the returned weights are
//! the average of `α` over all steps.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::diffusion::{draw_noise, loss_with_draws, q_sample, Condition, DenoiserModel, NoiseEstimator, NoiseSchedule};
use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::rng;

/// Tolerance on `Σ α = 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex over classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    alpha: Vec<f64>,
    steps: usize,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        Self {
            alpha: vec![1.0 / classes as f64; classes],
            steps: 0,
        }
    }

    /// `steps` is the number of updates averaged into `alpha` (0 for a raw
    /// iterate).
    pub fn new(alpha: Vec<f64>, steps: usize) -> Result<Self> {
        if alpha.is_empty() {
            return Err(insufficient("no classes"));
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(config("class weights must be positive and finite"));
        }
        let sum: f64 = alpha.iter().sum();
        if math::abs(sum - 1.0) > SIMPLEX_TOL {
            return Err(config("class weights must sum to 1"));
        }
        Ok(Self { alpha, steps })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `K · α_i`. Equal weights give exactly 1 for every class.
    pub fn loss_multipliers(&self) -> Vec<f64> {
        let k = self.alpha.len();
        if self.alpha.iter().all(|&a| a == self.alpha[0]) {
            return vec![1.0; k];
        }
        self.alpha.iter().map(|&a| k as f64 * a).collect()
    }

    /// Arithmetic mean of a trajectory, renormalized onto the simplex.
    /// An empty trajectory averages to the uniform distribution.
    pub fn average(trajectory: &[ClassWeights], classes: usize) -> Result<Self> {
        if trajectory.is_empty() {
            return Ok(Self::uniform(classes));
        }
        let mut mean = vec![0.0; classes];
        for w in trajectory {
            if w.len() != classes {
                return Err(Error::Shape {
                    expected: classes,
                    found: w.len(),
                });
            }
            for (m, a) in mean.iter_mut().zip(&w.alpha) {
                *m += a;
            }
        }
        let n = trajectory.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let sum: f64 = mean.iter().sum();
        mean.iter_mut().for_each(|m| *m /= sum);
        Self::new(mean, trajectory.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroConfig {
    pub eta: f64,
    pub smoothing: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub p_uncond: f64,
    pub seed: u64,
}

impl Default for DroConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            smoothing: 1e-3,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.02,
            p_uncond: 0.1,
            seed: 0,
        }
    }
}

impl DroConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(config("eta must be positive"));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(config("smoothing must lie in [0, 1)"));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(config("batch size and learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.p_uncond) {
            return Err(config("p_uncond must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Clipped and raw per-class excess losses.
#[derive(Clone, Debug, PartialEq)]
pub struct Margins {
    pub clipped: Vec<f64>,
    pub raw: Vec<f64>,
}

impl Margins {
    pub fn clipped_count(&self) -> usize {
        self.raw.iter().filter(|&&r| r <= 0.0).count()
    }
}

/// Mean conditional denoising loss of `model` on `samples` for fixed draws.
fn class_loss<M: NoiseEstimator + ?Sized>(
    model: &M,
    samples: &[&[f64]],
    class: usize,
    draws: &[(usize, Vec<f64>)],
    sched: &NoiseSchedule,
) -> Result<f64> {
    let mut total = 0.0;
    for (x0, (t, eps)) in samples.iter().zip(draws) {
        let x_t = q_sample(x0, *t, eps, sched)?;
        let pred = model.predict(&x_t, Condition::Class(class), *t);
        total += pred.iter().zip(eps).map(|(p, e)| (p - e) * (p - e)).sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}

/// `max(0, ℓ_i(proxy) − ℓ_i(reference))` per class, both losses evaluated on
/// the same `(t, eps)` draws.
pub fn class_margins<P, Q, R>(
    proxy: &P,
    reference: &Q,
    class_batches: &[Vec<&[f64]>],
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Margins>
where
    P: NoiseEstimator + ?Sized,
    Q: NoiseEstimator + ?Sized,
    R: Rng + ?Sized,
{
    if proxy.dim() != reference.dim() || proxy.classes() != reference.classes() {
        return Err(Error::Shape {
            expected: proxy.dim(),
            found: reference.dim(),
        });
    }
    if class_batches.len() != proxy.classes() {
        return Err(Error::Shape {
            expected: proxy.classes(),
            found: class_batches.len(),
        });
    }
    let mut raw = Vec::with_capacity(class_batches.len());
    for (class, samples) in class_batches.iter().enumerate() {
        if samples.is_empty() {
            return Err(insufficient("a class has no coreset samples"));
        }
        let draws: Vec<(usize, Vec<f64>)> = samples
            .iter()
            .map(|_| {
                let d = draw_noise(rng, sched, proxy.dim(), 0.0);
                (d.t, d.eps)
            })
            .collect();
        let lp = class_loss(proxy, samples, class, &draws, sched)?;
        let lr = class_loss(reference, samples, class, &draws, sched)?;
        raw.push(lp - lr);
    }
    let clipped = raw.iter().map(|&r| r.max(0.0)).collect();
    Ok(Margins { clipped, raw })
}

/// One exponentiated-gradient ascent step followed by mixing with uniform:
/// `α'_i ∝ α_i · exp(η · m_i)`, `α'' = (1 − s) · α' + s / K`.
///
/// When every margin is zero there is no ascent direction and `alpha` is
/// returned unchanged.
pub fn update_weights(alpha: &ClassWeights, margins: &[f64], eta: f64, smoothing: f64) -> Result<ClassWeights> {
    if margins.len() != alpha.len() {
        return Err(Error::Shape {
            expected: alpha.len(),
            found: margins.len(),
        });
    }
    if margins.iter().any(|&m| !(m >= 0.0)) {
        return Err(config("margins must be non-negative"));
    }
    if margins.iter().all(|&m| m == 0.0) {
        return Ok(ClassWeights {
            alpha: alpha.alpha.clone(),
            steps: 0,
        });
    }
    let k = alpha.len() as f64;
    let shift = margins.iter().fold(0.0_f64, |a, &m| a.max(eta * m));
    let mut next: Vec<f64> = alpha
        .alpha
        .iter()
        .zip(margins)
        .map(|(&a, &m)| a * math::exp(eta * m - shift))
        .collect();
    let sum: f64 = next.iter().sum();
    for v in &mut next {
        *v = (1.0 - smoothing) * (*v / sum) + smoothing / k;
    }
    // Underflow guard: keep every weight strictly interior.
    for v in &mut next {
        if *v <= 0.0 {
            *v = f64::MIN_POSITIVE;
        }
    }
    let sum: f64 = next.iter().sum();
    if math::abs(sum - 1.0) > SIMPLEX_TOL / 10.0 {
        next.iter_mut().for_each(|v| *v /= sum);
    }
    ClassWeights::new(next, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroOutcome {
    /// Average of `α` over every step.
    pub weights: ClassWeights,
    /// `α` after each step.
    pub trajectory: Vec<ClassWeights>,
    /// Raw (unclipped) margins seen at each step.
    pub raw_margins: Vec<Vec<f64>>,
    pub proxy: DenoiserModel,
}

impl DroOutcome {
    /// Share of per-class margins that were clipped to zero.
    pub fn clipped_fraction(&self) -> f64 {
        let total: usize = self.raw_margins.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let clipped = self.raw_margins.iter().flatten().filter(|&&r| r <= 0.0).count();
        clipped as f64 / total as f64
    }
}

/// Alternates margin estimation, a weight update, and one proxy SGD step on
/// the `α`-weighted denoising loss, for `cfg.epochs` passes over the coreset.
///
/// Each step draws a per-class batch of `min(batch_size, n_j)` samples for
/// the margins. Epoch `e` uses the stream `sub_seed(cfg.seed, e)`.
pub fn run_dro<Q: NoiseEstimator + ?Sized>(
    coreset: &LabeledDataset,
    reference: &Q,
    mut proxy: DenoiserModel,
    cfg: &DroConfig,
    sched: &NoiseSchedule,
) -> Result<DroOutcome> {
    cfg.validate()?;
    coreset.require_all_classes()?;
    let k = coreset.classes();
    if proxy.classes() != k || proxy.dim() != coreset.dim() {
        return Err(Error::Shape {
            expected: coreset.dim(),
            found: proxy.dim(),
        });
    }
    let members = coreset.class_indices();
    let mut alpha = ClassWeights::uniform(k);
    let mut trajectory = Vec::new();
    let mut raw_margins = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut rng = rng::seeded(rng::sub_seed(cfg.seed, epoch as u64));
        let mut order: Vec<usize> = (0..coreset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let class_batches: Vec<Vec<&[f64]>> = members
                .iter()
                .map(|idx| {
                    let mut idx = idx.clone();
                    let take = cfg.batch_size.min(idx.len());
                    let (chosen, _) = idx.partial_shuffle(&mut rng, take);
                    chosen.iter().map(|&i| coreset.sample(i)).collect()
                })
                .collect();
            let margins = class_margins(&proxy, reference, &class_batches, sched, &mut rng)?;
            alpha = update_weights(&alpha, &margins.clipped, cfg.eta, cfg.smoothing)?;
            raw_margins.push(margins.raw);

            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (coreset.sample(i), coreset.label(i))).collect();
            let draws: Vec<_> = batch
                .iter()
                .map(|_| draw_noise(&mut rng, sched, proxy.dim(), cfg.p_uncond))
                .collect();
            let mult = alpha.loss_multipliers();
            let out = loss_with_draws(&proxy, &batch, &draws, Some(&mult), sched)?;
            proxy.apply_sgd(&out.grad, cfg.learning_rate);
            trajectory.push(alpha.clone());
        }
    }
    let weights = ClassWeights::average(&trajectory, k)?;
    Ok(DroOutcome {
        weights,
        trajectory,
        raw_margins,
        proxy,
    })
}
