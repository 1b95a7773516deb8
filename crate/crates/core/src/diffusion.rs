//! A small class-conditional denoising diffusion model.
//!
//! The denoiser is a ReLU MLP over `[x_t, time embedding, class embedding]`.
//! The class table has `K + 1` rows; row `K` is the null token used for
//! condition dropout during training and for the unconditional branch of
//! classifier-free guidance.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::error::{config, insufficient, Error, Result};
use crate::math;
use crate::nn::{sgd_step, Mlp, Trace};
use crate::reweighting::ClassWeights;
use crate::rng::{self, fill_normal, SeededRng};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_BETA_START: f64 = 1e-4;
/// Large enough that `ᾱ_T` is about `1e-5` at `T = 100`.
pub const DEFAULT_BETA_END: f64 = 0.2;

/// Linear β schedule. Timesteps are 1-based: `t ∈ 1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(config("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(config("betas must satisfy 0 < beta_start <= beta_end < 1"));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// `T = 100`, `β ∈ [1e-4, 0.2]`.
    pub fn desk_default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(config("schedule needs at least one step"));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) || betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(config("betas must be non-decreasing in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Cumulative signal retention; `alpha_bar(0)` is 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::TimestepRange { t, max: self.steps() })
        } else {
            Ok(())
        }
    }
}

/// `√ᾱ_t · x0 + √(1 − ᾱ_t) · eps`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_t(t)?;
    if x0.len() != eps.len() {
        return Err(Error::Shape {
            expected: x0.len(),
            found: eps.len(),
        });
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    Class(usize),
    Unconditional,
}

/// Anything that predicts the noise in `x_t`.
pub trait NoiseEstimator {
    fn dim(&self) -> usize;
    fn classes(&self) -> usize;
    fn predict(&self, x_t: &[f64], cond: Condition, t: usize) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub dim: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
    /// Even width of the sinusoidal time embedding.
    pub time_dim: usize,
    pub class_dim: usize,
}

impl DenoiserConfig {
    pub fn new(dim: usize, classes: usize) -> Self {
        Self {
            dim,
            classes,
            hidden: vec![128, 128],
            time_dim: 16,
            class_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.classes == 0 || self.class_dim == 0 {
            return Err(config("denoiser dimensions must be non-zero"));
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return Err(config("time embedding width must be even and non-zero"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(config("denoiser needs non-empty hidden widths"));
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.dim + self.time_dim + self.class_dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.dim);
        sizes
    }
}

/// Sinusoidal embedding of a 1-based timestep.
pub fn time_embedding(t: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = Vec::with_capacity(width);
    for i in 0..half {
        let freq = math::exp(-math::ln(10_000.0) * i as f64 / half as f64);
        out.push(math::sin(t as f64 * freq));
    }
    for i in 0..half {
        let freq = math::exp(-math::ln(10_000.0) * i as f64 / half as f64);
        out.push(math::cos(t as f64 * freq));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    config: DenoiserConfig,
    net: Mlp,
    /// `(K + 1) × class_dim`, row-major.
    class_table: Vec<f64>,
}

impl DenoiserModel {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let net = Mlp::new(&config.layer_sizes(), &mut rng)?;
        let mut class_table = vec![0.0; (config.classes + 1) * config.class_dim];
        fill_normal(&mut rng, &mut class_table);
        Ok(Self {
            config,
            net,
            class_table,
        })
    }

    pub fn from_parts(cfg: DenoiserConfig, net_params: Vec<f64>, class_table: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let net = Mlp::from_params(cfg.layer_sizes(), net_params)?;
        let expected = (cfg.classes + 1) * cfg.class_dim;
        if class_table.len() != expected {
            return Err(Error::Shape {
                expected,
                found: class_table.len(),
            });
        }
        if net.params().iter().chain(&class_table).any(|p| !p.is_finite()) {
            return Err(config("model parameters must be finite"));
        }
        Ok(Self {
            config: cfg,
            net,
            class_table,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn net_params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn class_table(&self) -> &[f64] {
        &self.class_table
    }

    pub fn null_token(&self) -> usize {
        self.config.classes
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.class_table.len()
    }

    /// All parameters: network first, then the class table.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.class_table);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let split = self.net.num_params();
        self.net.params_mut().copy_from_slice(&params[..split]);
        self.class_table.copy_from_slice(&params[split..]);
        Ok(())
    }

    pub(crate) fn apply_sgd(&mut self, grad: &[f64], lr: f64) {
        let split = self.net.num_params();
        sgd_step(self.net.params_mut(), &grad[..split], lr);
        sgd_step(&mut self.class_table, &grad[split..], lr);
    }

    fn token(&self, cond: Condition) -> usize {
        match cond {
            Condition::Class(c) => {
                debug_assert!(c < self.config.classes);
                c
            }
            Condition::Unconditional => self.null_token(),
        }
    }

    fn input(&self, x_t: &[f64], token: usize, t: usize) -> Vec<f64> {
        let cd = self.config.class_dim;
        let mut v = Vec::with_capacity(self.net.input_dim());
        v.extend_from_slice(x_t);
        v.extend(time_embedding(t, self.config.time_dim));
        v.extend_from_slice(&self.class_table[token * cd..(token + 1) * cd]);
        v
    }

    fn forward_trace(&self, x_t: &[f64], token: usize, t: usize) -> Trace {
        self.net.forward_trace(&self.input(x_t, token, t))
    }

    /// Accumulates `∂L/∂θ` given `∂L/∂ε̂`.
    fn backward(&self, trace: &Trace, token: usize, grad_out: &[f64], grad: &mut [f64]) {
        let split = self.net.num_params();
        let (g_net, g_table) = grad.split_at_mut(split);
        let g_in = self.net.backward(trace, grad_out, g_net);
        let cd = self.config.class_dim;
        let offset = self.config.dim + self.config.time_dim;
        for (g, gi) in g_table[token * cd..(token + 1) * cd].iter_mut().zip(&g_in[offset..]) {
            *g += gi;
        }
    }
}

impl NoiseEstimator for DenoiserModel {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn predict(&self, x_t: &[f64], cond: Condition, t: usize) -> Vec<f64> {
        self.net.forward(&self.input(x_t, self.token(cond), t))
    }
}

/// Random quantities for one training example: timestep, target noise and
/// whether the condition is replaced by the null token.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Vec<f64>,
    pub drop_condition: bool,
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, sched: &NoiseSchedule, dim: usize, p_uncond: f64) -> NoiseDraw {
    let t = rng.random_range(1..=sched.steps());
    let mut eps = vec![0.0; dim];
    fill_normal(rng, &mut eps);
    let drop_condition = p_uncond > 0.0 && rng.random::<f64>() < p_uncond;
    NoiseDraw {
        t,
        eps,
        drop_condition,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean over the batch of `m_y · ‖ε_θ(x_t, c, t) − eps‖²` and its exact
/// gradient, for fixed draws. `multipliers[y]` defaults to 1.
pub fn loss_with_draws(
    model: &DenoiserModel,
    batch: &[(&[f64], usize)],
    draws: &[NoiseDraw],
    multipliers: Option<&[f64]>,
    sched: &NoiseSchedule,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(insufficient("empty training batch"));
    }
    if draws.len() != batch.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            found: draws.len(),
        });
    }
    let k = model.config.classes;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut total = 0.0;
    let mut g_out = vec![0.0; model.config.dim];
    for (&(x0, label), draw) in batch.iter().zip(draws) {
        if label >= k {
            return Err(Error::Index { index: label, len: k });
        }
        let x_t = q_sample(x0, draw.t, &draw.eps, sched)?;
        let token = if draw.drop_condition { model.null_token() } else { label };
        let trace = model.forward_trace(&x_t, token, draw.t);
        let m = multipliers.map_or(1.0, |m| m[label]);
        let mut sq = 0.0;
        for ((g, p), e) in g_out.iter_mut().zip(trace.output()).zip(&draw.eps) {
            let r = p - e;
            sq += r * r;
            *g = 2.0 * m * scale * r;
        }
        total += m * sq;
        model.backward(&trace, token, &g_out, &mut grad);
    }
    Ok(BatchLoss {
        loss: total * scale,
        grad,
    })
}

/// Draws `(t, eps, dropout)` per example from `rng`, then evaluates
/// [`loss_with_draws`].
pub fn loss_batch<R: Rng + ?Sized>(
    model: &DenoiserModel,
    batch: &[(&[f64], usize)],
    sched: &NoiseSchedule,
    weights: Option<&ClassWeights>,
    p_uncond: f64,
    rng: &mut R,
) -> Result<BatchLoss> {
    let draws: Vec<NoiseDraw> = batch
        .iter()
        .map(|_| draw_noise(rng, sched, model.config.dim, p_uncond))
        .collect();
    let multipliers = match weights {
        Some(w) => {
            if w.len() != model.config.classes {
                return Err(Error::Shape {
                    expected: model.config.classes,
                    found: w.len(),
                });
            }
            Some(w.loss_multipliers())
        }
        None => None,
    };
    loss_with_draws(model, batch, &draws, multipliers.as_deref(), sched)
}

/// How class weights enter training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Per-sample loss multiplier `K · α_y`.
    #[default]
    Multiplier,
    /// Each epoch draws `n` samples with replacement, class `y` receiving
    /// probability mass `α_y`; losses are unweighted.
    Resample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub p_uncond: f64,
    pub class_weights: Option<ClassWeights>,
    pub weight_mode: WeightMode,
    /// Fraction of epochs spent on the coreset before switching to full data.
    pub anneal_ratio: Option<f64>,
    /// Epochs already completed, for resuming from a checkpoint.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 0.02,
            seed: 0,
            p_uncond: 0.1,
            class_weights: None,
            weight_mode: WeightMode::Multiplier,
            anneal_ratio: None,
            start_epoch: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.p_uncond) {
            return Err(config("p_uncond must lie in [0, 1)"));
        }
        if let Some(a) = self.anneal_ratio {
            if !(a > 0.0 && a <= 1.0) {
                return Err(config("anneal ratio must lie in (0, 1]"));
            }
        }
        if self.start_epoch > self.epochs {
            return Err(config("start epoch beyond the epoch budget"));
        }
        Ok(())
    }

    /// Number of leading epochs trained on the coreset.
    pub fn coreset_epochs(&self) -> usize {
        crate::accounting::coreset_epochs(self.epochs, self.anneal_ratio)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// `(epoch, mean loss)` with 1-based epochs.
    pub epoch_losses: Vec<(usize, f64)>,
    pub optimizer_steps: usize,
    pub sample_gradients: usize,
    pub coreset_epochs: usize,
}

fn resample_order(ds: &LabeledDataset, weights: &ClassWeights, rng: &mut SeededRng) -> Vec<usize> {
    let counts = ds.class_counts();
    let mut cumulative = Vec::with_capacity(ds.len());
    let mut acc = 0.0;
    for &l in ds.labels() {
        acc += weights.alpha()[l] / counts[l] as f64;
        cumulative.push(acc);
    }
    (0..ds.len())
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(ds.len() - 1)
        })
        .collect()
}

/// Minibatch SGD on the denoising loss.
///
/// Epoch `e` draws everything from its own stream `sub_seed(seed, e)`, so a
/// run resumed at `start_epoch` continues the uninterrupted trajectory.
pub fn train(
    model: &mut DenoiserModel,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    full: Option<&LabeledDataset>,
    sched: &NoiseSchedule,
) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.anneal_ratio.is_some() && full.is_none() {
        return Err(config("annealing requires the full dataset"));
    }
    for ds in core::iter::once(data).chain(full) {
        if ds.dim() != model.config.dim || ds.classes() != model.config.classes {
            return Err(Error::Shape {
                expected: model.config.dim,
                found: ds.dim(),
            });
        }
        if ds.is_empty() {
            return Err(insufficient("training set is empty"));
        }
    }
    let weights = cfg.class_weights.as_ref();
    if let Some(w) = weights {
        if w.len() != model.config.classes {
            return Err(Error::Shape {
                expected: model.config.classes,
                found: w.len(),
            });
        }
    }
    let multipliers = match (weights, cfg.weight_mode) {
        (Some(w), WeightMode::Multiplier) => Some(w.loss_multipliers()),
        _ => None,
    };
    let coreset_epochs = cfg.coreset_epochs();
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        optimizer_steps: 0,
        sample_gradients: 0,
        coreset_epochs,
    };
    for epoch in cfg.start_epoch..cfg.epochs {
        let ds = match full {
            Some(f) if epoch >= coreset_epochs && cfg.anneal_ratio.is_some() => f,
            _ => data,
        };
        let mut rng = rng::seeded(rng::sub_seed(cfg.seed, epoch as u64));
        let order = match (weights, cfg.weight_mode) {
            (Some(w), WeightMode::Resample) => resample_order(ds, w, &mut rng),
            _ => {
                let mut o: Vec<usize> = (0..ds.len()).collect();
                o.shuffle(&mut rng);
                o
            }
        };
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (ds.sample(i), ds.label(i))).collect();
            let draws: Vec<NoiseDraw> = batch
                .iter()
                .map(|_| draw_noise(&mut rng, sched, model.config.dim, cfg.p_uncond))
                .collect();
            let out = loss_with_draws(model, &batch, &draws, multipliers.as_deref(), sched)?;
            model.apply_sgd(&out.grad, cfg.learning_rate);
            loss_sum += out.loss;
            batches += 1;
            report.optimizer_steps += 1;
            report.sample_gradients += batch.len();
        }
        report.epoch_losses.push((epoch + 1, loss_sum / batches as f64));
    }
    Ok(report)
}

/// `(1 + w) · ε(x_t, c, t) − w · ε(x_t, ∅, t)`.
pub fn cfg_eps<M: NoiseEstimator + ?Sized>(model: &M, x_t: &[f64], class: usize, t: usize, w: f64) -> Vec<f64> {
    let cond = model.predict(x_t, Condition::Class(class), t);
    if w == 0.0 {
        return cond;
    }
    let uncond = model.predict(x_t, Condition::Unconditional, t);
    cond.iter().zip(&uncond).map(|(c, u)| (1.0 + w) * c - w * u).collect()
}

fn check_sampling<M: NoiseEstimator + ?Sized>(model: &M, class: usize, w: f64) -> Result<()> {
    if !(w >= 0.0) {
        return Err(config("guidance weight must be non-negative"));
    }
    if class >= model.classes() {
        return Err(Error::Index {
            index: class,
            len: model.classes(),
        });
    }
    Ok(())
}

/// Ancestral sampling over all `T` steps with posterior variance
/// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`. Chain `i` uses stream
/// `sub_seed(seed, i)`.
pub fn sample_ddpm<M: NoiseEstimator + ?Sized>(
    model: &M,
    sched: &NoiseSchedule,
    class: usize,
    w: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_sampling(model, class, w)?;
    let d = model.dim();
    let mut out = Vec::with_capacity(n);
    for chain in 0..n {
        let mut rng = rng::seeded(rng::sub_seed(seed, chain as u64));
        let mut x = vec![0.0; d];
        fill_normal(&mut rng, &mut x);
        let mut z = vec![0.0; d];
        for t in (1..=sched.steps()).rev() {
            let eps = cfg_eps(model, &x, class, t, w);
            let ab = sched.alpha_bar(t);
            let coef = sched.beta(t) / math::sqrt(1.0 - ab);
            let inv_sqrt_alpha = 1.0 / math::sqrt(sched.alpha(t));
            for (xi, ei) in x.iter_mut().zip(&eps) {
                *xi = inv_sqrt_alpha * (*xi - coef * ei);
            }
            if t > 1 {
                let var = (1.0 - sched.alpha_bar(t - 1)) / (1.0 - ab) * sched.beta(t);
                let sigma = math::sqrt(var);
                fill_normal(&mut rng, &mut z);
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += sigma * zi;
                }
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Uniformly strided increasing timesteps ending at `T`: `⌊i·T/steps⌋` for
/// `i = 1..=steps`.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(config("DDIM steps must lie in 1..=T"));
    }
    Ok((1..=steps).map(|i| i * total / steps).collect())
}

/// Deterministic (η = 0) DDIM sampling. Randomness is used only for `x_T`.
pub fn sample_ddim<M: NoiseEstimator + ?Sized>(
    model: &M,
    sched: &NoiseSchedule,
    class: usize,
    w: f64,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_sampling(model, class, w)?;
    let grid = ddim_timesteps(sched.steps(), steps)?;
    let d = model.dim();
    let mut out = Vec::with_capacity(n);
    for chain in 0..n {
        let mut rng = rng::seeded(rng::sub_seed(seed, chain as u64));
        let mut x = vec![0.0; d];
        fill_normal(&mut rng, &mut x);
        for i in (0..grid.len()).rev() {
            let t = grid[i];
            let prev = if i == 0 { 0 } else { grid[i - 1] };
            let eps = cfg_eps(model, &x, class, t, w);
            let ab = sched.alpha_bar(t);
            let ab_prev = sched.alpha_bar(prev);
            let (sa, sb) = (math::sqrt(ab), math::sqrt(1.0 - ab));
            let (pa, pb) = (math::sqrt(ab_prev), math::sqrt(1.0 - ab_prev));
            for (xi, ei) in x.iter_mut().zip(&eps) {
                let x0 = (*xi - sb * ei) / sa;
                *xi = pa * x0 + pb * ei;
            }
        }
        out.push(x);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    Ddpm,
    Ddim { steps: usize },
}

/// `per_class` samples for every class, class `c` seeded by
/// `sub_seed(seed, c)`, quantized to `f32` like stored datasets.
pub fn sample_labeled<M: NoiseEstimator + ?Sized>(
    model: &M,
    sched: &NoiseSchedule,
    sampler: Sampler,
    w: f64,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(config("need at least one sample per class"));
    }
    let mut features = Vec::with_capacity(per_class * model.classes() * model.dim());
    let mut labels = Vec::with_capacity(per_class * model.classes());
    for c in 0..model.classes() {
        let s = rng::sub_seed(seed, c as u64);
        let xs = match sampler {
            Sampler::Ddpm => sample_ddpm(model, sched, c, w, per_class, s)?,
            Sampler::Ddim { steps } => sample_ddim(model, sched, c, w, per_class, steps, s)?,
        };
        for x in xs {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(config("sampler diverged to non-finite values"));
            }
            features.extend(x.into_iter().map(|v| v as f32 as f64));
            labels.push(c);
        }
    }
    LabeledDataset::new("generated", model.classes(), model.dim(), features, labels)
}
