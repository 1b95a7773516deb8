//! Gradient work done by a training run, for speed-up comparisons.
//!
//! Work is counted in per-sample gradients, which is exact and independent
//! of how the last partial batch of an epoch is handled. Optimizer steps are
//! counted alongside for reference.

use crate::error::{config, Result};
use crate::math;

/// Epochs spent on the coreset before switching to the full data.
pub fn coreset_epochs(epochs: usize, anneal_ratio: Option<f64>) -> usize {
    match anneal_ratio {
        // The small offset keeps products like 0.7 · 10 from rounding up.
        Some(a) => (math::ceil(a * epochs as f64 - 1e-9) as usize).clamp(1, epochs.max(1)),
        None => epochs,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepCount {
    pub sample_gradients: u64,
    pub optimizer_steps: u64,
}

/// Work for `epochs` passes over `n_train` samples, or over `n_full`
/// samples once annealing has switched to the full data.
pub fn training_steps(
    n_train: usize,
    n_full: usize,
    epochs: usize,
    batch_size: usize,
    anneal_ratio: Option<f64>,
) -> Result<StepCount> {
    if batch_size == 0 {
        return Err(config("batch size must be positive"));
    }
    if let Some(a) = anneal_ratio {
        if !(a > 0.0 && a <= 1.0) {
            return Err(config("anneal ratio must lie in (0, 1]"));
        }
    }
    let on_coreset = coreset_epochs(epochs, anneal_ratio);
    let on_full = if anneal_ratio.is_some() { epochs - on_coreset } else { 0 };
    let per_epoch = |n: usize| n.div_ceil(batch_size) as u64;
    Ok(StepCount {
        sample_gradients: (on_coreset * n_train + on_full * n_full) as u64,
        optimizer_steps: on_coreset as u64 * per_epoch(n_train) + on_full as u64 * per_epoch(n_full),
    })
}

/// How many times more work `baseline` does than `candidate`.
pub fn speedup(baseline: StepCount, candidate: StepCount) -> Result<f64> {
    if candidate.sample_gradients == 0 {
        return Err(config("candidate run does no work"));
    }
    Ok(baseline.sample_gradients as f64 / candidate.sample_gradients as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tenth_of_the_data_is_ten_times_faster() {
        let full = training_steps(3000, 3000, 8, 64, None).unwrap();
        let core = training_steps(300, 3000, 8, 64, None).unwrap();
        assert_eq!(speedup(full, core).unwrap(), 10.0);
        assert_eq!(speedup(full, full).unwrap(), 1.0);
    }

    #[test]
    fn annealing_closed_form() {
        let full = training_steps(3000, 3000, 8, 64, None).unwrap();
        let core = training_steps(300, 3000, 8, 64, Some(0.875)).unwrap();
        assert_eq!(core.sample_gradients, 7 * 300 + 3000);
        assert!((speedup(full, core).unwrap() - 1.0 / 0.2125).abs() < 1e-12);
    }

    #[test]
    fn coreset_epoch_rounding() {
        assert_eq!(coreset_epochs(10, Some(0.7)), 7);
        assert_eq!(coreset_epochs(10, Some(0.71)), 8);
        assert_eq!(coreset_epochs(10, Some(0.01)), 1);
        assert_eq!(coreset_epochs(10, None), 10);
    }

    #[test]
    fn optimizer_steps_count_partial_batches() {
        let s = training_steps(100, 100, 3, 64, None).unwrap();
        assert_eq!(s.optimizer_steps, 6);
    }
}
