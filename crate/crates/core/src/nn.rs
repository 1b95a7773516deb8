//! Fully-connected ReLU networks with hand-written reverse-mode gradients.
//!
//! Parameters of all layers live in one flat buffer: for each layer the
//! `out × in` weight matrix (row-major) followed by the `out` biases. Gradients
//! use the same layout, so an SGD step is a single axpy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{config, Error, Result};
use crate::math;
use crate::rng::normal;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of every layer for one input; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }

    /// Last hidden activation (the input when there are no hidden layers).
    pub fn penultimate(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// He-initialized hidden layers, LeCun-initialized linear output layer,
    /// zero biases. `sizes` lists input, hidden and output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(config("network needs at least input and output widths, all non-zero"));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { 1.0 } else { 2.0 };
            let std = math::sqrt(gain / fan_in as f64);
            for _ in 0..fan_out * fan_in {
                params.push(std * normal(rng));
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(config("invalid layer widths"));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::Shape {
                expected,
                found: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let at = offset;
            offset += w[1] * w[0] + w[1];
            (at, w[0], w[1])
        })
    }

    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for (l, (offset, fan_in, fan_out)) in self.layers().enumerate() {
            let x = &acts[l];
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let mut y = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(x.iter()) {
                    s += wi * xi;
                }
                if l + 1 < n_layers && s < 0.0 {
                    s = 0.0;
                }
                y.push(s);
            }
            acts.push(y);
        }
        Trace { acts }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut trace = self.forward_trace(input);
        trace.acts.pop().expect("output layer")
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`, and returns
    /// `∂L/∂input`.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers: Vec<(usize, usize, usize)> = self.layers().collect();
        let n_layers = layers.len();
        let mut delta = grad_output.to_vec();
        for l in (0..n_layers).rev() {
            let (offset, fan_in, fan_out) = layers[l];
            if l + 1 < n_layers {
                for (d, &a) in delta.iter_mut().zip(trace.acts[l + 1].iter()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.acts[l];
            let w = &self.params[offset..offset + fan_in * fan_out];
            let (gw, gb) = grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += d * x[i];
                    prev[i] += d * row[i];
                }
            }
            delta = prev;
        }
        delta
    }
}

/// `θ ← θ − lr · g`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad.iter()) {
        *p -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.forward(x)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(3);
        let mut net = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        for p in net.params_mut() {
            *p += 0.1 * normal(&mut rng);
        }
        let x = [0.3, -1.2, 0.8];
        let target = [0.5, -0.25];
        let trace = net.forward_trace(&x);
        let g_out: Vec<f64> = trace
            .output()
            .iter()
            .zip(&target)
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        let mut grad = vec![0.0; net.num_params()];
        let g_in = net.backward(&trace, &g_out, &mut grad);
        let h = 1e-6;
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net, &x, &target);
            net.params_mut()[i] = orig - h;
            let down = loss(&net, &x, &target);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "param {i}");
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (loss(&net, &xp, &target) - loss(&net, &xm, &target)) / (2.0 * h);
            assert!((fd - g_in[i]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn param_layout_round_trips() {
        let net = Mlp::new(&[2, 3, 1], &mut seeded(1)).unwrap();
        assert_eq!(net.num_params(), 2 * 3 + 3 + 3 + 1);
        let copy = Mlp::from_params(net.sizes().to_vec(), net.params().to_vec()).unwrap();
        assert_eq!(copy, net);
        assert!(Mlp::from_params(vec![2, 3, 1], vec![0.0; 3]).is_err());
    }
}
