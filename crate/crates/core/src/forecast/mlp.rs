//! One-hidden-layer perceptron with sigmoid activation and a scalar linear
//! output, plus the Adam optimizer used to train it.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `+-1/sqrt(fan_in)` for both weight layers.
    #[default]
    Random,
    /// Input-to-hidden weights start at zero; only the output layer is random.
    ZeroHidden,
}

/// Parameters are stored flat as `[w1 (hidden x inputs, row-major), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Mlp {
    pub fn n_params(inputs: usize, hidden: usize) -> usize {
        hidden * inputs + 2 * hidden + 1
    }

    pub fn new<R: Rng>(inputs: usize, hidden: usize, init: Init, rng: &mut R) -> Self {
        let mut params = vec![0.0; Self::n_params(inputs, hidden)];
        let a1 = 1.0 / (inputs.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        let w1 = hidden * inputs;
        if init == Init::Random {
            for p in &mut params[..w1] {
                *p = rng.random_range(-a1..a1);
            }
        }
        let w2 = w1 + hidden;
        for p in &mut params[w2..w2 + hidden] {
            *p = rng.random_range(-a2..a2);
        }
        Self { inputs, hidden, params }
    }

    fn w2_offset(&self) -> usize {
        self.hidden * self.inputs + self.hidden
    }

    /// Whether parameter `i` is a weight (subject to l2) rather than a bias.
    pub fn is_weight(&self, i: usize) -> bool {
        let w1 = self.hidden * self.inputs;
        let w2 = self.w2_offset();
        i < w1 || (w2..w2 + self.hidden).contains(&i)
    }

    pub fn weight_norm_sq(&self) -> f64 {
        let w1 = self.hidden * self.inputs;
        let w2 = self.w2_offset();
        self.params[..w1].iter().chain(&self.params[w2..w2 + self.hidden]).map(|w| w * w).sum()
    }

    /// Output for one input row; `hidden` receives the activations.
    pub fn forward(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let (n_in, n_h) = (self.inputs, self.hidden);
        let p = &self.params;
        let b1 = n_h * n_in;
        let w2 = b1 + n_h;
        let mut out = p[w2 + n_h];
        for j in 0..n_h {
            let row = &p[j * n_in..(j + 1) * n_in];
            let mut a = p[b1 + j];
            for (w, xi) in row.iter().zip(x) {
                a += w * xi;
            }
            let h = sigmoid(a);
            hidden[j] = h;
            out += p[w2 + j] * h;
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.forward(x, &mut h)
    }

    /// Accumulates `d_out * d(output)/d(params)` into `grad`.
    pub fn backward(&self, x: &[f64], hidden: &[f64], d_out: f64, grad: &mut [f64]) {
        let (n_in, n_h) = (self.inputs, self.hidden);
        let p = &self.params;
        let b1 = n_h * n_in;
        let w2 = b1 + n_h;
        grad[w2 + n_h] += d_out;
        for j in 0..n_h {
            let h = hidden[j];
            grad[w2 + j] += d_out * h;
            let da = d_out * p[w2 + j] * h * (1.0 - h);
            grad[b1 + j] += da;
            let g = &mut grad[j * n_in..(j + 1) * n_in];
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += da * xi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(3, 4, Init::Random, &mut rng);
        for p in net.params.iter_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let x = [0.3, -1.2, 0.7];
        let mut h = vec![0.0; 4];
        net.forward(&x, &mut h);
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&x, &h, 1.0, &mut grad);
        for i in 0..net.params.len() {
            let step = 1e-6;
            let orig = net.params[i];
            net.params[i] = orig + step;
            let up = net.predict(&x);
            net.params[i] = orig - step;
            let down = net.predict(&x);
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * step);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn zero_hidden_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(2, 3, Init::ZeroHidden, &mut rng);
        assert!(net.params[..6].iter().all(|w| *w == 0.0));
        // Every hidden unit sits at sigmoid(0) = 1/2 regardless of input.
        let out = net.predict(&[5.0, -3.0]);
        let w2: f64 = net.params[9..12].iter().sum();
        assert!((out - 0.5 * w2).abs() < 1e-15);
    }

    #[test]
    fn weight_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(2, 3, Init::Random, &mut rng);
        let mask: Vec<bool> = (0..net.params.len()).map(|i| net.is_weight(i)).collect();
        assert_eq!(
            mask,
            [vec![true; 6], vec![false; 3], vec![true; 3], vec![false]].concat()
        );
    }
}
