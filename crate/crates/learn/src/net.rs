//! Multilayer perceptron with manual backpropagation and Adam.
//!
//! Rectified-linear hidden layers, linear output. Everything is f64 and
//! deterministic; initialization draws from a counter-based stream.

use dexgen_core::rng::CounterRng;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// weights[l] has shape (sizes[l] x sizes[l+1]).
    pub weights: Vec<MatSer>,
    pub biases: Vec<Vec<f64>>,
}

/// Serializable matrix payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatSer {
    pub rows: usize,
    pub cols: usize,
    pub d: Vec<f64>,
}

impl From<Mat> for MatSer {
    fn from(m: Mat) -> Self {
        MatSer {
            rows: m.rows,
            cols: m.cols,
            d: m.d,
        }
    }
}

impl MatSer {
    fn as_mat(&self) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            d: self.d.clone(),
        }
    }
}

pub struct MlpCache {
    /// Layer inputs: activations[0] = x, activations[l] = post-ReLU output
    /// of layer l-1 (or linear output for the last layer).
    activations: Vec<Mat>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut CounterRng) -> Mlp {
        assert!(sizes.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_in, fan_out);
            for v in &mut w.d {
                *v = rng.range(-bound, bound);
            }
            weights.push(MatSer::from(w));
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Forward pass over a batch (rows = samples).
    pub fn forward(&self, x: &Mat) -> (Mat, MlpCache) {
        debug_assert_eq!(x.cols, self.input_dim());
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.clone());
        let mut cur = x.clone();
        for l in 0..layers {
            let w = self.weights[l].as_mat();
            let mut z = cur.matmul(&w);
            for r in 0..z.rows {
                for c in 0..z.cols {
                    *z.at_mut(r, c) += self.biases[l][c];
                }
            }
            if l + 1 < layers {
                for v in &mut z.d {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(z.clone());
            cur = z;
        }
        (cur, MlpCache { activations })
    }

    /// Backward pass; returns parameter gradients (input gradient is not
    /// needed by any caller).
    pub fn backward(&self, cache: &MlpCache, grad_out: &Mat) -> MlpGrads {
        let layers = self.weights.len();
        let mut w_grads: Vec<Mat> = (0..layers)
            .map(|l| Mat::zeros(self.sizes[l], self.sizes[l + 1]))
            .collect();
        let mut b_grads: Vec<Vec<f64>> = (0..layers).map(|l| vec![0.0; self.sizes[l + 1]]).collect();

        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            // delta through the ReLU of this layer's OUTPUT happened in the
            // caller for the last layer; hidden layers gate on their output.
            if l + 1 < layers {
                let out = &cache.activations[l + 1];
                for i in 0..delta.d.len() {
                    if out.d[i] <= 0.0 {
                        delta.d[i] = 0.0;
                    }
                }
            }
            let input = &cache.activations[l];
            w_grads[l] = input.t_matmul(&delta);
            for r in 0..delta.rows {
                for c in 0..delta.cols {
                    b_grads[l][c] += delta.at(r, c);
                }
            }
            if l > 0 {
                let w = self.weights[l].as_mat();
                delta = delta.matmul_t(&w);
            }
        }
        MlpGrads {
            weights: w_grads,
            biases: b_grads,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.d.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// Adam optimizer state aligned with one Mlp plus an optional extra
/// parameter vector (the policy's log-std).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, slots: &[usize]) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: slots.iter().map(|n| vec![0.0; *n]).collect(),
            v: slots.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn for_mlp(lr: f64, mlp: &Mlp) -> Adam {
        let mut slots = Vec::new();
        for w in &mlp.weights {
            slots.push(w.d.len());
        }
        for b in &mlp.biases {
            slots.push(b.len());
        }
        Adam::new(lr, &slots)
    }

    pub fn for_mlp_with_extra(lr: f64, mlp: &Mlp, extra: usize) -> Adam {
        let mut slots = Vec::new();
        for w in &mlp.weights {
            slots.push(w.d.len());
        }
        for b in &mlp.biases {
            slots.push(b.len());
        }
        slots.push(extra);
        Adam::new(lr, &slots)
    }

    fn step_slot(&mut self, slot: usize, params: &mut [f64], grads: &[f64], bias1: f64, bias2: f64) {
        let m = &mut self.m[slot];
        let v = &mut self.v[slot];
        for i in 0..params.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mh = m[i] / bias1;
            let vh = v[i] / bias2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }

    /// Apply one update to the network (and optionally the extra vector).
    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads, extra: Option<(&mut [f64], &[f64])>) {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        let layers = mlp.weights.len();
        for l in 0..layers {
            let grad = &grads.weights[l].d;
            let mut w = std::mem::take(&mut mlp.weights[l].d);
            self.step_slot(l, &mut w, grad, bias1, bias2);
            mlp.weights[l].d = w;
        }
        for l in 0..layers {
            let grad = grads.biases[l].clone();
            let mut b = std::mem::take(&mut mlp.biases[l]);
            self.step_slot(layers + l, &mut b, &grad, bias1, bias2);
            mlp.biases[l] = b;
        }
        if let Some((params, grad)) = extra {
            self.step_slot(2 * layers, params, grad, bias1, bias2);
            // Keep exploration noise in a sane band.
            for p in params.iter_mut() {
                *p = p.clamp(-3.0, 0.5);
            }
        }
    }
}

/// Diagonal Gaussian log-density and entropy over batched actions.
pub fn gaussian_log_prob(actions: &Mat, mean: &Mat, log_std: &[f64]) -> Vec<f64> {
    const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_8; // 0.5 ln(2 pi)
    let mut out = vec![0.0; actions.rows];
    for r in 0..actions.rows {
        let mut acc = 0.0;
        for c in 0..actions.cols {
            let sigma = log_std[c].exp();
            let z = (actions.at(r, c) - mean.at(r, c)) / sigma;
            acc += -0.5 * z * z - log_std[c] - HALF_LOG_TAU;
        }
        out[r] = acc;
    }
    out
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    const HALF_LOG_TAU_E: f64 = 1.418_938_533_204_672_7; // 0.5 (1 + ln(2 pi))
    log_std.iter().map(|l| l + HALF_LOG_TAU_E).sum()
}
