//! Fully-connected networks (actor and critic), their gradients, and Adam.
//!
//! Hidden layers use ReLU; the output layer is linear. The actor's output
//! is squashed into the action interval by the rollout code, not here.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::matrix::{affine_forward, relu, Matrix};
use crate::rng::StreamRng;

/// Weights, biases and Adam moments of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Layer widths, input first, e.g. `[3, 64, 64, 1]`.
    pub topology: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub adam_first_moment_w: Vec<Matrix>,
    pub adam_second_moment_w: Vec<Matrix>,
    pub adam_first_moment_b: Vec<Vec<f64>>,
    pub adam_second_moment_b: Vec<Vec<f64>>,
    pub adam_step_count: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl NetworkParams {
    /// Number of affine layers.
    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.topology[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.topology.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// All-zero parameters for the given topology.
    pub fn zeros(topology: &[usize]) -> Self {
        assert!(topology.len() >= 2, "topology needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..topology.len() - 1 {
            weights.push(Matrix::zeros(topology[l + 1], topology[l]));
            biases.push(vec![0.0; topology[l + 1]]);
        }
        let adam_first_moment_w = weights.clone();
        let adam_second_moment_w = weights.clone();
        let adam_first_moment_b = biases.clone();
        let adam_second_moment_b = biases.clone();
        Self {
            topology: topology.to_vec(),
            weights,
            biases,
            adam_first_moment_w,
            adam_second_moment_w,
            adam_first_moment_b,
            adam_second_moment_b,
            adam_step_count: 0,
        }
    }

    /// Glorot-uniform weights (`+-sqrt(6 / (fan_in + fan_out))`), zero
    /// biases, zero moments.
    pub fn init(topology: &[usize], rng: &mut StreamRng) -> Self {
        let mut p = Self::zeros(topology);
        for l in 0..p.weights.len() {
            let fan_in = topology[l] as f64;
            let fan_out = topology[l + 1] as f64;
            let bound = libm::sqrt(6.0 / (fan_in + fan_out));
            let w = &mut p.weights[l];
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    w.set(i, j, rng.uniform(-bound, bound));
                }
            }
        }
        p
    }

    /// Plain batched forward pass: ReLU on hidden layers, linear output.
    ///
    /// `input` is `input_dim x batch`; the result is `output_dim x batch`.
    pub fn forward(&self, input: &Matrix) -> Matrix {
        debug_assert_eq!(input.rows(), self.input_dim());
        let last = self.layer_count() - 1;
        let mut h = affine_forward(&self.weights[0], &self.biases[0], input);
        for l in 1..=last {
            h = relu(&h);
            h = affine_forward(&self.weights[l], &self.biases[l], &h);
        }
        h
    }

    /// Maximum absolute parameter difference against another network of the
    /// same topology (used by the convergence test).
    pub fn max_abs_param_diff(&self, other: &NetworkParams) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.weights.iter().zip(other.weights.iter()) {
            d = d.max(a.max_abs_diff(b));
        }
        for (a, b) in self.biases.iter().zip(other.biases.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                d = d.max((x - y).abs());
            }
        }
        d
    }

    /// One Adam step with bias correction. `ascent` negates the gradient,
    /// turning the update into gradient ascent.
    pub fn adam_step(
        &mut self,
        grads: &GradientAccumulator,
        learning_rate: f64,
        ascent: bool,
    ) -> CoreResult<()> {
        if grads.weights.len() != self.weights.len() {
            return Err(CoreError::ShapeMismatch("adam_step gradient layers"));
        }
        for l in 0..self.weights.len() {
            if grads.weights[l].rows() != self.weights[l].rows()
                || grads.weights[l].cols() != self.weights[l].cols()
                || grads.biases[l].len() != self.biases[l].len()
            {
                return Err(CoreError::ShapeMismatch("adam_step gradient shapes"));
            }
        }
        if !(learning_rate > 0.0) {
            return Err(CoreError::Config(alloc::format!(
                "learning_rate ({learning_rate}) must be > 0"
            )));
        }
        self.adam_step_count += 1;
        let t = self.adam_step_count as f64;
        let bc1 = 1.0 - libm::pow(ADAM_BETA1, t);
        let bc2 = 1.0 - libm::pow(ADAM_BETA2, t);
        let sign = if ascent { -1.0 } else { 1.0 };
        for l in 0..self.weights.len() {
            adam_apply(
                self.weights[l].as_mut_slice(),
                self.adam_first_moment_w[l].as_mut_slice(),
                self.adam_second_moment_w[l].as_mut_slice(),
                grads.weights[l].as_slice(),
                learning_rate,
                sign,
                bc1,
                bc2,
            );
            adam_apply(
                &mut self.biases[l],
                &mut self.adam_first_moment_b[l],
                &mut self.adam_second_moment_b[l],
                &grads.biases[l],
                learning_rate,
                sign,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_apply(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    lr: f64,
    sign: f64,
    bias_corr1: f64,
    bias_corr2: f64,
) {
    for i in 0..params.len() {
        let grad = sign * g[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad * grad;
        let m_hat = m[i] / bias_corr1;
        let v_hat = v[i] / bias_corr2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
    }
}

/// Per-parameter gradients, shape-matching a [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAccumulator {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientAccumulator {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Euclidean norm over the flattened parameter vector.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for w in &self.weights {
            s += w.norm_sq();
        }
        for b in &self.biases {
            for v in b {
                s += v * v;
            }
        }
        libm::sqrt(s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for w in &mut self.weights {
            w.scale_in_place(s);
        }
        for b in &mut self.biases {
            for v in b {
                *v *= s;
            }
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &GradientAccumulator, s: f64) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            a.add_scaled(b, s);
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += s * y;
            }
        }
    }
}
