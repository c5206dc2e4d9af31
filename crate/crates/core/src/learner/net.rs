//! Multi-head feed-forward network over a flat parameter vector.
//!
//! Hidden layers use tanh; heads are linear. Keeping every parameter in
//! one `Vec<f64>` makes the optimizer and finite-difference checks
//! trivial: gradients come back in the same flat layout.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LearnerError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
}

/// Layer widths: `input_dim -> hidden_dims... -> one linear head per
/// entry of head_dims`, all heads reading the last hidden activation
/// (or the input when there are no hidden layers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetLayout {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub head_dims: Vec<usize>,
}

impl NetLayout {
    /// Total parameter count across hidden layers and heads.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            count += h * prev + h;
            prev = h;
        }
        for &d in &self.head_dims {
            count += d * prev + d;
        }
        count
    }
}

/// Cached activations from one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Post-tanh activation of each hidden layer.
    hidden: Vec<Vec<f64>>,
    pub head_outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    layout: NetLayout,
    params: Vec<f64>,
}

impl FeedForwardNet {
    pub fn zeros(layout: NetLayout) -> Self {
        let n = layout.param_count();
        Self { layout, params: vec![0.0; n] }
    }

    /// Uniform init scaled by `1/sqrt(fan_in)` per weight matrix;
    /// biases start at zero.
    pub fn init_random<R: Rng + ?Sized>(layout: NetLayout, rng: &mut R) -> Self {
        let mut net = Self::zeros(layout);
        let layout = net.layout.clone();
        let mut offset = 0;
        let mut prev = layout.input_dim;
        let mut init_matrix = |params: &mut [f64], rows: usize, cols: usize, offset: &mut usize| {
            let scale = 1.0 / math::sqrt(cols as f64);
            for p in params[*offset..*offset + rows * cols].iter_mut() {
                *p = rng.random_range(-scale..scale);
            }
            *offset += rows * cols + rows; // skip biases, left at zero
        };
        for &h in &layout.hidden_dims {
            init_matrix(&mut net.params, h, prev, &mut offset);
            prev = h;
        }
        for &d in &layout.head_dims {
            init_matrix(&mut net.params, d, prev, &mut offset);
        }
        net
    }

    pub fn layout(&self) -> &NetLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), LearnerError> {
        if params.len() != self.params.len() {
            return Err(LearnerError::ShapeMismatch("parameter vector length differ"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// `y = W x + b` for the matrix at `offset`, returning the offset
    /// past this layer's parameters.
    fn affine(&self, offset: usize, rows: usize, cols: usize, x: &[f64], out: &mut [f64]) -> usize {
        let w = &self.params[offset..offset + rows * cols];
        let b = &self.params[offset + rows * cols..offset + rows * cols + rows];
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = b[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out[r] = acc;
        }
        offset + rows * cols + rows
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, LearnerError> {
        if input.len() != self.layout.input_dim {
            return Err(LearnerError::ShapeMismatch("input dimension differ"));
        }
        let mut offset = 0;
        let mut prev_dim = self.layout.input_dim;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.layout.hidden_dims.len());
        let mut current: &[f64] = input;
        for &h in &self.layout.hidden_dims {
            let mut pre = vec![0.0; h];
            offset = self.affine(offset, h, prev_dim, current, &mut pre);
            for v in pre.iter_mut() {
                *v = math::tanh(*v);
            }
            hidden.push(pre);
            current = hidden.last().unwrap();
            prev_dim = h;
        }
        let mut head_outputs = Vec::with_capacity(self.layout.head_dims.len());
        for &d in &self.layout.head_dims {
            let mut out = vec![0.0; d];
            offset = self.affine(offset, d, prev_dim, current, &mut out);
            head_outputs.push(out);
        }
        Ok(ForwardCache { hidden, head_outputs })
    }

    /// Accumulates parameter gradients into `grads` (flat layout) given
    /// upstream gradients per head (`None` for unused heads).
    pub fn backward_into(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        head_grads: &[Option<&[f64]>],
        grads: &mut [f64],
    ) -> Result<(), LearnerError> {
        if head_grads.len() != self.layout.head_dims.len() {
            return Err(LearnerError::ShapeMismatch("head gradient count differ"));
        }
        if grads.len() != self.params.len() {
            return Err(LearnerError::ShapeMismatch("gradient vector length differ"));
        }

        // offsets of each parameter block
        let mut hidden_offsets = Vec::with_capacity(self.layout.hidden_dims.len());
        let mut offset = 0;
        let mut prev = self.layout.input_dim;
        for &h in &self.layout.hidden_dims {
            hidden_offsets.push((offset, h, prev));
            offset += h * prev + h;
            prev = h;
        }
        let trunk_dim = prev;
        let mut head_offsets = Vec::with_capacity(self.layout.head_dims.len());
        for &d in &self.layout.head_dims {
            head_offsets.push((offset, d, trunk_dim));
            offset += d * trunk_dim + d;
        }

        let trunk_act: &[f64] = cache.hidden.last().map(|v| v.as_slice()).unwrap_or(input);
        let mut d_trunk = vec![0.0; trunk_dim];
        for ((grad, &(off, rows, cols)), _) in head_grads.iter().zip(&head_offsets).zip(&self.layout.head_dims) {
            let Some(g) = grad else { continue };
            if g.len() != rows {
                return Err(LearnerError::ShapeMismatch("head gradient dimension differ"));
            }
            for r in 0..rows {
                let gr = g[r];
                let w_row = off + r * cols;
                for c in 0..cols {
                    grads[w_row + c] += gr * trunk_act[c];
                    d_trunk[c] += self.params[w_row + c] * gr;
                }
                grads[off + rows * cols + r] += gr;
            }
        }

        // back through hidden layers, newest first
        let mut d_post = d_trunk;
        for (layer_idx, &(off, rows, cols)) in hidden_offsets.iter().enumerate().rev() {
            let post = &cache.hidden[layer_idx];
            let prev_act: &[f64] = if layer_idx == 0 {
                input
            } else {
                &cache.hidden[layer_idx - 1]
            };
            let mut d_prev = vec![0.0; cols];
            for r in 0..rows {
                let d_pre = d_post[r] * (1.0 - post[r] * post[r]);
                let w_row = off + r * cols;
                for c in 0..cols {
                    grads[w_row + c] += d_pre * prev_act[c];
                    d_prev[c] += self.params[w_row + c] * d_pre;
                }
                grads[off + rows * cols + r] += d_pre;
            }
            d_post = d_prev;
        }
        Ok(())
    }

    pub fn backward(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        head_grads: &[Option<&[f64]>],
    ) -> Result<Vec<f64>, LearnerError> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(input, cache, head_grads, &mut grads)?;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(input: usize, hidden: Vec<usize>, heads: Vec<usize>) -> NetLayout {
        NetLayout { input_dim: input, hidden_dims: hidden, head_dims: heads }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = FeedForwardNet::zeros(layout(3, vec![4], vec![2, 5]));
        let cache = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert!(cache.head_outputs[0].iter().all(|&v| v == 0.0));
        assert!(cache.head_outputs[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_mse_gradient_closed_form() {
        // no hidden layer: head is y = W x + b. Gradient of
        // 0.5 * ||W x - y||^2 w.r.t. W is (W x - y) x^T.
        let mut net = FeedForwardNet::zeros(layout(2, vec![], vec![2]));
        net.params_mut().copy_from_slice(&[1.0, 2.0, 3.0, -1.0, 0.0, 0.0]);
        let x = [0.5, -1.5];
        let y = [1.0, 0.0];
        let cache = net.forward(&x).unwrap();
        let residual: Vec<f64> = cache.head_outputs[0].iter().zip(&y).map(|(o, t)| o - t).collect();
        let grads = net.backward(&x, &cache, &[Some(&residual)]).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(grads[r * 2 + c], residual[r] * x[c], max_relative = 1e-12);
            }
            assert_relative_eq!(grads[4 + r], residual[r], max_relative = 1e-12);
        }
    }

    #[test]
    fn random_net_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lay = layout(4, vec![6, 5], vec![3, 2]);
        let net = FeedForwardNet::init_random(lay, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target0: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target1: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();

        // loss = 0.5 sum over both heads of squared error
        let loss_of = |net: &FeedForwardNet| {
            let cache = net.forward(&x).unwrap();
            let mut l = 0.0;
            for (o, t) in cache.head_outputs[0].iter().zip(&target0) {
                l += 0.5 * (o - t) * (o - t);
            }
            for (o, t) in cache.head_outputs[1].iter().zip(&target1) {
                l += 0.5 * (o - t) * (o - t);
            }
            l
        };

        let cache = net.forward(&x).unwrap();
        let g0: Vec<f64> = cache.head_outputs[0].iter().zip(&target0).map(|(o, t)| o - t).collect();
        let g1: Vec<f64> = cache.head_outputs[1].iter().zip(&target1).map(|(o, t)| o - t).collect();
        let analytic = net.backward(&x, &cache, &[Some(&g0), Some(&g1)]).unwrap();

        let h = 1e-5;
        let mut perturbed = net.clone();
        for idx in 0..net.params().len() {
            let orig = net.params()[idx];
            perturbed.params_mut()[idx] = orig + h;
            let plus = loss_of(&perturbed);
            perturbed.params_mut()[idx] = orig - h;
            let minus = loss_of(&perturbed);
            perturbed.params_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            assert_relative_eq!(analytic[idx], numeric, epsilon = 1e-8, max_relative = 1e-4);
        }
    }

    #[test]
    fn unused_head_contributes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = FeedForwardNet::init_random(layout(3, vec![4], vec![2, 2]), &mut rng);
        let x = [0.3, -0.2, 0.9];
        let cache = net.forward(&x).unwrap();
        let g: Vec<f64> = vec![0.7, -0.4];
        let with_none = net.backward(&x, &cache, &[Some(&g), None]).unwrap();
        let with_zero = net.backward(&x, &cache, &[Some(&g), Some(&[0.0, 0.0])]).unwrap();
        assert_eq!(with_none, with_zero);
    }

    #[test]
    fn shape_errors() {
        let net = FeedForwardNet::zeros(layout(3, vec![4], vec![2]));
        assert!(net.forward(&[1.0, 2.0]).is_err());
        let cache = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(net.backward(&[1.0, 2.0, 3.0], &cache, &[]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &cache, &[Some(&[1.0])]).is_err());
    }
}
