use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RlError;

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector; layer `l` stores its `n_out × n_in`
/// weights row-major followed by `n_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; the last entry is the network output.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache has input")
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count_for(sizes)],
        }
    }

    /// Gaussian init scaled by 1/sqrt(fan_in); the output layer is further
    /// scaled by `output_gain`. Biases start at zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == n_layers { output_gain } else { 1.0 };
            let scale = gain / (n_in as f64).sqrt();
            for p in &mut mlp.params[offset..offset + n_in * n_out] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * scale;
            }
            offset += (n_in + 1) * n_out;
        }
        mlp
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, RlError> {
        let expected = Self::param_count_for(sizes);
        if params.len() != expected {
            return Err(RlError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(self.forward_cached(input)?.activations.pop().expect("output"))
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, RlError> {
        if input.len() != self.input_size() {
            return Err(RlError::DimensionMismatch {
                expected: self.input_size(),
                got: input.len(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let x = &activations[l];
            let mut y: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(biases)
                .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
                .collect();
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(y);
            offset += (n_in + 1) * n_out;
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += (w[0] + 1) * w[1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.activations[l];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                // through tanh: d/dz tanh(z) = 1 - tanh(z)^2
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let mlp = Mlp::zeros(&[4, 64, 64, 3]);
        assert_eq!(mlp.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut mlp = Mlp::zeros(&[3, 3]);
        for i in 0..3 {
            mlp.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(mlp.forward(&[0.25, -1.5, 7.0]).unwrap(), vec![0.25, -1.5, 7.0]);
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(Mlp::param_count_for(&[32, 64, 64, 3]), 33 * 64 + 65 * 64 + 65 * 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::random(&[32, 64, 64, 3], 0.01, &mut rng);
        assert_eq!(mlp.params().len(), Mlp::param_count_for(&[32, 64, 64, 3]));
    }

    #[test]
    fn dimension_mismatch() {
        let mlp = Mlp::zeros(&[2, 1]);
        assert_eq!(
            mlp.forward(&[1.0]),
            Err(RlError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::random(&[5, 8, 7, 3], 1.0, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64 * 0.37).sin()).collect();
        let upstream = [0.3, -1.1, 0.7];
        let loss = |m: &Mlp| -> f64 {
            m.forward(&x).unwrap().iter().zip(&upstream).map(|(o, u)| o * u).sum()
        };
        let cache = mlp.forward_cached(&x).unwrap();
        let mut grad = vec![0.0; mlp.params().len()];
        mlp.backward(&cache, &upstream, &mut grad);
        let h = 1e-5;
        for i in 0..mlp.params().len() {
            let mut plus = mlp.clone();
            plus.params_mut()[i] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / denom < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
