//! Fully connected ReLU network with an optional input skip connection.
//!
//! Activations are batched row-major: a batch of `b` inputs is a `b x in`
//! slice. The skip layer receives `[h, x]`, the previous hidden output
//! followed by the raw network input.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use super::{gemm, MatRef, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Hidden layer (0-based) whose input is concatenated with the network input.
    pub skip: Option<usize>,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.depth == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("degenerate network shape {self:?}")));
        }
        if let Some(s) = self.skip {
            if s == 0 || s >= self.depth {
                return Err(Error::Config(format!(
                    "skip layer {s} must lie in 1..{} for depth {}",
                    self.depth, self.depth
                )));
            }
        }
        Ok(())
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else if Some(layer) == self.skip {
            self.hidden + self.input_dim
        } else {
            self.hidden
        }
    }
}

/// Dense layer `y = W x + b` with `W` stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    config: MlpConfig,
    layers: Vec<Dense<T>>,
}

/// Layer inputs recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    /// Input to each layer (hidden layers, then the output layer).
    inputs: Vec<Vec<T>>,
    pub output: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| vec![T::zero(); l.weight.len()]).collect(),
            biases: mlp.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> T {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> Mlp<T> {
    /// Kaiming-uniform initialisation: hidden weights in `±sqrt(6 / fan_in)`,
    /// output weights in `±sqrt(1 / fan_in)`, zero biases.
    pub fn new<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.depth + 1);
        for l in 0..=config.depth {
            let in_dim = if l == config.depth {
                config.hidden
            } else {
                config.layer_input_dim(l)
            };
            let out_dim = if l == config.depth {
                config.output_dim
            } else {
                config.hidden
            };
            let gain = if l == config.depth { 1.0 } else { 6.0 };
            let bound = (gain / in_dim as f64).sqrt();
            let weight = (0..in_dim * out_dim)
                .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                .collect();
            layers.push(Dense {
                weight,
                bias: vec![T::zero(); out_dim],
                in_dim,
                out_dim,
            });
        }
        Ok(Self { config, layers })
    }

    /// Rebuilds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(config: MlpConfig, layers: Vec<Dense<T>>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.depth + 1 {
            return Err(Error::ShapeMismatch {
                expected: config.depth + 1,
                got: layers.len(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            let (want_in, want_out) = if l == config.depth {
                (config.hidden, config.output_dim)
            } else {
                (config.layer_input_dim(l), config.hidden)
            };
            if layer.in_dim != want_in {
                return Err(Error::ShapeMismatch {
                    expected: want_in,
                    got: layer.in_dim,
                });
            }
            if layer.out_dim != want_out {
                return Err(Error::ShapeMismatch {
                    expected: want_out,
                    got: layer.out_dim,
                });
            }
            if layer.weight.len() != want_in * want_out || layer.bias.len() != want_out {
                return Err(Error::ShapeMismatch {
                    expected: want_in * want_out,
                    got: layer.weight.len(),
                });
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Hash of the exact parameter bit patterns.
    pub fn param_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in self.params() {
            for v in s {
                v.as_f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<()> {
        if batch == 0 {
            return Err(Error::ShapeMismatch { expected: 1, got: 0 });
        }
        if input.len() != batch * self.config.input_dim {
            return Err(Error::ShapeMismatch {
                expected: batch * self.config.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass retaining layer inputs for [`Mlp::backward`].
    pub fn forward(&self, input: &[T], batch: usize) -> Result<ForwardCache<T>> {
        self.check_input(input, batch)?;
        let cfg = self.config;
        let mut inputs: Vec<Vec<T>> = Vec::with_capacity(cfg.depth + 1);
        inputs.push(input.to_vec());
        for l in 0..cfg.depth {
            let layer = &self.layers[l];
            let next_skip = Some(l + 1) == cfg.skip;
            let next_width = if next_skip { cfg.hidden + cfg.input_dim } else { cfg.hidden };
            let mut out = vec![T::zero(); batch * next_width];
            {
                let x = MatRef::row_major(&inputs[l], batch, layer.in_dim);
                let w = MatRef::row_major(&layer.weight, layer.out_dim, layer.in_dim).transposed();
                if next_skip {
                    let mut tmp = vec![T::zero(); batch * cfg.hidden];
                    gemm(x, w, T::zero(), &mut tmp);
                    for r in 0..batch {
                        let dst = &mut out[r * next_width..(r + 1) * next_width];
                        for (j, d) in dst[..cfg.hidden].iter_mut().enumerate() {
                            *d = (tmp[r * cfg.hidden + j] + layer.bias[j]).max(T::zero());
                        }
                        dst[cfg.hidden..].copy_from_slice(&input[r * cfg.input_dim..(r + 1) * cfg.input_dim]);
                    }
                } else {
                    gemm(x, w, T::zero(), &mut out);
                    for row in out.chunks_exact_mut(cfg.hidden) {
                        for (v, &b) in row.iter_mut().zip(&layer.bias) {
                            *v = (*v + b).max(T::zero());
                        }
                    }
                }
            }
            inputs.push(out);
        }
        let head = &self.layers[cfg.depth];
        let mut output = vec![T::zero(); batch * cfg.output_dim];
        let x = MatRef::row_major(&inputs[cfg.depth], batch, head.in_dim);
        let w = MatRef::row_major(&head.weight, head.out_dim, head.in_dim).transposed();
        gemm(x, w, T::zero(), &mut output);
        for row in output.chunks_exact_mut(cfg.output_dim) {
            for (v, &b) in row.iter_mut().zip(&head.bias) {
                *v = *v + b;
            }
        }
        Ok(ForwardCache {
            batch,
            inputs,
            output,
        })
    }

    /// Forward pass without keeping activations, processed in row chunks.
    pub fn infer(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(input, batch)?;
        const CHUNK: usize = 4096;
        let in_dim = self.config.input_dim;
        let mut out = Vec::with_capacity(batch * self.config.output_dim);
        let mut start = 0;
        while start < batch {
            let rows = CHUNK.min(batch - start);
            let cache = self.forward(&input[start * in_dim..(start + rows) * in_dim], rows)?;
            out.extend_from_slice(&cache.output);
            start += rows;
        }
        Ok(out)
    }

    /// Reverse-mode gradients of `sum(d_output * output)` with respect to all
    /// parameters.
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: &[T]) -> Result<Gradients<T>> {
        self.backward_impl(cache, d_output, false).map(|(g, _)| g)
    }

    /// Like [`Mlp::backward`], also returning the gradient with respect to the input batch.
    pub fn backward_with_input(&self, cache: &ForwardCache<T>, d_output: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backward_impl(cache, d_output, true)
            .map(|(g, dx)| (g, dx.expect("input gradient requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        d_output: &[T],
        want_input: bool,
    ) -> Result<(Gradients<T>, Option<Vec<T>>)> {
        let cfg = self.config;
        let batch = cache.batch;
        if cache.inputs.len() != cfg.depth + 1 || cache.inputs[0].len() != batch * cfg.input_dim {
            return Err(Error::ShapeMismatch {
                expected: cfg.depth + 1,
                got: cache.inputs.len(),
            });
        }
        if d_output.len() != batch * cfg.output_dim {
            return Err(Error::ShapeMismatch {
                expected: batch * cfg.output_dim,
                got: d_output.len(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut d_input = want_input.then(|| vec![T::zero(); batch * cfg.input_dim]);

        // gradient w.r.t. the output of the current layer
        let mut d_z: Vec<T> = d_output.to_vec();
        for l in (0..=cfg.depth).rev() {
            let layer = &self.layers[l];
            let x = &cache.inputs[l];
            let dz = MatRef::row_major(&d_z, batch, layer.out_dim);
            gemm(
                dz.transposed(),
                MatRef::row_major(x, batch, layer.in_dim),
                T::zero(),
                &mut grads.weights[l],
            );
            let db = &mut grads.biases[l];
            for row in d_z.chunks_exact(layer.out_dim) {
                for (g, &v) in db.iter_mut().zip(row) {
                    *g = *g + v;
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let mut d_x = vec![T::zero(); batch * layer.in_dim];
            gemm(dz, MatRef::row_major(&layer.weight, layer.out_dim, layer.in_dim), T::zero(), &mut d_x);
            if l == 0 {
                if let Some(di) = d_input.as_mut() {
                    di.iter_mut().zip(&d_x).for_each(|(a, &b)| *a = *a + b);
                }
                break;
            }
            // split off the raw-input part of a skip layer, then apply the ReLU mask
            let in_dim = layer.in_dim;
            let mut d_h = vec![T::zero(); batch * cfg.hidden];
            for r in 0..batch {
                let src = &d_x[r * in_dim..(r + 1) * in_dim];
                let act = &x[r * in_dim..r * in_dim + cfg.hidden];
                for j in 0..cfg.hidden {
                    d_h[r * cfg.hidden + j] = if act[j] > T::zero() { src[j] } else { T::zero() };
                }
                if Some(l) == cfg.skip {
                    if let Some(di) = d_input.as_mut() {
                        let dst = &mut di[r * cfg.input_dim..(r + 1) * cfg.input_dim];
                        dst.iter_mut().zip(&src[cfg.hidden..]).for_each(|(a, &b)| *a = *a + b);
                    }
                }
            }
            d_z = d_h;
        }
        Ok((grads, d_input))
    }

    /// Converts the parameters to another element type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                })
                .collect(),
        }
    }
}
