use std::f64::consts::PI;

use super::Real;

/// Fourier-feature encoding `[x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]`.
///
/// Blocks are laid out per frequency: the raw input (when included), then the
/// sines of every component, then the cosines, for each octave in turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionalEncoding {
    pub n_freqs: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub const fn new(n_freqs: usize, include_input: bool) -> Self {
        Self {
            n_freqs,
            include_input,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.n_freqs + usize::from(self.include_input))
    }

    pub fn encode<T: Real>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.output_dim(x.len())];
        self.encode_into(x, &mut out);
        out
    }

    /// Writes the encoding of `x` into `out[..output_dim(x.len())]`.
    pub fn encode_into<T: Real>(&self, x: &[T], out: &mut [T]) {
        let d = x.len();
        let mut o = 0;
        if self.include_input {
            out[..d].copy_from_slice(x);
            o = d;
        }
        for k in 0..self.n_freqs {
            let freq = (1u64 << k) as f64 * PI;
            for (i, &v) in x.iter().enumerate() {
                let (s, c) = (freq * v.as_f64()).sin_cos();
                out[o + i] = T::from_f64(s);
                out[o + d + i] = T::from_f64(c);
            }
            o += 2 * d;
        }
    }
}
