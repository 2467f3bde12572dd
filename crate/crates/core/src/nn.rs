//! Small dense networks with hand-written backpropagation.
//!
//! All parameters of an [`Mlp`] live in one flat vector so the optimizer, the
//! serializer and finite-difference checks can treat them uniformly. Layer `l` stores
//! its weight as an `in x out` row-major block followed by its `out` biases. Hidden
//! layers use SiLU; the last layer is linear.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{cos, exp, ln, sin, sqrt};
use crate::matrix::{gemm, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Where an additive conditioning term enters the network.
#[derive(Debug, Clone, Copy)]
pub enum Injection<'a> {
    None,
    /// Added to the input before the first layer.
    Input(&'a Matrix),
    /// Added to the first layer's pre-activation.
    FirstHidden(&'a Matrix),
}

/// Activations kept from the last forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Input of each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Matrix>,
    output: Option<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.output.as_ref().expect("forward pass not run")
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + exp(-z))
}

impl Mlp {
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization; `zero_output` zeroes the last layer.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], zero_output: bool, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::param_count(dims));
        let layers = dims.len() - 1;
        for (l, w) in dims.windows(2).enumerate() {
            let n = w[0] * w[1] + w[1];
            if zero_output && l == layers - 1 {
                params.extend(core::iter::repeat_n(0.0, n));
            } else {
                let bound = 1.0 / sqrt(w[0].max(1) as f64);
                params.extend((0..n).map(|_| rng.random_range(-bound..bound)));
            }
        }
        Self { dims: dims.to_vec(), params }
    }

    pub fn from_params(dims: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (dims.len() >= 2 && params.len() == Self::param_count(&dims)).then_some(Self { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.dims
            .windows(2)
            .map(|w| {
                let w_off = off;
                off += w[0] * w[1];
                let b_off = off;
                off += w[1];
                (w_off, b_off)
            })
            .collect()
    }

    /// Forward pass for a batch (one row per sample). The output lives in `cache`.
    pub fn forward(&self, x: &Matrix, inject: Injection<'_>, cache: &mut ForwardCache) {
        assert_eq!(x.cols(), self.input_dim(), "input width");
        let batch = x.rows();
        let mut input = x.clone();
        if let Injection::Input(extra) = inject {
            add_assign(&mut input, extra);
        }
        cache.inputs.clear();
        cache.pre.clear();
        let offsets = self.layer_offsets();
        let layers = offsets.len();
        for (l, &(w_off, b_off)) in offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let mut z = Matrix::zeros(batch, fan_out);
            let bias = &self.params[b_off..b_off + fan_out];
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(bias);
            }
            gemm(batch, fan_in, fan_out, input.as_slice(), false, &self.params[w_off..b_off], false, 1.0, z.as_mut_slice());
            if l == 0 {
                if let Injection::FirstHidden(extra) = inject {
                    add_assign(&mut z, extra);
                }
            }
            cache.inputs.push(core::mem::replace(&mut input, Matrix::zeros(0, 0)));
            if l + 1 < layers {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v *= sigmoid(*v));
                cache.pre.push(z);
                input = a;
            } else {
                cache.output = Some(z);
            }
        }
    }

    /// Backpropagates `d_output` through the last forward pass.
    ///
    /// Parameter gradients are accumulated into `grads` (same layout as the parameters).
    /// When `d_input` is given it receives the gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Matrix, grads: &mut [f64], d_input: Option<&mut Matrix>) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let offsets = self.layer_offsets();
        let batch = d_output.rows();
        let mut dz = d_output.clone();
        let mut d_in_out = d_input;
        for l in (0..offsets.len()).rev() {
            let (w_off, b_off) = offsets[l];
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let a = &cache.inputs[l];
            gemm(fan_in, batch, fan_out, a.as_slice(), true, dz.as_slice(), false, 1.0, &mut grads[w_off..b_off]);
            let db = &mut grads[b_off..b_off + fan_out];
            for r in 0..batch {
                for (g, d) in db.iter_mut().zip(dz.row(r)) {
                    *g += d;
                }
            }
            let need_da = l > 0 || d_in_out.is_some();
            if !need_da {
                break;
            }
            let mut da = Matrix::zeros(batch, fan_in);
            gemm(batch, fan_out, fan_in, dz.as_slice(), false, &self.params[w_off..b_off], true, 0.0, da.as_mut_slice());
            if l > 0 {
                let z = &cache.pre[l - 1];
                for (g, &zv) in da.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    let s = sigmoid(zv);
                    *g *= s * (1.0 + zv * (1.0 - s));
                }
                dz = da;
            } else if let Some(out) = d_in_out.take() {
                *out = da;
            }
        }
    }
}

fn add_assign(m: &mut Matrix, extra: &Matrix) {
    assert_eq!((m.rows(), m.cols()), (extra.rows(), extra.cols()), "injection shape");
    for (a, b) in m.as_mut_slice().iter_mut().zip(extra.as_slice()) {
        *a += b;
    }
}

/// Sinusoidal embedding of timestep `t`: `[cos(t*f_0..), sin(t*f_0..)]` with
/// `f_i = 10000^(-i/half)`; odd widths end with a zero.
pub fn timestep_embedding(t: f64, dim: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim);
    let half = dim / 2;
    for i in 0..half {
        let freq = exp(-ln(10_000.0) * i as f64 / half as f64);
        out[i] = cos(t * freq);
        out[half + i] = sin(t * freq);
    }
    if dim % 2 == 1 {
        out[dim - 1] = 0.0;
    }
}

/// One embedding row per timestep.
pub fn timestep_embeddings(ts: &[usize], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(ts.len(), dim);
    for (r, &t) in ts.iter().enumerate() {
        timestep_embedding(t as f64, dim, m.row_mut(r));
    }
    m
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamW {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.beta1_pow *= self.beta1;
        self.beta2_pow *= self.beta2;
        let c1 = 1.0 - self.beta1_pow;
        let c2 = 1.0 - self.beta2_pow;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *p -= self.lr * self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / (sqrt(*v / c2) + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn loss(mlp: &Mlp, x: &Matrix, inject: Injection<'_>, target: &Matrix) -> f64 {
        let mut cache = ForwardCache::default();
        mlp.forward(x, inject, &mut cache);
        cache.output().as_slice().iter().zip(target.as_slice()).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
    }

    fn check_gradients(dims: &[usize], inject_first: bool) {
        let mut rng = stream(7);
        let mlp = Mlp::new(dims, false, &mut rng);
        let batch = 4;
        let x = Matrix::from_vec(batch, dims[0], (0..batch * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let target = Matrix::from_vec(
            batch,
            mlp.output_dim(),
            (0..batch * mlp.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let emb_dim = if inject_first { dims[1] } else { dims[0] };
        let emb = timestep_embeddings(&[1, 5, 9, 30], emb_dim);
        let inject = if inject_first { Injection::FirstHidden(&emb) } else { Injection::Input(&emb) };

        let mut cache = ForwardCache::default();
        mlp.forward(&x, inject, &mut cache);
        let mut d_out = cache.output().clone();
        for (d, t) in d_out.as_mut_slice().iter_mut().zip(target.as_slice()) {
            *d -= t;
        }
        let mut grads = vec![0.0; mlp.params().len()];
        let mut d_x = Matrix::zeros(0, 0);
        mlp.backward(&cache, &d_out, &mut grads, Some(&mut d_x));

        let h = 1e-6;
        for i in 0..mlp.params().len() {
            let mut plus = mlp.clone();
            plus.params_mut()[i] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus, &x, inject, &target) - loss(&minus, &x, inject, &target)) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: fd {fd} vs analytic {}", grads[i]);
        }
        for i in 0..x.as_slice().len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= h;
            let fd = (loss(&mlp, &xp, inject, &target) - loss(&mlp, &xm, inject, &target)) / (2.0 * h);
            let an = d_x.as_slice()[i];
            assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-7) < 1e-4, "input {i}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(&[3, 5, 4, 2], true);
        check_gradients(&[2, 6, 3], false);
        check_gradients(&[1, 3, 1], true);
    }

    #[test]
    fn zero_output_init_gives_zero_output() {
        let mlp = Mlp::new(&[3, 8, 3], true, &mut stream(1));
        let mut cache = ForwardCache::default();
        mlp.forward(&Matrix::from_rows(3, [[1.0, 2.0, 3.0]]).unwrap(), Injection::None, &mut cache);
        assert!(cache.output().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_layout() {
        let mut e = vec![0.0; 5];
        timestep_embedding(0.0, 5, &mut e);
        assert_eq!(e, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adamw_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = AdamW::new(2, 0.1, 0.0);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2));
    }
}
