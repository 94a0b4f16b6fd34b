//! Dense layers with hand-written backward passes, plus AdamW.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

const LN_EPS: f64 = 1e-5;

/// Flat views of every trainable tensor, in a fixed order.
pub trait Tensors {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    fn add_assign(&mut self, other: &Self) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// `y = x w + b` with `w` stored input-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-a..a));
        Linear { w, b: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    pub fn backward(&self, x: &ArrayView2<f64>, gy: &ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.backward_params(x, gy, grad);
        gy.dot(&self.w.t())
    }

    pub fn backward_params(&self, x: &ArrayView2<f64>, gy: &ArrayView2<f64>, grad: &mut Linear) {
        grad.w += &x.t().dot(gy);
        grad.b += &gy.sum_axis(Axis(0));
    }

    pub(crate) fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((format!("{prefix}.w"), self.w.as_slice().expect("standard layout")));
        out.push((format!("{prefix}.b"), self.b.as_slice().expect("standard layout")));
    }

    pub(crate) fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w.as_slice_mut().expect("standard layout"));
        out.push(self.b.as_slice_mut().expect("standard layout"));
    }
}

/// Row-wise layer normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gamma: Array1::ones(dim), beta: Array1::zeros(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm { gamma: Array1::zeros(dim), beta: Array1::zeros(dim) }
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
            let mean = row.sum() / d;
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / d;
            *r = 1.0 / (var + LN_EPS).sqrt();
            row *= *r;
        }
        let mut y = &xhat * &self.gamma;
        y += &self.beta;
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &LayerNormCache, gy: &ArrayView2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(gy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &gy.sum_axis(Axis(0));
        let d = gy.ncols() as f64;
        let mut gx = gy * &self.gamma;
        for ((mut g, xh), r) in gx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
            let mean_g = g.sum() / d;
            let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
            g.zip_mut_with(&xh, |gv, &x| *gv = r * (*gv - mean_g - x * mean_gx));
        }
        gx
    }

    pub(crate) fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((format!("{prefix}.gamma"), self.gamma.as_slice().expect("standard layout")));
        out.push((format!("{prefix}.beta"), self.beta.as_slice().expect("standard layout")));
    }

    pub(crate) fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.gamma.as_slice_mut().expect("standard layout"));
        out.push(self.beta.as_slice_mut().expect("standard layout"));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// In-place softmax of one row; entries with `allowed[j] == false` get
/// probability zero.
pub fn masked_softmax(row: &mut [f64], allowed: &[bool]) {
    let max = row
        .iter()
        .zip(allowed)
        .filter(|(_, a)| **a)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (v, a) in row.iter_mut().zip(allowed) {
        *v = if *a { (*v - max).exp() } else { 0.0 };
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Fixed sinusoidal positional table.
pub fn sinusoidal_table(rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |(pos, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Adam with decoupled weight decay applied to every tensor.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<P: Tensors>(config: AdamWConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        AdamW {
            config,
            step: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update<P: Tensors>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * p[i]);
            }
        }
    }
}
