use rand::Rng;

use super::{gemm, Param};

/// Affine map `y = x W + b` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// He-style normal init scaled by `gain / sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng>(name: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), &[inputs, outputs], gain / (inputs as f64).sqrt(), rng),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[1]
    }

    /// `x` is `[rows, inputs]`; returns `[rows, outputs]`.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (i, o) = (self.inputs(), self.outputs());
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(&self.bias.value);
        }
        gemm(rows, i, o, 1.0, x, false, &self.weight.value, false, 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], rows: usize) -> Vec<f64> {
        self.accumulate(x, dy, rows);
        let (i, o) = (self.inputs(), self.outputs());
        let mut dx = vec![0.0; rows * i];
        gemm(rows, o, i, 1.0, dy, false, &self.weight.value, true, 0.0, &mut dx);
        dx
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate(&mut self, x: &[f64], dy: &[f64], rows: usize) {
        let (i, o) = (self.inputs(), self.outputs());
        gemm(i, rows, o, 1.0, x, true, dy, false, 1.0, &mut self.weight.grad);
        for r in 0..rows {
            for (g, d) in self.bias.grad.iter_mut().zip(&dy[r * o..(r + 1) * o]) {
                *g += d;
            }
        }
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[dim], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, LayerNormCache) {
        layer_norm(x, rows, &self.gamma.value, &self.beta.value)
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &[f64], rows: usize) -> Vec<f64> {
        layer_norm_backward(
            cache,
            dy,
            rows,
            &self.gamma.value,
            &mut self.gamma.grad,
            &mut self.beta.grad,
        )
    }
}

pub fn layer_norm(x: &[f64], rows: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, LayerNormCache) {
    let d = gamma.len();
    let mut y = vec![0.0; rows * d];
    let mut normalized = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for j in 0..d {
            let n = (row[j] - mean) * s;
            normalized[r * d + j] = n;
            y[r * d + j] = n * gamma[j] + beta[j];
        }
    }
    (y, LayerNormCache { normalized, rstd })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    dy: &[f64],
    rows: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let d = gamma.len();
    let mut dx = vec![0.0; rows * d];
    for r in 0..rows {
        let n = &cache.normalized[r * d..(r + 1) * d];
        let g = &dy[r * d..(r + 1) * d];
        let mut mean_dn = 0.0;
        let mut mean_dn_n = 0.0;
        for j in 0..d {
            dgamma[j] += g[j] * n[j];
            dbeta[j] += g[j];
            let dn = g[j] * gamma[j];
            mean_dn += dn;
            mean_dn_n += dn * n[j];
        }
        mean_dn /= d as f64;
        mean_dn_n /= d as f64;
        for j in 0..d {
            let dn = g[j] * gamma[j];
            dx[r * d + j] = cache.rstd[r] * (dn - mean_dn - n[j] * mean_dn_n);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_backward(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            assert!((gelu_backward(x) - central(gelu, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_and_layer_norm_gradients() {
        let mut rng = seeded_rng(4);
        let rows = 3;
        let mut lin = Linear::new("l", 4, 5, 1.0, &mut rng);
        let mut ln = LayerNorm::new("n", 5);
        ln.gamma.value = vec![0.5, 1.5, -1.0, 2.0, 0.3];
        ln.beta.value = vec![0.1, 0.0, -0.2, 0.3, 0.0];
        let x: Vec<f64> = (0..rows * 4).map(|i| (i as f64 * 0.37).cos()).collect();
        let w: Vec<f64> = (0..rows * 5).map(|i| (i as f64 * 0.91).sin()).collect();
        let loss = |lin: &Linear, ln: &LayerNorm, x: &[f64]| {
            let h = lin.forward(x, rows);
            let (y, _) = ln.forward(&h, rows);
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = lin.forward(&x, rows);
        let (_, cache) = ln.forward(&h, rows);
        let dh = ln.backward(&cache, &w, rows);
        let dx = lin.backward(&x, &dh, rows);

        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&lin, &ln, &xp) - loss(&lin, &ln, &xm)) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-6, "dx[{i}] {fd} vs {}", dx[i]);
        }
        for i in 0..lin.weight.len() {
            let mut l2 = lin.clone();
            l2.weight.value[i] += eps;
            let up = loss(&l2, &ln, &x);
            l2.weight.value[i] -= 2.0 * eps;
            let down = loss(&l2, &ln, &x);
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - lin.weight.grad[i]).abs() < 1e-6);
        }
        for i in 0..5 {
            let mut n2 = ln.clone();
            n2.gamma.value[i] += eps;
            let up = loss(&lin, &n2, &x);
            n2.gamma.value[i] -= 2.0 * eps;
            let fd = (up - loss(&lin, &n2, &x)) / (2.0 * eps);
            assert!((fd - ln.gamma.grad[i]).abs() < 1e-6);
        }
    }
}
