//! Implicit UDF decoder: trilinear lookup of the quantized grid at each
//! query, concatenated with the query coordinates, through an MLP.

use rand::Rng;

use super::config::{DecoderConfig, OutputActivation};
use super::grid::{axis_weights, corners};
use super::LatentGrid;
use crate::error::{Error, Result};
use crate::geometry::{check_in_cube, Vec3, HALF_EXTENT};
use crate::nn::{sigmoid, softplus, Linear, Module, Param};

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    pub layers: Vec<Linear>,
}

pub struct DecoderCache {
    inputs: Vec<Vec<f64>>, // input of each layer
    pre_out: Vec<f64>,
    corners: Vec<[(usize, f64); 8]>,
    points: Vec<Vec3>,
}

impl Decoder {
    pub fn new<R: Rng>(cfg: &DecoderConfig, latent_channels: usize, rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut width = latent_channels + 3;
        for (i, &h) in cfg.hidden_widths.iter().enumerate() {
            layers.push(Linear::new(&format!("decoder.fc{i}"), width, h, 2f64.sqrt(), rng));
            width = h;
        }
        let mut out = Linear::new(&format!("decoder.fc{}", cfg.hidden_widths.len()), width, 1, 1.0, rng);
        // start near the middle of the target range rather than at softplus(0)
        out.bias.value[0] = match cfg.output_activation {
            OutputActivation::Softplus => (cfg.clamp * 0.5).exp_m1().ln(),
            OutputActivation::Relu => cfg.clamp * 0.5,
        };
        layers.push(out);
        Self { cfg: cfg.clone(), layers }
    }

    pub fn latent_channels(&self) -> usize {
        self.layers[0].inputs() - 3
    }

    fn activate(&self, x: f64) -> f64 {
        match self.cfg.output_activation {
            OutputActivation::Softplus => softplus(x),
            OutputActivation::Relu => x.max(0.0),
        }
    }

    fn activate_grad(&self, x: f64) -> f64 {
        match self.cfg.output_activation {
            OutputActivation::Softplus => sigmoid(x),
            OutputActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn forward(&self, zq: &LatentGrid, points: &[Vec3]) -> Result<(Vec<f64>, DecoderCache)> {
        check_in_cube(points)?;
        let c = zq.channels;
        if c != self.latent_channels() {
            return Err(Error::ShapeMismatch {
                what: "decoder latent channels".into(),
                expected: vec![self.latent_channels()],
                actual: vec![c],
            });
        }
        let n = points.len();
        let width = c + 3;
        let mut x = vec![0.0; n * width];
        let mut cs = Vec::with_capacity(n);
        for (r, p) in points.iter().enumerate() {
            let u = [p.x + HALF_EXTENT, p.y + HALF_EXTENT, p.z + HALF_EXTENT];
            let corner = corners(u, zq.resolution);
            let row = &mut x[r * width..(r + 1) * width];
            for (cell, w) in corner {
                if w == 0.0 {
                    continue;
                }
                for (d, v) in row[..c].iter_mut().zip(zq.slice(cell)) {
                    *d += w * v;
                }
            }
            row[c] = p.x;
            row[c + 1] = p.y;
            row[c + 2] = p.z;
            cs.push(corner);
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x, n);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut x, y));
        }
        let pre_out = x;
        let out = pre_out.iter().map(|&v| self.activate(v)).collect();
        Ok((
            out,
            DecoderCache {
                inputs,
                pre_out,
                corners: cs,
                points: points.to_vec(),
            },
        ))
    }

    /// Evaluation-only forward pass.
    pub fn decode(&self, zq: &LatentGrid, points: &[Vec3]) -> Result<Vec<f64>> {
        Ok(self.forward(zq, points)?.0)
    }

    /// Back-propagates `dL/d(output)`, accumulating parameter gradients.
    /// Returns `dL/dẐ` shaped like the latent grid and, optionally, `dL/dp`.
    pub fn backward(
        &mut self,
        zq: &LatentGrid,
        cache: &DecoderCache,
        d_out: &[f64],
        want_point_grad: bool,
    ) -> (Vec<f64>, Option<Vec<Vec3>>) {
        let n = d_out.len();
        let mut g: Vec<f64> = d_out
            .iter()
            .zip(&cache.pre_out)
            .map(|(d, &x)| d * self.activate_grad(x))
            .collect();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let mut dx = self.layers[i].backward(x, &g, n);
            if i > 0 {
                // ReLU of the previous layer: its output is this layer's input
                dx.iter_mut().zip(x).for_each(|(d, &v)| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            g = dx;
        }
        let c = zq.channels;
        let width = c + 3;
        let mut dz = vec![0.0; zq.values.len()];
        for (r, corner) in cache.corners.iter().enumerate() {
            let row = &g[r * width..r * width + c];
            for &(cell, w) in corner {
                if w == 0.0 {
                    continue;
                }
                for (d, v) in dz[cell * c..(cell + 1) * c].iter_mut().zip(row) {
                    *d += w * v;
                }
            }
        }
        let dp = want_point_grad.then(|| {
            cache
                .points
                .iter()
                .enumerate()
                .map(|(r, p)| {
                    let row = &g[r * width..(r + 1) * width];
                    let mut grad = Vec3::new(row[c], row[c + 1], row[c + 2]);
                    grad += feature_jacobian_t(zq, p, &row[..c]);
                    grad
                })
                .collect()
        });
        (dz, dp)
    }
}

/// `J^T g` where `J` is the 3-column Jacobian of the trilinear lookup at `p`.
fn feature_jacobian_t(zq: &LatentGrid, p: &Vec3, g: &[f64]) -> Vec3 {
    let k = zq.resolution;
    let mut axes = [(0usize, 0usize, 0.0f64, 0.0f64); 3];
    for a in 0..3 {
        let u = p[a] + HALF_EXTENT;
        let (i0, i1, t) = axis_weights(u, k);
        let x = u * k as f64 - 0.5;
        // derivative of the upper weight wrt the coordinate; zero where clamped
        let dt = if x > 0.0 && x < (k - 1) as f64 { k as f64 } else { 0.0 };
        axes[a] = (i0, i1, t, dt);
    }
    let mut out = Vec3::zeros();
    let c = zq.channels;
    for (ci, wi, dwi) in [(axes[0].0, 1.0 - axes[0].2, -axes[0].3), (axes[0].1, axes[0].2, axes[0].3)] {
        for (cj, wj, dwj) in [(axes[1].0, 1.0 - axes[1].2, -axes[1].3), (axes[1].1, axes[1].2, axes[1].3)] {
            for (ck, wk, dwk) in [(axes[2].0, 1.0 - axes[2].2, -axes[2].3), (axes[2].1, axes[2].2, axes[2].3)] {
                let cell = (ci * k + cj) * k + ck;
                let dot: f64 = zq.values[cell * c..(cell + 1) * c].iter().zip(g).map(|(a, b)| a * b).sum();
                out.x += dwi * wj * wk * dot;
                out.y += wi * dwj * wk * dot;
                out.z += wi * wj * dwk * dot;
            }
        }
    }
    out
}

impl Module for Decoder {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Decodes unsigned distances at `points` from a quantized grid.
pub fn decode_udf(zq: &LatentGrid, points: &[Vec3], decoder: &Decoder) -> Result<Vec<f64>> {
    if !zq.quantized {
        return Err(Error::invalid("decode_udf expects a quantized latent grid"));
    }
    decoder.decode(zq, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn setup() -> (Decoder, LatentGrid, Vec<Vec3>) {
        let mut rng = seeded_rng(5);
        let cfg = DecoderConfig {
            hidden_widths: vec![6, 5],
            ..DecoderConfig::default()
        };
        let dec = Decoder::new(&cfg, 4, &mut rng);
        let vals: Vec<f64> = (0..27 * 4).map(|i| ((i * 13 % 17) as f64 - 8.0) * 0.1).collect();
        let mut zq = LatentGrid::continuous(3, 4, vals);
        zq.quantized = true;
        let pts = vec![
            Vec3::new(0.1, -0.2, 0.05),
            Vec3::new(-0.31, 0.12, 0.22),
            Vec3::new(0.27, 0.33, -0.14),
        ];
        (dec, zq, pts)
    }

    #[test]
    fn outputs_are_nonnegative_and_deterministic() {
        let mut rng = seeded_rng(1);
        let dec = Decoder::new(&DecoderConfig::default(), 8, &mut rng);
        let mut zq = LatentGrid::continuous(2, 8, (0..64).map(|i| (i as f64).sin() * 10.0).collect());
        zq.quantized = true;
        let pts: Vec<Vec3> = (0..200).map(|i| Vec3::repeat(i as f64 / 200.0 - 0.5)).collect();
        let a = decode_udf(&zq, &pts, &dec).unwrap();
        assert!(a.iter().all(|v| *v >= 0.0 && v.is_finite()));
        assert_eq!(a, decode_udf(&zq, &pts, &dec).unwrap());
    }

    #[test]
    fn relu_output_is_nonnegative() {
        let mut rng = seeded_rng(1);
        let cfg = DecoderConfig {
            output_activation: OutputActivation::Relu,
            ..DecoderConfig::default()
        };
        let dec = Decoder::new(&cfg, 2, &mut rng);
        let mut zq = LatentGrid::continuous(2, 2, (0..16).map(|i| -(i as f64)).collect());
        zq.quantized = true;
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(0.0, i as f64 / 50.0 - 0.5, 0.1)).collect();
        assert!(decode_udf(&zq, &pts, &dec).unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn out_of_cube_query_rejected() {
        let (dec, zq, _) = setup();
        assert!(matches!(
            decode_udf(&zq, &[Vec3::new(0.0, 0.0, 0.51)], &dec),
            Err(Error::OutOfCube { .. })
        ));
    }

    #[test]
    fn grid_and_point_gradients_match_finite_differences() {
        let (mut dec, zq, pts) = setup();
        let w = [0.7, -1.3, 0.4];
        let loss = |dec: &Decoder, zq: &LatentGrid, pts: &[Vec3]| {
            dec.decode(zq, pts).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = dec.forward(&zq, &pts).unwrap();
        let (dz, dp) = dec.backward(&zq, &cache, &w, true);
        let dp = dp.unwrap();
        let h = 1e-6;
        for i in 0..zq.values.len() {
            let mut a = zq.clone();
            a.values[i] += h;
            let mut b = zq.clone();
            b.values[i] -= h;
            let fd = (loss(&dec, &a, &pts) - loss(&dec, &b, &pts)) / (2.0 * h);
            assert!((fd - dz[i]).abs() < 1e-7, "dz[{i}]");
        }
        for (r, g) in dp.iter().enumerate() {
            for a in 0..3 {
                let mut up = pts.clone();
                up[r][a] += h;
                let mut dn = pts.clone();
                dn[r][a] -= h;
                let fd = (loss(&dec, &zq, &up) - loss(&dec, &zq, &dn)) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-6, "dp[{r}][{a}] {fd} vs {}", g[a]);
            }
        }
    }
}
