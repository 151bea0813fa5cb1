//! Multi-scale 3D convolutional encoder.
//!
//! Each stage is a 3x3x3 convolution (padding 1) followed by ReLU. The first
//! `log2(R / K)` stages have stride 2, the rest stride 1, so the last stage
//! lands exactly on the latent resolution `K`. Every stage output is
//! resampled to `K^3` and the results are concatenated along channels.

use rand::Rng;

use super::config::EncoderConfig;
use super::grid::{resample, resample_backward};
use super::LatentGrid;
use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::nn::{gemm, Module, Param};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub weight: Param, // [27 * in, out]
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

/// Forward cache of one convolution.
pub struct ConvCache {
    cols: Vec<f64>,
    in_res: usize,
    out_res: usize,
}

impl Conv3d {
    pub fn new<R: Rng>(name: &str, in_channels: usize, out_channels: usize, stride: usize, rng: &mut R) -> Self {
        let fan_in = 27 * in_channels;
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                &[fan_in, out_channels],
                (2.0 / fan_in as f64).sqrt(),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            stride,
        }
    }

    pub fn output_resolution(&self, in_res: usize) -> usize {
        (in_res - 1) / self.stride + 1
    }

    /// `x` is `[in_res^3, in_channels]` channel-last.
    pub fn forward(&self, x: &[f64], in_res: usize) -> (Vec<f64>, ConvCache) {
        let out_res = self.output_resolution(in_res);
        let cin = self.in_channels;
        let rows = out_res.pow(3);
        let width = 27 * cin;
        let mut cols = vec![0.0; rows * width];
        for oi in 0..out_res {
            for oj in 0..out_res {
                for ok in 0..out_res {
                    let row = (oi * out_res + oj) * out_res + ok;
                    let base = row * width;
                    let mut tap = 0;
                    for di in 0..3 {
                        for dj in 0..3 {
                            for dk in 0..3 {
                                let si = (oi * self.stride + di) as isize - 1;
                                let sj = (oj * self.stride + dj) as isize - 1;
                                let sk = (ok * self.stride + dk) as isize - 1;
                                let r = in_res as isize;
                                if (0..r).contains(&si) && (0..r).contains(&sj) && (0..r).contains(&sk) {
                                    let s = ((si * r + sj) * r + sk) as usize;
                                    cols[base + tap * cin..base + (tap + 1) * cin]
                                        .copy_from_slice(&x[s * cin..(s + 1) * cin]);
                                }
                                tap += 1;
                            }
                        }
                    }
                }
            }
        }
        let mut y = Vec::with_capacity(rows * self.out_channels);
        for _ in 0..rows {
            y.extend_from_slice(&self.bias.value);
        }
        gemm(rows, width, self.out_channels, 1.0, &cols, false, &self.weight.value, false, 1.0, &mut y);
        (y, ConvCache { cols, in_res, out_res })
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `need_input_grad`.
    pub fn backward(&mut self, cache: &ConvCache, dy: &[f64], need_input_grad: bool) -> Option<Vec<f64>> {
        let rows = cache.out_res.pow(3);
        let cin = self.in_channels;
        let width = 27 * cin;
        let cout = self.out_channels;
        gemm(width, rows, cout, 1.0, &cache.cols, true, dy, false, 1.0, &mut self.weight.grad);
        for r in 0..rows {
            for (g, d) in self.bias.grad.iter_mut().zip(&dy[r * cout..(r + 1) * cout]) {
                *g += d;
            }
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![0.0; rows * width];
        gemm(rows, cout, width, 1.0, dy, false, &self.weight.value, true, 0.0, &mut dcols);
        let in_res = cache.in_res;
        let out_res = cache.out_res;
        let mut dx = vec![0.0; in_res.pow(3) * cin];
        for oi in 0..out_res {
            for oj in 0..out_res {
                for ok in 0..out_res {
                    let row = (oi * out_res + oj) * out_res + ok;
                    let base = row * width;
                    let mut tap = 0;
                    for di in 0..3 {
                        for dj in 0..3 {
                            for dk in 0..3 {
                                let si = (oi * self.stride + di) as isize - 1;
                                let sj = (oj * self.stride + dj) as isize - 1;
                                let sk = (ok * self.stride + dk) as isize - 1;
                                let r = in_res as isize;
                                if (0..r).contains(&si) && (0..r).contains(&sj) && (0..r).contains(&sk) {
                                    let s = ((si * r + sj) * r + sk) as usize;
                                    for c in 0..cin {
                                        dx[s * cin + c] += dcols[base + tap * cin + c];
                                    }
                                }
                                tap += 1;
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub stages: Vec<Conv3d>,
}

/// Everything the backward pass needs from one forward pass.
pub struct EncoderCache {
    conv: Vec<ConvCache>,
    // post-ReLU stage outputs and their resolutions
    features: Vec<(Vec<f64>, usize)>,
}

impl Encoder {
    pub fn new<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let strides = cfg.strides();
        let mut stages = Vec::with_capacity(cfg.channels_per_scale.len());
        let mut cin = 1;
        for (s, (&cout, &stride)) in cfg.channels_per_scale.iter().zip(&strides).enumerate() {
            stages.push(Conv3d::new(&format!("encoder.stage{s}"), cin, cout, stride, rng));
            cin = cout;
        }
        Ok(Self { cfg: cfg.clone(), stages })
    }

    pub fn latent_channels(&self) -> usize {
        self.cfg.latent_channels()
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<LatentGrid> {
        Ok(self.forward(grid)?.0)
    }

    pub fn forward(&self, grid: &VoxelGrid) -> Result<(LatentGrid, EncoderCache)> {
        if grid.resolution != self.cfg.input_resolution {
            return Err(Error::ShapeMismatch {
                what: "voxel grid resolution".into(),
                expected: vec![self.cfg.input_resolution],
                actual: vec![grid.resolution],
            });
        }
        let k = self.cfg.latent_resolution;
        let c_total = self.latent_channels();
        let mut x = grid.as_f64();
        let mut res = grid.resolution;
        let mut conv = Vec::new();
        let mut features = Vec::new();
        for stage in &self.stages {
            let (mut y, cache) = stage.forward(&x, res);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            res = cache.out_res;
            conv.push(cache);
            features.push((y.clone(), res));
            x = y;
        }
        let mut z = vec![0.0; k.pow(3) * c_total];
        let mut offset = 0;
        for ((f, r), stage) in features.iter().zip(&self.stages) {
            let c = stage.out_channels;
            let at_k = if *r == k { f.clone() } else { resample(f, *r, c, k) };
            for cell in 0..k.pow(3) {
                z[cell * c_total + offset..cell * c_total + offset + c].copy_from_slice(&at_k[cell * c..(cell + 1) * c]);
            }
            offset += c;
        }
        Ok((LatentGrid::continuous(k, c_total, z), EncoderCache { conv, features }))
    }

    /// Back-propagates `dL/dZ` (`[K^3, C]`) into the stage parameters.
    pub fn backward(&mut self, cache: &EncoderCache, dz: &[f64]) {
        let k = self.cfg.latent_resolution;
        let c_total = self.latent_channels();
        let n = self.stages.len();
        // gradient flowing into each stage output from the concatenation
        let mut direct: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut offset = 0;
        for (s, (_, r)) in cache.features.iter().enumerate() {
            let c = self.stages[s].out_channels;
            let mut at_k = vec![0.0; k.pow(3) * c];
            for cell in 0..k.pow(3) {
                at_k[cell * c..(cell + 1) * c]
                    .copy_from_slice(&dz[cell * c_total + offset..cell * c_total + offset + c]);
            }
            direct.push(if *r == k { at_k } else { resample_backward(&at_k, *r, c, k) });
            offset += c;
        }
        let mut upstream: Option<Vec<f64>> = None;
        for s in (0..n).rev() {
            let mut g = std::mem::take(&mut direct[s]);
            if let Some(u) = upstream.take() {
                g.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
            }
            // ReLU mask
            g.iter_mut().zip(&cache.features[s].0).for_each(|(gv, y)| {
                if *y <= 0.0 {
                    *gv = 0.0
                }
            });
            upstream = self.stages[s].backward(&cache.conv[s], &g, s > 0);
        }
    }
}

impl Module for Encoder {
    fn params(&self) -> Vec<&Param> {
        self.stages.iter().flat_map(|s| [&s.weight, &s.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.stages.iter_mut().flat_map(|s| [&mut s.weight, &mut s.bias]).collect()
    }
}
