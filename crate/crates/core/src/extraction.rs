//! Dense point clouds from unsigned distance fields.
//!
//! Points are pulled onto the zero-level set by repeated projection
//! `p <- p - damping * f(p) * grad f(p) / |grad f(p)|`, filtered by field
//! value and densified by re-projecting noisy copies of accepted points.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_in_cube, clamp_to_cube, HALF_EXTENT};
use crate::seeded_rng;
use crate::vqudf::{Decoder, LatentGrid};
use crate::Vec3;

/// A non-negative distance field that can be queried in batches.
pub trait UdfField {
    fn values(&self, points: &[Vec3]) -> Vec<f64>;
    fn gradients(&self, points: &[Vec3]) -> Vec<Vec3>;
}

/// `| |p - c| - r |` minimized over concentric spheres.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereField {
    pub center: Vec3,
    pub radii: Vec<f64>,
}

impl SphereField {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            center,
            radii: vec![radius],
        }
    }

    pub fn nested(radii: &[f64]) -> Self {
        Self {
            center: Vec3::zeros(),
            radii: radii.to_vec(),
        }
    }

    fn nearest(&self, p: &Vec3) -> (f64, f64) {
        let d = (p - self.center).norm();
        self.radii
            .iter()
            .map(|&r| ((d - r).abs(), d - r))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, 0.0))
    }
}

impl UdfField for SphereField {
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        points.iter().map(|p| self.nearest(p).0).collect()
    }

    fn gradients(&self, points: &[Vec3]) -> Vec<Vec3> {
        points
            .iter()
            .map(|p| {
                let v = p - self.center;
                let n = v.norm();
                if n == 0.0 {
                    return Vec3::zeros();
                }
                let sign = if self.nearest(p).1 < 0.0 { -1.0 } else { 1.0 };
                v * (sign / n)
            })
            .collect()
    }
}

/// The same value everywhere, with zero gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantField(pub f64);

impl UdfField for ConstantField {
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        vec![self.0; points.len()]
    }

    fn gradients(&self, points: &[Vec3]) -> Vec<Vec3> {
        vec![Vec3::zeros(); points.len()]
    }
}

/// Adds a finite-difference gradient to an evaluate-only field. Central
/// differences are used unless a probe would leave the cube, in which case
/// the difference is one-sided.
pub struct FiniteDifference<F> {
    eval: F,
    h: f64,
}

impl<F: Fn(&[Vec3]) -> Vec<f64>> FiniteDifference<F> {
    pub fn new(eval: F, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
        }
        Ok(Self { eval, h })
    }

    pub fn step(&self) -> f64 {
        self.h
    }
}

impl<F: Fn(&[Vec3]) -> Vec<f64>> UdfField for FiniteDifference<F> {
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        (self.eval)(points)
    }

    fn gradients(&self, points: &[Vec3]) -> Vec<Vec3> {
        let h = self.h;
        // per point and axis: (plus probe, minus probe, spacing)
        let mut probes = Vec::with_capacity(points.len() * 6);
        let mut spans = Vec::with_capacity(points.len() * 3);
        for p in points {
            for a in 0..3 {
                let mut hi = *p;
                let mut lo = *p;
                let (up, down) = (p[a] + h <= HALF_EXTENT, p[a] - h >= -HALF_EXTENT);
                match (up, down) {
                    (true, true) => {
                        hi[a] += h;
                        lo[a] -= h;
                        spans.push(2.0 * h);
                    }
                    (true, false) => {
                        hi[a] += h;
                        spans.push(h);
                    }
                    (false, _) => {
                        lo[a] -= h;
                        spans.push(h);
                    }
                }
                probes.push(hi);
                probes.push(lo);
            }
        }
        let v = (self.eval)(&probes);
        (0..points.len())
            .map(|i| Vec3::from_fn(|a, _| (v[6 * i + 2 * a] - v[6 * i + 2 * a + 1]) / spans[3 * i + a]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    FiniteDifference,
    Analytic,
}

/// A decoder applied to a fixed quantized grid.
pub struct DecodedField<'a> {
    pub decoder: &'a Decoder,
    pub grid: &'a LatentGrid,
    pub mode: GradientMode,
    pub h: f64,
}

impl<'a> DecodedField<'a> {
    pub fn new(decoder: &'a Decoder, grid: &'a LatentGrid, mode: GradientMode, h: f64) -> Result<Self> {
        if grid.channels != decoder.latent_channels() {
            return Err(Error::ShapeMismatch {
                what: "latent channels".into(),
                expected: vec![decoder.latent_channels()],
                actual: vec![grid.channels],
            });
        }
        if !(h > 0.0) {
            return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
        }
        Ok(Self { decoder, grid, mode, h })
    }

    fn eval(&self, points: &[Vec3]) -> Vec<f64> {
        self.decoder
            .decode(self.grid, points)
            .expect("channel count checked at construction")
    }
}

impl UdfField for DecodedField<'_> {
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        self.eval(points)
    }

    fn gradients(&self, points: &[Vec3]) -> Vec<Vec3> {
        match self.mode {
            GradientMode::FiniteDifference => FiniteDifference { eval: |p: &[Vec3]| self.eval(p), h: self.h }.gradients(points),
            GradientMode::Analytic => {
                let mut dec = self.decoder.clone();
                let (_, cache) = dec.forward(self.grid, points).expect("channel count checked at construction");
                let ones = vec![1.0; points.len()];
                dec.backward(self.grid, &cache, &ones, true).1.unwrap_or_default()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub num_seeds: usize,
    pub projection_steps: usize,
    pub acceptance_eps: f64,
    pub densify_rounds: usize,
    pub densify_noise: f64,
    pub step_damping: f64,
    /// Spacing of finite-difference gradients on learned fields.
    pub gradient_step: f64,
    pub gradient_mode: GradientMode,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            num_seeds: 10_000,
            projection_steps: 7,
            acceptance_eps: 5e-3,
            densify_rounds: 3,
            densify_noise: 0.01,
            step_damping: 1.0,
            gradient_step: 1e-4,
            gradient_mode: GradientMode::FiniteDifference,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.acceptance_eps > 0.0) {
            return Err(Error::invalid("acceptance_eps must be positive"));
        }
        if self.projection_steps == 0 {
            return Err(Error::invalid("projection_steps must be at least 1"));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(Error::invalid("step_damping must lie in (0, 1]"));
        }
        if !(self.densify_noise >= 0.0) {
            return Err(Error::invalid("densify_noise must be non-negative"));
        }
        if self.num_seeds == 0 {
            return Err(Error::invalid("num_seeds must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub points: Vec<Vec3>,
    /// Field value at each final point.
    pub values: Vec<f64>,
    /// Set when a step met a zero gradient away from the surface or the
    /// final value exceeds the starting one.
    pub flagged: Vec<bool>,
}

pub fn project(points: &[Vec3], field: &dyn UdfField, cfg: &ExtractionConfig) -> Result<Projection> {
    cfg.validate()?;
    check_in_cube(points)?;
    let mut pts = points.to_vec();
    let mut values = field.values(&pts);
    let start = values.clone();
    let mut flagged = vec![false; pts.len()];
    for _ in 0..cfg.projection_steps {
        let grads = field.gradients(&pts);
        for i in 0..pts.len() {
            if values[i] == 0.0 {
                continue;
            }
            let norm = grads[i].norm();
            if !(norm > 0.0 && norm.is_finite()) {
                flagged[i] = true;
                continue;
            }
            pts[i] = clamp_to_cube(&(pts[i] - grads[i] * (cfg.step_damping * values[i] / norm)));
        }
        values = field.values(&pts);
    }
    for i in 0..pts.len() {
        if !(values[i] <= start[i]) {
            flagged[i] = true;
        }
    }
    Ok(Projection {
        points: pts,
        values,
        flagged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub seeds: usize,
    /// Newly accepted points per round; round 0 is the initial projection.
    pub accepted_per_round: Vec<usize>,
    pub rejection_rate: f64,
    pub rounds: usize,
    pub output_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedCloud {
    pub points: Vec<Vec3>,
    pub report: ExtractionReport,
}

/// Seeds, projects, filters and densifies; the result is deduplicated on a
/// `1e-4` grid in first-seen order.
pub fn extract_dense_cloud(field: &dyn UdfField, cfg: &ExtractionConfig) -> Result<ExtractedCloud> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let seeds: Vec<Vec3> = (0..cfg.num_seeds)
        .map(|_| Vec3::from_fn(|_, _| rng.gen_range(-HALF_EXTENT..HALF_EXTENT)))
        .collect();
    let noise = Normal::new(0.0, cfg.densify_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut accepted = Vec::new();
    let mut per_round = Vec::with_capacity(cfg.densify_rounds + 1);
    let mut tried = 0usize;
    let mut batch = seeds;
    for round in 0..=cfg.densify_rounds {
        if round > 0 {
            batch = accepted
                .iter()
                .map(|p: &Vec3| clamp_to_cube(&p.map(|c| c + noise.sample(&mut rng))))
                .collect();
        }
        if batch.is_empty() {
            per_round.push(0);
            continue;
        }
        tried += batch.len();
        let proj = project(&batch, field, cfg)?;
        let fresh: Vec<Vec3> = proj
            .points
            .into_iter()
            .zip(proj.values)
            .filter(|(_, v)| *v <= cfg.acceptance_eps)
            .map(|(p, _)| p)
            .collect();
        per_round.push(fresh.len());
        accepted.extend(fresh);
    }
    if accepted.is_empty() {
        return Err(Error::NoZeroSet { eps: cfg.acceptance_eps });
    }
    let points = dedup_on_grid(&accepted, 1e-4);
    let total: usize = per_round.iter().sum();
    Ok(ExtractedCloud {
        report: ExtractionReport {
            seeds: cfg.num_seeds,
            accepted_per_round: per_round,
            rejection_rate: 1.0 - total as f64 / tried as f64,
            rounds: cfg.densify_rounds,
            output_points: points.len(),
        },
        points,
    })
}

fn dedup_on_grid(points: &[Vec3], cell: f64) -> Vec<Vec3> {
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| {
            let key = [0, 1, 2].map(|a| (p[a] / cell).round() as i64);
            seen.insert(key)
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_keeps_first_of_each_cell() {
        let pts = [
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.10001, 0.1, 0.1),
            Vec3::new(0.2, 0.1, 0.1),
        ];
        assert_eq!(dedup_on_grid(&pts, 1e-4), vec![pts[0], pts[2]]);
    }

    #[test]
    fn nested_gradient_points_toward_nearer_shell() {
        let f = SphereField::nested(&[0.2, 0.4]);
        let g = f.gradients(&[Vec3::new(0.25, 0.0, 0.0), Vec3::new(0.35, 0.0, 0.0)]);
        assert_eq!(g[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(g[1], Vec3::new(-1.0, 0.0, 0.0));
    }
}
