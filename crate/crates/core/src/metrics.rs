//! Scores for sets of generated point clouds.
//!
//! Chamfer distance uses squared Euclidean distances and sums the two
//! directed means. MMD and COV are built on it; JSD compares pooled
//! occupancy histograms of the two sets.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::kdtree::KdTree;
use crate::geometry::VoxelGrid;
use crate::seeded_rng;
use crate::Vec3;

/// Smoothing added inside the logarithms of the JSD.
pub const JSD_EPS: f64 = 1e-10;
pub const MMD_DISPLAY_SCALE: f64 = 1e3;
pub const JSD_DISPLAY_SCALE: f64 = 1e-1;

/// Point clouds sharing one cardinality.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudSet {
    clouds: Vec<Vec<Vec3>>,
}

impl CloudSet {
    pub fn new(clouds: Vec<Vec<Vec3>>) -> Result<Self> {
        let Some(first) = clouds.first() else {
            return Err(Error::EmptyGeometry);
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::EmptyGeometry);
        }
        for c in &clouds {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
            if let Some(index) = c.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { clouds })
    }

    /// Brings every cloud to exactly `n` points: subsampling without
    /// replacement when larger, topping up with random repeats when smaller.
    /// Each cloud draws from a stream keyed by `seed` and its own contents,
    /// so equal clouds are resampled equally wherever they appear.
    pub fn resampled(clouds: &[Vec<Vec3>], n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("resample size must be positive"));
        }
        let mut out = Vec::with_capacity(clouds.len());
        for c in clouds {
            if c.is_empty() {
                return Err(Error::EmptyGeometry);
            }
            let rng = &mut seeded_rng(seed ^ content_hash(c));
            let picked: Vec<Vec3> = if c.len() >= n {
                sample(rng, c.len(), n).into_iter().map(|i| c[i]).collect()
            } else {
                let mut v = c.clone();
                v.extend((0..n - c.len()).map(|_| c[rng.gen_range(0..c.len())]));
                v
            };
            out.push(picked);
        }
        Self::new(out)
    }

    pub fn clouds(&self) -> &[Vec<Vec3>] {
        &self.clouds
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn points_per_cloud(&self) -> usize {
        self.clouds[0].len()
    }
}

// FNV-1a over the coordinate bits
fn content_hash(points: &[Vec3]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in points {
        for v in p.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn directed_mean(from: &[Vec3], to: &KdTree) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|p| to.nearest(p).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .sum();
    sum / from.len() as f64
}

pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    Ok(chamfer_with(a, &KdTree::new(a), b, &KdTree::new(b)))
}

fn chamfer_with(a: &[Vec3], ta: &KdTree, b: &[Vec3], tb: &KdTree) -> f64 {
    directed_mean(a, tb) + directed_mean(b, ta)
}

/// `d[g][r]` = CD between generated cloud `g` and reference cloud `r`.
pub fn chamfer_matrix(generated: &CloudSet, reference: &CloudSet) -> Vec<Vec<f64>> {
    let gt: Vec<KdTree> = generated.clouds.iter().map(|c| KdTree::new(c)).collect();
    let rt: Vec<KdTree> = reference.clouds.iter().map(|c| KdTree::new(c)).collect();
    generated
        .clouds
        .iter()
        .zip(&gt)
        .map(|(g, tg)| {
            reference
                .clouds
                .iter()
                .zip(&rt)
                .map(|(r, tr)| chamfer_with(g, tg, r, tr))
                .collect()
        })
        .collect()
}

fn mmd_from(d: &[Vec<f64>], n_ref: usize) -> f64 {
    let mut best: Vec<f64> = (0..n_ref)
        .map(|r| d.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
        .collect();
    // summing in sorted order makes the result independent of set order
    best.sort_by(f64::total_cmp);
    best.iter().sum::<f64>() / n_ref as f64
}

fn cov_from(d: &[Vec<f64>], n_ref: usize) -> f64 {
    let mut covered = vec![false; n_ref];
    for row in d {
        let mut best = 0;
        for r in 1..n_ref {
            if row[r] < row[best] {
                best = r;
            }
        }
        covered[best] = true;
    }
    100.0 * covered.iter().filter(|&&c| c).count() as f64 / n_ref as f64
}

/// Mean over reference clouds of the smallest CD to any generated cloud.
pub fn mmd(generated: &CloudSet, reference: &CloudSet) -> f64 {
    mmd_from(&chamfer_matrix(generated, reference), reference.len())
}

/// Percentage of reference clouds that are the nearest reference of some
/// generated cloud (ties go to the lower index).
pub fn cov(generated: &CloudSet, reference: &CloudSet) -> f64 {
    cov_from(&chamfer_matrix(generated, reference), reference.len())
}

fn histogram(set: &CloudSet, resolution: usize) -> Vec<f64> {
    let mut h = vec![0.0; resolution.pow(3)];
    let mut total = 0usize;
    for c in &set.clouds {
        for p in c {
            let [i, j, k] = [0, 1, 2].map(|a| VoxelGrid::bin(resolution, p[a]));
            h[(i * resolution + j) * resolution + k] += 1.0;
            total += 1;
        }
    }
    h.iter_mut().for_each(|v| *v /= total as f64);
    h
}

fn kl(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * ((pi + JSD_EPS) / (mi + JSD_EPS)).ln())
        .sum()
}

/// Jensen-Shannon divergence (nats) between the pooled `R^3` occupancy
/// distributions of the two sets.
pub fn jsd(generated: &CloudSet, reference: &CloudSet, resolution: usize) -> Result<f64> {
    if resolution < 2 {
        return Err(Error::invalid(format!("JSD grid resolution must be at least 2, got {resolution}")));
    }
    let p = histogram(generated, resolution);
    let q = histogram(reference, resolution);
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub points_per_cloud: usize,
    pub jsd_resolution: usize,
    /// Seeds the resampling to `points_per_cloud`.
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            points_per_cloud: 2048,
            jsd_resolution: 28,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mmd: f64,
    pub cov: f64,
    pub jsd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub raw: Scores,
    /// MMD times 10^3, COV in percent, JSD times 10^-1.
    pub display: Scores,
    pub generated_clouds: usize,
    pub reference_clouds: usize,
    pub config: MetricsConfig,
}

impl Scores {
    pub fn to_display(&self) -> Scores {
        Scores {
            mmd: self.mmd * MMD_DISPLAY_SCALE,
            cov: self.cov,
            jsd: self.jsd * JSD_DISPLAY_SCALE,
        }
    }
}

impl GenerationReport {
    pub fn from_raw(raw: Scores, generated_clouds: usize, reference_clouds: usize, config: MetricsConfig) -> Self {
        Self {
            display: raw.to_display(),
            raw,
            generated_clouds,
            reference_clouds,
            config,
        }
    }

    /// One-line table row with two decimals per score.
    pub fn render(&self) -> String {
        format!(
            "MMD(x1e3) {:.2} | COV(%) {:.2} | JSD(x1e-1) {:.2}",
            self.display.mmd, self.display.cov, self.display.jsd
        )
    }
}

/// Resamples both sets to `cfg.points_per_cloud` and scores them.
pub fn evaluate(generated: &[Vec<Vec3>], reference: &[Vec<Vec3>], cfg: &MetricsConfig) -> Result<GenerationReport> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let g = CloudSet::resampled(generated, cfg.points_per_cloud, cfg.seed)?;
    let r = CloudSet::resampled(reference, cfg.points_per_cloud, cfg.seed)?;
    let d = chamfer_matrix(&g, &r);
    let raw = Scores {
        mmd: mmd_from(&d, r.len()),
        cov: cov_from(&d, r.len()),
        jsd: jsd(&g, &r, cfg.jsd_resolution)?,
    };
    Ok(GenerationReport::from_raw(raw, g.len(), r.len(), cfg.clone()))
}

/// How much of a cloud lies inside its own outer shell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorStats {
    /// Points whose voxel touches the closed exterior.
    pub outer_points: usize,
    /// Points enclosed by an outer shell.
    pub interior_points: usize,
    pub interior_fraction: f64,
}

/// Voxelizes the cloud on a grid padded with empty space, closes gaps of up
/// to `2 * closing` voxels (dilate, flood-fill the empty space from the
/// padding, dilate that exterior back) and counts a point as outer when its
/// voxel touches the closed exterior. Everything else is enclosed.
pub fn interior_stats(points: &[Vec3], resolution: usize, closing: usize) -> Result<InteriorStats> {
    if points.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    if resolution < 3 {
        return Err(Error::invalid("interior analysis needs resolution of at least 3"));
    }
    let pad = closing + 1;
    let r = resolution + 2 * pad;
    let idx = |c: [usize; 3]| (c[0] * r + c[1]) * r + c[2];
    let cells: Vec<[usize; 3]> = points
        .iter()
        .map(|p| [0, 1, 2].map(|a| VoxelGrid::bin(resolution, p[a]) + pad))
        .collect();
    let grow = |seeds: &mut dyn Iterator<Item = [usize; 3]>, radius: usize| {
        let mut out = vec![false; r * r * r];
        for c in seeds {
            let lo = c.map(|v| v.saturating_sub(radius));
            let hi = c.map(|v| (v + radius).min(r - 1));
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        out[idx([i, j, k])] = true;
                    }
                }
            }
        }
        out
    };
    let occ = grow(&mut cells.iter().copied(), closing);

    let mut outside = vec![false; r * r * r];
    let mut queue = VecDeque::from([[0, 0, 0]]);
    outside[0] = true;
    while let Some(c) = queue.pop_front() {
        for axis in 0..3 {
            for up in [false, true] {
                let mut n = c;
                if up && c[axis] + 1 < r {
                    n[axis] += 1;
                } else if !up && c[axis] > 0 {
                    n[axis] -= 1;
                } else {
                    continue;
                }
                let id = idx(n);
                if !occ[id] && !outside[id] {
                    outside[id] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    let exterior_cells = (0..r * r * r)
        .filter(|&id| outside[id])
        .map(|id| [id / (r * r), (id / r) % r, id % r]);
    // one extra voxel so shell voxels next to the exterior count as touching it
    let near_exterior = grow(&mut exterior_cells.into_iter(), closing + 1);
    let outer_points = cells.iter().filter(|&&c| near_exterior[idx(c)]).count();
    let interior_points = points.len() - outer_points;
    Ok(InteriorStats {
        outer_points,
        interior_points,
        interior_fraction: interior_points as f64 / points.len() as f64,
    })
}
