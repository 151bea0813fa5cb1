use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{clamp_to_cube, triangle_area, SurfaceShape, Vec3, HALF_EXTENT};
use crate::error::{Error, Result};

/// Surface samples: area-weighted over faces for meshes, a subset of the
/// vertices (without replacement) for point clouds.
pub fn sample_surface<R: Rng>(shape: &SurfaceShape, n: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    Ok(sample_surface_with_faces(shape, n, rng)?.0)
}

/// Like [`sample_surface`] but also returns the face each point came from
/// (`usize::MAX` for point clouds).
pub fn sample_surface_with_faces<R: Rng>(
    shape: &SurfaceShape,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Vec3>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if !shape.has_faces() {
        let count = shape.vertices.len();
        if n > count {
            return Err(Error::invalid(format!(
                "cannot draw {n} samples from a point cloud with {count} points"
            )));
        }
        let picked = index::sample(rng, count, n);
        let pts = picked.iter().map(|i| shape.vertices[i]).collect();
        return Ok((pts, vec![usize::MAX; n]));
    }

    let faces = shape.faces();
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for f in 0..faces.len() {
        let [a, b, c] = shape.triangle(f);
        total += triangle_area(&a, &b, &c);
        cumulative.push(total);
    }
    let mut points = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= u).min(faces.len() - 1);
        let [a, b, c] = shape.triangle(f);
        let r1: f64 = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        let lo = a.inf(&b).inf(&c);
        let hi = a.sup(&b).sup(&c);
        points.push(p.sup(&lo).inf(&hi));
        ids.push(f);
    }
    Ok((points, ids))
}

/// Distribution of regression query points around a shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryConfig {
    pub sigmas: Vec<f64>,
    pub uniform_fraction: f64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.08, 0.02, 0.003],
            uniform_fraction: 0.5,
        }
    }
}

/// Query points plus, for near-surface points, the surface sample they were
/// perturbed from.
#[derive(Clone, Debug)]
pub struct TrainingQueries {
    pub points: Vec<Vec3>,
    pub anchors: Vec<Option<Vec3>>,
}

/// `floor(uniform_fraction * n)` points uniform in the cube; the rest are
/// surface samples displaced by isotropic Gaussian noise, cycling through
/// `sigmas`. Displaced points are clamped back into the cube.
pub fn sample_training_queries<R: Rng>(
    shape: &SurfaceShape,
    n: usize,
    cfg: &QueryConfig,
    rng: &mut R,
) -> Result<TrainingQueries> {
    if n == 0 {
        return Err(Error::invalid("query count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.uniform_fraction) {
        return Err(Error::invalid("uniform_fraction must lie in [0, 1]"));
    }
    let n_uniform = (cfg.uniform_fraction * n as f64).floor() as usize;
    let n_surface = n - n_uniform;
    if n_surface > 0 && cfg.sigmas.is_empty() {
        return Err(Error::invalid("sigmas must be non-empty when near-surface queries are requested"));
    }
    if cfg.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("sigmas must be finite and non-negative"));
    }

    let mut points = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for _ in 0..n_uniform {
        points.push(Vec3::from_fn(|_, _| rng.gen_range(-HALF_EXTENT..=HALF_EXTENT)));
        anchors.push(None);
    }
    if n_surface > 0 {
        let surface = sample_surface(shape, n_surface, rng)?;
        for (i, s) in surface.into_iter().enumerate() {
            let sigma = cfg.sigmas[i % cfg.sigmas.len()];
            let p = if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("valid sigma");
                s + Vec3::from_fn(|_, _| normal.sample(rng))
            } else {
                s
            };
            points.push(clamp_to_cube(&p));
            anchors.push(Some(s));
        }
    }
    Ok(TrainingQueries { points, anchors })
}
