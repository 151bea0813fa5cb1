//! Programmatic filter for shapes with structure inside their outer shell.
//!
//! Faces are first split into an outer shell (faces that can see out of the
//! shape along some axis ray) and everything else. A surface sample on a
//! non-outer face counts as interior when a majority of six axis-aligned rays
//! cross the outer shell an odd number of times. No watertightness or convex
//! hull is needed.

use serde::{Deserialize, Serialize};

use super::bvh::TriangleBvh;
use super::sampling::sample_surface_with_faces;
use super::{SurfaceShape, Vec3};
use crate::error::{Error, Result};
use crate::seeded_rng;

/// Offset used to step off a face before probing visibility.
const PROBE_OFFSET: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub shape_id: String,
    pub interior_point_count: usize,
    pub total_point_count: usize,
    pub accepted: bool,
}

impl CurationRecord {
    pub fn interior_fraction(&self) -> f64 {
        self.interior_point_count as f64 / self.total_point_count.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationConfig {
    pub threshold: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            samples: 2000,
            seed: 0,
        }
    }
}

/// Six nearly axis-aligned directions. The tiny tilt keeps rays off shared
/// edges and vertices of axis-aligned meshes.
pub fn axis_rays() -> [Vec3; 6] {
    let tilt = |a: Vec3, b: Vec3, c: Vec3| (a + b * 1.37e-4 + c * 2.91e-4).normalize();
    let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
    [
        tilt(x, y, z),
        tilt(-x, z, y),
        tilt(y, z, x),
        tilt(-y, x, z),
        tilt(z, x, y),
        tilt(-z, y, x),
    ]
}

fn is_coplanar(vertices: &[Vec3]) -> bool {
    let Some(a) = vertices.first() else {
        return true;
    };
    let Some(b) = vertices.iter().max_by(|p, q| (*p - a).norm_squared().total_cmp(&(*q - a).norm_squared())) else {
        return true;
    };
    let ab = b - a;
    if ab.norm() < 1e-12 {
        return true;
    }
    let Some(c) = vertices
        .iter()
        .max_by(|p, q| ab.cross(&(*p - a)).norm_squared().total_cmp(&ab.cross(&(*q - a)).norm_squared()))
    else {
        return true;
    };
    let n = ab.cross(&(c - a));
    if n.norm() < 1e-12 {
        return true;
    }
    let n = n.normalize();
    vertices.iter().all(|v| n.dot(&(v - a)).abs() < 1e-9)
}

/// Flags faces that can see outside the shape: from a point just off either
/// side of the face, at least one axis ray escapes without crossing anything.
pub fn outer_shell_faces(shape: &SurfaceShape, bvh: &TriangleBvh) -> Vec<bool> {
    let rays = axis_rays();
    (0..shape.faces().len())
        .map(|f| {
            let [a, b, c] = shape.triangle(f);
            let centroid = (a + b + c) / 3.0;
            let normal = (b - a).cross(&(c - a)).normalize();
            [1.0, -1.0].iter().any(|s| {
                let probe = centroid + normal * (s * PROBE_OFFSET);
                rays.iter().any(|d| bvh.count_crossings(&probe, d, 0.0) == 0)
            })
        })
        .collect()
}

pub fn curate_internal(shape: &SurfaceShape, cfg: &CurationConfig) -> Result<CurationRecord> {
    if !shape.has_faces() {
        return Err(Error::invalid(format!("curation of '{}' needs a triangle mesh", shape.id)));
    }
    if cfg.samples == 0 {
        return Err(Error::invalid("curation sample count must be at least 1"));
    }
    if is_coplanar(&shape.vertices) {
        return Ok(CurationRecord {
            shape_id: shape.id.clone(),
            interior_point_count: 0,
            total_point_count: cfg.samples,
            accepted: false,
        });
    }

    let all = TriangleBvh::new((0..shape.faces().len()).map(|f| shape.triangle(f)).collect());
    let outer = outer_shell_faces(shape, &all);
    let outer_bvh = TriangleBvh::new(
        (0..shape.faces().len())
            .filter(|&f| outer[f])
            .map(|f| shape.triangle(f))
            .collect(),
    );

    let mut rng = seeded_rng(cfg.seed);
    let (points, faces) = sample_surface_with_faces(shape, cfg.samples, &mut rng)?;
    let rays = axis_rays();
    let interior = points
        .iter()
        .zip(&faces)
        .filter(|(p, &f)| {
            !outer[f] && rays.iter().filter(|d| outer_bvh.count_crossings(p, d, 0.0) % 2 == 1).count() >= 4
        })
        .count();

    let fraction = interior as f64 / cfg.samples as f64;
    Ok(CurationRecord {
        shape_id: shape.id.clone(),
        interior_point_count: interior,
        total_point_count: cfg.samples,
        accepted: fraction >= cfg.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::synthetic::{box_mesh, icosphere, nested_spheres};

    #[test]
    fn single_sphere_has_no_interior() {
        let r = curate_internal(&icosphere(Vec3::zeros(), 0.4, 3), &CurationConfig::default()).unwrap();
        assert_eq!(r.interior_point_count, 0);
        assert!(!r.accepted);
    }

    #[test]
    fn nested_spheres_interior_share_matches_area() {
        let r = curate_internal(&nested_spheres(0.2, 0.4, 3), &CurationConfig::default()).unwrap();
        // analytic area share of the inner shell: 0.2^2 / (0.2^2 + 0.4^2) = 0.2
        assert!((r.interior_fraction() - 0.2).abs() < 0.03, "{}", r.interior_fraction());
        assert!(r.accepted);
    }

    #[test]
    fn box_inside_box_is_accepted() {
        let mut s = box_mesh(Vec3::zeros(), Vec3::repeat(0.4));
        s.append(&box_mesh(Vec3::new(0.05, 0.0, 0.0), Vec3::repeat(0.15)));
        let r = curate_internal(&s, &CurationConfig::default()).unwrap();
        let inner_share = 0.15f64.powi(2) / (0.15f64.powi(2) + 0.4f64.powi(2));
        assert!((r.interior_fraction() - inner_share).abs() < 0.03);
    }

    #[test]
    fn zero_threshold_accepts_everything() {
        let cfg = CurationConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(curate_internal(&icosphere(Vec3::zeros(), 0.4, 2), &cfg).unwrap().accepted);
    }

    #[test]
    fn coplanar_shape_is_rejected() {
        let v = vec![
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(-0.5, 0.5, 0.0),
        ];
        let sq = SurfaceShape::mesh("sq", v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let r = curate_internal(&sq, &CurationConfig::default()).unwrap();
        assert_eq!(r.interior_point_count, 0);
        assert!(!r.accepted);
    }
}
