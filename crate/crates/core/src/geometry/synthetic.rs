//! Procedural fixtures: spheres, boxes and randomly nested shells.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SurfaceShape, Vec3};
use crate::seeded_rng;

/// Geodesic sphere from a subdivided icosahedron: `20 * 4^level` faces.
pub fn icosphere(center: Vec3, radius: f64, level: u32) -> SurfaceShape {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| center + v * radius).collect();
    SurfaceShape::mesh("sphere", vertices, faces).expect("icosphere faces are valid")
}

/// Closed axis-aligned box with outward-facing triangles.
pub fn box_mesh(center: Vec3, half: Vec3) -> SurfaceShape {
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z)
        })
        .collect();
    let quads = [
        [0, 2, 6, 4], // -x
        [1, 5, 7, 3], // +x
        [0, 4, 5, 1], // -y
        [2, 3, 7, 6], // +y
        [0, 1, 3, 2], // -z
        [4, 6, 7, 5], // +z
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    SurfaceShape::mesh("box", vertices, faces).expect("box faces are valid")
}

/// Two concentric spheres.
pub fn nested_spheres(inner: f64, outer: f64, level: u32) -> SurfaceShape {
    let mut s = icosphere(Vec3::zeros(), outer, level);
    s.append(&icosphere(Vec3::zeros(), inner, level));
    s.id = "nested-spheres".into();
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub min_shells: usize,
    pub max_shells: usize,
    /// Icosphere subdivision level for spherical shells.
    pub sphere_level: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            min_shells: 1,
            max_shells: 3,
            sphere_level: 3,
        }
    }
}

#[derive(Clone, Copy)]
enum Primitive {
    Sphere,
    Cube,
}

impl Primitive {
    /// Ratio of the bounding-sphere radius to the inscribed radius.
    fn bounding_over_inscribed(self) -> f64 {
        match self {
            Primitive::Sphere => 1.0,
            Primitive::Cube => 3f64.sqrt(),
        }
    }
}

/// Desk-scale stand-in for a curated dataset of shapes with interiors: each
/// shape is 1 to 3 nested shells, spheres or boxes, with random sizes and
/// offsets. Every shell fits strictly inside the one enclosing it.
pub fn make_synthetic_nested_dataset(count: usize, seed: u64) -> Vec<SurfaceShape> {
    make_synthetic_dataset_with(count, seed, &SyntheticConfig::default())
}

pub fn make_synthetic_dataset_with(count: usize, seed: u64, cfg: &SyntheticConfig) -> Vec<SurfaceShape> {
    let mut rng = seeded_rng(seed);
    let min_shells = cfg.min_shells.max(1);
    let max_shells = cfg.max_shells.max(min_shells);
    (0..count)
        .map(|i| {
            let shells = rng.gen_range(min_shells..=max_shells);
            let mut shape: Option<SurfaceShape> = None;
            let mut center = Vec3::zeros();
            // radius of the sphere the next shell must fit inside
            let mut room = rng.gen_range(0.36..0.46);
            for level in 0..shells {
                let kind = if rng.gen_bool(0.5) { Primitive::Sphere } else { Primitive::Cube };
                let bounding = if level == 0 { room } else { room * rng.gen_range(0.55..0.75) };
                let slack = (room - bounding) * 0.5;
                if level > 0 {
                    center += Vec3::from_fn(|_, _| rng.gen_range(-slack..=slack) / 3f64.sqrt());
                }
                let inscribed = bounding / kind.bounding_over_inscribed();
                let shell = match kind {
                    Primitive::Sphere => icosphere(center, bounding, cfg.sphere_level),
                    Primitive::Cube => box_mesh(center, Vec3::repeat(inscribed)),
                };
                match &mut shape {
                    Some(s) => s.append(&shell),
                    None => shape = Some(shell),
                }
                room = inscribed;
            }
            let mut s = shape.expect("at least one shell");
            s.id = format!("synthetic-{i:04}-s{shells}");
            s
        })
        .collect()
}

/// Number of shells encoded in a synthetic shape id.
pub fn shell_count(id: &str) -> Option<usize> {
    id.rsplit_once("-s").and_then(|(_, n)| n.parse().ok())
}
