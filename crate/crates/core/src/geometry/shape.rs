
use super::{triangle_area, Aabb, Vec3, HALF_EXTENT};
use crate::error::{Error, Result};

/// Faces with area at or below this are rejected as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A triangle mesh or a raw point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceShape {
    pub id: String,
    pub vertices: Vec<Vec3>,
    pub faces: Option<Vec<[usize; 3]>>,
}

impl SurfaceShape {
    /// Builds a mesh, validating indices and rejecting degenerate faces.
    pub fn mesh(id: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let count = vertices.len();
        for (face, tri) in faces.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= count) {
                return Err(Error::BadFaceIndex { face, index, count });
            }
            let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area.is_nan() || area <= DEGENERATE_AREA {
                return Err(Error::DegenerateFace { face, area });
            }
        }
        Ok(Self {
            id: id.into(),
            vertices,
            faces: Some(faces),
        })
    }

    /// Builds a mesh and silently drops degenerate faces; bad indices still fail.
    pub fn mesh_lossy(id: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let count = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        for (face, tri) in faces.into_iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= count) {
                return Err(Error::BadFaceIndex { face, index, count });
            }
            let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area > DEGENERATE_AREA {
                kept.push(tri);
            }
        }
        Self::mesh(id, vertices, kept)
    }

    pub fn cloud(id: impl Into<String>, vertices: Vec<Vec3>) -> Self {
        Self {
            id: id.into(),
            vertices,
            faces: None,
        }
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.faces.as_deref().unwrap_or(&[])
    }

    pub fn has_faces(&self) -> bool {
        !self.faces().is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces()[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces().len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                triangle_area(&a, &b, &c)
            })
            .sum()
    }

    /// Appends another shape's geometry, re-indexing its faces.
    pub fn append(&mut self, other: &SurfaceShape) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        if let Some(of) = &other.faces {
            let faces = self.faces.get_or_insert_with(Vec::new);
            faces.extend(of.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        }
    }
}

/// Centers the shape on its bounding-box center and scales it uniformly so
/// the longest side of the box is 1.
pub fn normalize_shape(raw: &SurfaceShape) -> Result<SurfaceShape> {
    if raw.vertices.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    if let Some(index) = raw.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite { index });
    }
    let bounds = raw.bounds();
    let center = bounds.center();
    let longest = bounds.extent().max();
    let scale = if longest > 0.0 { 1.0 / longest } else { 1.0 };
    let vertices = raw
        .vertices
        .iter()
        .map(|v| ((v - center) * scale).map(|c| c.clamp(-HALF_EXTENT, HALF_EXTENT)))
        .collect();
    Ok(SurfaceShape {
        id: raw.id.clone(),
        vertices,
        faces: raw.faces.clone(),
    })
}
