use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::bvh::TriangleBvh;
use super::kdtree::KdTree;
use super::{SurfaceShape, Vec3};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UDF1";

/// Query points with their (clamped) ground-truth unsigned distances.
#[derive(Clone, Debug, PartialEq)]
pub struct UdfSampleSet {
    pub points: Vec<Vec3>,
    pub distances: Vec<f64>,
    pub clamp_value: f64,
}

impl UdfSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Layout: `UDF1`, u32 count, f32 clamp, then `count` records of
    /// `x y z distance` as little-endian f32.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.points.len() as u32)?;
        w.write_f32::<LittleEndian>(self.clamp_value as f32)?;
        for (p, d) in self.points.iter().zip(&self.distances) {
            for c in p.iter() {
                w.write_f32::<LittleEndian>(*c as f32)?;
            }
            w.write_f32::<LittleEndian>(*d as f32)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("udf samples: bad magic".into()));
        }
        let count = r.read_u32::<LittleEndian>()? as usize;
        let clamp_value = r.read_f32::<LittleEndian>()? as f64;
        if !(clamp_value > 0.0) {
            return Err(Error::Format("udf samples: clamp must be positive".into()));
        }
        let mut points = Vec::with_capacity(count);
        let mut distances = Vec::with_capacity(count);
        for _ in 0..count {
            let x = r.read_f32::<LittleEndian>()? as f64;
            let y = r.read_f32::<LittleEndian>()? as f64;
            let z = r.read_f32::<LittleEndian>()? as f64;
            let d = r.read_f32::<LittleEndian>()? as f64;
            if !(d >= 0.0 && d <= clamp_value) {
                return Err(Error::Format(format!("udf samples: distance {d} outside [0, {clamp_value}]")));
            }
            points.push(Vec3::new(x, y, z));
            distances.push(d);
        }
        Ok(Self {
            points,
            distances,
            clamp_value,
        })
    }
}

/// Exact unsigned-distance oracle for one shape.
///
/// Meshes use a triangle hierarchy; face-less clouds use nearest-neighbor
/// distance to their points.
pub enum DistanceOracle {
    Mesh(TriangleBvh),
    Cloud(KdTree),
}

impl DistanceOracle {
    pub fn new(shape: &SurfaceShape) -> Result<Self> {
        if shape.vertices.is_empty() {
            return Err(Error::EmptyGeometry);
        }
        Ok(if shape.has_faces() {
            DistanceOracle::Mesh(TriangleBvh::new((0..shape.faces().len()).map(|f| shape.triangle(f)).collect()))
        } else {
            DistanceOracle::Cloud(KdTree::new(&shape.vertices))
        })
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            DistanceOracle::Mesh(bvh) => bvh.distance(p).expect("non-empty hierarchy"),
            DistanceOracle::Cloud(tree) => tree.nearest(p).expect("non-empty tree").1.sqrt(),
        }
    }
}

/// `min(clamp, distance to surface)` for every query.
pub fn ground_truth_udf(shape: &SurfaceShape, queries: &[Vec3], clamp: f64) -> Result<UdfSampleSet> {
    if !(clamp > 0.0) {
        return Err(Error::invalid("clamp must be positive"));
    }
    let oracle = DistanceOracle::new(shape)?;
    let distances = queries.iter().map(|q| oracle.distance(q).min(clamp)).collect();
    Ok(UdfSampleSet {
        points: queries.to_vec(),
        distances,
        clamp_value: clamp,
    })
}
