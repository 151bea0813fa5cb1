use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{check_in_cube, Vec3, HALF_EXTENT};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VOX1";

/// Binary occupancy grid over `[-0.5, 0.5]^3`, stored x-major
/// (`index = (i * R + j) * R + k` for voxel `(i, j, k)`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub occupancy: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            occupancy: vec![0; resolution.pow(3)],
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)] != 0
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v != 0).count()
    }

    /// Bin index of a coordinate: half-open bins, with `+0.5` clamped into the last bin.
    pub fn bin(resolution: usize, coord: f64) -> usize {
        let b = ((coord + HALF_EXTENT) * resolution as f64).floor();
        (b.max(0.0) as usize).min(resolution - 1)
    }

    /// Occupancy as `f64` values for the encoder.
    pub fn as_f64(&self) -> Vec<f64> {
        self.occupancy.iter().map(|&v| v as f64).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.resolution as u32)?;
        w.write_all(&self.occupancy)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("voxel grid: bad magic".into()));
        }
        let resolution = r.read_u32::<LittleEndian>()? as usize;
        if resolution < 2 || resolution > 1024 {
            return Err(Error::Format(format!("voxel grid: bad resolution {resolution}")));
        }
        let mut occupancy = vec![0u8; resolution.pow(3)];
        r.read_exact(&mut occupancy)?;
        if occupancy.iter().any(|&v| v > 1) {
            return Err(Error::Format("voxel grid: occupancy must be 0 or 1".into()));
        }
        Ok(Self { resolution, occupancy })
    }
}

/// Marks every voxel containing at least one point.
pub fn voxelize(points: &[Vec3], resolution: usize) -> Result<VoxelGrid> {
    if resolution < 2 {
        return Err(Error::invalid("voxel resolution must be at least 2"));
    }
    check_in_cube(points)?;
    let mut grid = VoxelGrid::empty(resolution);
    for p in points {
        let i = VoxelGrid::bin(resolution, p.x);
        let j = VoxelGrid::bin(resolution, p.y);
        let k = VoxelGrid::bin(resolution, p.z);
        let idx = grid.index(i, j, k);
        grid.occupancy[idx] = 1;
    }
    Ok(grid)
}
