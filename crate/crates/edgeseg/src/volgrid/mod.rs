//! Volume containers and voxel-grid utilities.
//!
//! All grids use a flat, x-fastest layout: `index(x, y, z) = x + nx*(y + ny*z)`,
//! matching the NIfTI payload order so file I/O never transposes. Spacing is
//! millimetres per voxel along each axis. Types are immutable after
//! construction and safe to share across threads.

mod nifti;

pub use nifti::{
    read_labels, read_stack_raw, read_volume, write_labels, write_stack_raw, write_u8_grid,
    write_volume, RawStack,
};

use crate::error::{Error, Result};

/// BraTS label alphabet: background, NCR/NET, edema, enhancing tumor.
pub const LABEL_ALPHABET: [u8; 4] = [0, 1, 2, 4];

/// Flat index for an x-fastest grid.
#[inline]
pub fn flat_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Inverse of [`flat_index`].
#[inline]
pub fn coord_of(dims: [usize; 3], index: usize) -> VoxelCoord {
    let x = index % dims[0];
    let y = (index / dims[0]) % dims[1];
    let z = index / (dims[0] * dims[1]);
    VoxelCoord { x, y, z }
}

/// Integer voxel coordinate, bound to some grid's dims by context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// All in-bounds coordinates at Chebyshev distance 1 from `c` (up to 26).
///
/// Out-of-bounds offsets are omitted; callers that treat the halo as zero
/// get the zero-padded stencil semantics. Order is fixed: offsets iterate
/// z, then y, then x, each from -1 to 1, skipping the center.
pub fn neighbors26(c: VoxelCoord, dims: [usize; 3]) -> Vec<VoxelCoord> {
    let mut out = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let x = c.x as i64 + dx;
                let y = c.y as i64 + dy;
                let z = c.z as i64 + dz;
                if x >= 0
                    && y >= 0
                    && z >= 0
                    && (x as usize) < dims[0]
                    && (y as usize) < dims[1]
                    && (z as usize) < dims[2]
                {
                    out.push(VoxelCoord {
                        x: x as usize,
                        y: y as usize,
                        z: z as usize,
                    });
                }
            }
        }
    }
    out
}

fn check_dims(dims: [usize; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::usage(format!("dims must be positive, got {dims:?}")));
    }
    dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::usage(format!("dims {dims:?} overflow")))
}

/// Dense 3D scalar grid for one MR-like modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<f32>,
}

impl Volume {
    /// Validates length (= nx*ny*nz) and finiteness of every value.
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<f32>) -> Result<Self> {
        let n = check_dims(dims)?;
        if data.len() != n {
            return Err(Error::usage(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("volume contains non-finite values"));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        flat_index(self.dims, x, y, z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }
}

/// Dense 3D ground-truth grid over the BraTS label alphabet {0, 1, 2, 4}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<u8>,
}

impl LabelVolume {
    /// Validates length and the {0, 1, 2, 4} alphabet; fails hard on any
    /// other value since silent label corruption would poison every
    /// downstream result.
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<u8>) -> Result<Self> {
        let n = check_dims(dims)?;
        if data.len() != n {
            return Err(Error::usage(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !LABEL_ALPHABET.contains(v)) {
            return Err(Error::format(format!(
                "label value {bad} outside alphabet {{0, 1, 2, 4}}"
            )));
        }
        Ok(LabelVolume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        flat_index(self.dims, x, y, z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }
}
