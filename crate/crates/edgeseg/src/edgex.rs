//! Ground-truth edge extraction.
//!
//! A 3x3x3 filter with 26 at the center and -1 elsewhere is convolved over
//! the zero-padded label grid in exact integer arithmetic; every voxel with
//! a nonzero response is then replaced by its ground-truth label. The
//! filter response cancels exactly when the 26-neighbor labels sum to 26
//! times the center label, so a voxel can sit on a real boundary yet be
//! skipped; [`oracle_boundary`] marks every labeled voxel with at least one
//! differing 26-neighbor and exists to document that blind spot, both in
//! tests and behind an opt-in CLI flag.

use crate::error::{Error, Result};
use crate::volgrid::{flat_index, LabelVolume, LABEL_ALPHABET};

/// Exact integer response of the 26/-1 filter. |T| <= 26*4 for BraTS labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseVolume {
    dims: [usize; 3],
    data: Vec<i32>,
}

impl ResponseVolume {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> i32 {
        self.data[flat_index(self.dims, x, y, z)]
    }
}

/// Edge voxels carrying their source label; 0 everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVolume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<u8>,
}

impl EdgeVolume {
    /// Validates the label alphabet. Consistency with a source LabelVolume
    /// is the producer's contract, checked where both are in hand.
    pub fn new(dims: [usize; 3], spacing: [f32; 3], data: Vec<u8>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::usage(format!(
                "data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !LABEL_ALPHABET.contains(v)) {
            return Err(Error::format(format!(
                "edge value {bad} outside alphabet {{0, 1, 2, 4}}"
            )));
        }
        Ok(EdgeVolume {
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

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[flat_index(self.dims, x, y, z)]
    }
}

/// Convolve the 26/-1 filter over the zero-padded label grid:
/// T(c) = 26*v(c) - sum of in-bounds 26-neighbor labels.
pub fn laplacian26_response(labels: &LabelVolume) -> ResponseVolume {
    let dims = labels.dims();
    let (nx, ny, nz) = (dims[0] as i64, dims[1] as i64, dims[2] as i64);
    let src = labels.data();
    let mut data = vec![0i32; src.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let center = src[flat_index(dims, x as usize, y as usize, z as usize)] as i32;
                let mut sum = 0i32;
                for dz in -1..=1i64 {
                    let zz = z + dz;
                    if zz < 0 || zz >= nz {
                        continue;
                    }
                    for dy in -1..=1i64 {
                        let yy = y + dy;
                        if yy < 0 || yy >= ny {
                            continue;
                        }
                        for dx in -1..=1i64 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let xx = x + dx;
                            if xx < 0 || xx >= nx {
                                continue;
                            }
                            sum +=
                                src[flat_index(dims, xx as usize, yy as usize, zz as usize)] as i32;
                        }
                    }
                }
                data[flat_index(dims, x as usize, y as usize, z as usize)] = 26 * center - sum;
            }
        }
    }
    ResponseVolume { dims, data }
}

/// Keep the ground-truth label wherever the response is nonzero.
/// Background voxels stay 0 regardless of the response.
pub fn reconstruct_edges(labels: &LabelVolume, t: &ResponseVolume) -> Result<EdgeVolume> {
    if labels.dims() != t.dims() {
        return Err(Error::usage(format!(
            "label dims {:?} do not match response dims {:?}",
            labels.dims(),
            t.dims()
        )));
    }
    let data: Vec<u8> = labels
        .data()
        .iter()
        .zip(t.data())
        .map(|(&v, &r)| if r != 0 { v } else { 0 })
        .collect();
    EdgeVolume::new(labels.dims(), labels.spacing(), data)
}

/// Full extraction: convolution response followed by reconstruction.
pub fn extract_edges(labels: &LabelVolume) -> EdgeVolume {
    let t = laplacian26_response(labels);
    reconstruct_edges(labels, &t).expect("dims match by construction")
}

/// Independent boundary definition for testing: a labeled voxel is a
/// boundary voxel iff some 26-neighbor (or the zero halo outside the grid)
/// carries a different label.
pub fn oracle_boundary(labels: &LabelVolume) -> EdgeVolume {
    let dims = labels.dims();
    let (nx, ny, nz) = (dims[0] as i64, dims[1] as i64, dims[2] as i64);
    let src = labels.data();
    let mut data = vec![0u8; src.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = flat_index(dims, x as usize, y as usize, z as usize);
                let v = src[idx];
                if v == 0 {
                    continue;
                }
                let mut boundary = false;
                'scan: for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (xx, yy, zz) = (x + dx, y + dy, z + dz);
                            let neighbor =
                                if xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz {
                                    0
                                } else {
                                    src[flat_index(dims, xx as usize, yy as usize, zz as usize)]
                                };
                            if neighbor != v {
                                boundary = true;
                                break 'scan;
                            }
                        }
                    }
                }
                if boundary {
                    data[idx] = v;
                }
            }
        }
    }
    EdgeVolume {
        dims,
        spacing: labels.spacing(),
        data,
    }
}
