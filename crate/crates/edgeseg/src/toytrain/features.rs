//! Per-voxel features for the toy classifier.
//!
//! Nine features per voxel from the three (already z-scored) modalities:
//! the raw value, the zero-padded 3x3x3 local mean, and the zero-padded
//! central-difference gradient magnitude of each. Extraction returns raw
//! feature values; standardization happens in training with cohort-wide
//! statistics that are stored in the model.

use crate::error::{Error, Result};
use crate::volgrid::{flat_index, Volume};

/// Features per voxel: 3 raw + 3 local mean + 3 gradient magnitude.
pub const FEATURE_COUNT: usize = 9;

/// Feature-fastest per-voxel feature array.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<f64>,
}

impl FeatureVolume {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn features(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn voxels(&self) -> usize {
        self.data.len() / FEATURE_COUNT
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, voxel: usize) -> &[f64] {
        &self.data[voxel * FEATURE_COUNT..(voxel + 1) * FEATURE_COUNT]
    }
}

/// Zero-padded 3x3x3 mean (sum of the 27-cell window over 27).
fn local_mean(vol: &Volume, x: usize, y: usize, z: usize) -> f64 {
    let dims = vol.dims();
    let mut sum = 0.0f64;
    for dz in -1i64..=1 {
        let zz = z as i64 + dz;
        if zz < 0 || zz >= dims[2] as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let yy = y as i64 + dy;
            if yy < 0 || yy >= dims[1] as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                let xx = x as i64 + dx;
                if xx < 0 || xx >= dims[0] as i64 {
                    continue;
                }
                sum += vol.data()[flat_index(dims, xx as usize, yy as usize, zz as usize)] as f64;
            }
        }
    }
    sum / 27.0
}

/// Central-difference gradient magnitude with a zero halo.
fn gradient_magnitude(vol: &Volume, x: usize, y: usize, z: usize) -> f64 {
    let dims = vol.dims();
    let sample = |xx: i64, yy: i64, zz: i64| -> f64 {
        if xx < 0
            || yy < 0
            || zz < 0
            || xx >= dims[0] as i64
            || yy >= dims[1] as i64
            || zz >= dims[2] as i64
        {
            0.0
        } else {
            vol.data()[flat_index(dims, xx as usize, yy as usize, zz as usize)] as f64
        }
    };
    let (xi, yi, zi) = (x as i64, y as i64, z as i64);
    let gx = (sample(xi + 1, yi, zi) - sample(xi - 1, yi, zi)) / 2.0;
    let gy = (sample(xi, yi + 1, zi) - sample(xi, yi - 1, zi)) / 2.0;
    let gz = (sample(xi, yi, zi + 1) - sample(xi, yi, zi - 1)) / 2.0;
    (gx * gx + gy * gy + gz * gz).sqrt()
}

/// Raw (unstandardized) features of one case.
pub fn extract_features(modalities: [&Volume; 3]) -> Result<FeatureVolume> {
    let dims = modalities[0].dims();
    if modalities.iter().any(|m| m.dims() != dims) {
        return Err(Error::usage("modalities have mismatched dims"));
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut data = vec![0.0f64; n * FEATURE_COUNT];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let voxel = flat_index(dims, x, y, z);
                let row = &mut data[voxel * FEATURE_COUNT..(voxel + 1) * FEATURE_COUNT];
                for (m, vol) in modalities.iter().enumerate() {
                    row[m] = vol.data()[voxel] as f64;
                    row[3 + m] = local_mean(vol, x, y, z);
                    row[6 + m] = gradient_magnitude(vol, x, y, z);
                }
            }
        }
    }
    Ok(FeatureVolume {
        dims,
        spacing: modalities[0].spacing(),
        data,
    })
}

/// Per-feature standardization statistics fitted over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl FeatureStats {
    /// Population mean/std per feature over all voxels of all cases,
    /// two-pass in case order. Near-constant features get std 1 so the
    /// standardized value degrades to a plain shift.
    pub fn fit<'a>(cases: impl Iterator<Item = &'a FeatureVolume> + Clone) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0f64; FEATURE_COUNT];
        for fv in cases.clone() {
            for voxel in 0..fv.voxels() {
                for (f, v) in fv.row(voxel).iter().enumerate() {
                    sum[f] += v;
                }
            }
            count += fv.voxels();
        }
        if count == 0 {
            return Err(Error::usage("no voxels to fit feature statistics"));
        }
        let mean = sum.map(|s| s / count as f64);
        let mut ss = [0.0f64; FEATURE_COUNT];
        for fv in cases {
            for voxel in 0..fv.voxels() {
                for (f, v) in fv.row(voxel).iter().enumerate() {
                    let d = v - mean[f];
                    ss[f] += d * d;
                }
            }
        }
        let std = ss.map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        });
        Ok(FeatureStats { mean, std })
    }

    #[inline]
    pub fn standardize(&self, feature: usize, value: f64) -> f64 {
        (value - self.mean[feature]) / self.std[feature]
    }
}
