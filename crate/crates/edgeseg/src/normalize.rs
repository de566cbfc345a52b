//! Z-score normalization of a modality over its brain region.
//!
//! The brain region is the set of nonzero voxels (skull-stripped inputs
//! keep an exactly-zero background). Masked voxels are rescaled so their
//! population mean is 0 and population standard deviation is 1; background
//! voxels stay exactly 0. Statistics are accumulated in double precision
//! with a sequential two-pass reduction, so results are bit-deterministic.

use crate::error::{Error, Result};
use crate::volgrid::Volume;

/// Boolean support set of the brain region (nonzero voxels) of one volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrainMask {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl BrainMask {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
}

/// Mask is true exactly where the voxel value is nonzero (negative values
/// count as brain).
pub fn brain_mask(vol: &Volume) -> BrainMask {
    BrainMask {
        dims: vol.dims(),
        data: vol.data().iter().map(|&v| v != 0.0).collect(),
    }
}

/// Population mean and standard deviation over masked voxels, two-pass.
fn masked_moments(vol: &Volume, mask: &BrainMask) -> (f64, f64, usize) {
    let mut count = 0usize;
    let mut sum = 0.0f64;
    for (v, &m) in vol.data().iter().zip(mask.data()) {
        if m {
            sum += *v as f64;
            count += 1;
        }
    }
    if count == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / count as f64;
    let mut ss = 0.0f64;
    for (v, &m) in vol.data().iter().zip(mask.data()) {
        if m {
            let d = *v as f64 - mean;
            ss += d * d;
        }
    }
    (mean, (ss / count as f64).sqrt(), count)
}

/// Replace masked voxels by (v - mean) / std; background stays exactly 0.
pub fn zscore_normalize(vol: &Volume) -> Result<Volume> {
    let mask = brain_mask(vol);
    let (mean, std, count) = masked_moments(vol, &mask);
    if count < 2 {
        return Err(Error::domain("no brain region"));
    }
    if std == 0.0 {
        return Err(Error::domain("degenerate intensity distribution"));
    }
    let data: Vec<f32> = vol
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| {
            if m {
                ((v as f64 - mean) / std) as f32
            } else {
                0.0
            }
        })
        .collect();
    Volume::new(vol.dims(), vol.spacing(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalSource;

    fn vol(data: Vec<f32>) -> Volume {
        let n = data.len();
        Volume::new([n, 1, 1], [1.0; 3], data).unwrap()
    }

    /// Independent two-pass moment oracle over a value list.
    fn oracle_moments(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn all_zero_volume_has_empty_mask() {
        let m = brain_mask(&vol(vec![0.0; 8]));
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn single_nonzero_voxel_masks_one() {
        let m = brain_mask(&vol(vec![0.0, 0.0, 5.0, 0.0]));
        assert_eq!(m.count(), 1);
        assert!(m.data()[2]);
    }

    #[test]
    fn negative_values_count_as_brain() {
        let m = brain_mask(&vol(vec![-1.5, 0.0]));
        assert!(m.data()[0]);
        assert!(!m.data()[1]);
    }

    #[test]
    fn two_point_case_is_exact() {
        let out = zscore_normalize(&vol(vec![2.0, 0.0, 4.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_nonzero_volume_is_degenerate() {
        let err = zscore_normalize(&vol(vec![3.0; 10])).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn empty_and_singleton_masks_rejected() {
        assert!(matches!(
            zscore_normalize(&vol(vec![0.0; 4])),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            zscore_normalize(&vol(vec![0.0, 7.0, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gaussian_samples_normalize_to_unit_moments() {
        let mut src = NormalSource::new(20240229);
        let data: Vec<f32> = (0..1000)
            .map(|_| (5.0 + 3.0 * src.next_normal()) as f32)
            .collect();
        // Guard against an accidental exact zero, which would leave the mask.
        assert!(data.iter().all(|&v| v != 0.0));
        let out = zscore_normalize(&vol(data)).unwrap();
        let masked: Vec<f64> = out
            .data()
            .iter()
            .filter(|&&v| v != 0.0)
            .map(|&v| v as f64)
            .collect();
        assert_eq!(masked.len(), 1000);
        let (mean, std) = oracle_moments(&masked);
        assert!(mean.abs() < 1e-5, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-5, "std {std}");
    }

    #[test]
    fn background_support_is_preserved() {
        let input = vol(vec![0.0, 1.0, 0.0, 2.0, 3.0, 0.0]);
        let out = zscore_normalize(&input).unwrap();
        for (i, &v) in input.data().iter().enumerate() {
            if v == 0.0 {
                assert_eq!(out.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn rank_order_preserved() {
        let data = vec![5.0, -2.0, 9.0, 0.5, 3.25, 7.0, -8.0, 1.0];
        let out = zscore_normalize(&vol(data.clone())).unwrap();
        let mut idx: Vec<usize> = (0..data.len()).collect();
        let mut idx_out = idx.clone();
        idx.sort_by(|&a, &b| data[a].partial_cmp(&data[b]).unwrap());
        idx_out.sort_by(|&a, &b| out.data()[a].partial_cmp(&out.data()[b]).unwrap());
        assert_eq!(idx, idx_out);
    }

    #[test]
    fn idempotent_up_to_tolerance() {
        let mut src = NormalSource::new(11);
        let data: Vec<f32> = (0..500)
            .map(|_| (1.0 + 0.25 * src.next_normal()) as f32)
            .collect();
        let once = zscore_normalize(&vol(data)).unwrap();
        assert!(once.data().iter().all(|&v| v != 0.0));
        let twice = zscore_normalize(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
