//! One-hot target stacks and prediction decoding.
//!
//! Channels form a per-voxel partition (exactly one channel hot), as a
//! SoftMax output layer requires. Fixed channel orders:
//!
//! - C=4: `[background, NCR/NET, ED, ET]`
//! - C=7: `[background, NCR/NET-edge, ED-edge, ET-edge,
//!          NCR/NET-interior, ED-interior, ET-interior]`
//!
//! In the 7-channel stack edge channels take precedence: a labeled voxel
//! that is also an edge voxel populates its edge channel only.

use crate::edgex::EdgeVolume;
use crate::error::{Error, Result};
use crate::volgrid::{read_stack_raw, write_stack_raw, LabelVolume};
use std::path::Path;

pub const CHANNEL_NAMES_4: [&str; 4] = ["background", "ncr_net", "ed", "et"];
pub const CHANNEL_NAMES_7: [&str; 7] = [
    "background",
    "ncr_net_edge",
    "ed_edge",
    "et_edge",
    "ncr_net_interior",
    "ed_interior",
    "et_interior",
];

/// Class-index -> BraTS label, 4-class order.
const FUSE_MAP_4: [u8; 4] = [0, 1, 2, 4];
/// Class-index -> BraTS label, 7-class order (edge and interior classes
/// both fuse to their region's label).
const FUSE_MAP_7: [u8; 7] = [0, 1, 2, 4, 1, 2, 4];

fn label_to_region_slot(label: u8) -> usize {
    match label {
        1 => 0,
        2 => 1,
        4 => 2,
        _ => unreachable!("validated alphabet"),
    }
}

/// C-channel one-hot partition of a volume, channel-fastest per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotStack {
    dims: [usize; 3],
    spacing: [f32; 3],
    channels: usize,
    data: Vec<u8>,
}

impl OneHotStack {
    /// Validates C in {4, 7} and the exactly-one-hot partition invariant.
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self> {
        if channels != 4 && channels != 7 {
            return Err(Error::usage(format!(
                "channel count {channels} not in {{4, 7}}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n * channels {
            return Err(Error::usage(format!(
                "stack length {} does not match dims {dims:?} x {channels}",
                data.len()
            )));
        }
        for voxel in 0..n {
            let row = &data[voxel * channels..(voxel + 1) * channels];
            let hot = row.iter().filter(|&&v| v == 1).count();
            if hot != 1 || row.iter().any(|&v| v > 1) {
                return Err(Error::format(format!(
                    "voxel {voxel} violates the one-hot partition: {row:?}"
                )));
            }
        }
        Ok(OneHotStack {
            dims,
            spacing,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_names(&self) -> &'static [&'static str] {
        if self.channels == 4 {
            &CHANNEL_NAMES_4
        } else {
            &CHANNEL_NAMES_7
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn voxels(&self) -> usize {
        self.data.len() / self.channels
    }

    /// One-hot row of one voxel.
    #[inline]
    pub fn row(&self, voxel: usize) -> &[u8] {
        &self.data[voxel * self.channels..(voxel + 1) * self.channels]
    }

    /// Hot channel index of one voxel.
    #[inline]
    pub fn hot(&self, voxel: usize) -> usize {
        self.row(voxel)
            .iter()
            .position(|&v| v == 1)
            .expect("partition invariant")
    }

    /// Serialize as 4D uint8 NIfTI (dim[4] = C).
    pub fn write_nifti(&self, path: impl AsRef<Path>) -> Result<()> {
        write_stack_raw(self.dims, self.spacing, self.channels, &self.data, path)
    }

    pub fn read_nifti(path: impl AsRef<Path>) -> Result<Self> {
        let (dims, spacing, channels, data) = read_stack_raw(path)?;
        OneHotStack::new(dims, spacing, channels, data)
    }
}

/// 4-channel region one-hot: label map {0->0, 1->1, 2->2, 4->3}.
pub fn onehot_regions(labels: &LabelVolume) -> OneHotStack {
    let n = labels.len();
    let mut data = vec![0u8; n * 4];
    for (voxel, &label) in labels.data().iter().enumerate() {
        let channel = match label {
            0 => 0,
            1 => 1,
            2 => 2,
            4 => 3,
            _ => unreachable!("validated alphabet"),
        };
        data[voxel * 4 + channel] = 1;
    }
    OneHotStack {
        dims: labels.dims(),
        spacing: labels.spacing(),
        channels: 4,
        data,
    }
}

/// 7-channel edge+interior one-hot. Edge voxels populate their edge
/// channel, labeled non-edge voxels their interior channel, background
/// channel 0. The edge volume must be consistent with the labels (every
/// nonzero edge voxel carries the source label).
pub fn onehot_regions_edges(labels: &LabelVolume, edges: &EdgeVolume) -> Result<OneHotStack> {
    if labels.dims() != edges.dims() {
        return Err(Error::usage(format!(
            "label dims {:?} do not match edge dims {:?}",
            labels.dims(),
            edges.dims()
        )));
    }
    let n = labels.len();
    let mut data = vec![0u8; n * 7];
    for voxel in 0..n {
        let label = labels.data()[voxel];
        let edge = edges.data()[voxel];
        if edge != 0 && edge != label {
            return Err(Error::usage(format!(
                "edge volume inconsistent with labels at voxel {voxel}: edge {edge}, label {label}"
            )));
        }
        let channel = if label == 0 {
            0
        } else if edge != 0 {
            1 + label_to_region_slot(label)
        } else {
            4 + label_to_region_slot(label)
        };
        data[voxel * 7 + channel] = 1;
    }
    Ok(OneHotStack {
        dims: labels.dims(),
        spacing: labels.spacing(),
        channels: 7,
        data,
    })
}

/// Per-voxel class probabilities (or logits), channel-fastest, f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbStack {
    dims: [usize; 3],
    spacing: [f32; 3],
    channels: usize,
    data: Vec<f64>,
}

impl ProbStack {
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if channels == 0 || data.len() != n * channels {
            return Err(Error::usage(format!(
                "stack length {} does not match dims {dims:?} x {channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                "probability stack contains non-finite values",
            ));
        }
        Ok(ProbStack {
            dims,
            spacing,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn voxels(&self) -> usize {
        self.data.len() / self.channels
    }

    #[inline]
    pub fn row(&self, voxel: usize) -> &[f64] {
        &self.data[voxel * self.channels..(voxel + 1) * self.channels]
    }
}

/// Per-voxel class indices decoded from a probability stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVolume {
    dims: [usize; 3],
    spacing: [f32; 3],
    channels: usize,
    data: Vec<u8>,
}

impl ClassVolume {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Per-voxel argmax; ties break to the lowest channel index.
pub fn argmax_labels(stack: &ProbStack) -> ClassVolume {
    let channels = stack.channels();
    let data = (0..stack.voxels())
        .map(|voxel| {
            let row = stack.row(voxel);
            let mut best = 0usize;
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    ClassVolume {
        dims: stack.dims(),
        spacing: stack.spacing(),
        channels,
        data,
    }
}

/// Edge map of a 7-class prediction: voxels whose class is one of the
/// three edge classes carry their region's label, everything else 0.
pub fn predicted_edges(classes: &ClassVolume) -> Result<EdgeVolume> {
    if classes.channels != 7 {
        return Err(Error::usage(format!(
            "predicted edges need 7-class indices, got {}",
            classes.channels
        )));
    }
    let data = classes
        .data
        .iter()
        .map(|&c| match c {
            1..=3 => FUSE_MAP_7[c as usize],
            _ => 0,
        })
        .collect();
    EdgeVolume::new(classes.dims, classes.spacing, data)
}

/// Map class indices back to BraTS labels. For C=7, edge and interior
/// classes of a region both fuse to the region's label; for C=4 the map is
/// the inverse of [`onehot_regions`].
pub fn fuse_prediction(classes: &ClassVolume) -> Result<LabelVolume> {
    let map: &[u8] = match classes.channels {
        4 => &FUSE_MAP_4,
        7 => &FUSE_MAP_7,
        c => {
            return Err(Error::usage(format!(
                "cannot fuse predictions with {c} classes"
            )))
        }
    };
    let mut data = Vec::with_capacity(classes.data.len());
    for &c in &classes.data {
        let c = c as usize;
        if c >= map.len() {
            return Err(Error::usage(format!(
                "class index {c} out of range for {} classes",
                map.len()
            )));
        }
        data.push(map[c]);
    }
    LabelVolume::new(classes.dims, classes.spacing, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edgex::extract_edges;
    use crate::rng::SplitMix64;
    use crate::volgrid::LABEL_ALPHABET;

    fn random_labels(dims: [usize; 3], seed: u64) -> LabelVolume {
        let mut rng = SplitMix64::new(seed);
        let n = dims[0] * dims[1] * dims[2];
        let data = (0..n).map(|_| LABEL_ALPHABET[rng.next_index(4)]).collect();
        LabelVolume::new(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn region_onehot_rows() {
        let l = LabelVolume::new([4, 1, 1], [1.0; 3], vec![0, 1, 2, 4]).unwrap();
        let s = onehot_regions(&l);
        assert_eq!(s.row(0), &[1, 0, 0, 0]);
        assert_eq!(s.row(1), &[0, 1, 0, 0]);
        assert_eq!(s.row(2), &[0, 0, 1, 0]);
        assert_eq!(s.row(3), &[0, 0, 0, 1]);
    }

    #[test]
    fn partition_holds_on_random_volume() {
        let l = random_labels([6, 5, 4], 3);
        let s = onehot_regions(&l);
        for voxel in 0..s.voxels() {
            assert_eq!(s.row(voxel).iter().map(|&v| v as u32).sum::<u32>(), 1);
        }
        // Channel counts conserve voxel counts.
        let total: u32 = s.data().iter().map(|&v| v as u32).sum();
        assert_eq!(total, 120);
    }

    #[test]
    fn edge_channel_takes_precedence() {
        let mut data = vec![0u8; 27];
        data[13] = 4;
        let l = LabelVolume::new([3, 3, 3], [1.0; 3], data).unwrap();
        let e = extract_edges(&l);
        let s = onehot_regions_edges(&l, &e).unwrap();
        // The single labeled voxel is an edge: ET-edge hot, ET-interior cold.
        assert_eq!(s.row(13), &[0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn interior_voxel_populates_interior_channel() {
        let dims = [5, 5, 5];
        let mut data = vec![0u8; 125];
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    data[crate::volgrid::flat_index(dims, x, y, z)] = 2;
                }
            }
        }
        let l = LabelVolume::new(dims, [1.0; 3], data).unwrap();
        let e = extract_edges(&l);
        let s = onehot_regions_edges(&l, &e).unwrap();
        let center = crate::volgrid::flat_index(dims, 2, 2, 2);
        assert_eq!(s.row(center), &[0, 0, 0, 0, 0, 1, 0]); // ED interior
    }

    #[test]
    fn inconsistent_edges_rejected() {
        let l = LabelVolume::new([2, 1, 1], [1.0; 3], vec![1, 0]).unwrap();
        let e = EdgeVolume::new([2, 1, 1], [1.0; 3], vec![2, 0]).unwrap();
        assert!(matches!(onehot_regions_edges(&l, &e), Err(Error::Usage(_))));
    }

    #[test]
    fn argmax_picks_max_and_breaks_ties_low() {
        let s = ProbStack::new(
            [2, 1, 1],
            [1.0; 3],
            4,
            vec![
                0.1, 0.7, 0.1, 0.1, // class 1
                0.5, 0.5, 0.0, 0.0, // tie -> class 0
            ],
        )
        .unwrap();
        assert_eq!(argmax_labels(&s).data(), &[1, 0]);
    }

    #[test]
    fn onehot_round_trips_through_argmax() {
        let l = random_labels([4, 4, 4], 17);
        let s = onehot_regions(&l);
        let probs = ProbStack::new(
            s.dims(),
            s.spacing(),
            4,
            s.data().iter().map(|&v| v as f64).collect(),
        )
        .unwrap();
        let classes = argmax_labels(&probs);
        let fused = fuse_prediction(&classes).unwrap();
        assert_eq!(fused.data(), l.data());
    }

    #[test]
    fn fuse_map_entries() {
        let c = ClassVolume {
            dims: [7, 1, 1],
            spacing: [1.0; 3],
            channels: 7,
            data: vec![0, 1, 2, 3, 4, 5, 6],
        };
        let fused = fuse_prediction(&c).unwrap();
        assert_eq!(fused.data(), &[0, 1, 2, 4, 1, 2, 4]);
    }

    #[test]
    fn seven_class_round_trip_identity() {
        for seed in 0..10u64 {
            let l = random_labels([6, 6, 6], 100 + seed);
            let e = extract_edges(&l);
            let s = onehot_regions_edges(&l, &e).unwrap();
            let probs = ProbStack::new(
                s.dims(),
                s.spacing(),
                7,
                s.data().iter().map(|&v| v as f64).collect(),
            )
            .unwrap();
            let fused = fuse_prediction(&argmax_labels(&probs)).unwrap();
            assert_eq!(fused.data(), l.data(), "seed {seed}");
        }
    }

    #[test]
    fn stack_nifti_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("onehot.nii");
        let l = random_labels([3, 4, 2], 9);
        let e = extract_edges(&l);
        let s = onehot_regions_edges(&l, &e).unwrap();
        s.write_nifti(&path).unwrap();
        let back = OneHotStack::read_nifti(&path).unwrap();
        assert_eq!(back, s);
    }
}
