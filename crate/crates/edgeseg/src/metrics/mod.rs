//! Dice, 95th-percentile Hausdorff distance, and per-patient evaluation
//! with the BraTS penalty convention.
//!
//! Regions are the three evaluated composites: whole tumor WT = {1,2,4},
//! tumor core TC = {1,4}, enhancing tumor ET = {4}. When the ground truth
//! and prediction of a region are both empty the record is (dice 1, hd95 0);
//! when exactly one is empty the record takes the maximum penalty
//! (dice 0, hd95 373.12866) and is flagged penalized.
//!
//! HD95 point sets are mask voxel centers in mm. The production
//! nearest-neighbor path runs an exact Euclidean distance transform per
//! direction; [`directed_distances`] is the all-pairs route kept as the
//! small-set oracle.

mod edt;

pub use edt::squared_edt;

use crate::error::{Error, Result};
use crate::volgrid::LabelVolume;

/// Maximum HD95 penalty assigned when exactly one of gt/pred is empty.
pub const HD95_PENALTY: f64 = 373.12866;

/// The three evaluated tumor composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Wt,
    Tc,
    Et,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Wt, Region::Tc, Region::Et];

    pub fn name(self) -> &'static str {
        match self {
            Region::Wt => "WT",
            Region::Tc => "TC",
            Region::Et => "ET",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "WT" => Ok(Region::Wt),
            "TC" => Ok(Region::Tc),
            "ET" => Ok(Region::Et),
            _ => Err(Error::usage(format!("unknown region {s:?}"))),
        }
    }

    fn contains(self, label: u8) -> bool {
        match self {
            Region::Wt => label == 1 || label == 2 || label == 4,
            Region::Tc => label == 1 || label == 4,
            Region::Et => label == 4,
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Boolean mask of one region of one label volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    region: Region,
    dims: [usize; 3],
    data: Vec<bool>,
}

impl RegionMask {
    pub fn region(&self) -> Region {
        self.region
    }

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

/// WT, TC and ET masks of a label volume, in that order.
pub fn region_masks(labels: &LabelVolume) -> [RegionMask; 3] {
    Region::ALL.map(|region| RegionMask {
        region,
        dims: labels.dims(),
        data: labels.data().iter().map(|&v| region.contains(v)).collect(),
    })
}

/// Dice overlap 2*TP / ((TP+FP) + (TP+FN)). Errors when both masks are
/// empty; the caller applies the both-empty convention.
pub fn dice(pred: &RegionMask, gt: &RegionMask) -> Result<f64> {
    if pred.dims != gt.dims {
        return Err(Error::usage(format!(
            "pred dims {:?} do not match gt dims {:?}",
            pred.dims, gt.dims
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return Err(Error::domain(
            "dice undefined for two empty masks; apply the both-empty convention",
        ));
    }
    Ok(2.0 * tp as f64 / ((tp + fp) as f64 + (tp + fn_) as f64))
}

/// A point is an integer voxel coordinate; distances scale each axis by
/// the mm spacing. Signed so shifted sets can be compared in tests.
pub type Point = [i64; 3];

fn point_distance(a: Point, b: Point, spacing: [f64; 3]) -> f64 {
    let dx = (a[0] - b[0]) as f64 * spacing[0];
    let dy = (a[1] - b[1]) as f64 * spacing[1];
    let dz = (a[2] - b[2]) as f64 * spacing[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn dedupe(points: &[Point]) -> Vec<Point> {
    let mut out = points.to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

/// All-pairs directed nearest-neighbor distances from each x in X to Y,
/// sorted ascending. O(|X|*|Y|); this is the oracle route, exact but only
/// fit for small sets. Inputs are treated as sets (duplicates ignored).
pub fn directed_distances(xs: &[Point], ys: &[Point], spacing: [f64; 3]) -> Result<Vec<f64>> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::domain("directed distances need nonempty point sets"));
    }
    let xs = dedupe(xs);
    let ys = dedupe(ys);
    let mut out: Vec<f64> = xs
        .iter()
        .map(|&x| {
            ys.iter()
                .map(|&y| point_distance(x, y, spacing))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(out)
}

/// Linear interpolation at fractional index p*(N-1) of an ascending list.
pub fn percentile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::domain("percentile of an empty list"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::usage(format!(
            "percentile fraction {p} outside [0, 1]"
        )));
    }
    let idx = p * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = idx - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Grids beyond this voxel count fall back to the all-pairs route rather
/// than allocating a huge distance field.
const EDT_GRID_LIMIT: usize = 1 << 28;

/// HD95 between point sets: max over both directions of the 95th
/// percentile of directed nearest-neighbor distances. Production path:
/// the sets are rasterized into their bounding grid and each direction
/// runs one exact distance transform.
pub fn hd95(xs: &[Point], ys: &[Point], spacing: [f64; 3]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::domain("hd95 needs nonempty point sets"));
    }
    let xs = dedupe(xs);
    let ys = dedupe(ys);

    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in xs.iter().chain(&ys) {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extents: Vec<usize> = (0..3).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let dims = [extents[0], extents[1], extents[2]];
    let voxels = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]));

    match voxels {
        Some(n) if n <= EDT_GRID_LIMIT => {
            let to_grid = |p: &Point| {
                [
                    (p[0] - lo[0]) as usize,
                    (p[1] - lo[1]) as usize,
                    (p[2] - lo[2]) as usize,
                ]
            };
            let mut mask_x = vec![false; n];
            for p in &xs {
                let g = to_grid(p);
                mask_x[crate::volgrid::flat_index(dims, g[0], g[1], g[2])] = true;
            }
            let mut mask_y = vec![false; n];
            for p in &ys {
                let g = to_grid(p);
                mask_y[crate::volgrid::flat_index(dims, g[0], g[1], g[2])] = true;
            }
            hd95_masks(&mask_x, &mask_y, dims, spacing)
        }
        _ => {
            // Sparse sets spread over an enormous bounding box.
            let fwd = percentile(&directed_distances(&xs, &ys, spacing)?, 0.95)?;
            let bwd = percentile(&directed_distances(&ys, &xs, spacing)?, 0.95)?;
            Ok(fwd.max(bwd))
        }
    }
}

/// Sorted directed distances from mask `from` to mask `to` via one EDT.
fn directed_distances_masks(
    from: &[bool],
    to: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Vec<f64> {
    let d2 = squared_edt(to, dims, spacing);
    let mut out: Vec<f64> = from
        .iter()
        .zip(&d2)
        .filter(|(&m, _)| m)
        .map(|(_, &d)| d.sqrt())
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    out
}

/// HD95 between two nonempty dense masks on a shared grid.
pub fn hd95_masks(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<f64> {
    if !a.iter().any(|&m| m) || !b.iter().any(|&m| m) {
        return Err(Error::domain("hd95 needs nonempty masks"));
    }
    let fwd = percentile(&directed_distances_masks(a, b, dims, spacing), 0.95)?;
    let bwd = percentile(&directed_distances_masks(b, a, dims, spacing), 0.95)?;
    Ok(fwd.max(bwd))
}

/// One evaluation row: (subject, region, dice, hd95, penalty flag).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub subject: String,
    pub region: Region,
    pub dice: f64,
    pub hd95: f64,
    pub penalized: bool,
}

/// Evaluate one patient: three records in WT, TC, ET order.
pub fn evaluate_patient(
    pred: &LabelVolume,
    gt: &LabelVolume,
    subject: &str,
) -> Result<[MetricsRecord; 3]> {
    if pred.dims() != gt.dims() {
        return Err(Error::usage(format!(
            "pred dims {:?} do not match gt dims {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if pred.spacing() != gt.spacing() {
        return Err(Error::usage(format!(
            "pred spacing {:?} does not match gt spacing {:?}",
            pred.spacing(),
            gt.spacing()
        )));
    }
    let spacing = gt.spacing().map(|s| s as f64);
    let pred_masks = region_masks(pred);
    let gt_masks = region_masks(gt);

    let mut records = Vec::with_capacity(3);
    for (pm, gm) in pred_masks.iter().zip(&gt_masks) {
        let record = match (pm.count(), gm.count()) {
            (0, 0) => MetricsRecord {
                subject: subject.to_string(),
                region: pm.region(),
                dice: 1.0,
                hd95: 0.0,
                penalized: false,
            },
            (0, _) | (_, 0) => MetricsRecord {
                subject: subject.to_string(),
                region: pm.region(),
                dice: 0.0,
                hd95: HD95_PENALTY,
                penalized: true,
            },
            _ => MetricsRecord {
                subject: subject.to_string(),
                region: pm.region(),
                dice: dice(pm, gm)?,
                hd95: hd95_masks(pm.data(), gm.data(), gt.dims(), spacing)?,
                penalized: false,
            },
        };
        records.push(record);
    }
    Ok(records.try_into().expect("three regions"))
}
