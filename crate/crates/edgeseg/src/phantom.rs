//! Deterministic synthetic multi-modal phantoms with nested tumor regions.
//!
//! Each case is a spherical "brain" of nonzero intensity inside an
//! exactly-zero background, carrying three nested tumor ellipsoids:
//! outer shell = edema (label 2), middle shell = NCR/NET (label 1),
//! inner core = enhancing tumor (label 4). Pseudo-modalities follow the
//! usual MR contrast: edema brightest in pseudo-FLAIR, enhancing tumor in
//! pseudo-T1CE, NCR/NET in pseudo-T2. Intensities are base level plus
//! Gaussian noise from a SplitMix64 stream through Box-Muller, drawn in a
//! fixed order (modalities flair, t1ce, t2; voxels in flat index order;
//! in-brain voxels only), so a (seed, spec) pair reproduces bit-for-bit.
//!
//! "Empty ET" cases keep the inner core geometrically and keep its
//! enhancing intensity profile, but annotate it as NCR/NET — the ground
//! truth then has no label 4 while the images still look enhancing, which
//! is what triggers the maximum evaluation penalty on such patients.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::{NormalSource, SplitMix64};
use crate::volgrid::{write_labels, write_volume, LabelVolume, Volume};

/// Base intensity per tissue, columns [pseudo-FLAIR, pseudo-T1CE, pseudo-T2].
pub const HEALTHY_LEVELS: [f64; 3] = [0.3, 0.3, 0.3];
pub const NCR_NET_LEVELS: [f64; 3] = [0.5, 0.5, 1.0];
pub const ED_LEVELS: [f64; 3] = [1.0, 0.4, 0.6];
pub const ET_LEVELS: [f64; 3] = [0.6, 1.0, 0.5];

pub const MODALITY_NAMES: [&str; 3] = ["flair", "t1ce", "t2"];
pub const LABEL_FILE: &str = "seg.nii";

/// Axis-aligned ellipsoid in voxel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let mut q = 0.0;
        for ((p, c), s) in p.iter().zip(&self.center).zip(&self.semi_axes) {
            let d = (p - c) / s;
            q += d * d;
        }
        q <= 1.0
    }
}

/// Brain ball plus the three nested tumor ellipsoids.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGeometry {
    pub brain_center: [f64; 3],
    pub brain_radius: f64,
    /// Enhancing-tumor core.
    pub inner: Ellipsoid,
    /// NCR/NET extent (shell between inner and middle).
    pub middle: Ellipsoid,
    /// Whole-tumor extent (shell between middle and outer is edema).
    pub outer: Ellipsoid,
}

/// Required per-axis margin between nested ellipsoid surfaces, voxels.
const NEST_MARGIN: f64 = 2.0;

impl PhantomGeometry {
    /// Per-axis sufficient conditions: each ellipsoid nests inside the
    /// next with at least a 2-voxel margin, and the outer one fits in the
    /// brain ball.
    fn validate(&self, size: usize) -> Result<()> {
        let nested = |inner: &Ellipsoid, outer: &Ellipsoid, what: &str| -> Result<()> {
            for a in 0..3 {
                let off = (inner.center[a] - outer.center[a]).abs();
                if off + inner.semi_axes[a] + NEST_MARGIN > outer.semi_axes[a] {
                    return Err(Error::usage(format!(
                        "nesting constraint violated: {what} margin on axis {a} below {NEST_MARGIN} voxels"
                    )));
                }
            }
            Ok(())
        };
        if self.inner.semi_axes.iter().any(|&s| s <= 0.0) {
            return Err(Error::usage(
                "nesting constraint violated: empty inner ellipsoid",
            ));
        }
        nested(&self.inner, &self.middle, "inner/middle")?;
        nested(&self.middle, &self.outer, "middle/outer")?;
        for a in 0..3 {
            let off = (self.outer.center[a] - self.brain_center[a]).abs();
            if off + self.outer.semi_axes[a] > self.brain_radius {
                return Err(Error::usage(format!(
                    "nesting constraint violated: outer ellipsoid leaves the brain ball on axis {a}"
                )));
            }
            if self.brain_center[a] + self.brain_radius > size as f64 {
                return Err(Error::usage(
                    "nesting constraint violated: brain ball exceeds the volume",
                ));
            }
        }
        Ok(())
    }
}

/// Full description of one synthetic case.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    /// Cubic edge length, at least 16.
    pub size: usize,
    pub noise_sigma: f64,
    /// Randomized within documented bounds when `None`.
    pub geometry: Option<PhantomGeometry>,
    /// Annotate the enhancing-looking core as NCR/NET so the ground truth
    /// has an empty ET region.
    pub empty_et: bool,
}

impl PhantomSpec {
    pub fn new(seed: u64) -> Self {
        PhantomSpec {
            seed,
            size: 64,
            noise_sigma: 0.05,
            geometry: None,
            empty_et: false,
        }
    }
}

/// One generated case: three pseudo-modalities plus the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub flair: Volume,
    pub t1ce: Volume,
    pub t2: Volume,
    pub labels: LabelVolume,
}

impl PhantomCase {
    pub fn modalities(&self) -> [&Volume; 3] {
        [&self.flair, &self.t1ce, &self.t2]
    }
}

/// Randomized geometry. Draw order is fixed: brain radius factor, core
/// radius factor, two gap factors, three anisotropy factors, three integer
/// center offsets.
fn randomize_geometry(rng: &mut SplitMix64, size: usize) -> PhantomGeometry {
    let s = size as f64;
    let brain_center = [(s - 1.0) / 2.0; 3];
    let brain_radius = s * (0.42 + 0.02 * rng.next_f64());

    let inner_r = (s * 0.055 * rng.next_range(0.85, 1.15)).max(0.5);
    let gap1 = (s * 0.10 * rng.next_range(0.85, 1.15)).max(NEST_MARGIN);
    let gap2 = (s * 0.10 * rng.next_range(0.85, 1.15)).max(NEST_MARGIN);
    let middle_r = inner_r + gap1;
    let outer_r = middle_r + gap2;

    // Shared anisotropy >= 1 keeps every per-axis margin >= the base gap.
    let scale = [
        rng.next_range(1.0, 1.2),
        rng.next_range(1.0, 1.2),
        rng.next_range(1.0, 1.2),
    ];

    // Integer tumor center: guarantees the core contains its center voxel.
    let base: [f64; 3] = brain_center.map(|c| c.round());
    let mut center = [0.0; 3];
    for a in 0..3 {
        let slack = brain_radius - outer_r * scale[a] - (base[a] - brain_center[a]).abs();
        let max_off = (s * 0.08).min(slack.max(0.0)).floor() as i64;
        let off = rng.next_index((2 * max_off + 1) as usize) as i64 - max_off;
        center[a] = base[a] + off as f64;
    }

    let ellipsoid = |r: f64| Ellipsoid {
        center,
        semi_axes: [r * scale[0], r * scale[1], r * scale[2]],
    };
    PhantomGeometry {
        brain_center,
        brain_radius,
        inner: ellipsoid(inner_r),
        middle: ellipsoid(middle_r),
        outer: ellipsoid(outer_r),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tissue {
    Outside,
    Healthy,
    Ed,
    NcrNet,
    EtCore,
}

impl Tissue {
    fn levels(self) -> Option<[f64; 3]> {
        match self {
            Tissue::Outside => None,
            Tissue::Healthy => Some(HEALTHY_LEVELS),
            Tissue::Ed => Some(ED_LEVELS),
            Tissue::NcrNet => Some(NCR_NET_LEVELS),
            Tissue::EtCore => Some(ET_LEVELS),
        }
    }
}

/// Generate one case. Deterministic in (seed, spec).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomCase> {
    if spec.size < 16 {
        return Err(Error::usage(format!(
            "size {} below the minimum of 16",
            spec.size
        )));
    }
    if spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(Error::usage("noise_sigma must be nonnegative"));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let geometry = match &spec.geometry {
        Some(g) => g.clone(),
        None => randomize_geometry(&mut rng, spec.size),
    };
    geometry.validate(spec.size)?;

    let n = spec.size * spec.size * spec.size;
    let dims = [spec.size; 3];
    let brain = Ellipsoid {
        center: geometry.brain_center,
        semi_axes: [geometry.brain_radius; 3],
    };

    let mut tissue = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for z in 0..spec.size {
        for y in 0..spec.size {
            for x in 0..spec.size {
                let p = [x as f64, y as f64, z as f64];
                let t = if geometry.inner.contains(p) {
                    Tissue::EtCore
                } else if geometry.middle.contains(p) {
                    Tissue::NcrNet
                } else if geometry.outer.contains(p) {
                    Tissue::Ed
                } else if brain.contains(p) {
                    Tissue::Healthy
                } else {
                    Tissue::Outside
                };
                labels.push(match t {
                    Tissue::EtCore => {
                        if spec.empty_et {
                            1
                        } else {
                            4
                        }
                    }
                    Tissue::NcrNet => 1,
                    Tissue::Ed => 2,
                    _ => 0,
                });
                tissue.push(t);
            }
        }
    }

    let census = |value: u8| labels.iter().filter(|&&l| l == value).count();
    let et = census(4);
    let tc = et + census(1);
    let wt = tc + census(2);
    let nesting_ok = if spec.empty_et {
        et == 0 && tc >= 1 && wt > tc
    } else {
        et >= 1 && tc > et && wt > tc
    };
    if !nesting_ok {
        return Err(Error::usage(format!(
            "nesting constraint violated: census ET={et} TC={tc} WT={wt}"
        )));
    }

    let mut noise = NormalSource::from_rng(rng);
    let mut volumes = Vec::with_capacity(3);
    for modality in 0..3 {
        let mut data = Vec::with_capacity(n);
        for t in &tissue {
            match t.levels() {
                Some(levels) => {
                    let v = levels[modality] + spec.noise_sigma * noise.next_normal();
                    data.push(v as f32);
                }
                None => data.push(0.0),
            }
        }
        volumes.push(Volume::new(dims, [1.0; 3], data)?);
    }

    let labels = LabelVolume::new(dims, [1.0; 3], labels)?;
    let t2 = volumes.pop().expect("three modalities");
    let t1ce = volumes.pop().expect("three modalities");
    let flair = volumes.pop().expect("three modalities");
    Ok(PhantomCase {
        flair,
        t1ce,
        t2,
        labels,
    })
}

/// Directory name of cohort case `index`.
pub fn case_dir_name(index: usize) -> String {
    format!("phantom_{index:03}")
}

/// Generate `n` cases under `out_dir`, seeds `seed + index`; every 5th
/// case (index % 5 == 0) is an empty-ET case. Layout per case:
/// `flair.nii`, `t1ce.nii`, `t2.nii`, `seg.nii`. Returns the case dirs.
pub fn generate_cohort(
    n: usize,
    seed: u64,
    size: usize,
    noise_sigma: f64,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if n == 0 {
        return Err(Error::usage("cohort size must be at least 1"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut dirs = Vec::with_capacity(n);
    for index in 0..n {
        let spec = PhantomSpec {
            seed: seed.wrapping_add(index as u64),
            size,
            noise_sigma,
            geometry: None,
            empty_et: index % 5 == 0,
        };
        let case = generate_phantom(&spec)?;
        let dir = out_dir.join(case_dir_name(index));
        std::fs::create_dir_all(&dir)?;
        write_volume(&case.flair, dir.join("flair.nii"))?;
        write_volume(&case.t1ce, dir.join("t1ce.nii"))?;
        write_volume(&case.t2, dir.join("t2.nii"))?;
        write_labels(&case.labels, dir.join(LABEL_FILE))?;
        dirs.push(dir);
    }
    Ok(dirs)
}
