//! Edge-aware brain tumor segmentation toolkit.
//!
//! The pipeline this crate implements: z-score normalization of each
//! modality over its brain region, ground-truth edge extraction with a
//! 26/-1 convolution filter, one-hot region and edge+region target
//! stacks, a class-weighted focal loss with analytic gradients, Dice and
//! HD95 evaluation with the BraTS penalty convention, mean/median summary
//! tables, deterministic synthetic phantoms, and a small trainable voxel
//! classifier that exercises the edge-target mechanism end to end.

pub mod edgex;
pub mod error;
pub mod focal;
pub mod fsutil;
pub mod metrics;
pub mod normalize;
pub mod phantom;
pub mod report;
pub mod rng;
pub mod targets;
pub mod toytrain;
pub mod volgrid;

pub use error::{Error, Result};
