//! A linear softmax voxel classifier trained with the class-weighted
//! focal loss, in 4-class and 7-class (edge target) modes.
//!
//! The model is deliberately tiny — C x 9 weights plus C biases over
//! hand-built intensity features — so the target construction and loss
//! are exercised end to end with gradients that can be checked against
//! finite differences. Training is plain mini-batch gradient descent from
//! zero-initialized parameters; batches are drawn by a seeded SplitMix64
//! stream and all reductions run in a fixed order, so a (cases, config)
//! pair reproduces the model bit-for-bit.

mod export;
mod features;

pub use export::{export_activation_slice, export_edge_overlay};
pub use features::{extract_features, FeatureStats, FeatureVolume, FEATURE_COUNT};

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::focal::{grad_logits_accumulate, softmax_into, voxel_loss, ClassWeights};
use crate::fsutil::write_atomic;
use crate::rng::SplitMix64;
use crate::targets::{OneHotStack, ProbStack};

/// Linear softmax classifier with the feature standardization baked in.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    classes: usize,
    /// C x F, class-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    stats: FeatureStats,
}

impl ToyModel {
    pub fn zeros(classes: usize, stats: FeatureStats) -> Result<Self> {
        if classes != 4 && classes != 7 {
            return Err(Error::usage(format!(
                "class count {classes} not in {{4, 7}}"
            )));
        }
        Ok(ToyModel {
            classes,
            weights: vec![0.0; classes * FEATURE_COUNT],
            bias: vec![0.0; classes],
            stats,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_count(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    /// Logits of one standardized feature row.
    #[inline]
    fn logits_into(&self, row: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.classes) {
            let w = &self.weights[c * FEATURE_COUNT..(c + 1) * FEATURE_COUNT];
            let mut z = self.bias[c];
            for (wf, xf) in w.iter().zip(row) {
                z += wf * xf;
            }
            *o = z;
        }
    }

    /// Plain-text persistence: line 1 `C F`; then C lines of F weights
    /// followed by the bias; then F lines of `mean std`. Values are
    /// 17-significant-digit decimals, which round-trip f64 exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("{} {}\n", self.classes, FEATURE_COUNT);
        for c in 0..self.classes {
            let mut fields: Vec<String> = self.weights[c * FEATURE_COUNT..(c + 1) * FEATURE_COUNT]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            fields.push(format!("{:.16e}", self.bias[c]));
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        for f in 0..FEATURE_COUNT {
            out.push_str(&format!(
                "{:.16e} {:.16e}\n",
                self.stats.mean[f], self.stats.std[f]
            ));
        }
        write_atomic(path.as_ref(), out.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut lines = text.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::format("empty model file"))?;
        let mut parts = head.split_whitespace();
        let parse_usize = |s: Option<&str>, what: &str| -> Result<usize> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(format!("bad model {what}")))
        };
        let classes = parse_usize(parts.next(), "class count")?;
        let f = parse_usize(parts.next(), "feature count")?;
        if f != FEATURE_COUNT {
            return Err(Error::format(format!(
                "model has {f} features, expected {FEATURE_COUNT}"
            )));
        }
        if classes != 4 && classes != 7 {
            return Err(Error::format(format!(
                "model class count {classes} not in {{4, 7}}"
            )));
        }
        let parse_row = |line: Option<&str>, count: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| Error::format("model file truncated"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(format!("bad model value: {e}")))?;
            if vals.len() != count || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!(
                    "expected {count} finite values per model line, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let mut weights = Vec::with_capacity(classes * FEATURE_COUNT);
        let mut bias = Vec::with_capacity(classes);
        for _ in 0..classes {
            let row = parse_row(lines.next(), FEATURE_COUNT + 1)?;
            weights.extend_from_slice(&row[..FEATURE_COUNT]);
            bias.push(row[FEATURE_COUNT]);
        }
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [0.0; FEATURE_COUNT];
        for f in 0..FEATURE_COUNT {
            let row = parse_row(lines.next(), 2)?;
            mean[f] = row[0];
            std[f] = row[1];
        }
        Ok(ToyModel {
            classes,
            weights,
            bias,
            stats: FeatureStats { mean, std },
        })
    }
}

/// Gradient-descent schedule. Defaults mirror the usual training recipe
/// at toy scale: learning rate 0.01, 50 epochs, 4096-voxel batches.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: ClassWeights,
}

impl TrainConfig {
    pub fn defaults(channels: usize) -> Result<Self> {
        Ok(TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 4096,
            seed: 0,
            weights: ClassWeights::defaults_for(channels)?,
        })
    }
}

pub struct TrainResult {
    pub model: ToyModel,
    /// Full-training-set loss after each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Standardized features plus hot-class indices, all cases concatenated.
struct TrainData {
    features: Vec<f64>,
    hot: Vec<u8>,
    total: usize,
    classes: usize,
}

const PAR_CHUNK: usize = 512;

impl TrainData {
    fn build(cases: &[(FeatureVolume, OneHotStack)], stats: &FeatureStats) -> Result<Self> {
        let classes = cases[0].1.channels();
        let mut total = 0usize;
        for (fv, stack) in cases {
            if fv.dims() != stack.dims() {
                return Err(Error::usage(format!(
                    "feature dims {:?} do not match target dims {:?}",
                    fv.dims(),
                    stack.dims()
                )));
            }
            if stack.channels() != classes {
                return Err(Error::usage("cases mix 4-class and 7-class targets"));
            }
            total += fv.voxels();
        }
        let mut features = Vec::with_capacity(total * FEATURE_COUNT);
        let mut hot = Vec::with_capacity(total);
        for (fv, stack) in cases {
            for voxel in 0..fv.voxels() {
                for (f, v) in fv.row(voxel).iter().enumerate() {
                    features.push(stats.standardize(f, *v));
                }
                hot.push(stack.hot(voxel) as u8);
            }
        }
        Ok(TrainData {
            features,
            hot,
            total,
            classes,
        })
    }

    #[inline]
    fn row(&self, voxel: usize) -> &[f64] {
        &self.features[voxel * FEATURE_COUNT..(voxel + 1) * FEATURE_COUNT]
    }

    #[inline]
    fn target_row(&self, voxel: usize, buf: &mut [u8]) {
        buf.fill(0);
        buf[self.hot[voxel] as usize] = 1;
    }
}

/// Mean focal loss of the model over the whole training set. Parallel
/// over fixed chunks, partials reduced in chunk order.
fn full_loss(model: &ToyModel, data: &TrainData, w: &ClassWeights) -> f64 {
    let classes = data.classes;
    let nchunks = data.total.div_ceil(PAR_CHUNK);
    let chunk_sums: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * PAR_CHUNK;
            let end = (start + PAR_CHUNK).min(data.total);
            let mut logits = vec![0.0f64; classes];
            let mut probs = vec![0.0f64; classes];
            let mut target = vec![0u8; classes];
            let mut sum = 0.0f64;
            for voxel in start..end {
                model.logits_into(data.row(voxel), &mut logits);
                softmax_into(&logits, &mut probs);
                data.target_row(voxel, &mut target);
                sum += voxel_loss(&target, &probs, w);
            }
            sum
        })
        .collect();
    chunk_sums.iter().sum::<f64>() / data.total as f64
}

/// Gradient of the mean batch loss wrt (weights, bias), flattened as
/// C*(F+1) with the bias in the last column. Parallel over fixed chunks.
fn batch_gradient(
    model: &ToyModel,
    data: &TrainData,
    batch: &[usize],
    w: &ClassWeights,
) -> Vec<f64> {
    let classes = data.classes;
    let cols = FEATURE_COUNT + 1;
    let partials: Vec<Vec<f64>> = batch
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0f64; classes * cols];
            let mut logits = vec![0.0f64; classes];
            let mut probs = vec![0.0f64; classes];
            let mut target = vec![0u8; classes];
            let mut gz = vec![0.0f64; classes];
            for &voxel in chunk {
                let row = data.row(voxel);
                model.logits_into(row, &mut logits);
                softmax_into(&logits, &mut probs);
                data.target_row(voxel, &mut target);
                gz.fill(0.0);
                grad_logits_accumulate(&target, &probs, w, 1.0, &mut gz);
                for c in 0..classes {
                    let g = gz[c];
                    if g == 0.0 {
                        continue;
                    }
                    let out = &mut grad[c * cols..(c + 1) * cols];
                    for (o, x) in out[..FEATURE_COUNT].iter_mut().zip(row) {
                        *o += g * x;
                    }
                    out[FEATURE_COUNT] += g;
                }
            }
            grad
        })
        .collect();

    let mut grad = vec![0.0f64; classes * cols];
    for partial in partials {
        for (g, p) in grad.iter_mut().zip(&partial) {
            *g += p;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    grad
}

/// Mini-batch gradient descent on the focal loss. Deterministic in
/// (cases, cfg); epochs=0 returns the zero-initialized model.
pub fn train(cases: &[(FeatureVolume, OneHotStack)], cfg: &TrainConfig) -> Result<TrainResult> {
    if cases.is_empty() {
        return Err(Error::usage("no training cases"));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::usage("learning_rate must be positive"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::usage("batch_size must be at least 1"));
    }
    let classes = cases[0].1.channels();
    if cfg.weights.channels() != classes {
        return Err(Error::usage(format!(
            "class weights have {} channels, targets have {classes}",
            cfg.weights.channels()
        )));
    }
    let stats = FeatureStats::fit(cases.iter().map(|(fv, _)| fv))?;
    let data = TrainData::build(cases, &stats)?;
    let mut model = ToyModel::zeros(classes, stats)?;

    let mut rng = SplitMix64::new(cfg.seed);
    let steps_per_epoch = data.total.div_ceil(cfg.batch_size);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let cols = FEATURE_COUNT + 1;

    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let batch: Vec<usize> = (0..cfg.batch_size)
                .map(|_| rng.next_index(data.total))
                .collect();
            let grad = batch_gradient(&model, &data, &batch, &cfg.weights);
            for c in 0..classes {
                let g = &grad[c * cols..(c + 1) * cols];
                let wrow = &mut model.weights[c * FEATURE_COUNT..(c + 1) * FEATURE_COUNT];
                for (wf, gf) in wrow.iter_mut().zip(&g[..FEATURE_COUNT]) {
                    *wf -= cfg.learning_rate * gf;
                }
                model.bias[c] -= cfg.learning_rate * g[FEATURE_COUNT];
            }
        }
        epoch_loss.push(full_loss(&model, &data, &cfg.weights));
    }

    Ok(TrainResult { model, epoch_loss })
}

/// Per-voxel softmax probabilities; raw features are standardized with
/// the model's stored statistics.
pub fn predict(model: &ToyModel, features: &FeatureVolume) -> Result<ProbStack> {
    if features.features() != FEATURE_COUNT {
        return Err(Error::usage("feature count mismatch"));
    }
    let classes = model.classes;
    let n = features.voxels();
    let mut data = vec![0.0f64; n * classes];
    let mut logits = vec![0.0f64; classes];
    let mut std_row = vec![0.0f64; FEATURE_COUNT];
    for voxel in 0..n {
        for (f, v) in features.row(voxel).iter().enumerate() {
            std_row[f] = model.stats.standardize(f, *v);
        }
        model.logits_into(&std_row, &mut logits);
        softmax_into(&logits, &mut data[voxel * classes..(voxel + 1) * classes]);
    }
    ProbStack::new(features.dims(), features.spacing(), classes, data)
}
