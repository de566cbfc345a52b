//! Class-weighted focal loss over one-hot targets and SoftMax probabilities.
//!
//! Per channel c with target y and probability p:
//!
//! ```text
//! L(y, p) = -alpha * y * (1-p)^gamma * ln(p) - (1-y) * p^gamma * ln(1-p)
//! ```
//!
//! alpha is the per-channel weight (0.9 edge channels, 0.8 region channels,
//! 0.2 background), gamma defaults to 2. Probabilities are clamped to
//! [1e-7, 1 - 1e-7] before any logarithm. The total is the mean over voxels
//! of the per-voxel channel sum. All math is f64.

use crate::error::{Error, Result};
use crate::targets::{OneHotStack, ProbStack};

/// Clamp bound for probabilities entering a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Per-channel alpha weights plus the focusing exponent gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    alpha: Vec<f64>,
    gamma: f64,
}

impl ClassWeights {
    pub fn new(alpha: Vec<f64>, gamma: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::usage("alpha weights must lie in (0, 1]"));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::usage("gamma must be nonnegative"));
        }
        Ok(ClassWeights { alpha, gamma })
    }

    /// 4-class defaults: background 0.2, region channels 0.8, gamma 2.
    pub fn defaults_c4() -> Self {
        ClassWeights {
            alpha: vec![0.2, 0.8, 0.8, 0.8],
            gamma: 2.0,
        }
    }

    /// 7-class defaults: background 0.2, edge channels 0.9,
    /// interior channels 0.8, gamma 2.
    pub fn defaults_c7() -> Self {
        ClassWeights {
            alpha: vec![0.2, 0.9, 0.9, 0.9, 0.8, 0.8, 0.8],
            gamma: 2.0,
        }
    }

    pub fn defaults_for(channels: usize) -> Result<Self> {
        match channels {
            4 => Ok(Self::defaults_c4()),
            7 => Ok(Self::defaults_c7()),
            c => Err(Error::usage(format!("no default weights for {c} channels"))),
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// base^gamma with the common integer exponents special-cased; powf
/// dominates the per-voxel cost otherwise.
#[inline]
fn pow_gamma(base: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        base * base
    } else if gamma == 1.0 {
        base
    } else if gamma == 0.0 {
        1.0
    } else {
        base.powf(gamma)
    }
}

/// Single-element focal term. `y` is the {0,1} target for this channel.
pub fn focal_term(y: u8, p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    if y == 1 {
        -alpha * pow_gamma(1.0 - p, gamma) * p.ln()
    } else {
        -pow_gamma(p, gamma) * (1.0 - p).ln()
    }
}

/// Mean over voxels of the per-voxel channel sum of focal terms.
pub fn focal_total(target: &OneHotStack, probs: &ProbStack, w: &ClassWeights) -> Result<f64> {
    if target.dims() != probs.dims() || target.channels() != probs.channels() {
        return Err(Error::usage(format!(
            "target {:?}x{} does not match probs {:?}x{}",
            target.dims(),
            target.channels(),
            probs.dims(),
            probs.channels()
        )));
    }
    if w.channels() != target.channels() {
        return Err(Error::usage(format!(
            "weights have {} channels, stack has {}",
            w.channels(),
            target.channels()
        )));
    }
    let voxels = target.voxels();
    let mut sum = 0.0f64;
    for voxel in 0..voxels {
        sum += voxel_loss(target.row(voxel), probs.row(voxel), w);
    }
    Ok(sum / voxels as f64)
}

/// Channel sum of focal terms for one voxel.
#[inline]
pub fn voxel_loss(target_row: &[u8], prob_row: &[f64], w: &ClassWeights) -> f64 {
    let mut sum = 0.0;
    for c in 0..target_row.len() {
        sum += focal_term(target_row[c], prob_row[c], w.alpha()[c], w.gamma());
    }
    sum
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Softmax written into a caller-provided buffer (hot path, no allocation).
#[inline]
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Analytic gradient of the per-voxel focal loss with respect to the
/// logits, chained through the softmax Jacobian:
///
/// dL/dz_k = sum_c f'_c(p_c) * p_c * (delta_ck - p_k)
///
/// A channel whose probability sits at (or beyond) the clamp bound
/// contributes zero, matching the derivative of the clamped loss.
pub fn focal_grad_logits(target_row: &[u8], logits: &[f64], w: &ClassWeights) -> Vec<f64> {
    let channels = logits.len();
    let mut probs = vec![0.0; channels];
    softmax_into(logits, &mut probs);
    let mut grad = vec![0.0; channels];
    grad_logits_into(target_row, &probs, w, &mut grad);
    grad
}

/// Gradient accumulation form: adds `scale *` gradient into `out`.
/// `probs` must already be the softmax of the logits.
#[inline]
pub fn grad_logits_accumulate(
    target_row: &[u8],
    probs: &[f64],
    w: &ClassWeights,
    scale: f64,
    out: &mut [f64],
) {
    let channels = probs.len();
    for c in 0..channels {
        let p = probs[c];
        if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
            continue; // clamped: locally constant in the logits
        }
        let df = dloss_dp(target_row[c], p, w.alpha()[c], w.gamma());
        let coeff = scale * df * p;
        for (k, o) in out.iter_mut().enumerate() {
            let jac = if k == c { 1.0 - probs[k] } else { -probs[k] };
            *o += coeff * jac;
        }
    }
}

fn grad_logits_into(target_row: &[u8], probs: &[f64], w: &ClassWeights, out: &mut [f64]) {
    grad_logits_accumulate(target_row, probs, w, 1.0, out);
}

/// d(focal_term)/dp on the unclamped interior.
#[inline]
fn dloss_dp(y: u8, p: f64, alpha: f64, gamma: f64) -> f64 {
    if y == 1 {
        // d/dp [ -a (1-p)^g ln p ] = a [ g (1-p)^(g-1) ln p - (1-p)^g / p ]
        let q = 1.0 - p;
        alpha * (gamma * pow_gamma(q, gamma - 1.0) * p.ln() - pow_gamma(q, gamma) / p)
    } else {
        // d/dp [ -p^g ln(1-p) ] = -g p^(g-1) ln(1-p) + p^g / (1-p)
        -gamma * pow_gamma(p, gamma - 1.0) * (1.0 - p).ln() + pow_gamma(p, gamma) / (1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::volgrid::LabelVolume;

    /// Independent evaluation of the focal formula, written separately
    /// from the implementation path (powi-free, explicit branches).
    fn focal_ref(y: u8, p: f64, alpha: f64, gamma: f64) -> f64 {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        let pos = -alpha * f64::powf(1.0 - p, gamma) * f64::ln(p);
        let neg = -f64::powf(p, gamma) * f64::ln(1.0 - p);
        if y == 1 {
            pos
        } else {
            neg
        }
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        assert!(focal_term(1, 1.0, 0.8, 2.0) < 1e-10);
        assert!(focal_term(0, 0.0, 0.8, 2.0) < 1e-10);
    }

    #[test]
    fn halfway_term_matches_oracle() {
        let got = focal_term(1, 0.5, 0.8, 2.0);
        let want = 0.8 * 0.25 * std::f64::consts::LN_2;
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        assert!((got - 0.138_629_436_111_989_06).abs() < 1e-12);
    }

    #[test]
    fn reduces_to_binary_cross_entropy() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..200 {
            let p = rng.next_f64();
            let y = (rng.next_u64() & 1) as u8;
            let got = focal_term(y, p, 1.0, 0.0);
            let pc = p.clamp(1e-7, 1.0 - 1e-7);
            let bce = -(y as f64) * pc.ln() - (1.0 - y as f64) * (1.0 - pc).ln();
            assert!((got - bce).abs() < 1e-12);
        }
    }

    #[test]
    fn terms_are_nonnegative() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..500 {
            let p = rng.next_f64();
            assert!(focal_term(1, p, 0.9, 2.0) >= 0.0);
            assert!(focal_term(0, p, 0.9, 2.0) >= 0.0);
        }
    }

    #[test]
    fn positive_term_strictly_decreases_in_p() {
        let mut prev = f64::INFINITY;
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let v = focal_term(1, p, 0.8, 2.0);
            assert!(v < prev, "not decreasing at p={p}");
            prev = v;
        }
    }

    #[test]
    fn uniform_probs_total_matches_term_sum() {
        let labels = LabelVolume::new([1, 1, 1], [1.0; 3], vec![1]).unwrap();
        let target = crate::targets::onehot_regions(&labels);
        let probs = ProbStack::new([1, 1, 1], [1.0; 3], 4, vec![0.25; 4]).unwrap();
        let w = ClassWeights::defaults_c4();
        let got = focal_total(&target, &probs, &w).unwrap();
        let want: f64 = (0..4)
            .map(|c| focal_ref(u8::from(c == 1), 0.25, w.alpha()[c], 2.0))
            .sum();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn exact_one_hot_probs_are_near_zero_loss() {
        let labels = LabelVolume::new([2, 2, 1], [1.0; 3], vec![0, 1, 2, 4]).unwrap();
        let target = crate::targets::onehot_regions(&labels);
        let probs = ProbStack::new(
            [2, 2, 1],
            [1.0; 3],
            4,
            target.data().iter().map(|&v| v as f64).collect(),
        )
        .unwrap();
        let loss = focal_total(&target, &probs, &ClassWeights::defaults_c4()).unwrap();
        assert!(loss < 1e-5, "{loss}");
    }

    #[test]
    fn tiling_leaves_mean_unchanged() {
        let labels = LabelVolume::new([2, 1, 1], [1.0; 3], vec![1, 0]).unwrap();
        let target = crate::targets::onehot_regions(&labels);
        let probs = ProbStack::new(
            [2, 1, 1],
            [1.0; 3],
            4,
            vec![
                0.4, 0.3, 0.2, 0.1, //
                0.7, 0.1, 0.1, 0.1,
            ],
        )
        .unwrap();
        let w = ClassWeights::defaults_c4();
        let single = focal_total(&target, &probs, &w).unwrap();

        let labels2 = LabelVolume::new([2, 1, 2], [1.0; 3], vec![1, 0, 1, 0]).unwrap();
        let target2 = crate::targets::onehot_regions(&labels2);
        let probs2 = ProbStack::new([2, 1, 2], [1.0; 3], 4, {
            let mut d = probs.data().to_vec();
            d.extend_from_slice(probs.data());
            d
        })
        .unwrap();
        let doubled = focal_total(&target2, &probs2, &w).unwrap();
        assert!((single - doubled).abs() < 1e-15);
    }

    #[test]
    fn dim_mismatch_is_usage_error() {
        let labels = LabelVolume::new([2, 1, 1], [1.0; 3], vec![1, 0]).unwrap();
        let target = crate::targets::onehot_regions(&labels);
        let probs = ProbStack::new([1, 1, 1], [1.0; 3], 4, vec![0.25; 4]).unwrap();
        assert!(matches!(
            focal_total(&target, &probs, &ClassWeights::defaults_c4()),
            Err(crate::error::Error::Usage(_))
        ));
    }

    #[test]
    fn softmax_basics() {
        let u = softmax(&[3.0, 3.0, 3.0]);
        for p in &u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let two = softmax(&[0.0, std::f64::consts::LN_2]);
        assert!((two[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((two[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..100 {
            let z: Vec<f64> = (0..5).map(|_| rng.next_range(-4.0, 4.0)).collect();
            let shifted: Vec<f64> = z.iter().map(|v| v + 123.456).collect();
            let a = softmax(&z);
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn fd_grad(target: &[u8], logits: &[f64], w: &ClassWeights) -> Vec<f64> {
        let h = 1e-6;
        (0..logits.len())
            .map(|k| {
                let mut plus = logits.to_vec();
                plus[k] += h;
                let mut minus = logits.to_vec();
                minus[k] -= h;
                let lp = voxel_loss(target, &softmax(&plus), w);
                let lm = voxel_loss(target, &softmax(&minus), w);
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (channels, w) in [
            (4, ClassWeights::defaults_c4()),
            (7, ClassWeights::defaults_c7()),
        ] {
            let mut rng = SplitMix64::new(1000 + channels as u64);
            for _ in 0..100 {
                let logits: Vec<f64> = (0..channels).map(|_| rng.next_range(-3.0, 3.0)).collect();
                let mut target = vec![0u8; channels];
                target[rng.next_index(channels)] = 1;
                let analytic = focal_grad_logits(&target, &logits, &w);
                let numeric = fd_grad(&target, &logits, &w);
                let err = max_rel_err(&analytic, &numeric);
                assert!(err < 1e-4, "rel err {err} for logits {logits:?}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_perfect_prediction() {
        // Post-clamp perfect prediction: huge margin drives p to the bounds.
        let logits = vec![40.0, 0.0, 0.0, 0.0];
        let target = vec![1u8, 0, 0, 0];
        let g = focal_grad_logits(&target, &logits, &ClassWeights::defaults_c4());
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-4, "norm {norm}");
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let w = ClassWeights::new(vec![1.0; 4], 0.0).unwrap();
        let mut rng = SplitMix64::new(77);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..4).map(|_| rng.next_range(-3.0, 3.0)).collect();
            let mut target = vec![0u8; 4];
            target[rng.next_index(4)] = 1;
            let g = focal_grad_logits(&target, &logits, &w);
            assert!(g.iter().sum::<f64>().abs() < 1e-10);
            let numeric = fd_grad(&target, &logits, &w);
            assert!(max_rel_err(&g, &numeric) < 1e-4);
        }
    }
}
