//! Huber penalty and the per-region pose loss.

use super::codec::PoseTarget;

/// `x^2 / 2` inside `[-delta, delta]`, linear with slope `delta` outside.
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - delta / 2.0)
    }
}

pub fn huber_grad(x: f64, delta: f64) -> f64 {
    x.clamp(-delta, delta)
}

/// Pose loss terms for one region before the global loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseLoss {
    /// Cross-entropy of the bin logits against the target bin.
    pub class: f64,
    /// Gated per-component Huber on the rotation delta.
    pub delta: f64,
    /// Huber on the centre deltas.
    pub center: f64,
    pub d_logits: Vec<f64>,
    pub d_delta: [f64; 4],
    pub d_center: [f64; 2],
}

impl PoseLoss {
    pub fn regression(&self) -> f64 {
        self.delta + self.center
    }
}

/// Hard one-hot cross-entropy over bins plus per-component Huber terms.
///
/// The delta term only contributes when `target.regress_mask` is set.
pub fn pose_loss(
    logits: &[f64],
    delta: [f64; 4],
    center: [f64; 2],
    target: &PoseTarget,
    huber_delta: f64,
) -> PoseLoss {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lse = m + sum.ln();
    let class = lse - logits[target.bin_index];
    let mut d_logits: Vec<f64> = logits.iter().map(|l| (l - m).exp() / sum).collect();
    d_logits[target.bin_index] -= 1.0;

    let mut delta_loss = 0.0;
    let mut d_delta = [0.0; 4];
    if target.regress_mask {
        let t = target.delta.to_array();
        for i in 0..4 {
            delta_loss += huber(delta[i] - t[i], huber_delta);
            d_delta[i] = huber_grad(delta[i] - t[i], huber_delta);
        }
    }
    let mut center_loss = 0.0;
    let mut d_center = [0.0; 2];
    for i in 0..2 {
        let r = center[i] - target.center_delta[i];
        center_loss += huber(r, huber_delta);
        d_center[i] = huber_grad(r, huber_delta);
    }
    PoseLoss {
        class,
        delta: delta_loss,
        center: center_loss,
        d_logits,
        d_delta,
        d_center,
    }
}
