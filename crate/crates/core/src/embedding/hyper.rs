use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Method constants shared by the embedding, pose and training code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Cosine temperature.
    pub tau: f64,
    /// Weight on the negative sum of the contrastive loss.
    pub c: f64,
    /// Huber margin for pose and centre regression.
    pub huber_delta: f64,
    /// Rotation bins per class.
    pub rotation_bins: usize,
    /// Geodesic gate for delta regression, radians.
    pub theta: f64,
    /// Canonical views rendered per object.
    pub canonical_views: usize,
    /// Regions sampled per image.
    pub q: usize,
    /// Hard positives kept per anchor.
    pub p_h: usize,
    /// Hard negatives kept per anchor.
    pub n_h: usize,
    /// Repeat-factor frequency threshold.
    pub repeat_threshold: f64,
    /// Neighbours returned by retrieval.
    pub n_k: usize,
    pub weight_embed: f64,
    pub weight_pose_class: f64,
    pub weight_pose_reg: f64,
    pub base_lr: f64,
    /// Multiplier applied at each learning-rate milestone.
    pub lr_decay: f64,
    /// Milestones as fractions of the total step count (32K and 40K of 48K).
    pub lr_milestones: [f64; 2],
    /// Uniform box-corner perturbation, as a fraction of the box size.
    pub roi_jitter: f64,
    /// Canonical views drawn per region into the contrastive pool.
    pub views_per_region: usize,
    /// Jittered ground-truth views drawn per region into the pool.
    pub jittered_views_per_region: usize,
    /// Bias initialisation of the delta-quaternion head.
    pub delta_bias_init: [f64; 4],
}

impl Default for HyperParams {
    fn default() -> Self {
        let q = 8;
        Self {
            tau: 0.15,
            c: 1.5,
            huber_delta: 0.15,
            rotation_bins: 16,
            theta: PI / 6.0,
            canonical_views: 16,
            q,
            p_h: 4 * q,
            n_h: 16 * q,
            repeat_threshold: 0.1,
            n_k: 1,
            weight_embed: 0.5,
            weight_pose_class: 0.25,
            weight_pose_reg: 5.0,
            base_lr: 0.08,
            lr_decay: 0.1,
            lr_milestones: [32.0 / 48.0, 40.0 / 48.0],
            roi_jitter: 0.025,
            views_per_region: 3,
            jittered_views_per_region: 1,
            delta_bias_init: [0.95, 0.0, 0.0, 0.0],
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            ("tau", self.tau),
            ("c", self.c),
            ("huber_delta", self.huber_delta),
            ("theta", self.theta),
            ("repeat_threshold", self.repeat_threshold),
            ("base_lr", self.base_lr),
            ("lr_decay", self.lr_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(crate::Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("rotation_bins", self.rotation_bins),
            ("canonical_views", self.canonical_views),
            ("q", self.q),
            ("p_h", self.p_h),
            ("n_h", self.n_h),
            ("n_k", self.n_k),
        ] {
            if v == 0 {
                return Err(crate::Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
