//! Two non-shared encoder streams (image regions and rendered views) plus
//! the per-class pose and centre heads on the image stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::nn;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    /// Input side length; must be divisible by `2^(conv_layers - 1)`.
    pub input_size: usize,
    pub width: usize,
    pub conv_layers: usize,
    /// The last feature map is average-pooled over a `pool_grid` square
    /// grid of cells; 1 is global average pooling.
    pub pool_grid: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub rotation_bins: usize,
}

impl EncoderConfig {
    pub fn new(num_classes: usize, rotation_bins: usize) -> Self {
        Self {
            in_channels: 4,
            input_size: 32,
            width: 16,
            conv_layers: 3,
            pool_grid: 1,
            embed_dim: 128,
            num_classes,
            rotation_bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.conv_layers.saturating_sub(1);
        if self.conv_layers == 0 || self.input_size == 0 || !self.input_size.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "input size {} not divisible by {div}",
                self.input_size
            )));
        }
        if self.width == 0 || self.embed_dim == 0 || self.num_classes == 0 || self.rotation_bins == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.pool_grid == 0 || !self.final_size().is_multiple_of(self.pool_grid) {
            return Err(Error::Config(format!(
                "pool grid {} does not divide the final {}x{} map",
                self.pool_grid,
                self.final_size(),
                self.final_size()
            )));
        }
        Ok(())
    }

    /// Side of the last conv feature map.
    pub fn final_size(&self) -> usize {
        self.input_size >> self.conv_layers.saturating_sub(1)
    }

    /// Length of the pooled feature vector.
    pub fn pooled_dim(&self) -> usize {
        self.width * self.pool_grid * self.pool_grid
    }
}

/// 3x3 convolution followed by a fixed per-channel affine normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Normalisation buffers, not trained: `(y - shift) * scale`.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub convs: Vec<ConvLayer>,
    pub pool_grid: usize,
    /// Fixed normalisation of the pooled features, like the conv buffers.
    pub pool_shift: Vec<f64>,
    pub pool_scale: Vec<f64>,
    pub embed: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    /// `K * num_classes` bin logits.
    pub pose_class: Linear,
    /// `4 * num_classes` raw rotation deltas.
    pub delta: Linear,
    /// `2 * num_classes` centre deltas.
    pub center: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub image: Stream,
    pub view: Stream,
    pub heads: Heads,
}

fn stream_zeros(cfg: &EncoderConfig) -> Stream {
    let convs = (0..cfg.conv_layers)
        .map(|l| {
            let cin = if l == 0 { cfg.in_channels } else { cfg.width };
            ConvLayer {
                cin,
                cout: cfg.width,
                weight: vec![0.0; cfg.width * cin * 9],
                bias: vec![0.0; cfg.width],
                shift: vec![0.0; cfg.width],
                scale: vec![1.0; cfg.width],
            }
        })
        .collect();
    let d = cfg.pooled_dim();
    Stream {
        convs,
        pool_grid: cfg.pool_grid,
        pool_shift: vec![0.0; d],
        pool_scale: vec![1.0; d],
        embed: Linear::zeros(d, cfg.embed_dim),
    }
}

impl EncoderParams {
    /// All-zero parameters with identity normalisation.
    pub fn zeros(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.pooled_dim();
        Ok(Self {
            config: cfg,
            image: stream_zeros(&cfg),
            view: stream_zeros(&cfg),
            heads: Heads {
                pose_class: Linear::zeros(w, cfg.rotation_bins * cfg.num_classes),
                delta: Linear::zeros(w, 4 * cfg.num_classes),
                center: Linear::zeros(w, 2 * cfg.num_classes),
            },
        })
    }

    /// He-normal convolutions, small projections and heads, and the delta
    /// bias set to `delta_bias` for every class.
    pub fn init(cfg: EncoderConfig, delta_bias: [f64; 4], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f64], std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            for x in v.iter_mut() {
                *x = n.sample(&mut rng);
            }
        };
        for s in [&mut p.image, &mut p.view] {
            for c in &mut s.convs {
                fill(&mut c.weight, (2.0 / (c.cin * 9) as f64).sqrt());
            }
            fill(&mut s.embed.weight, (1.0 / cfg.pooled_dim() as f64).sqrt());
        }
        fill(&mut p.heads.pose_class.weight, 0.01);
        fill(&mut p.heads.delta.weight, 0.01);
        fill(&mut p.heads.center.weight, 0.01);
        for c in 0..cfg.num_classes {
            p.heads.delta.bias[4 * c..4 * c + 4].copy_from_slice(&delta_bias);
        }
        Ok(p)
    }

    /// Every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for s in [&self.image, &self.view] {
            for c in &s.convs {
                out.push(&c.weight);
                out.push(&c.bias);
            }
            out.push(&s.embed.weight);
            out.push(&s.embed.bias);
        }
        for l in [&self.heads.pose_class, &self.heads.delta, &self.heads.center] {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for s in [&mut self.image, &mut self.view] {
            for c in &mut s.convs {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            out.push(&mut s.embed.weight);
            out.push(&mut s.embed.bias);
        }
        for l in [&mut self.heads.pose_class, &mut self.heads.delta, &mut self.heads.center] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Names matching [`Self::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (s, stream) in [("image", &self.image), ("view", &self.view)] {
            for i in 0..stream.convs.len() {
                out.push(format!("{s}.conv{i}.weight"));
                out.push(format!("{s}.conv{i}.bias"));
            }
            out.push(format!("{s}.embed.weight"));
            out.push(format!("{s}.embed.bias"));
        }
        for h in ["pose_class", "delta", "center"] {
            out.push(format!("heads.{h}.weight"));
            out.push(format!("heads.{h}.bias"));
        }
        out
    }

    /// Zero-valued tensors of the same shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for t in g.tensors_mut() {
            t.fill(0.0);
        }
        g
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of one stream's forward pass.
#[derive(Debug, Clone)]
pub struct StreamCache {
    cols: Vec<Vec<f64>>,
    /// Post-ReLU activations of each conv layer.
    acts: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    pub pooled: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl StreamCache {
    /// Bit pattern of ReLU activity, used to detect kinks in finite
    /// difference checks.
    pub fn relu_pattern(&self, out: &mut Vec<bool>) {
        for a in &self.acts {
            out.extend(a.iter().map(|&v| v > 0.0));
        }
    }
}

pub fn stream_forward(stream: &Stream, input: &FeatureMap) -> Result<StreamCache> {
    forward_layers(stream, input, stream.convs.len())
}

fn check_input(stream: &Stream, input: &FeatureMap) -> Result<()> {
    if !input.is_finite() {
        return Err(Error::domain("non-finite encoder input"));
    }
    if input.channels != stream.convs[0].cin || input.height != input.width {
        return Err(Error::domain(format!(
            "encoder input {}x{}x{} does not match {} channels",
            input.channels, input.height, input.width, stream.convs[0].cin
        )));
    }
    Ok(())
}

/// Runs the first `layers` conv blocks; with all of them it also pools and
/// projects. Used directly by data-dependent initialisation.
fn forward_layers(stream: &Stream, input: &FeatureMap, layers: usize) -> Result<StreamCache> {
    check_input(stream, input)?;
    let mut x = input.data.clone();
    let mut size = input.height;
    let mut cache = StreamCache {
        cols: Vec::new(),
        acts: Vec::new(),
        sizes: Vec::new(),
        pooled: Vec::new(),
        embedding: Vec::new(),
    };
    let last = stream.convs.len() - 1;
    for (l, conv) in stream.convs.iter().enumerate().take(layers) {
        let hw = size * size;
        let col = nn::im2col(&x, conv.cin, size, size);
        let mut y = nn::conv_forward(&col, &conv.weight, &conv.bias, conv.cout, hw);
        for o in 0..conv.cout {
            let (s, k) = (conv.shift[o], conv.scale[o]);
            for v in &mut y[o * hw..(o + 1) * hw] {
                *v = ((*v - s) * k).max(0.0);
            }
        }
        cache.cols.push(col);
        cache.sizes.push(size);
        if l < last {
            x = nn::avgpool2(&y, conv.cout, size, size);
            size /= 2;
        }
        cache.acts.push(y);
    }
    if layers == stream.convs.len() {
        let a = cache.acts.last().expect("at least one layer");
        let c = stream.convs[last].cout;
        let mut pooled = grid_pool(a, c, size, stream.pool_grid);
        for (i, v) in pooled.iter_mut().enumerate() {
            *v = (*v - stream.pool_shift[i]) * stream.pool_scale[i];
        }
        cache.pooled = pooled;
        cache.embedding = nn::linear(&stream.embed.weight, &stream.embed.bias, &cache.pooled);
    }
    Ok(cache)
}

/// Mean of each channel over a `g x g` grid of equal cells, channel-major.
fn grid_pool(a: &[f64], channels: usize, size: usize, g: usize) -> Vec<f64> {
    let cell = size / g;
    let inv = 1.0 / (cell * cell) as f64;
    let mut out = vec![0.0; channels * g * g];
    for o in 0..channels {
        for y in 0..size {
            for x in 0..size {
                out[(o * g + y / cell) * g + x / cell] += a[(o * size + y) * size + x] * inv;
            }
        }
    }
    out
}

fn grid_pool_backward(d: &[f64], channels: usize, size: usize, g: usize) -> Vec<f64> {
    let cell = size / g;
    let inv = 1.0 / (cell * cell) as f64;
    let mut out = vec![0.0; channels * size * size];
    for o in 0..channels {
        for y in 0..size {
            for x in 0..size {
                out[(o * size + y) * size + x] = d[(o * g + y / cell) * g + x / cell] * inv;
            }
        }
    }
    out
}

/// Backpropagates `d_embedding` (and optionally an extra gradient on the
/// pooled features from the heads) through one stream.
pub fn stream_backward(
    stream: &Stream,
    cache: &StreamCache,
    d_embedding: &[f64],
    d_pooled_extra: Option<&[f64]>,
    grad: &mut Stream,
) {
    let c = stream.embed.n_in;
    let mut d_pooled = vec![0.0; c];
    nn::linear_backward(
        &stream.embed.weight,
        &cache.pooled,
        d_embedding,
        &mut grad.embed.weight,
        &mut grad.embed.bias,
        &mut d_pooled,
    );
    if let Some(extra) = d_pooled_extra {
        for (d, e) in d_pooled.iter_mut().zip(extra) {
            *d += e;
        }
    }
    let last = stream.convs.len() - 1;
    let size = cache.sizes[last];
    for (d, k) in d_pooled.iter_mut().zip(&stream.pool_scale) {
        *d *= k;
    }
    let mut d_act = grid_pool_backward(&d_pooled, stream.convs[last].cout, size, stream.pool_grid);
    for l in (0..=last).rev() {
        let conv = &stream.convs[l];
        let size = cache.sizes[l];
        let hw = size * size;
        let act = &cache.acts[l];
        let mut dy = d_act;
        for o in 0..conv.cout {
            let k = conv.scale[o];
            for p in o * hw..(o + 1) * hw {
                dy[p] = if act[p] > 0.0 { dy[p] * k } else { 0.0 };
            }
        }
        let g = &mut grad.convs[l];
        let dcol = nn::conv_backward(&dy, &cache.cols[l], &conv.weight, conv.cout, hw, &mut g.weight, &mut g.bias, l > 0);
        if let Some(dcol) = dcol {
            let prev = size * 2;
            let dx = nn::col2im(&dcol, conv.cin, size, size);
            d_act = nn::avgpool2_backward(&dx, conv.cin, prev, prev);
        } else {
            break;
        }
    }
}

/// Outputs of the image-stream heads for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub logits: Vec<f64>,
    pub delta: [f64; 4],
    pub center: [f64; 2],
}

fn class_slice(v: &[f64], class: usize, n: usize) -> &[f64] {
    &v[class * n..(class + 1) * n]
}

pub fn heads_forward(heads: &Heads, cfg: &EncoderConfig, pooled: &[f64], class_id: u32) -> Result<HeadOutputs> {
    let c = class_id as usize;
    if c >= cfg.num_classes {
        return Err(Error::lookup(format!("class {class_id} outside the {} head classes", cfg.num_classes)));
    }
    let k = cfg.rotation_bins;
    let logits = nn::linear(&heads.pose_class.weight, &heads.pose_class.bias, pooled);
    let delta = nn::linear(&heads.delta.weight, &heads.delta.bias, pooled);
    let center = nn::linear(&heads.center.weight, &heads.center.bias, pooled);
    let d = class_slice(&delta, c, 4);
    let ce = class_slice(&center, c, 2);
    Ok(HeadOutputs {
        logits: class_slice(&logits, c, k).to_vec(),
        delta: [d[0], d[1], d[2], d[3]],
        center: [ce[0], ce[1]],
    })
}

/// Scatters class-slice head gradients back into full head outputs, then
/// through the linear layers; returns the gradient on the pooled features.
pub fn heads_backward(
    heads: &Heads,
    cfg: &EncoderConfig,
    pooled: &[f64],
    class_id: u32,
    d_logits: &[f64],
    d_delta: [f64; 4],
    d_center: [f64; 2],
    grad: &mut Heads,
) -> Vec<f64> {
    let c = class_id as usize;
    let k = cfg.rotation_bins;
    let mut dp = vec![0.0; pooled.len()];
    let mut full = vec![0.0; heads.pose_class.n_out];
    full[c * k..(c + 1) * k].copy_from_slice(d_logits);
    nn::linear_backward(&heads.pose_class.weight, pooled, &full, &mut grad.pose_class.weight, &mut grad.pose_class.bias, &mut dp);
    let mut full = vec![0.0; heads.delta.n_out];
    full[4 * c..4 * c + 4].copy_from_slice(&d_delta);
    nn::linear_backward(&heads.delta.weight, pooled, &full, &mut grad.delta.weight, &mut grad.delta.bias, &mut dp);
    let mut full = vec![0.0; heads.center.n_out];
    full[2 * c..2 * c + 2].copy_from_slice(&d_center);
    nn::linear_backward(&heads.center.weight, pooled, &full, &mut grad.center.weight, &mut grad.center.bias, &mut dp);
    dp
}

/// Sets each conv layer's normalisation so its pre-activation outputs have
/// zero mean and unit variance per channel over `inputs`.
pub fn fit_normalization(stream: &mut Stream, inputs: &[FeatureMap]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::domain("normalisation fit needs at least one input"));
    }
    for l in 0..stream.convs.len() {
        let cout = stream.convs[l].cout;
        let mut sum = vec![0.0; cout];
        let mut sq = vec![0.0; cout];
        let mut count = 0usize;
        for input in inputs {
            // Inputs of layer l come from the already normalised layers < l.
            let (x, size) = if l == 0 {
                (input.data.clone(), input.height)
            } else {
                let c = forward_layers(stream, input, l)?;
                let s = c.sizes[l - 1];
                (nn::avgpool2(&c.acts[l - 1], stream.convs[l - 1].cout, s, s), s / 2)
            };
            let conv = &stream.convs[l];
            let hw = size * size;
            let y = nn::conv_forward(&nn::im2col(&x, conv.cin, size, size), &conv.weight, &conv.bias, cout, hw);
            for o in 0..cout {
                for &v in &y[o * hw..(o + 1) * hw] {
                    sum[o] += v;
                    sq[o] += v * v;
                }
            }
            count += hw;
        }
        let conv = &mut stream.convs[l];
        for o in 0..cout {
            let mean = sum[o] / count as f64;
            let var = (sq[o] / count as f64 - mean * mean).max(0.0);
            conv.shift[o] = mean;
            conv.scale[o] = 1.0 / (var.sqrt() + 1e-3);
        }
    }
    let c = stream.pool_shift.len();
    stream.pool_shift.fill(0.0);
    stream.pool_scale.fill(1.0);
    let mut sum = vec![0.0; c];
    let mut sq = vec![0.0; c];
    for input in inputs {
        let pooled = forward_layers(stream, input, stream.convs.len())?.pooled;
        for o in 0..c {
            sum[o] += pooled[o];
            sq[o] += pooled[o] * pooled[o];
        }
    }
    let n = inputs.len() as f64;
    for o in 0..c {
        let mean = sum[o] / n;
        let var = (sq[o] / n - mean * mean).max(0.0);
        stream.pool_shift[o] = mean;
        stream.pool_scale[o] = 1.0 / (var.sqrt() + 1e-3);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            in_channels: 2,
            input_size: 2,
            width: 2,
            conv_layers: 1,
            pool_grid: 1,
            embed_dim: 3,
            num_classes: 1,
            rotation_bins: 2,
        }
    }

    #[test]
    fn grid_pool_matches_cell_means() {
        // One channel, 4x4 ramp, 2x2 grid.
        let a: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let p = grid_pool(&a, 1, 4, 2);
        assert_eq!(p, vec![2.5, 4.5, 10.5, 12.5]);
        assert_eq!(grid_pool(&a, 1, 4, 1), vec![7.5]);
        // Adjoint: <pool(a), d> == <a, pool^T(d)>.
        let d = [0.3, -1.0, 2.0, 0.7];
        let lhs: f64 = p.iter().zip(&d).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(grid_pool_backward(&d, 1, 4, 2)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_zero_embedding() {
        let p = EncoderParams::zeros(EncoderConfig::new(2, 16)).unwrap();
        let x = FeatureMap::zeros(4, 32, 32);
        let c = stream_forward(&p.image, &x).unwrap();
        assert_eq!(c.embedding.len(), 128);
        assert!(c.embedding.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_input_rejected() {
        let p = EncoderParams::zeros(EncoderConfig::new(2, 16)).unwrap();
        let mut x = FeatureMap::zeros(4, 32, 32);
        x.data[5] = f64::NAN;
        assert!(stream_forward(&p.view, &x).is_err());
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // 2-channel 2x2 input, one conv layer of width 2, GAP, 3-d projection.
        let cfg = tiny();
        let mut p = EncoderParams::zeros(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        p.image.convs[0].shift = vec![0.1, -0.2];
        p.image.convs[0].scale = vec![2.0, 0.5];
        let mut x = FeatureMap::zeros(2, 2, 2);
        for v in x.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let got = stream_forward(&p.image, &x).unwrap().embedding;

        let conv = &p.image.convs[0];
        let px = |c: usize, y: isize, xx: isize| -> f64 {
            if (0..2).contains(&y) && (0..2).contains(&xx) {
                x.data[c * 4 + y as usize * 2 + xx as usize]
            } else {
                0.0
            }
        };
        let mut pooled = [0.0; 2];
        for o in 0..2 {
            for y in 0..2isize {
                for xx in 0..2isize {
                    let mut acc = conv.bias[o];
                    for c in 0..2 {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                acc += conv.weight[o * 18 + c * 9 + (ky * 3 + kx) as usize] * px(c, y + ky - 1, xx + kx - 1);
                            }
                        }
                    }
                    pooled[o] += ((acc - conv.shift[o]) * conv.scale[o]).max(0.0) / 4.0;
                }
            }
        }
        for e in 0..3 {
            let want = p.image.embed.bias[e] + p.image.embed.weight[e * 2] * pooled[0] + p.image.embed.weight[e * 2 + 1] * pooled[1];
            assert!((got[e] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_fit_standardises_first_layer() {
        let cfg = EncoderConfig { input_size: 8, width: 4, embed_dim: 8, ..EncoderConfig::new(1, 4) };
        let mut p = EncoderParams::init(cfg, [0.95, 0.0, 0.0, 0.0], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs: Vec<FeatureMap> = (0..6)
            .map(|_| {
                let mut f = FeatureMap::zeros(4, 8, 8);
                for v in f.data.iter_mut() {
                    *v = rng.random_range(0.0..3.0);
                }
                f
            })
            .collect();
        fit_normalization(&mut p.image, &inputs).unwrap();
        let conv = &p.image.convs[0];
        let (mut s, mut n) = (0.0, 0.0);
        for f in &inputs {
            let y = nn::conv_forward(&nn::im2col(&f.data, 4, 8, 8), &conv.weight, &conv.bias, 4, 64);
            s += y[..64].iter().map(|v| (v - conv.shift[0]) * conv.scale[0]).sum::<f64>();
            n += 64.0;
        }
        assert!((s / n).abs() < 1e-9);
    }
}
