use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{FusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Sampling points per query and head.
    pub points: usize,
    /// Hidden dimension.
    pub e: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { heads: 4, points: 4, e: 16 }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.e == 0 || self.heads == 0 || self.points == 0 || self.e % self.heads != 0 {
            return Err(FusionError::Config(format!(
                "need E divisible by heads and K >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.e / self.heads
    }
}

/// Architecture of the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub attention: AttentionConfig,
    /// Side of the square image patch behind each feature-map cell.
    pub patch: usize,
    /// Channels between the two weighting-network convolutions.
    pub weighting_hidden: usize,
    /// Identities seen by the classifier head.
    pub classes: usize,
}

impl ModelConfig {
    pub fn new(attention: AttentionConfig, classes: usize) -> Self {
        Self {
            attention,
            patch: 2,
            weighting_hidden: (attention.e / 2).max(1),
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        if self.patch == 0 || self.weighting_hidden == 0 || self.classes == 0 {
            return Err(FusionError::Config(format!("invalid model config {self:?}")));
        }
        Ok(())
    }
}

/// `y = x W + b` applied row-wise; `weight` is `in x out`, `bias` is `1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DMatrix<f64>,
    pub bias: DMatrix<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(input, output),
            bias: DMatrix::zeros(1, output),
        }
    }

    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let n = Normal::new(0.0, 1.0 / (input as f64).sqrt()).expect("positive std");
        Self {
            weight: DMatrix::from_fn(input, output, |_, _| n.sample(rng)),
            bias: DMatrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.weight;
        for mut row in y.row_iter_mut() {
            row += &self.bias;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Linear) -> DMatrix<f64> {
        grad.weight += x.transpose() * dy;
        for row in dy.row_iter() {
            grad.bias += row;
        }
        dy * self.weight.transpose()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }
}

/// One deformable attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Query → `heads * K * 2` sampling offsets in cells, `(x, y)` per point.
    pub offsets: Linear,
    /// Query → `heads * K` attention logits.
    pub logits: Linear,
    pub output: Linear,
}

impl AttentionParams {
    /// Offsets start at zero so initial samples sit on the reference points.
    pub fn init(cfg: &AttentionConfig, rng: &mut impl Rng) -> Self {
        let hk = cfg.heads * cfg.points;
        Self {
            offsets: Linear::zeros(cfg.e, 2 * hk),
            logits: Linear::random(cfg.e, hk, rng),
            output: Linear::random(cfg.e, cfg.e, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            offsets: self.offsets.zeros_like(),
            logits: self.logits.zeros_like(),
            output: self.output.zeros_like(),
        }
    }
}

/// 3x3 convolution over the concatenated encoder features, ReLU, 1x1
/// convolution to one channel, sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingParams {
    /// `hidden x (9 * 2E)`, column `tap * 2E + channel` with
    /// `tap = (di + 1) * 3 + (dj + 1)`.
    pub conv1_weight: DMatrix<f64>,
    pub conv1_bias: DMatrix<f64>,
    /// `hidden x 1`.
    pub conv2_weight: DMatrix<f64>,
    pub conv2_bias: DMatrix<f64>,
}

impl WeightingParams {
    pub fn init(e: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let n1 = Normal::new(0.0, 1.0 / ((18 * e) as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("positive std");
        Self {
            conv1_weight: DMatrix::from_fn(hidden, 18 * e, |_, _| n1.sample(rng)),
            conv1_bias: DMatrix::zeros(1, hidden),
            conv2_weight: DMatrix::from_fn(hidden, 1, |_, _| n2.sample(rng)),
            conv2_bias: DMatrix::zeros(1, 1),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv1_weight: DMatrix::zeros(self.conv1_weight.nrows(), self.conv1_weight.ncols()),
            conv1_bias: DMatrix::zeros(1, self.conv1_bias.ncols()),
            conv2_weight: DMatrix::zeros(self.conv2_weight.nrows(), 1),
            conv2_bias: DMatrix::zeros(1, 1),
        }
    }
}

/// All learnable state. The stub encoders are fixed random patch
/// projections standing in for a pretrained backbone; training leaves them
/// untouched but they still receive gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub config: ModelConfig,
    pub encoder_rgb: Linear,
    pub encoder_depth: Linear,
    pub q_rgb: Linear,
    pub v_rgb: Linear,
    pub q_depth: Linear,
    pub v_depth: Linear,
    pub r2r: AttentionParams,
    pub d2r: AttentionParams,
    pub d2d: AttentionParams,
    pub r2d: AttentionParams,
    pub weighting: WeightingParams,
    pub classifier: Linear,
}

impl FusionParams {
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let a = config.attention;
        let e = a.e;
        let p2 = config.patch * config.patch;
        Ok(Self {
            config,
            encoder_rgb: Linear::random(3 * p2, e, rng),
            encoder_depth: Linear::random(p2, e, rng),
            q_rgb: Linear::random(e, e, rng),
            v_rgb: Linear::random(e, e, rng),
            q_depth: Linear::random(e, e, rng),
            v_depth: Linear::random(e, e, rng),
            r2r: AttentionParams::init(&a, rng),
            d2r: AttentionParams::init(&a, rng),
            d2d: AttentionParams::init(&a, rng),
            r2d: AttentionParams::init(&a, rng),
            weighting: WeightingParams::init(e, config.weighting_hidden, rng),
            classifier: Linear::random(e, config.classes, rng),
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            encoder_rgb: self.encoder_rgb.zeros_like(),
            encoder_depth: self.encoder_depth.zeros_like(),
            q_rgb: self.q_rgb.zeros_like(),
            v_rgb: self.v_rgb.zeros_like(),
            q_depth: self.q_depth.zeros_like(),
            v_depth: self.v_depth.zeros_like(),
            r2r: self.r2r.zeros_like(),
            d2r: self.d2r.zeros_like(),
            d2d: self.d2d.zeros_like(),
            r2d: self.r2d.zeros_like(),
            weighting: self.weighting.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    /// Every tensor with a stable dotted name, in serialization order.
    pub fn tensors(&self) -> Vec<(String, &DMatrix<f64>)> {
        let mut out: Vec<(String, &DMatrix<f64>)> = Vec::new();
        for (name, l) in self.linears() {
            out.push((format!("{name}.weight"), &l.weight));
            out.push((format!("{name}.bias"), &l.bias));
        }
        out.push(("weighting.conv1.weight".into(), &self.weighting.conv1_weight));
        out.push(("weighting.conv1.bias".into(), &self.weighting.conv1_bias));
        out.push(("weighting.conv2.weight".into(), &self.weighting.conv2_weight));
        out.push(("weighting.conv2.bias".into(), &self.weighting.conv2_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut DMatrix<f64>)> {
        let mut out: Vec<(String, &mut DMatrix<f64>)> = Vec::new();
        let Self {
            encoder_rgb,
            encoder_depth,
            q_rgb,
            v_rgb,
            q_depth,
            v_depth,
            r2r,
            d2r,
            d2d,
            r2d,
            weighting,
            classifier,
            ..
        } = self;
        let mut linears: Vec<(String, &mut Linear)> = vec![
            ("encoder.rgb".into(), encoder_rgb),
            ("encoder.depth".into(), encoder_depth),
            ("proj.q_rgb".into(), q_rgb),
            ("proj.v_rgb".into(), v_rgb),
            ("proj.q_depth".into(), q_depth),
            ("proj.v_depth".into(), v_depth),
        ];
        for (name, a) in [("attn.r2r", r2r), ("attn.d2r", d2r), ("attn.d2d", d2d), ("attn.r2d", r2d)] {
            let AttentionParams { offsets, logits, output } = a;
            linears.push((format!("{name}.offsets"), offsets));
            linears.push((format!("{name}.logits"), logits));
            linears.push((format!("{name}.output"), output));
        }
        linears.push(("classifier".into(), classifier));
        for (name, l) in linears {
            let Linear { weight, bias } = l;
            out.push((format!("{name}.weight"), weight));
            out.push((format!("{name}.bias"), bias));
        }
        let WeightingParams {
            conv1_weight,
            conv1_bias,
            conv2_weight,
            conv2_bias,
        } = weighting;
        out.push(("weighting.conv1.weight".into(), conv1_weight));
        out.push(("weighting.conv1.bias".into(), conv1_bias));
        out.push(("weighting.conv2.weight".into(), conv2_weight));
        out.push(("weighting.conv2.bias".into(), conv2_bias));
        out
    }

    fn linears(&self) -> Vec<(String, &Linear)> {
        let mut v: Vec<(String, &Linear)> = vec![
            ("encoder.rgb".into(), &self.encoder_rgb),
            ("encoder.depth".into(), &self.encoder_depth),
            ("proj.q_rgb".into(), &self.q_rgb),
            ("proj.v_rgb".into(), &self.v_rgb),
            ("proj.q_depth".into(), &self.q_depth),
            ("proj.v_depth".into(), &self.v_depth),
        ];
        for (name, a) in [
            ("attn.r2r", &self.r2r),
            ("attn.d2r", &self.d2r),
            ("attn.d2d", &self.d2d),
            ("attn.r2d", &self.r2d),
        ] {
            v.push((format!("{name}.offsets"), &a.offsets));
            v.push((format!("{name}.logits"), &a.logits));
            v.push((format!("{name}.output"), &a.output));
        }
        v.push(("classifier".into(), &self.classifier));
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &FusionParams, scale: f64) {
        let src: Vec<DMatrix<f64>> = other.tensors().into_iter().map(|(_, t)| t.clone()).collect();
        for ((_, t), s) in self.tensors_mut().into_iter().zip(src) {
            *t += s * scale;
        }
    }
}

/// Parameter group of a tensor name: its first two components (`attn.r2r`,
/// `proj.v_depth`, ...), or just `classifier`.
pub fn group_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.first() {
        Some(&"attn") | Some(&"weighting") | Some(&"proj") | Some(&"encoder") => parts[..2].join("."),
        _ => parts[0].to_string(),
    }
}
