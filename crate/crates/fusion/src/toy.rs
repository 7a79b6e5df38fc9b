//! Procedural identity dataset and a small training loop.
//!
//! Each identity has a colour and a depth signature (mean distance plus a
//! tilt direction), so either modality alone can tell identities apart.
//! Views differ by brightness, a depth offset and pixel noise.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::dropout::{DropoutCase, DropoutConfig};
use crate::loss::DEFAULT_MARGIN;
use crate::metrics::{mean_average_precision, rank1_accuracy};
use crate::model::{batch_loss, batch_loss_and_grad, embed, AlphaMode, BatchOptions, PatchSample};
use crate::params::{AttentionConfig, FusionParams, ModelConfig};
use crate::{FusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub identities: usize,
    pub views: usize,
    /// Views per identity kept out of training and used as queries.
    pub held_out: usize,
    pub h: usize,
    pub w: usize,
    pub attention: AttentionConfig,
    pub steps: usize,
    /// Training views drawn per identity for each step.
    pub views_per_step: usize,
    pub adam: AdamConfig,
    pub dropout: DropoutConfig,
    pub margin: f64,
    pub rgb_noise: f64,
    pub depth_noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            identities: 8,
            views: 16,
            held_out: 6,
            h: 8,
            w: 8,
            attention: AttentionConfig::default(),
            steps: 200,
            views_per_step: 2,
            adam: AdamConfig::default(),
            dropout: DropoutConfig::default(),
            margin: DEFAULT_MARGIN,
            rgb_noise: 0.03,
            depth_noise: 0.01,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        self.dropout.validate()?;
        if self.identities < 2 || self.held_out == 0 || self.views < self.held_out + 2 {
            return Err(FusionError::Config(
                "need >= 2 identities, >= 1 held-out and >= 2 training views each".into(),
            ));
        }
        if self.views_per_step < 2 || self.views_per_step > self.views - self.held_out {
            return Err(FusionError::Config("views_per_step must be in [2, training views]".into()));
        }
        if self.h == 0 || self.w == 0 {
            return Err(FusionError::Config("empty feature grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub samples: Vec<PatchSample>,
    pub labels: Vec<usize>,
    /// View number of each sample within its identity.
    pub views: Vec<usize>,
}

fn hue_rgb(hue: f64) -> [f64; 3] {
    let k = |n: f64| {
        let k = (n + hue * 6.0) % 6.0;
        1.0 - (k.min(4.0 - k).clamp(0.0, 1.0))
    };
    // saturation 0.7, value 0.9
    let v = 0.9;
    [v * (1.0 - 0.7 * k(5.0)), v * (1.0 - 0.7 * k(3.0)), v * (1.0 - 0.7 * k(1.0))]
}

pub fn toy_dataset(cfg: &ToyConfig, patch: usize, seed: u64) -> Result<ToyDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ih, iw) = (cfg.h * patch, cfg.w * patch);
    let rgb_noise = Normal::new(0.0, cfg.rgb_noise).map_err(|e| FusionError::Config(e.to_string()))?;
    let depth_noise = Normal::new(0.0, cfg.depth_noise).map_err(|e| FusionError::Config(e.to_string()))?;
    let mut out = ToyDataset {
        samples: Vec::new(),
        labels: Vec::new(),
        views: Vec::new(),
    };
    for id in 0..cfg.identities {
        let color = hue_rgb(id as f64 / cfg.identities as f64);
        let level = 1.0 + 0.15 * id as f64;
        let tilt = TAU * id as f64 / cfg.identities as f64;
        for view in 0..cfg.views {
            let brightness = rng.random_range(0.85..1.15);
            let offset = rng.random_range(-0.03..0.03);
            let mut rgb = Vec::with_capacity(ih * iw * 3);
            let mut depth = Vec::with_capacity(ih * iw);
            for y in 0..ih {
                for x in 0..iw {
                    let u = 2.0 * x as f64 / (iw - 1).max(1) as f64 - 1.0;
                    let v = 2.0 * y as f64 / (ih - 1).max(1) as f64 - 1.0;
                    for c in color {
                        rgb.push(c * brightness + rgb_noise.sample(&mut rng));
                    }
                    depth.push(level + offset + 0.5 * (tilt.cos() * u + tilt.sin() * v) + depth_noise.sample(&mut rng));
                }
            }
            out.samples.push(PatchSample::from_images(&rgb, &depth, cfg.h, cfg.w, patch)?);
            out.labels.push(id);
            out.views.push(view);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub rank1: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub seed: u64,
    /// Loss over every training view with both modalities, before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mini-batch loss of each step.
    pub step_losses: Vec<f64>,
    /// Held-out views queried against the training views.
    pub fused: Retrieval,
    pub rgb_only: Retrieval,
    pub depth_only: Retrieval,
}

fn embeddings(params: &FusionParams, samples: &[&PatchSample], case: DropoutCase) -> Result<DMatrix<f64>> {
    let e = params.config.attention.e;
    let rows = samples
        .iter()
        .map(|s| embed(s, params, case))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), e, |r, c| rows[r][c]))
}

pub fn retrieval(
    params: &FusionParams,
    data: &ToyDataset,
    held_out_from: usize,
    case: DropoutCase,
) -> Result<Retrieval> {
    let (mut q, mut ql, mut g, mut gl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, s) in data.samples.iter().enumerate() {
        if data.views[i] >= held_out_from {
            q.push(s);
            ql.push(data.labels[i]);
        } else {
            g.push(s);
            gl.push(data.labels[i]);
        }
    }
    let qe = embeddings(params, &q, case)?;
    let ge = embeddings(params, &g, case)?;
    Ok(Retrieval {
        rank1: rank1_accuracy(&qe, &ql, &ge, &gl)?,
        map: mean_average_precision(&qe, &ql, &ge, &gl)?,
    })
}

/// Trains the fusion model (the stub encoders stay fixed) with modality
/// dropout and reports held-out retrieval in all three inference modes.
pub fn toy_train(cfg: &ToyConfig, seed: u64) -> Result<(FusionParams, ToyReport)> {
    cfg.validate()?;
    let model = ModelConfig::new(cfg.attention, cfg.identities);
    let data = toy_dataset(cfg, model.patch, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut params = FusionParams::init(model, &mut rng)?;
    let train_from = cfg.views - cfg.held_out;
    let train: Vec<usize> = (0..data.samples.len()).filter(|&i| data.views[i] < train_from).collect();
    let opts = BatchOptions {
        margin: cfg.margin,
        alpha: AlphaMode::Learned,
        loss_scale: 1.0,
    };
    let full_loss = |p: &FusionParams| -> Result<f64> {
        let s: Vec<&PatchSample> = train.iter().map(|&i| &data.samples[i]).collect();
        let l: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
        Ok(batch_loss(p, &s, &l, &vec![DropoutCase::Both; s.len()], &opts)?.total)
    };
    let initial_loss = full_loss(&params)?;
    let mut adam = Adam::new(&params, cfg.adam, vec!["encoder.rgb".into(), "encoder.depth".into()]);
    let mut step_losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::new();
        for id in 0..cfg.identities {
            let mut own: Vec<usize> = train.iter().copied().filter(|&i| data.labels[i] == id).collect();
            own.shuffle(&mut rng);
            batch.extend_from_slice(&own[..cfg.views_per_step]);
        }
        let samples: Vec<&PatchSample> = batch.iter().map(|&i| &data.samples[i]).collect();
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        let cases = batch
            .iter()
            .map(|_| cfg.dropout.case_for(rng.random::<f64>()))
            .collect::<Result<Vec<_>>>()?;
        let out = batch_loss_and_grad(&params, &samples, &labels, &cases, &opts)?;
        if !out.loss.total.is_finite() || !out.grad.all_finite() {
            return Err(FusionError::Numerical(format!(
                "training diverged at step {step}: loss {} (ce {}, triplet {})",
                out.loss.total, out.loss.ce, out.loss.triplet
            )));
        }
        step_losses.push(out.loss.total);
        adam.step(&mut params, &out.grad);
    }
    let final_loss = full_loss(&params)?;
    let report = ToyReport {
        seed,
        initial_loss,
        final_loss,
        step_losses,
        fused: retrieval(&params, &data, train_from, DropoutCase::Both)?,
        rgb_only: retrieval(&params, &data, train_from, DropoutCase::RgbOnly)?,
        depth_only: retrieval(&params, &data, train_from, DropoutCase::DepthOnly)?,
    };
    Ok((params, report))
}
