//! The dual-path fusion forward and backward passes.
//!
//! Both pathways are projected to queries and values once. The RGB pathway
//! adds RGB-to-RGB and depth-to-RGB attention (depth queries over RGB
//! values) to its encoder features, and symmetrically for depth. A
//! per-position weight mixes the two refined maps, and the spatial mean of
//! the mix is the embedding.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{attention_backward, attention_forward, AttentionCache};
use crate::dropout::{apply_case, DropoutCase};
use crate::feature_map::check_same;
use crate::loss::{losses, LossValues, DEFAULT_MARGIN};
use crate::params::FusionParams;
use crate::weighting::{weighting_backward, weighting_forward, WeightingCache};
use crate::{FeatureMap, FusionError, Result};

/// How the modality weight is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    Learned,
    /// Constant weight at every position; the weighting network is skipped.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct FuseOutput {
    pub embedding: Vec<f64>,
    /// Row-major `H x W` modality weights for the RGB pathway.
    pub alpha: Vec<f64>,
    pub f_r: FeatureMap,
    pub f_d: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct FuseCache {
    q_r: FeatureMap,
    v_r: FeatureMap,
    q_d: FeatureMap,
    v_d: FeatureMap,
    r2r: AttentionCache,
    d2r: AttentionCache,
    d2d: AttentionCache,
    r2d: AttentionCache,
    weighting: Option<WeightingCache>,
    pub output: FuseOutput,
}

fn project(l: &crate::params::Linear, f: &FeatureMap) -> FeatureMap {
    FeatureMap {
        h: f.h,
        w: f.w,
        data: l.forward(&f.data),
    }
}

pub fn forward_fuse(
    f_rgb: &FeatureMap,
    f_depth: &FeatureMap,
    params: &FusionParams,
    alpha: AlphaMode,
) -> Result<FuseOutput> {
    Ok(fuse_forward_cached(f_rgb, f_depth, params, alpha)?.output)
}

pub fn fuse_forward_cached(
    f_rgb: &FeatureMap,
    f_depth: &FeatureMap,
    params: &FusionParams,
    alpha_mode: AlphaMode,
) -> Result<FuseCache> {
    check_same(f_rgb, f_depth, "encoder maps")?;
    let cfg = params.config.attention;
    let q_r = project(&params.q_rgb, f_rgb);
    let v_r = project(&params.v_rgb, f_rgb);
    let q_d = project(&params.q_depth, f_depth);
    let v_d = project(&params.v_depth, f_depth);
    let (a_r2r, r2r) = attention_forward(&q_r, &v_r, &params.r2r, &cfg)?;
    let (a_d2r, d2r) = attention_forward(&q_d, &v_r, &params.d2r, &cfg)?;
    let (a_d2d, d2d) = attention_forward(&q_d, &v_d, &params.d2d, &cfg)?;
    let (a_r2d, r2d) = attention_forward(&q_r, &v_d, &params.r2d, &cfg)?;
    let f_r = FeatureMap {
        h: f_rgb.h,
        w: f_rgb.w,
        data: &f_rgb.data + a_r2r.data + a_d2r.data,
    };
    let f_d = FeatureMap {
        h: f_rgb.h,
        w: f_rgb.w,
        data: &f_depth.data + a_d2d.data + a_r2d.data,
    };
    let (weighting, alpha) = match alpha_mode {
        AlphaMode::Learned => {
            let c = weighting_forward(f_rgb, f_depth, &params.weighting);
            let a = c.alpha.clone();
            (Some(c), a)
        }
        AlphaMode::Fixed(a) => {
            if !(0.0..=1.0).contains(&a) {
                return Err(FusionError::Config(format!("fixed alpha {a} outside [0, 1]")));
            }
            (None, vec![a; f_rgb.positions()])
        }
    };
    let n = f_rgb.positions();
    let e = f_rgb.e();
    let mut embedding = vec![0.0; e];
    for p in 0..n {
        let a = alpha[p];
        for (c, emb) in embedding.iter_mut().enumerate() {
            *emb += a * f_r.data[(p, c)] + (1.0 - a) * f_d.data[(p, c)];
        }
    }
    embedding.iter_mut().for_each(|v| *v /= n as f64);
    Ok(FuseCache {
        q_r,
        v_r,
        q_d,
        v_d,
        r2r,
        d2r,
        d2d,
        r2d,
        weighting,
        output: FuseOutput {
            embedding,
            alpha,
            f_r,
            f_d,
        },
    })
}

/// Back-propagates `dL/dembedding`; returns the gradients of the two
/// encoder maps and accumulates parameter gradients into `grad`.
pub fn fuse_backward(
    f_rgb: &FeatureMap,
    f_depth: &FeatureMap,
    params: &FusionParams,
    cache: &FuseCache,
    d_embedding: &[f64],
    grad: &mut FusionParams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let cfg = params.config.attention;
    let out = &cache.output;
    let n = f_rgb.positions();
    let e = f_rgb.e();
    let mut d_fr = DMatrix::zeros(n, e);
    let mut d_fd = DMatrix::zeros(n, e);
    let mut d_alpha = vec![0.0; n];
    for p in 0..n {
        let a = out.alpha[p];
        for c in 0..e {
            let g = d_embedding[c] / n as f64;
            d_fr[(p, c)] = a * g;
            d_fd[(p, c)] = (1.0 - a) * g;
            d_alpha[p] += g * (out.f_r.data[(p, c)] - out.f_d.data[(p, c)]);
        }
    }
    let (dq_r1, dv_r1) = attention_backward(&cache.q_r, &cache.v_r, &params.r2r, &cfg, &cache.r2r, &d_fr, &mut grad.r2r);
    let (dq_d1, dv_r2) = attention_backward(&cache.q_d, &cache.v_r, &params.d2r, &cfg, &cache.d2r, &d_fr, &mut grad.d2r);
    let (dq_d2, dv_d1) = attention_backward(&cache.q_d, &cache.v_d, &params.d2d, &cfg, &cache.d2d, &d_fd, &mut grad.d2d);
    let (dq_r2, dv_d2) = attention_backward(&cache.q_r, &cache.v_d, &params.r2d, &cfg, &cache.r2d, &d_fd, &mut grad.r2d);
    let mut d_rgb = d_fr;
    let mut d_depth = d_fd;
    d_rgb += params.q_rgb.backward(&f_rgb.data, &(dq_r1 + dq_r2), &mut grad.q_rgb);
    d_rgb += params.v_rgb.backward(&f_rgb.data, &(dv_r1 + dv_r2), &mut grad.v_rgb);
    d_depth += params.q_depth.backward(&f_depth.data, &(dq_d1 + dq_d2), &mut grad.q_depth);
    d_depth += params.v_depth.backward(&f_depth.data, &(dv_d1 + dv_d2), &mut grad.v_depth);
    if let Some(wc) = &cache.weighting {
        let (dr, dd) = weighting_backward(f_rgb, &params.weighting, wc, &d_alpha, &mut grad.weighting);
        d_rgb += dr;
        d_depth += dd;
    }
    (d_rgb, d_depth)
}

/// One RGB-D input already cut into patches: row `i * W + j` of `rgb`
/// holds the `P x P x 3` patch at cell `(i, j)`, row-major with channels
/// innermost; `depth` holds the `P x P` depth patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub h: usize,
    pub w: usize,
    pub rgb: DMatrix<f64>,
    pub depth: DMatrix<f64>,
}

impl PatchSample {
    /// Cuts `(H*P) x (W*P)` images into patches. `rgb` is row-major with
    /// three interleaved channels, `depth` row-major single channel.
    pub fn from_images(rgb: &[f64], depth: &[f64], h: usize, w: usize, patch: usize) -> Result<Self> {
        let (ih, iw) = (h * patch, w * patch);
        if rgb.len() != ih * iw * 3 || depth.len() != ih * iw {
            return Err(FusionError::Shape(format!(
                "images must be {ih}x{iw} for a {h}x{w} grid of {patch}-pixel patches"
            )));
        }
        let p2 = patch * patch;
        let mut r = DMatrix::zeros(h * w, 3 * p2);
        let mut d = DMatrix::zeros(h * w, p2);
        for i in 0..h {
            for j in 0..w {
                let n = i * w + j;
                for y in 0..patch {
                    for x in 0..patch {
                        let (py, px) = (i * patch + y, j * patch + x);
                        let k = y * patch + x;
                        d[(n, k)] = depth[py * iw + px];
                        for c in 0..3 {
                            r[(n, 3 * k + c)] = rgb[(py * iw + px) * 3 + c];
                        }
                    }
                }
            }
        }
        Ok(Self { h, w, rgb: r, depth: d })
    }
}

/// Encoder features of a sample.
pub fn encode(sample: &PatchSample, params: &FusionParams) -> Result<(FeatureMap, FeatureMap)> {
    let p2 = params.config.patch * params.config.patch;
    if sample.rgb.ncols() != 3 * p2 || sample.depth.ncols() != p2 {
        return Err(FusionError::Shape("patch size differs from the model's".into()));
    }
    Ok((
        FeatureMap::new(sample.h, sample.w, params.encoder_rgb.forward(&sample.rgb))?,
        FeatureMap::new(sample.h, sample.w, params.encoder_depth.forward(&sample.depth))?,
    ))
}

/// Embedding of a sample with the given modalities present.
pub fn embed(sample: &PatchSample, params: &FusionParams, case: DropoutCase) -> Result<Vec<f64>> {
    let (r, d) = encode(sample, params)?;
    let (r, d) = apply_case(&r, &d, case);
    Ok(forward_fuse(&r, &d, params, AlphaMode::Learned)?.embedding)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub margin: f64,
    pub alpha: AlphaMode,
    /// Multiplies the loss (and so every gradient).
    pub loss_scale: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            alpha: AlphaMode::Learned,
            loss_scale: 1.0,
        }
    }
}

pub struct BatchResult {
    pub loss: LossValues,
    pub grad: FusionParams,
    pub embeddings: DMatrix<f64>,
}

struct SampleForward {
    rgb: FeatureMap,
    depth: FeatureMap,
    cache: FuseCache,
}

fn forward_batch(
    params: &FusionParams,
    samples: &[&PatchSample],
    cases: &[DropoutCase],
    alpha: AlphaMode,
) -> Result<Vec<SampleForward>> {
    if samples.len() != cases.len() {
        return Err(FusionError::Input(format!("{} samples, {} dropout cases", samples.len(), cases.len())));
    }
    samples
        .par_iter()
        .zip(cases.par_iter())
        .map(|(s, &case)| {
            let (r, d) = encode(s, params)?;
            let (rgb, depth) = apply_case(&r, &d, case);
            let cache = fuse_forward_cached(&rgb, &depth, params, alpha)?;
            Ok(SampleForward { rgb, depth, cache })
        })
        .collect()
}

fn batch_head(params: &FusionParams, fw: &[SampleForward]) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = params.config.attention.e;
    let emb = DMatrix::from_fn(fw.len(), e, |r, c| fw[r].cache.output.embedding[c]);
    let logits = params.classifier.forward(&emb);
    (emb, logits)
}

/// Loss of a batch without gradients.
pub fn batch_loss(
    params: &FusionParams,
    samples: &[&PatchSample],
    labels: &[usize],
    cases: &[DropoutCase],
    opts: &BatchOptions,
) -> Result<LossValues> {
    let fw = forward_batch(params, samples, cases, opts.alpha)?;
    let (emb, logits) = batch_head(params, &fw);
    let (l, _, _) = losses(&emb, &logits, labels, opts.margin)?;
    Ok(LossValues {
        total: l.total * opts.loss_scale,
        ce: l.ce * opts.loss_scale,
        triplet: l.triplet * opts.loss_scale,
    })
}

/// Loss of a batch and its gradient with respect to every parameter.
/// Per-sample gradients are summed in sample order.
pub fn batch_loss_and_grad(
    params: &FusionParams,
    samples: &[&PatchSample],
    labels: &[usize],
    cases: &[DropoutCase],
    opts: &BatchOptions,
) -> Result<BatchResult> {
    let fw = forward_batch(params, samples, cases, opts.alpha)?;
    let (emb, logits) = batch_head(params, &fw);
    let (l, d_emb, d_logits) = losses(&emb, &logits, labels, opts.margin)?;
    let s = opts.loss_scale;
    let mut grad = params.zeros_like();
    let d_emb = d_emb * s + params.classifier.backward(&emb, &(d_logits * s), &mut grad.classifier);
    let per_sample: Vec<FusionParams> = fw
        .par_iter()
        .zip(cases.par_iter())
        .enumerate()
        .map(|(b, (f, &case))| {
            let mut g = params.zeros_like();
            let de: Vec<f64> = d_emb.row(b).iter().copied().collect();
            let (d_rgb, d_depth) = fuse_backward(&f.rgb, &f.depth, params, &f.cache, &de, &mut g);
            // a zeroed map does not depend on its encoder
            if case.keeps_rgb() {
                params.encoder_rgb.backward(&samples[b].rgb, &d_rgb, &mut g.encoder_rgb);
            }
            if case.keeps_depth() {
                params.encoder_depth.backward(&samples[b].depth, &d_depth, &mut g.encoder_depth);
            }
            g
        })
        .collect();
    for g in &per_sample {
        grad.add_scaled(g, 1.0);
    }
    Ok(BatchResult {
        loss: LossValues {
            total: l.total * s,
            ce: l.ce * s,
            triplet: l.triplet * s,
        },
        grad,
        embeddings: emb,
    })
}

/// Discrete state picking out the smooth piece of the batch loss: the cell
/// of every bilinear sample, the sign of every weighting-network ReLU, and
/// each anchor's hardest positive, hardest negative and hinge activity.
/// Between two parameter vectors with the same signature the loss is
/// smooth along the segment joining them, up to pieces entered and left
/// again within it.
pub fn piecewise_signature(
    params: &FusionParams,
    samples: &[&PatchSample],
    labels: &[usize],
    cases: &[DropoutCase],
    margin: f64,
) -> Result<Vec<i64>> {
    let fw = forward_batch(params, samples, cases, AlphaMode::Learned)?;
    let mut sig = Vec::new();
    for f in &fw {
        let (h, w) = (f.rgb.h, f.rgb.w);
        for c in [&f.cache.r2r, &f.cache.d2r, &f.cache.d2d, &f.cache.r2d] {
            for n in 0..h * w {
                let (i, j) = (n / w, n % w);
                for col in (0..c.offsets.ncols()).step_by(2) {
                    sig.push((j as f64 + c.offsets[(n, col)]).floor() as i64);
                    sig.push((i as f64 + c.offsets[(n, col + 1)]).floor() as i64);
                }
            }
        }
        if let Some(wc) = &f.cache.weighting {
            sig.extend(wc.pre.iter().map(|v| (*v > 0.0) as i64));
        }
    }
    let (emb, _) = batch_head(params, &fw);
    let b = emb.nrows();
    let d = |x: usize, y: usize| (emb.row(x) - emb.row(y)).norm();
    for a in 0..b {
        let pos = (0..b)
            .filter(|&o| o != a && labels[o] == labels[a])
            .max_by(|&x, &y| d(a, x).total_cmp(&d(a, y)));
        let neg = (0..b)
            .filter(|&o| labels[o] != labels[a])
            .min_by(|&x, &y| d(a, x).total_cmp(&d(a, y)));
        if let (Some(p), Some(n)) = (pos, neg) {
            sig.extend([p as i64, n as i64, (d(a, p) - d(a, n) + margin > 0.0) as i64]);
        }
    }
    Ok(sig)
}
