//! Analytic gradients against central finite differences.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dropout::DropoutCase;
use crate::model::{batch_loss, batch_loss_and_grad, piecewise_signature, BatchOptions, PatchSample};
use crate::params::{group_of, AttentionConfig, FusionParams, ModelConfig};
use crate::{FusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub h: usize,
    pub w: usize,
    pub attention: AttentionConfig,
    pub eps: f64,
    pub tolerance: f64,
    /// Entries checked per tensor; smaller tensors are checked in full.
    pub entries_per_tensor: usize,
    pub identities: usize,
    pub samples_per_identity: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 8,
            w: 8,
            attention: AttentionConfig::default(),
            eps: 1e-5,
            tolerance: 1e-3,
            entries_per_tensor: 24,
            identities: 2,
            samples_per_identity: 2,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub checked: usize,
    /// Entries whose `+-eps` interval crossed a kink and were not compared.
    pub nonsmooth: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: DropoutCase,
    pub max_rel_error: f64,
    pub groups: Vec<GroupError>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub eps: f64,
    pub tolerance: f64,
    pub cases: Vec<CaseReport>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Random parameters with offsets and biases moved off zero so bilinear
/// samples avoid grid points and no unit sits on a ReLU kink.
///
/// Value projection biases stay zero. With a modality dropped, a nonzero
/// value bias turns that modality's value map into a constant, and the
/// attention offsets and weights reading it then matter only through the
/// zero padding at the border: gradients near 1e-8, below what central
/// differences resolve on a loss of order one.
pub fn check_params(config: ModelConfig, rng: &mut impl Rng) -> Result<FusionParams> {
    let mut p = FusionParams::init(config, rng)?;
    let noise = Normal::new(0.0, 0.3).expect("positive std");
    for (name, t) in p.tensors_mut() {
        if name.starts_with("proj.v_") {
            continue;
        }
        if name.ends_with(".offsets.weight") || name.ends_with(".bias") {
            t.iter_mut().for_each(|v| *v = noise.sample(rng));
        }
    }
    Ok(p)
}

/// Random patch samples with labels `0, 0, .., 1, 1, ..`.
pub fn random_batch(
    cfg: &GradCheckConfig,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<PatchSample>, Vec<usize>)> {
    let n = cfg.identities * cfg.samples_per_identity;
    let (ih, iw) = (cfg.h * patch, cfg.w * patch);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for id in 0..cfg.identities {
        for _ in 0..cfg.samples_per_identity {
            let rgb: Vec<f64> = (0..ih * iw * 3).map(|_| rng.random::<f64>()).collect();
            let depth: Vec<f64> = (0..ih * iw).map(|_| rng.random_range(0.5..2.0)).collect();
            samples.push(PatchSample::from_images(&rgb, &depth, cfg.h, cfg.w, patch)?);
            labels.push(id);
        }
    }
    Ok((samples, labels))
}

/// Checks sampled entries of every tensor for one dropout case applied to
/// the whole batch.
pub fn grad_check_case(
    params: &FusionParams,
    samples: &[PatchSample],
    labels: &[usize],
    case: DropoutCase,
    cfg: &GradCheckConfig,
    rng: &mut impl Rng,
) -> Result<CaseReport> {
    let refs: Vec<&PatchSample> = samples.iter().collect();
    let cases = vec![case; samples.len()];
    let opts = BatchOptions::default();
    let analytic = batch_loss_and_grad(params, &refs, labels, &cases, &opts)?.grad;
    if !analytic.all_finite() {
        return Err(FusionError::Numerical(format!("non-finite analytic gradient under {case:?}")));
    }
    let grads: Vec<(String, DMatrix<f64>)> = analytic.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let base_sig = piecewise_signature(params, &refs, labels, &cases, opts.margin)?;
    let mut groups: BTreeMap<String, (usize, f64, usize)> = BTreeMap::new();
    let mut probe = params.clone();
    for (ti, (name, g)) in grads.iter().enumerate() {
        let picks: Vec<usize> = if g.len() <= cfg.entries_per_tensor {
            (0..g.len()).collect()
        } else {
            sample(rng, g.len(), cfg.entries_per_tensor).into_vec()
        };
        let entry = groups.entry(group_of(name)).or_insert((0, 0.0, 0));
        for i in picks {
            let orig = probe.tensors()[ti].1[i];
            probe.tensors_mut()[ti].1[i] = orig + cfg.eps;
            let plus = batch_loss(&probe, &refs, labels, &cases, &opts)?.total;
            let sig_plus = piecewise_signature(&probe, &refs, labels, &cases, opts.margin)?;
            probe.tensors_mut()[ti].1[i] = orig - cfg.eps;
            let minus = batch_loss(&probe, &refs, labels, &cases, &opts)?.total;
            let sig_minus = piecewise_signature(&probe, &refs, labels, &cases, opts.margin)?;
            probe.tensors_mut()[ti].1[i] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                // the difference straddles a kink and says nothing about the derivative
                entry.2 += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            if !numeric.is_finite() {
                return Err(FusionError::Numerical(format!("non-finite difference for {name}[{i}]")));
            }
            entry.0 += 1;
            entry.1 = entry.1.max(relative_error(g[i], numeric));
        }
    }
    let groups: Vec<GroupError> = groups
        .into_iter()
        .map(|(group, (checked, max_rel_error, nonsmooth))| GroupError {
            group,
            checked,
            nonsmooth,
            max_rel_error,
            passed: max_rel_error < cfg.tolerance && checked > 0,
        })
        .collect();
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(CaseReport {
        case,
        max_rel_error,
        passed: groups.iter().all(|g| g.passed),
        groups,
    })
}

/// Runs the check under each of the three dropout cases on one random
/// model and batch.
pub fn grad_check(seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0) || cfg.identities < 2 || cfg.samples_per_identity < 2 {
        return Err(FusionError::Config(
            "need eps > 0 and at least 2 identities with 2 samples each".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ModelConfig::new(cfg.attention, cfg.identities);
    let params = check_params(model, &mut rng)?;
    let (samples, labels) = random_batch(cfg, model.patch, &mut rng)?;
    let cases = DropoutCase::ALL
        .iter()
        .map(|&case| grad_check_case(&params, &samples, &labels, case, cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        seed,
        eps: cfg.eps,
        tolerance: cfg.tolerance,
        passed: cases.iter().all(|c| c.passed),
        max_rel_error,
        cases,
    })
}
