use instloc_fusion::dropout::DropoutCase;
use instloc_fusion::gradcheck::{check_params, grad_check, random_batch, GradCheckConfig};
use instloc_fusion::model::{batch_loss_and_grad, BatchOptions, PatchSample};
use instloc_fusion::params::{AttentionConfig, FusionParams, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_group_passes_under_every_case() {
    let report = grad_check(7, &GradCheckConfig::default()).unwrap();
    for case in &report.cases {
        for g in &case.groups {
            assert!(g.passed, "{:?} {}: {:e}", case.case, g.group, g.max_rel_error);
        }
    }
    // entries straddling a bilinear or ReLU kink are skipped; they must stay rare
    let checked: usize = report.cases.iter().flat_map(|c| &c.groups).map(|g| g.checked).sum();
    let skipped: usize = report.cases.iter().flat_map(|c| &c.groups).map(|g| g.nonsmooth).sum();
    assert!(skipped * 20 < checked, "{skipped} of {}", checked + skipped);
    assert!(report.passed);
    assert!(report.max_rel_error < 1e-3);
}

fn setup(seed: u64) -> (FusionParams, Vec<PatchSample>, Vec<usize>) {
    let cfg = GradCheckConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = check_params(ModelConfig::new(AttentionConfig::default(), 2), &mut rng).unwrap();
    let (s, l) = random_batch(&cfg, 2, &mut rng).unwrap();
    (p, s, l)
}

#[test]
fn unused_depth_value_projection_gets_zero_gradient() {
    let (mut p, samples, labels) = setup(3);
    // with depth zeroed and no bias, v_D is identically zero
    p.v_depth.bias.fill(0.0);
    let refs: Vec<&PatchSample> = samples.iter().collect();
    let cases = vec![DropoutCase::RgbOnly; refs.len()];
    let g = batch_loss_and_grad(&p, &refs, &labels, &cases, &BatchOptions::default()).unwrap().grad;
    assert!(g.v_depth.weight.iter().all(|v| *v == 0.0));
    assert!(g.encoder_depth.weight.iter().all(|v| *v == 0.0));
    assert!(g.v_rgb.weight.iter().any(|v| *v != 0.0));
}

#[test]
fn doubling_the_loss_doubles_gradients() {
    let (p, samples, labels) = setup(4);
    let refs: Vec<&PatchSample> = samples.iter().collect();
    let cases = vec![DropoutCase::Both; refs.len()];
    let one = batch_loss_and_grad(&p, &refs, &labels, &cases, &BatchOptions::default()).unwrap();
    let opts = BatchOptions {
        loss_scale: 2.0,
        ..BatchOptions::default()
    };
    let two = batch_loss_and_grad(&p, &refs, &labels, &cases, &opts).unwrap();
    assert_eq!(two.loss.total, 2.0 * one.loss.total);
    for ((name, a), (_, b)) in one.grad.tensors().into_iter().zip(two.grad.tensors()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(2.0 * x, *y, "{name}");
        }
    }
}

#[test]
fn gradients_are_deterministic() {
    let (p, samples, labels) = setup(5);
    let refs: Vec<&PatchSample> = samples.iter().collect();
    let cases = vec![DropoutCase::Both, DropoutCase::RgbOnly, DropoutCase::DepthOnly, DropoutCase::Both];
    let a = batch_loss_and_grad(&p, &refs, &labels, &cases, &BatchOptions::default()).unwrap();
    let b = batch_loss_and_grad(&p, &refs, &labels, &cases, &BatchOptions::default()).unwrap();
    assert_eq!(a.grad, b.grad);
}
