use instloc_fusion::{
    apply_case, forward_fuse, AlphaMode, AttentionConfig, DropoutCase, FeatureMap, FusionParams, ModelConfig,
};
use instloc_fusion::gradcheck::check_params;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_map(h: usize, w: usize, e: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
    let n = Normal::new(0.0, 1.0).unwrap();
    FeatureMap::new(h, w, DMatrix::from_fn(h * w, e, |_, _| n.sample(rng))).unwrap()
}

fn params(seed: u64) -> FusionParams {
    FusionParams::init(
        ModelConfig::new(AttentionConfig::default(), 3),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

#[test]
fn alpha_one_is_mean_of_rgb_path() {
    let p = params(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (r, d) = (random_map(5, 6, 16, &mut rng), random_map(5, 6, 16, &mut rng));
    let out = forward_fuse(&r, &d, &p, AlphaMode::Fixed(1.0)).unwrap();
    for c in 0..16 {
        let mean = out.f_r.data.column(c).sum() / 30.0;
        assert_eq!(out.embedding[c], mean);
    }
}

#[test]
fn depth_perturbation_reaches_rgb_path() {
    // zero-initialised offsets put every sample on the reference cell,
    // where the query only reweights identical values
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = check_params(ModelConfig::new(AttentionConfig::default(), 3), &mut rng).unwrap();
    let (r, d) = (random_map(6, 6, 16, &mut rng), random_map(6, 6, 16, &mut rng));
    let base = forward_fuse(&r, &d, &p, AlphaMode::Learned).unwrap();
    let mut d2 = d.clone();
    d2.data[(7, 3)] += 0.5;
    let moved = forward_fuse(&r, &d2, &p, AlphaMode::Learned).unwrap();
    assert!((&moved.f_r.data - &base.f_r.data).abs().max() > 1e-6);
}

#[test]
fn dropped_modality_matches_explicit_zeros() {
    let p = params(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (r, d) = (random_map(4, 4, 16, &mut rng), random_map(4, 4, 16, &mut rng));
    let (dr, dd) = apply_case(&r, &d, DropoutCase::RgbOnly);
    assert!(dd.is_zero());
    assert_eq!(dr, r);
    let a = forward_fuse(&dr, &dd, &p, AlphaMode::Learned).unwrap();
    let b = forward_fuse(&r, &FeatureMap::zeros(4, 4, 16), &p, AlphaMode::Learned).unwrap();
    assert_eq!(a.embedding, b.embedding);
    assert_eq!(a.alpha, b.alpha);
}

#[test]
fn shape_mismatch_is_rejected() {
    let p = params(7);
    let r = FeatureMap::zeros(4, 4, 16);
    assert!(forward_fuse(&r, &FeatureMap::zeros(4, 5, 16), &p, AlphaMode::Learned).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn embedding_dim_and_alpha_range(h in 1usize..7, w in 1usize..7, seed in 0u64..1000) {
        let p = params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let (r, d) = (random_map(h, w, 16, &mut rng), random_map(h, w, 16, &mut rng));
        let out = forward_fuse(&r, &d, &p, AlphaMode::Learned).unwrap();
        prop_assert_eq!(out.embedding.len(), 16);
        prop_assert_eq!(out.alpha.len(), h * w);
        prop_assert!(out.alpha.iter().all(|a| *a > 0.0 && *a < 1.0));
        prop_assert!(out.embedding.iter().all(|v| v.is_finite()));
    }
}
