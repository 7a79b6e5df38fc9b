use instloc_fusion::{toy_train, ToyConfig};

#[test]
fn toy_identities_are_learned() {
    let (params, report) = toy_train(&ToyConfig::default(), 11).unwrap();
    assert!(params.all_finite());
    assert!(report.final_loss < report.initial_loss);
    assert_eq!(report.fused.rank1, 1.0, "{report:?}");
    assert!(report.fused.map >= 0.99, "{report:?}");
    assert!(report.rgb_only.rank1 >= 0.875, "{report:?}");
    assert!(report.depth_only.rank1 >= 0.875, "{report:?}");
}

#[test]
fn training_is_deterministic() {
    let cfg = ToyConfig {
        steps: 10,
        ..ToyConfig::default()
    };
    let (_, a) = toy_train(&cfg, 3).unwrap();
    let (_, b) = toy_train(&cfg, 3).unwrap();
    assert_eq!(a.final_loss, b.final_loss);
    assert_eq!(a.step_losses, b.step_losses);
}
