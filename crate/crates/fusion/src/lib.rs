//! Desk-scale dual-path RGB-D fusion.
//!
//! Two encoder feature maps (RGB and depth, `H x W x E`) are refined by four
//! deformable attention blocks, mixed per position by a small convolutional
//! weighting network and average-pooled into an embedding. Every operation
//! has a hand-written backward pass, checked against finite differences in
//! [`gradcheck`]. A fixed random linear patch projection stands in for the
//! image backbone.
//!
//! ```
//! use instloc_fusion::{forward_fuse, AlphaMode, FeatureMap, FusionParams, ModelConfig, AttentionConfig};
//! use rand::SeedableRng;
//!
//! let cfg = ModelConfig::new(AttentionConfig::default(), 4);
//! let params = FusionParams::init(cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
//! let rgb = FeatureMap::zeros(8, 8, 16);
//! let depth = FeatureMap::zeros(8, 8, 16);
//! let out = forward_fuse(&rgb, &depth, &params, AlphaMode::Learned).unwrap();
//! assert_eq!(out.embedding.len(), 16);
//! assert!(out.embedding.iter().all(|v| *v == 0.0));
//! ```

pub mod adam;
pub mod attention;
pub mod dropout;
mod error;
mod feature_map;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod toy;
pub mod weighting;

pub use adam::{Adam, AdamConfig};
pub use attention::{attention_backward, attention_forward, deformable_attention, AttentionCache};
pub use dropout::{apply_case, modality_dropout, DropoutCase, DropoutConfig};
pub use error::{FusionError, Result};
pub use feature_map::FeatureMap;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use io::{load_params, save_params};
pub use loss::{batch_hard_triplet, cross_entropy, losses, LossValues, DEFAULT_MARGIN};
pub use metrics::{mean_average_precision, rank1_accuracy};
pub use model::{
    batch_loss, batch_loss_and_grad, embed, piecewise_signature, encode, forward_fuse, fuse_backward, fuse_forward_cached, AlphaMode,
    BatchOptions, BatchResult, FuseOutput, PatchSample,
};
pub use params::{AttentionConfig, AttentionParams, FusionParams, Linear, ModelConfig, WeightingParams};
pub use toy::{toy_train, ToyConfig, ToyReport};
pub use weighting::{weighting_forward, WeightingCache};
