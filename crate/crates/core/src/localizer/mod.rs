//! Query-frame localization against an object memory.

mod assignment;
mod config;
pub mod icp;
mod output;
mod overlap;
mod pipeline;
pub mod ransac;

pub use assignment::{
    assignment_distances, candidate_lists, enumerate_assignments, k_best_assignments, AssignmentCandidate,
    RankedAssignment, MIN_PAIRS, SCORE_FLOOR,
};
pub use config::RegistrationConfig;
pub use icp::{colored_icp, IcpOutcome};
pub use output::{
    load_predictions, read_predictions, save_predictions, write_predictions, PoseRecord, Prediction,
    PredictionStatus,
};
pub use overlap::{overlap, overlap_with_tree};
pub use pipeline::{
    detect_query_objects, localize, localize_frames, localize_tuples, register_candidates, transform_tuples, CandidateOutcome,
    PoseEstimate, PreparedMap, RegistrationCloud,
};
pub use ransac::{fit_rigid, ransac_feature_align, ransac_with_correspondences, RansacOutcome};
