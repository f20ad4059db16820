//! Synthetic cohorts, course seeding, and offline evaluation.

mod evaluate;
mod generator;
mod oracle;
mod seed;

pub use evaluate::{
    auc, evaluate_kt, evaluate_kt_events, evaluate_peers, evaluate_peers_state, open_log, read_events,
    same_recommendations, EvaluateError, EvaluationReport, ORACLE_MAX_USERS,
};
pub use generator::{
    generate_cohort, holdout_pairs, holdout_path, student_id, write_cohort, CohortSpec, GenerateError, GeneratedCohort,
    GroundTruthModel, GroundTruthParams, SpecError, INSTRUCTOR, SIM_EPOCH,
};
pub use oracle::{brute_force_recommendations, constraint_violations, provide_violations, random_peer_cohort};
pub use seed::{parse_seed_file, seed_course, RejectedRow, SeedError, SeedFile, SeedQuestion, SeedReport};
