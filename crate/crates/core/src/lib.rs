//! Rigid point-cloud pose estimation: weighted Kabsch, an iteratively refined
//! estimator built on linearized orthogonality constraints, derivative checks,
//! analysis diagnostics, evaluation metrics and a synthetic problem harness.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod kabsch;
pub mod metrics;
pub mod refiner;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    center, optimal_translation, CenteredCorrespondences, CorrespondenceSet, Point3, PointCloud, RigidTransform,
    Rotation,
};
pub use kabsch::{cross_covariance, estimate_pose_kabsch, kabsch_rotation, CrossCovariance};
pub use refiner::{
    assemble_kkt, assemble_rotation, refine, refine_rotation_step, solve_kkt, CandidateMatrix, KktSolution,
    KktSystem, RefinementTrace,
};
