use rayon::prelude::*;
use rigid_refine::diagnostics::divergence_report;
use rigid_refine::metrics::{augmented_loss, augmented_loss_for_poses, chamfer_distance, mean_point_distance, pose_error};
use rigid_refine::synth::{generate_problem, icp_baseline, LabeledProblem};
use rigid_refine::{center, estimate_pose_kabsch, refine, RigidTransform};

use crate::config::{ExperimentConfig, Method};
use crate::record::TrialRecord;

pub const THREADS_ENV: &str = "RIGID_REFINE_THREADS";
pub const ICP_MAX_ITERS: usize = 50;
pub const ICP_TOLERANCE: f64 = 1e-10;

/// Worker count from `RIGID_REFINE_THREADS`; `None` (hardware default) when unset, 0 or unparsable.
pub fn thread_count_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn score(
    config: &ExperimentConfig,
    problem: &LabeledProblem,
    record: &mut TrialRecord,
) -> rigid_refine::Result<()> {
    let c = &problem.correspondences;
    let kabsch = estimate_pose_kabsch(c)?;
    let (estimate, loss, divergence, fallbacks) = match config.method {
        Method::Kabsch => (kabsch, augmented_loss_for_poses(&[kabsch], &problem.gt), None, 0),
        Method::Refined => {
            let trace = refine(c, &kabsch, config.refinements)?;
            let divergence = config
                .report_diagnostics
                .then(|| divergence_report(&trace, &kabsch, &center(c)));
            (
                *trace.final_pose(),
                augmented_loss(&trace, &problem.gt),
                divergence.map(|d| d.divergence),
                trace.fallback_count(),
            )
        }
        Method::Icp => {
            let icp = icp_baseline(
                &problem.source_cloud,
                &problem.target_cloud,
                &RigidTransform::identity(),
                ICP_MAX_ITERS,
                ICP_TOLERANCE,
            )?;
            (icp.transform, augmented_loss_for_poses(&[icp.transform], &problem.gt), None, 0)
        }
    };

    let err = pose_error(&estimate, &problem.gt);
    record.iso_rot_deg = Some(err.rotation.iso_deg);
    record.aniso_z_deg = Some(err.rotation.aniso_deg.x);
    record.aniso_y_deg = Some(err.rotation.aniso_deg.y);
    record.aniso_x_deg = Some(err.rotation.aniso_deg.z);
    record.trans_l1 = Some(err.trans_l1);
    record.trans_l2 = Some(err.trans_l2);
    record.chamfer = Some(chamfer_distance(
        &problem.source_cloud.transformed(&estimate),
        &problem.target_cloud,
    ));
    record.mean_point_dist = Some(mean_point_distance(&problem.source_cloud, &estimate, &problem.gt));
    record.augmented_loss = Some(loss);
    record.divergence = divergence;
    record.fallback_count = Some(fallbacks);

    if config.report_diagnostics {
        // Kabsch trace of length one: only the unconstrained predictors are used here.
        let single = rigid_refine::RefinementTrace {
            poses: vec![kabsch],
            steps: Vec::new(),
        };
        let report = divergence_report(&single, &kabsch, &center(c));
        record.max_col_distance = report.max_col_distance;
        record.max_col_angle_deg = report.max_col_angle_deg;
        record.det_g_normalized = Some(report.det_g_normalized);
    }
    Ok(())
}

/// One trial: problem from `seed`, the configured method, metrics and diagnostics.
/// Failures are recorded in the row's status.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> TrialRecord {
    let mut record = TrialRecord::empty(seed, config.method, "ok".into());
    let outcome = generate_problem(&config.problem, seed).and_then(|p| score(config, &p, &mut record));
    match outcome {
        Ok(()) => record,
        Err(e) => TrialRecord::empty(seed, config.method, format!("error: {e}")),
    }
}

/// Trial `i` uses seed `problem.seed + i`; records come back in trial order
/// whatever the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Vec<TrialRecord> {
    run_experiment_with_threads(config, thread_count_from_env())
}

pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Vec<TrialRecord> {
    let work = || {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(config, config.problem.seed.wrapping_add(i)))
            .collect()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}
