//! Analysis quantities around the refiner: the unconstrained least-squares
//! solution and its distance to Kabsch, divergence of refined rotations,
//! constraint-gradient rank, the determinant-constraint redundancy identity
//! and assembler singularity margins.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{center, CenteredCorrespondences, RigidTransform, Rotation};
use crate::kabsch::estimate_pose_kabsch;
use crate::refiner::{refine, CandidateMatrix, RefinementTrace, DEFAULT_REFINEMENTS};
use crate::synth::{generate_problem, ProblemSpec};

/// `det(G) / ‖G‖_F³` at or below which `G` is treated as singular.
pub const NEAR_SINGULAR_G: f64 = 1e-10;
/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Column-1/column-2 angle (radians) below which a candidate is flagged.
pub const COLLINEARITY_FLAG_RAD: f64 = 1e-7;

/// Divergence envelope `D ≤ ENVELOPE_ALPHA · max_col_distance + ENVELOPE_BETA`,
/// fit by `examples/calibrate_envelope.rs` on [`ENVELOPE_SEED`].
pub const ENVELOPE_ALPHA: f64 = 1.1367270844240013e-13;
pub const ENVELOPE_BETA: f64 = 2.5698419502940202e-14;
pub const ENVELOPE_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedSolution {
    /// `G⁻¹F`, absent when `G` is near singular.
    pub r_u: Option<Matrix3<f64>>,
    /// `Σ w p̃_t p̃_tᵀ`
    pub g: Matrix3<f64>,
    /// `Σ w p̃_t p̃_sᵀ`
    pub f: Matrix3<f64>,
    pub det_g: f64,
    /// `det(G) / ‖G‖_F³`, 0 for `G = 0`.
    pub det_g_normalized: f64,
}

impl UnconstrainedSolution {
    pub fn require_r_u(&self) -> Result<&Matrix3<f64>> {
        self.r_u.as_ref().ok_or(Error::NearSingularG {
            normalized_det: self.det_g_normalized,
        })
    }
}

/// Least-squares fit of an unconstrained linear map, each column solved on
/// its own. Its columns share a frame with the Kabsch rotation's: exact data
/// `p̃_t = R p̃_s` gives `r_u = R`.
pub fn unconstrained_solution(cc: &CenteredCorrespondences) -> UnconstrainedSolution {
    let g = cc.target_scatter();
    let f = cc.target_source_covariance();
    let det_g = g.determinant();
    let scale = g.norm().powi(3);
    let det_g_normalized = if scale > 0.0 { det_g / scale } else { 0.0 };
    let r_u = if det_g_normalized > NEAR_SINGULAR_G {
        g.cholesky().map(|ch| ch.solve(&f))
    } else {
        None
    };
    UnconstrainedSolution {
        r_u,
        g,
        f,
        det_g,
        det_g_normalized,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// `Σ_{i≥1} ‖R_i − R_K‖_F`
    pub divergence: f64,
    /// `‖R_i − R_K‖_F` for refinement steps `i = 1..=N_r`.
    pub per_iteration: Vec<f64>,
    /// `max_i ‖r_u,i − r_K,i‖`, absent when `G` is near singular.
    pub max_col_distance: Option<f64>,
    /// Largest angle between matching columns of `r_u` and `R_K`, as lines.
    pub max_col_angle_deg: Option<f64>,
    pub det_g: f64,
    pub det_g_normalized: f64,
}

/// Angle between the lines spanned by `a` and `b`, `acos(|a·b| / (|a||b|))`,
/// evaluated with `atan2` so that it stays accurate near 0.
pub fn line_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

pub fn divergence_report(
    trace: &RefinementTrace,
    kabsch_pose: &RigidTransform,
    cc: &CenteredCorrespondences,
) -> DivergenceReport {
    let r_k = kabsch_pose.rotation.matrix();
    let per_iteration: Vec<f64> = trace
        .poses
        .iter()
        .skip(1)
        .map(|p| (p.rotation.matrix() - r_k).norm())
        .collect();
    let unconstrained = unconstrained_solution(cc);
    let columns = |f: &dyn Fn(Vector3<f64>, Vector3<f64>) -> f64| {
        unconstrained.r_u.map(|r_u| {
            (0..3)
                .map(|i| f(r_u.column(i).into_owned(), r_k.column(i).into_owned()))
                .fold(0.0, f64::max)
        })
    };
    DivergenceReport {
        divergence: per_iteration.iter().sum(),
        max_col_distance: columns(&|u, k| (u - k).norm()),
        max_col_angle_deg: columns(&|u, k| line_angle(&u, &k).to_degrees()),
        per_iteration,
        det_g: unconstrained.det_g,
        det_g_normalized: unconstrained.det_g_normalized,
    }
}

/// Gradients of the six orthogonality constraints at `m` with respect to
/// `vec(m)`, one column per constraint in the refiner's constraint order.
pub fn constraint_gradients(m: &Matrix3<f64>) -> SMatrix<f64, 9, 6> {
    let r = [m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned()];
    let pairs = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];
    let mut c = SMatrix::<f64, 9, 6>::zeros();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        // ∂(r_iᵀ r_j)/∂r_i = r_j and ∂/∂r_j = r_i
        let mut gi = c.fixed_view_mut::<3, 1>(3 * i, k);
        gi += r[j];
        let mut gj = c.fixed_view_mut::<3, 1>(3 * j, k);
        gj += r[i];
    }
    c
}

pub fn constraint_gradient_rank(m: &Matrix3<f64>) -> usize {
    let sv = constraint_gradients(m).singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Numerical rank of the constraint gradients; 6 for every rotation.
pub fn licq_check(r_prev: &Rotation) -> usize {
    constraint_gradient_rank(r_prev.matrix())
}

/// `|c_d⁽¹⁾ − ½ Σᵢ c_nᵢ⁽¹⁾|`: the linearized determinant constraint against
/// half the sum of the linearized column-norm constraints, both taken at `r_prev`.
pub fn determinant_redundancy_residual(r: &Matrix3<f64>, r_prev: &Rotation) -> f64 {
    let p = r_prev.matrix();
    let col = |m: &Matrix3<f64>, i: usize| m.column(i).into_owned();
    let (p1, p2, p3) = (col(p, 0), col(p, 1), col(p, 2));
    let d = r - p;
    let det_linearized = p.determinant() - 1.0
        + p2.cross(&p3).dot(&col(&d, 0))
        + p3.cross(&p1).dot(&col(&d, 1))
        + p1.cross(&p2).dot(&col(&d, 2));
    let norms_linearized: f64 = (0..3)
        .map(|i| {
            let pi = col(p, i);
            pi.norm_squared() - 1.0 + 2.0 * pi.dot(&col(&d, i))
        })
        .sum();
    (det_linearized - 0.5 * norms_linearized).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityMargin {
    pub min_col_norm: f64,
    /// Angle between the lines of columns 1 and 2, in `[0, π/2]`.
    pub col12_angle_rad: f64,
}

impl SingularityMargin {
    pub fn flagged(&self) -> bool {
        self.col12_angle_rad < COLLINEARITY_FLAG_RAD
    }
}

pub fn singularity_margin(c: &CandidateMatrix) -> SingularityMargin {
    let m = c.matrix();
    SingularityMargin {
        min_col_norm: c.column_norms().min(),
        col12_angle_rad: line_angle(&m.column(0).into_owned(), &m.column(1).into_owned()),
    }
}

/// Upper envelope `(α, β)` over `(max_col_distance, D)` samples: least-squares
/// slope (clamped at 0), intercept raised until every sample lies under the
/// line, both doubled for headroom.
pub fn fit_envelope(samples: &[(f64, f64)]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let intercept = samples
        .iter()
        .map(|s| s.1 - slope * s.0)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    (2.0 * slope, 2.0 * intercept)
}

pub fn envelope_bound(max_col_distance: f64) -> f64 {
    ENVELOPE_ALPHA * max_col_distance + ENVELOPE_BETA
}

/// Well-conditioned regime the envelope is calibrated on: uniform-ball clouds
/// with clamped source noise and 70% crops.
pub fn envelope_calibration_spec() -> ProblemSpec {
    ProblemSpec {
        n_points: 256,
        noise_sigma: 0.01,
        crop_keep_fraction: 0.7,
        ..ProblemSpec::default()
    }
}

/// `(max_col_distance, D)` for trial seeds `seed..seed + trials` of `spec`,
/// with Kabsch init and [`DEFAULT_REFINEMENTS`] steps. Trials whose
/// unconstrained solution is unavailable are skipped.
pub fn divergence_samples(spec: &ProblemSpec, seed: u64, trials: u64) -> Result<Vec<(f64, f64)>> {
    let mut samples = Vec::with_capacity(trials as usize);
    for i in 0..trials {
        let problem = generate_problem(spec, seed + i)?;
        let c = &problem.correspondences;
        let kabsch = estimate_pose_kabsch(c)?;
        let trace = refine(c, &kabsch, DEFAULT_REFINEMENTS)?;
        let report = divergence_report(&trace, &kabsch, &center(c));
        if let Some(distance) = report.max_col_distance {
            samples.push((distance, report.divergence));
        }
    }
    Ok(samples)
}
