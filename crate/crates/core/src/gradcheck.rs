//! Jacobians of pose estimates with respect to the raw correspondences.
//!
//! Inputs are flattened as `[source xyz (3N) | target xyz (3N) | weights (N)]`
//! and outputs as `[vec(R) column-major (9) | t (3)]`.

use nalgebra::{DMatrix, Matrix3, SVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{center, CenteredCorrespondences, CorrespondenceSet, PointCloud, RigidTransform, Rotation};
use crate::kabsch::{cross_covariance, estimate_pose_kabsch, kabsch_rotation};
use crate::refiner::{
    assemble_kkt, assemble_rotation, solution_from, solve_kkt, vec9, KktFactorization, Vector15,
    ASSEMBLER_MIN_DENOMINATOR,
};
use crate::synth::{random_rotation, uniform_ball, SynthRng};

pub const OUTPUTS: usize = 12;
pub const FD_STEP: f64 = 1e-6;
pub const REL_TOLERANCE: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-8;
/// Smallest singular-value gap of `H`, relative to `σ_max`, for which the
/// Kabsch Jacobian is reported.
pub const KABSCH_GAP_GATE: f64 = 1e-6;

pub type PoseVector = SVector<f64, OUTPUTS>;

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    matrix: DMatrix<f64>,
    n_points: usize,
}

impl Jacobian {
    pub fn zeros(n_points: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(OUTPUTS, 7 * n_points),
            n_points,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn source_column(&self, point: usize, axis: usize) -> usize {
        3 * point + axis
    }

    pub fn target_column(&self, point: usize, axis: usize) -> usize {
        3 * (self.n_points + point) + axis
    }

    pub fn weight_column(&self, point: usize) -> usize {
        6 * self.n_points + point
    }

    /// Directional derivative of the pose along an input perturbation.
    pub fn apply(&self, direction: &[f64]) -> PoseVector {
        assert_eq!(direction.len(), self.matrix.ncols());
        let mut out = PoseVector::zeros();
        for (j, d) in direction.iter().enumerate() {
            if *d != 0.0 {
                out += self.matrix.column(j) * *d;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|v| v.is_finite())
    }
}

pub fn pose_vector(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> PoseVector {
    let mut v = PoseVector::zeros();
    v.fixed_rows_mut::<9>(0).copy_from(&vec9(rotation));
    v.fixed_rows_mut::<3>(9).copy_from(translation);
    v
}

pub fn rotation_part(v: &PoseVector) -> Matrix3<f64> {
    Matrix3::from_column_slice(v.fixed_rows::<9>(0).as_slice())
}

pub fn flatten_inputs(c: &CorrespondenceSet) -> Vec<f64> {
    let mut x = Vec::with_capacity(7 * c.len());
    x.extend(c.source().iter().flat_map(|p| p.iter().copied()));
    x.extend(c.target().iter().flat_map(|p| p.iter().copied()));
    x.extend_from_slice(c.weights());
    x
}

pub fn unflatten_inputs(x: &[f64], n: usize) -> Result<CorrespondenceSet> {
    if x.len() != 7 * n {
        return Err(Error::InvalidArgument(format!("expected {} inputs, got {}", 7 * n, x.len())));
    }
    let cloud = |block: &[f64]| PointCloud::new(block.chunks_exact(3).map(Vector3::from_column_slice).collect());
    CorrespondenceSet::new(cloud(&x[..3 * n])?, cloud(&x[3 * n..6 * n])?, x[6 * n..].to_vec())
}

/// Pose after one refinement step from `r_prev`.
pub fn refine_step_pose(c: &CorrespondenceSet, r_prev: &Rotation) -> Result<PoseVector> {
    let cc = center(c);
    let (rotation, _) = crate::refiner::refine_rotation_step(&cc, r_prev)?;
    Ok(pose_vector(rotation.matrix(), &cc.translation_for(&rotation)))
}

/// Pose from Kabsch with its optimal translation.
pub fn kabsch_pose(c: &CorrespondenceSet) -> Result<PoseVector> {
    let cc = center(c);
    let rotation = kabsch_rotation(&cross_covariance(&cc))?;
    Ok(pose_vector(rotation.matrix(), &cc.translation_for(&rotation)))
}

/// Central differences of `f` with respect to every input, probes in input order.
pub fn finite_difference_jacobian(
    c: &CorrespondenceSet,
    step: f64,
    f: impl Fn(&CorrespondenceSet) -> Result<PoseVector>,
) -> Result<Jacobian> {
    let n = c.len();
    let x = flatten_inputs(c);
    let mut jac = Jacobian::zeros(n);
    for j in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += step;
        minus[j] -= step;
        let fp = f(&unflatten_inputs(&plus, n)?)?;
        let fm = f(&unflatten_inputs(&minus, n)?)?;
        jac.matrix.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    Ok(jac)
}

/// First-order change of the inputs to one step for a single input direction.
struct Perturbation {
    d_s: Matrix3<f64>,
    d_h: Matrix3<f64>,
    d_source_mean: Vector3<f64>,
    d_target_mean: Vector3<f64>,
}

fn perturbations(cc: &CenteredCorrespondences) -> Vec<Perturbation> {
    let n = cc.len();
    let total = cc.weight_sum();
    let mut out = Vec::with_capacity(7 * n);
    // Centered sums have zero weighted mean, so mean shifts drop out of S and H.
    for j in 0..n {
        let (w, ps, pt) = (cc.weights[j], cc.source_centered.points()[j], cc.target_centered.points()[j]);
        for axis in 0..3 {
            let e = Vector3::ith(axis, 1.0);
            out.push(Perturbation {
                d_s: (e * ps.transpose() + ps * e.transpose()) * w,
                d_h: pt * e.transpose() * w,
                d_source_mean: e * (w / total),
                d_target_mean: Vector3::zeros(),
            });
        }
    }
    for j in 0..n {
        let (w, ps) = (cc.weights[j], cc.source_centered.points()[j]);
        for axis in 0..3 {
            let e = Vector3::ith(axis, 1.0);
            out.push(Perturbation {
                d_s: Matrix3::zeros(),
                d_h: e * ps.transpose() * w,
                d_source_mean: Vector3::zeros(),
                d_target_mean: e * (w / total),
            });
        }
    }
    for j in 0..n {
        let (ps, pt) = (cc.source_centered.points()[j], cc.target_centered.points()[j]);
        out.push(Perturbation {
            d_s: ps * ps.transpose(),
            d_h: pt * ps.transpose(),
            d_source_mean: ps / total,
            d_target_mean: pt / total,
        });
    }
    out
}

/// Differential of the Gram-Schmidt assembler at `c` along `dc`.
pub fn assembler_tangent(c: &Matrix3<f64>, dc: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let (a, b) = (c.column(0).into_owned(), c.column(1).into_owned());
    let (da, db) = (dc.column(0).into_owned(), dc.column(1).into_owned());
    let a_norm = a.norm();
    if a_norm <= ASSEMBLER_MIN_DENOMINATOR {
        return Err(Error::CollinearColumns { denominator: a_norm });
    }
    let r1 = a / a_norm;
    let dr1 = (da - r1 * r1.dot(&da)) / a_norm;
    let u = b - r1 * r1.dot(&b);
    let du = db - dr1 * r1.dot(&b) - r1 * (dr1.dot(&b) + r1.dot(&db));
    let u_norm = u.norm();
    if u_norm <= ASSEMBLER_MIN_DENOMINATOR {
        return Err(Error::CollinearColumns { denominator: u_norm });
    }
    let r2 = u / u_norm;
    let dr2 = (du - r2 * r2.dot(&du)) / u_norm;
    let dr3 = dr1.cross(&r2) + r1.cross(&dr2);
    Ok(Matrix3::from_columns(&[dr1, dr2, dr3]))
}

/// Analytic Jacobian of one refinement step: implicit differentiation of the
/// KKT system (reusing its factorization), then the assembler and the
/// optimal translation.
pub fn jacobian_refine_step(cc: &CenteredCorrespondences, r_prev: &Rotation) -> Result<Jacobian> {
    let sys = assemble_kkt(cc, r_prev);
    let matrix = sys.matrix();
    let factorization = KktFactorization::new(&matrix)?;
    let solution = solution_from(&sys, &matrix, &factorization);
    let candidate = solution.candidate.0;
    let rotation = assemble_rotation(&solution.candidate)?;
    let r = rotation.matrix();

    let mut jac = Jacobian::zeros(cc.len());
    for (j, p) in perturbations(cc).iter().enumerate() {
        // K dz = d(rhs) − dK z, where only A = S ⊗ I and d_r = vec(H) move.
        let mut rhs = Vector15::zeros();
        rhs.fixed_rows_mut::<9>(0)
            .copy_from(&vec9(&(p.d_h - candidate * p.d_s)));
        let dz = factorization.solve(&rhs);
        let d_candidate = Matrix3::from_column_slice(dz.fixed_rows::<9>(0).as_slice());
        let d_r = assembler_tangent(&candidate, &d_candidate)?;
        let d_t = p.d_target_mean - d_r * cc.source_mean - r * p.d_source_mean;
        jac.matrix.set_column(j, &pose_vector(&d_r, &d_t));
    }
    Ok(jac)
}

pub fn kabsch_singular_gap(cc: &CenteredCorrespondences) -> (f64, f64) {
    let sv = cross_covariance(cc).singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    ((s[0] - s[1]).min(s[1] - s[2]), s[0])
}

/// Finite-difference Jacobian of the Kabsch pose. Refused with
/// `IllConditioned` when two singular values of `H` are closer than
/// [`KABSCH_GAP_GATE`]` · σ_max`, where the SVD derivative blows up.
pub fn jacobian_kabsch(cc: &CenteredCorrespondences) -> Result<Jacobian> {
    jacobian_kabsch_with_step(cc, FD_STEP)
}

pub fn jacobian_kabsch_with_step(cc: &CenteredCorrespondences, step: f64) -> Result<Jacobian> {
    let (gap, sigma_max) = kabsch_singular_gap(cc);
    if gap.is_nan() || gap < KABSCH_GAP_GATE * sigma_max {
        return Err(Error::IllConditioned { gap });
    }
    finite_difference_jacobian(&cc.to_correspondences()?, step, kabsch_pose)
}

/// Noisy weighted problem of `n` points plus a linearization rotation a
/// few degrees off the Kabsch estimate: the standard gradcheck input.
pub fn gradcheck_problem(seed: u64, n: usize) -> Result<(CorrespondenceSet, Rotation)> {
    let mut rng = SynthRng::new(seed);
    let source = uniform_ball(n, &mut rng);
    let gt = RigidTransform::new(random_rotation(&mut rng), Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * 0.3)?;
    let target: Vec<_> = source
        .iter()
        .map(|p| gt.apply(p) + Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * 0.02)
        .collect();
    let weights = (0..n).map(|_| rng.uniform_in(0.5, 1.5)).collect();
    let c = CorrespondenceSet::new(source, PointCloud::new(target)?, weights)?;
    let kabsch = estimate_pose_kabsch(&c)?.rotation;
    let nudge = Rotation::from_euler_zyx(
        rng.uniform_in(-0.2, 0.2),
        rng.uniform_in(-0.2, 0.2),
        rng.uniform_in(-0.2, 0.2),
    );
    Ok((c, kabsch * nudge))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOutcome {
    pub comparison: JacobianComparison,
    pub condition: f64,
}

/// Analytic refinement-step Jacobian against central differences on
/// [`gradcheck_problem`]`(seed, n)`.
pub fn run_gradcheck(seed: u64, n: usize) -> Result<GradcheckOutcome> {
    let (c, r_prev) = gradcheck_problem(seed, n)?;
    let cc = center(&c);
    let condition = solve_kkt(&assemble_kkt(&cc, &r_prev))?.condition;
    let analytic = jacobian_refine_step(&cc, &r_prev)?;
    let numeric = finite_difference_jacobian(&c, FD_STEP, |c| refine_step_pose(c, &r_prev))?;
    Ok(GradcheckOutcome {
        comparison: compare_jacobians(&analytic, &numeric, ABS_FLOOR),
        condition,
    })
}

/// Points `±a e₁, ±b e₂, ±c e₃` matched to themselves with `z` negated:
/// `H = diag(2a², 2b², −2c²)`, Kabsch returns the identity, and its
/// sensitivity grows like `1 / (b² − c²)`.
pub fn reflected_axes_problem(a: f64, b: f64, c: f64) -> Result<CorrespondenceSet> {
    let source = [[a, 0.0, 0.0], [-a, 0.0, 0.0], [0.0, b, 0.0], [0.0, -b, 0.0], [0.0, 0.0, c], [0.0, 0.0, -c]];
    let target: Vec<[f64; 3]> = source.iter().map(|p| [p[0], p[1], -p[2]]).collect();
    CorrespondenceSet::with_unit_weights(PointCloud::from_xyz(&source)?, PointCloud::from_xyz(&target)?)
}

/// Largest absolute entry among the rotation rows.
pub fn max_rotation_sensitivity(jac: &Jacobian) -> f64 {
    jac.matrix.rows(0, 9).amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianComparison {
    pub max_abs_error: f64,
    /// Largest `|a − f| / max(|a|, |f|)` over entries differing by more than `abs_floor`.
    pub max_rel_error: f64,
    pub worst_entry: (usize, usize),
    /// Largest relative error over entries with `max(|a|, |f|) ≥ SIGNIFICANT_MAGNITUDE`; reported, not gated.
    pub max_rel_error_significant: f64,
}

pub const SIGNIFICANT_MAGNITUDE: f64 = 1e-3;

impl JacobianComparison {
    pub fn passes(&self, rel_tolerance: f64) -> bool {
        self.max_rel_error <= rel_tolerance
    }
}

/// Entrywise agreement: `|a − f| ≤ abs_floor` or relative error as above.
pub fn compare_jacobians(analytic: &Jacobian, numeric: &Jacobian, abs_floor: f64) -> JacobianComparison {
    assert_eq!(analytic.matrix.shape(), numeric.matrix.shape());
    let mut cmp = JacobianComparison {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_entry: (0, 0),
        max_rel_error_significant: 0.0,
    };
    for j in 0..analytic.matrix.ncols() {
        for i in 0..OUTPUTS {
            let (a, f) = (analytic.matrix[(i, j)], numeric.matrix[(i, j)]);
            let err = (a - f).abs();
            cmp.max_abs_error = cmp.max_abs_error.max(err);
            let scale = a.abs().max(f.abs());
            if scale >= SIGNIFICANT_MAGNITUDE {
                cmp.max_rel_error_significant = cmp.max_rel_error_significant.max(err / scale);
            }
            if err > abs_floor {
                let rel = err / a.abs().max(f.abs());
                if rel > cmp.max_rel_error {
                    cmp.max_rel_error = rel;
                    cmp.worst_entry = (i, j);
                }
            }
        }
    }
    cmp
}
