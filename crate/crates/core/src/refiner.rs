//! Linearized-constraint rotation refinement.
//!
//! Each step linearizes the six independent orthogonality constraints
//! `c(R) = RᵀR − I` around the previous rotation, minimizes the weighted
//! correspondence cost under those linear constraints by solving the 15×15
//! KKT system, turns the (generally non-orthogonal) candidate back into a
//! rotation with the Gram-Schmidt assembler, and recomputes the translation.
//!
//! Vectorization is column-major throughout: `vec(M)[m + 3n] = M[(m, n)]`,
//! which is also nalgebra's storage order. The determinant constraint is
//! never imposed; once linearized around a rotation it is half the sum of
//! the three unit-norm constraints (see `diagnostics::determinant_redundancy_residual`).

use nalgebra::{linalg::LU, Matrix3, SMatrix, SVector, Vector3, Vector6, U15};

use crate::error::{Error, Result};
use crate::geometry::{center, CenteredCorrespondences, CorrespondenceSet, RigidTransform, Rotation};

pub type Vector9 = SVector<f64, 9>;
pub type Vector15 = SVector<f64, 15>;
pub type Matrix15 = SMatrix<f64, 15, 15>;

/// Refinements used by the experiment harness unless configured otherwise.
pub const DEFAULT_REFINEMENTS: usize = 5;

/// 1-norm condition estimate above which the KKT matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Smallest admissible denominator in the rotation assembler.
pub const ASSEMBLER_MIN_DENOMINATOR: f64 = 1e-9;

/// Upper-triangle pairs `(i, j)` in constraint order, walking column by column.
const CONSTRAINT_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];

/// One of the six independent orthogonality constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintIndex(usize);

impl ConstraintIndex {
    pub fn new(k: usize) -> Option<Self> {
        (k < 6).then_some(Self(k))
    }

    /// Constraint for entry `(i, j)` of `c(R)`, either triangle.
    pub fn from_pair(i: usize, j: usize) -> Option<Self> {
        let key = (i.min(j), i.max(j));
        CONSTRAINT_PAIRS.iter().position(|&p| p == key).map(Self)
    }

    pub fn all() -> impl Iterator<Item = ConstraintIndex> {
        (0..6).map(Self)
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// Zero-based `(row, column)` with `row <= column`.
    pub fn pair(self) -> (usize, usize) {
        CONSTRAINT_PAIRS[self.0]
    }

    /// `E^S_ij = e_i e_jᵀ + e_j e_iᵀ`.
    pub fn symmetric_basis(self) -> Matrix3<f64> {
        let (i, j) = self.pair();
        let mut e = Matrix3::zeros();
        e[(i, j)] += 1.0;
        e[(j, i)] += 1.0;
        e
    }
}

pub fn vec9(m: &Matrix3<f64>) -> Vector9 {
    Vector9::from_column_slice(m.as_slice())
}

pub fn unvec9(v: &Vector9) -> Matrix3<f64> {
    Matrix3::from_column_slice(v.as_slice())
}

/// Entry `k` of `c(R) = RᵀR − I`.
pub fn orthogonality_constraint(k: ConstraintIndex, r: &Matrix3<f64>) -> f64 {
    let (i, j) = k.pair();
    (r.transpose() * r - Matrix3::identity())[(i, j)]
}

/// First-order expansion of constraint `k` around `r_prev`:
/// `c_k(R_prev) + tr(E^S_k R_prevᵀ (R − R_prev))`.
pub fn linearized_constraint(k: ConstraintIndex, r: &Matrix3<f64>, r_prev: &Rotation) -> f64 {
    let rp = r_prev.matrix();
    orthogonality_constraint(k, rp) + (k.symmetric_basis() * rp.transpose() * (r - rp)).trace()
}

/// `[[A, B], [Bᵀ, 0]] [vec(R); λ] = [d_r; d_λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    pub a: SMatrix<f64, 9, 9>,
    pub b: SMatrix<f64, 9, 6>,
    pub d_r: Vector9,
    pub d_lambda: Vector6<f64>,
}

impl KktSystem {
    pub fn matrix(&self) -> Matrix15 {
        let mut k = Matrix15::zeros();
        k.fixed_view_mut::<9, 9>(0, 0).copy_from(&self.a);
        k.fixed_view_mut::<9, 6>(0, 9).copy_from(&self.b);
        k.fixed_view_mut::<6, 9>(9, 0).copy_from(&self.b.transpose());
        k
    }

    pub fn rhs(&self) -> Vector15 {
        let mut v = Vector15::zeros();
        v.fixed_rows_mut::<9>(0).copy_from(&self.d_r);
        v.fixed_rows_mut::<6>(9).copy_from(&self.d_lambda);
        v
    }
}

pub fn assemble_kkt(cc: &CenteredCorrespondences, r_prev: &Rotation) -> KktSystem {
    let scatter = cc.source_scatter();
    let rp = r_prev.matrix();

    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for n in 0..3 {
        for m in 0..3 {
            let mut e_mn = Matrix3::zeros();
            e_mn[(m, n)] = 1.0;
            a.set_row(m + 3 * n, &vec9(&(e_mn * scatter)).transpose());
        }
    }

    let mut b = SMatrix::<f64, 9, 6>::zeros();
    let mut d_lambda = Vector6::zeros();
    for k in ConstraintIndex::all() {
        let basis = k.symmetric_basis();
        b.set_column(k.index(), &vec9(&(rp * basis)));
        d_lambda[k.index()] = basis.trace() - orthogonality_constraint(k, rp);
    }

    KktSystem {
        a,
        b,
        d_r: vec9(&cc.target_source_covariance()),
        d_lambda,
    }
}

/// Output of the constrained step; not necessarily orthogonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateMatrix(pub Matrix3<f64>);

impl CandidateMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn column_norms(&self) -> Vector3<f64> {
        Vector3::new(
            self.0.column(0).norm(),
            self.0.column(1).norm(),
            self.0.column(2).norm(),
        )
    }
}

/// LU factorization (partial pivoting) of the full KKT matrix.
#[derive(Debug, Clone)]
pub struct KktFactorization {
    lu: LU<f64, U15, U15>,
    condition: f64,
}

impl KktFactorization {
    pub fn new(matrix: &Matrix15) -> Result<Self> {
        let lu = LU::new(*matrix);
        let inverse = lu
            .try_inverse()
            .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
        let condition = one_norm(matrix) * one_norm(&inverse);
        if condition.is_nan() || condition > CONDITION_LIMIT {
            return Err(Error::SingularSystem { condition });
        }
        Ok(Self { lu, condition })
    }

    /// 1-norm condition number `‖K‖₁ ‖K⁻¹‖₁`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, rhs: &Vector15) -> Vector15 {
        self.lu.solve(rhs).expect("factorization checked invertible")
    }
}

fn one_norm(m: &Matrix15) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub candidate: CandidateMatrix,
    pub lambda: Vector6<f64>,
    /// `‖K z − rhs‖ / ‖rhs‖`.
    pub relative_residual: f64,
    pub condition: f64,
}

pub fn solve_kkt(sys: &KktSystem) -> Result<KktSolution> {
    let matrix = sys.matrix();
    let factorization = KktFactorization::new(&matrix)?;
    Ok(solution_from(sys, &matrix, &factorization))
}

pub(crate) fn solution_from(sys: &KktSystem, matrix: &Matrix15, factorization: &KktFactorization) -> KktSolution {
    let rhs = sys.rhs();
    let z = factorization.solve(&rhs);
    let relative_residual = (matrix * z - rhs).norm() / rhs.norm();
    let r = Vector9::from_iterator(z.iter().take(9).copied());
    KktSolution {
        candidate: CandidateMatrix(unvec9(&r)),
        lambda: Vector6::from_iterator(z.iter().skip(9).copied()),
        relative_residual,
        condition: factorization.condition(),
    }
}

/// Gram-Schmidt on the first two columns, cross product for the third.
/// Column three of the input is ignored.
pub fn assemble_rotation(c: &CandidateMatrix) -> Result<Rotation> {
    let a = c.0.column(0).into_owned();
    let b = c.0.column(1).into_owned();
    let a_norm = a.norm();
    if a_norm.is_nan() || a_norm <= ASSEMBLER_MIN_DENOMINATOR {
        return Err(Error::CollinearColumns { denominator: a_norm });
    }
    let r1 = a / a_norm;
    let rejected = b - r1 * r1.dot(&b);
    let rejected_norm = rejected.norm();
    if rejected_norm.is_nan() || rejected_norm <= ASSEMBLER_MIN_DENOMINATOR {
        return Err(Error::CollinearColumns {
            denominator: rejected_norm,
        });
    }
    let r2 = rejected / rejected_norm;
    let r3 = r1.cross(&r2);
    Rotation::new(Matrix3::from_columns(&[r1, r2, r3]))
}

/// One full step: KKT solve around `r_prev`, then assembly.
pub fn refine_rotation_step(cc: &CenteredCorrespondences, r_prev: &Rotation) -> Result<(Rotation, KktSolution)> {
    let solution = solve_kkt(&assemble_kkt(cc, r_prev))?;
    let rotation = assemble_rotation(&solution.candidate)?;
    Ok((rotation, solution))
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Refined(KktSolution),
    /// The previous pose was repeated.
    Fallback(Error),
}

/// Pose sequence `poses[0] = init, …, poses[n_r]` with per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrace {
    pub poses: Vec<RigidTransform>,
    pub steps: Vec<StepOutcome>,
}

impl RefinementTrace {
    pub fn initial_pose(&self) -> &RigidTransform {
        &self.poses[0]
    }

    pub fn final_pose(&self) -> &RigidTransform {
        self.poses.last().expect("trace holds the initial pose")
    }

    pub fn refinements(&self) -> usize {
        self.steps.len()
    }

    pub fn fallback_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, StepOutcome::Fallback(_)))
            .count()
    }

    pub fn solutions(&self) -> impl Iterator<Item = &KktSolution> {
        self.steps.iter().filter_map(|s| match s {
            StepOutcome::Refined(sol) => Some(sol),
            StepOutcome::Fallback(_) => None,
        })
    }

    pub fn candidates(&self) -> impl Iterator<Item = &CandidateMatrix> {
        self.solutions().map(|s| &s.candidate)
    }

    /// Multipliers per step; `None` where the step fell back.
    pub fn lambdas(&self) -> Vec<Option<Vector6<f64>>> {
        self.steps
            .iter()
            .map(|s| match s {
                StepOutcome::Refined(sol) => Some(sol.lambda),
                StepOutcome::Fallback(_) => None,
            })
            .collect()
    }

    /// Relative KKT residual per step; NaN marks a fallback.
    pub fn kkt_residuals(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| match s {
                StepOutcome::Refined(sol) => sol.relative_residual,
                StepOutcome::Fallback(_) => f64::NAN,
            })
            .collect()
    }
}

pub fn refine(c: &CorrespondenceSet, init: &RigidTransform, n_r: usize) -> Result<RefinementTrace> {
    if n_r == 0 {
        return Err(Error::InvalidArgument("refinement count must be at least 1".into()));
    }
    let cc = center(c);
    let mut poses = Vec::with_capacity(n_r + 1);
    let mut steps = Vec::with_capacity(n_r);
    poses.push(*init);
    for _ in 0..n_r {
        let previous = *poses.last().expect("nonempty");
        match refine_rotation_step(&cc, &previous.rotation) {
            Ok((rotation, solution)) => {
                poses.push(RigidTransform::new(rotation, cc.translation_for(&rotation))?);
                steps.push(StepOutcome::Refined(solution));
            }
            Err(e @ (Error::SingularSystem { .. } | Error::CollinearColumns { .. })) => {
                poses.push(previous);
                steps.push(StepOutcome::Fallback(e));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RefinementTrace { poses, steps })
}
