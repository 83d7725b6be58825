//! Geometric primitives shared by every estimator: point clouds, weighted
//! correspondences, validated rotations and rigid transforms, plus the
//! weighted centering that factors translation out of the registration cost.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Frobenius tolerance on `mᵀm − I` and on `det(m) − 1` for a [`Rotation`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ordered, nonempty set of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn transformed(&self, transform: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
        }
    }

    /// Largest distance of any point from the origin.
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Point3 {
        self.points.iter().sum::<Point3>() / self.points.len() as f64
    }
}

/// Paired source/target points with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    source: PointCloud,
    target: PointCloud,
    weights: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn new(source: PointCloud, target: PointCloud, weights: Vec<f64>) -> Result<Self> {
        if source.len() != target.len() || source.len() != weights.len() {
            return Err(Error::LengthMismatch {
                source_len: source.len(),
                target_len: target.len(),
                weight_len: weights.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidWeight { index, value });
        }
        Ok(Self {
            source,
            target,
            weights,
        })
    }

    pub fn with_unit_weights(source: PointCloud, target: PointCloud) -> Result<Self> {
        let weights = vec![1.0; source.len()];
        Self::new(source, target, weights)
    }

    pub fn source(&self) -> &PointCloud {
        &self.source
    }

    pub fn target(&self) -> &PointCloud {
        &self.target
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn source_mean(&self) -> Point3 {
        weighted_mean(self.source.points(), &self.weights)
    }

    pub fn target_mean(&self) -> Point3 {
        weighted_mean(self.target.points(), &self.weights)
    }

    /// `Σ w_i ‖p_t,i − R p_s,i − t‖²`.
    pub fn weighted_cost(&self, transform: &RigidTransform) -> f64 {
        self.source
            .iter()
            .zip(self.target.iter())
            .zip(&self.weights)
            .map(|((ps, pt), w)| w * (pt - transform.apply(ps)).norm_squared())
            .sum()
    }
}

/// A 3×3 proper orthogonal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        let finite = m.iter().all(|v| v.is_finite());
        if !finite
            || orthogonality.is_nan() || orthogonality > ROTATION_TOLERANCE
            || det.is_nan() || (det - 1.0).abs() > ROTATION_TOLERANCE
        {
            return Err(Error::NotARotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Intrinsic z → y → x composition `R_z(z) R_y(y) R_x(x)`, angles in radians.
    pub fn from_euler_zyx(z: f64, y: f64, x: f64) -> Self {
        Self::about_z(z) * Self::about_y(y) * Self::about_x(x)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Chordal distance `‖self − other‖_F`.
    pub fn chordal_distance(&self, other: &Rotation) -> f64 {
        (self.0 - other.0).norm()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Point3> for &Rotation {
    type Output = Point3;

    fn mul(self, rhs: &Point3) -> Point3 {
        self.0 * rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Result<Self> {
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation.matrix() * p + self.translation
    }
}

/// Mean-subtracted correspondences together with the weighted means that were removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredCorrespondences {
    pub source_centered: PointCloud,
    pub target_centered: PointCloud,
    pub source_mean: Point3,
    pub target_mean: Point3,
    pub weights: Vec<f64>,
}

impl CenteredCorrespondences {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i p̃_s,i p̃_s,iᵀ`.
    pub fn source_scatter(&self) -> Matrix3<f64> {
        weighted_outer_sum(
            self.source_centered.points(),
            self.source_centered.points(),
            &self.weights,
        )
    }

    /// `Σ w_i p̃_t,i p̃_t,iᵀ`.
    pub fn target_scatter(&self) -> Matrix3<f64> {
        weighted_outer_sum(
            self.target_centered.points(),
            self.target_centered.points(),
            &self.weights,
        )
    }

    /// `Σ w_i p̃_t,i p̃_s,iᵀ`.
    pub fn target_source_covariance(&self) -> Matrix3<f64> {
        weighted_outer_sum(
            self.target_centered.points(),
            self.source_centered.points(),
            &self.weights,
        )
    }

    /// Translation that pairs with `rotation` for these means.
    pub fn translation_for(&self, rotation: &Rotation) -> Vector3<f64> {
        self.target_mean - rotation.matrix() * self.source_mean
    }

    /// Undo the centering.
    pub fn to_correspondences(&self) -> Result<CorrespondenceSet> {
        let shift = |cloud: &PointCloud, mean: &Point3| {
            PointCloud::new(cloud.iter().map(|p| p + mean).collect())
        };
        CorrespondenceSet::new(
            shift(&self.source_centered, &self.source_mean)?,
            shift(&self.target_centered, &self.target_mean)?,
            self.weights.clone(),
        )
    }
}

pub(crate) fn weighted_mean(points: &[Point3], weights: &[f64]) -> Point3 {
    let total: f64 = weights.iter().sum();
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| p * *w)
        .sum::<Point3>()
        / total
}

pub(crate) fn weighted_outer_sum(a: &[Point3], b: &[Point3], weights: &[f64]) -> Matrix3<f64> {
    a.iter()
        .zip(b)
        .zip(weights)
        .fold(Matrix3::zeros(), |acc, ((pa, pb), w)| {
            acc + (pa * *w) * pb.transpose()
        })
}

fn center_points(points: &[Point3], weights: &[f64]) -> (Vec<Point3>, Point3) {
    let mut mean = weighted_mean(points, weights);
    let mut centered: Vec<Point3> = points.iter().map(|p| p - mean).collect();
    // one correction pass absorbs the rounding left in the first mean
    let residual = weighted_mean(&centered, weights);
    mean += residual;
    centered.iter_mut().for_each(|p| *p -= residual);
    (centered, mean)
}

pub fn center(c: &CorrespondenceSet) -> CenteredCorrespondences {
    let (source_centered, source_mean) = center_points(c.source().points(), c.weights());
    let (target_centered, target_mean) = center_points(c.target().points(), c.weights());
    CenteredCorrespondences {
        source_centered: PointCloud {
            points: source_centered,
        },
        target_centered: PointCloud {
            points: target_centered,
        },
        source_mean,
        target_mean,
        weights: c.weights().to_vec(),
    }
}

/// Closed-form minimizer of the weighted cost over `t` for a fixed rotation.
pub fn optimal_translation(rotation: &Rotation, c: &CorrespondenceSet) -> Vector3<f64> {
    c.target_mean() - rotation.matrix() * c.source_mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(coords: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_xyz(coords).unwrap()
    }

    #[test]
    fn center_symmetric_pair_is_unchanged() {
        let pts = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let c = CorrespondenceSet::with_unit_weights(pts.clone(), pts.clone()).unwrap();
        let cc = center(&c);
        assert_eq!(cc.source_mean, Point3::zeros());
        assert_eq!(cc.target_mean, Point3::zeros());
        assert_eq!(cc.source_centered, pts);
    }

    #[test]
    fn center_single_pair() {
        let c = CorrespondenceSet::new(
            cloud(&[[2.0, 2.0, 2.0]]),
            cloud(&[[5.0, 5.0, 5.0]]),
            vec![3.0],
        )
        .unwrap();
        let cc = center(&c);
        assert_eq!(cc.source_mean, Point3::new(2.0, 2.0, 2.0));
        assert_eq!(cc.target_mean, Point3::new(5.0, 5.0, 5.0));
        assert_eq!(cc.source_centered.points()[0], Point3::zeros());
        assert_eq!(cc.target_centered.points()[0], Point3::zeros());
        assert_eq!(cc.weights, vec![3.0]);
    }

    #[test]
    fn center_weighted_mean() {
        let src = cloud(&[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
        let c = CorrespondenceSet::new(src.clone(), src, vec![1.0, 3.0]).unwrap();
        assert_eq!(center(&c).source_mean, Point3::new(3.0, 0.0, 0.0));
    }

    #[test]
    fn translation_identity_and_pure_shift() {
        let src = cloud(&[[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0], [0.9, -0.1, 0.2]]);
        let same = CorrespondenceSet::with_unit_weights(src.clone(), src.clone()).unwrap();
        assert_eq!(optimal_translation(&Rotation::identity(), &same), Vector3::zeros());

        let shift = RigidTransform::new(Rotation::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let moved = CorrespondenceSet::with_unit_weights(src.clone(), src.transformed(&shift)).unwrap();
        let t = optimal_translation(&Rotation::identity(), &moved);
        assert!((t - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert_eq!(PointCloud::new(vec![]), Err(Error::EmptyCloud));
        assert!(matches!(
            PointCloud::from_xyz(&[[0.0, f64::NAN, 0.0]]),
            Err(Error::NonFinite { index: 0 })
        ));
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(
            CorrespondenceSet::new(a.clone(), a.clone(), vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            CorrespondenceSet::new(a.clone(), a, vec![1.0, 0.0]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
    }

    #[test]
    fn rotation_rejects_non_rotations() {
        assert!(Rotation::new(Matrix3::identity() * 2.0).is_err());
        assert!(Rotation::new(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).is_err());
        let mut near = Matrix3::identity();
        near[(0, 1)] = 1e-8;
        assert!(Rotation::new(near).is_err());
        near[(0, 1)] = 1e-11;
        assert!(Rotation::new(near).is_ok());
        assert!(Rotation::new(*Rotation::from_euler_zyx(0.3, -0.2, 1.1).matrix()).is_ok());
    }
}
