//! Pose-error metrics, point-set distances and the multi-pose loss.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{Point3, PointCloud, RigidTransform, Rotation};
use crate::refiner::RefinementTrace;

/// Pitch cosine below which the z-y-x decomposition is treated as gimbal-locked.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-9;

/// Intrinsic z-y-x Euler angles in radians, `m = R_z(z) R_y(y) R_x(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerZyx {
    /// (z, y, x)
    pub angles: Vector3<f64>,
    /// At |pitch| = 90° yaw carries the whole in-plane angle and roll is 0.
    pub gimbal_lock: bool,
}

pub fn euler_zyx(m: &Matrix3<f64>) -> EulerZyx {
    let y = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let cos_y = m[(0, 0)].hypot(m[(1, 0)]);
    if cos_y < GIMBAL_LOCK_TOLERANCE {
        let z = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return EulerZyx {
            angles: Vector3::new(z, y, 0.0),
            gimbal_lock: true,
        };
    }
    EulerZyx {
        angles: Vector3::new(m[(1, 0)].atan2(m[(0, 0)]), y, m[(2, 1)].atan2(m[(2, 2)])),
        gimbal_lock: false,
    }
}

/// Rotation angle of `m` in radians, from both its trace and its skew part so
/// that angles near 0 and near π keep full precision. Agrees with
/// `acos(clamp((tr − 1) / 2))` everywhere.
pub fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let cos = (m.trace() - 1.0) / 2.0;
    let sin = 0.5
        * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    sin.atan2(cos)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationError {
    pub iso_deg: f64,
    /// (z, y, x) Euler angles of `estᵀ gt`, degrees.
    pub aniso_deg: Vector3<f64>,
    pub gimbal_lock: bool,
}

pub fn rotation_error(est: &Rotation, gt: &Rotation) -> RotationError {
    let delta = est.matrix().transpose() * gt.matrix();
    let euler = euler_zyx(&delta);
    RotationError {
        iso_deg: rotation_angle(&delta).to_degrees(),
        aniso_deg: euler.angles.map(f64::to_degrees),
        gimbal_lock: euler.gimbal_lock,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
}

pub fn translation_error(est: &Vector3<f64>, gt: &Vector3<f64>, p: NormOrder) -> f64 {
    let d = est - gt;
    match p {
        NormOrder::L1 => d.lp_norm(1),
        NormOrder::L2 => d.norm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub rotation: RotationError,
    pub trans_l1: f64,
    pub trans_l2: f64,
}

pub fn pose_error(est: &RigidTransform, gt: &RigidTransform) -> PoseError {
    PoseError {
        rotation: rotation_error(&est.rotation, &gt.rotation),
        trans_l1: translation_error(&est.translation, &gt.translation, NormOrder::L1),
        trans_l2: translation_error(&est.translation, &gt.translation, NormOrder::L2),
    }
}

/// Index of and squared distance to the point of `points` nearest `query`
/// (first index wins ties).
pub fn nearest_neighbor(points: &[Point3], query: &Point3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}

fn directed_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    a.iter().map(|p| nearest_neighbor(b.points(), p).1).sum::<f64>() / a.len() as f64
}

/// Mean squared nearest-neighbor distance from `a` to `b` plus the same from `b` to `a`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    directed_chamfer(a, b) + directed_chamfer(b, a)
}

/// `(1/N) Σ ‖(R − R_gt) p + t − t_gt‖`.
pub fn mean_point_distance(src: &PointCloud, est: &RigidTransform, gt: &RigidTransform) -> f64 {
    let dr = est.rotation.matrix() - gt.rotation.matrix();
    let dt = est.translation - gt.translation;
    src.iter().map(|p| (dr * p + dt).norm()).sum::<f64>() / src.len() as f64
}

/// Mean over poses of `‖Rᵢᵀ R_gt − I‖²_F` plus mean of `‖tᵢ − t_gt‖²`; 0 for no poses.
pub fn augmented_loss_for_poses(poses: &[RigidTransform], gt: &RigidTransform) -> f64 {
    if poses.is_empty() {
        return 0.0;
    }
    let n = poses.len() as f64;
    let rot: f64 = poses
        .iter()
        .map(|p| (p.rotation.matrix().transpose() * gt.rotation.matrix() - Matrix3::identity()).norm_squared())
        .sum();
    let trans: f64 = poses.iter().map(|p| (p.translation - gt.translation).norm_squared()).sum();
    rot / n + trans / n
}

pub fn augmented_loss(trace: &RefinementTrace, gt: &RigidTransform) -> f64 {
    augmented_loss_for_poses(&trace.poses, gt)
}
