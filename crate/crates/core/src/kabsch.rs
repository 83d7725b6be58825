//! Closed-form weighted Kabsch: the globally optimal rotation for a fixed
//! set of correspondences, with the reflection correction that keeps the
//! result in SO(3).

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geometry::{center, CenteredCorrespondences, CorrespondenceSet, RigidTransform, Rotation};

/// Relative threshold (to `‖H‖_F`) under which the two smallest singular
/// values mark the rotation as unobservable.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// `H = Σ w_i p̃_t,i p̃_s,iᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCovariance(pub Matrix3<f64>);

impl CrossCovariance {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vector3<f64> {
        SVD::new(self.0, false, false).singular_values
    }
}

pub fn cross_covariance(cc: &CenteredCorrespondences) -> CrossCovariance {
    CrossCovariance(cc.target_source_covariance())
}

/// `R = U diag(1, 1, det(U Vᵀ)) Vᵀ` for `H = U S Vᵀ`.
pub fn kabsch_rotation(h: &CrossCovariance) -> Result<Rotation> {
    let svd = SVD::new(h.0, true, true);
    let s = svd.singular_values;
    let scale = h.0.norm();
    if scale.is_nan() || scale <= 0.0 || s[1] < DEGENERACY_THRESHOLD * scale {
        return Err(Error::DegenerateGeometry {
            singular_values: [s[0], s[1], s[2]],
        });
    }
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("Vᵀ requested");
    let reflection = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, reflection));
    Rotation::new(u * correction * v_t)
}

pub fn estimate_pose_kabsch(c: &CorrespondenceSet) -> Result<RigidTransform> {
    let cc = center(c);
    let rotation = kabsch_rotation(&cross_covariance(&cc))?;
    let translation = cc.translation_for(&rotation);
    RigidTransform::new(rotation, translation)
}
