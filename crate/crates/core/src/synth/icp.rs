use crate::error::Result;
use crate::geometry::{CorrespondenceSet, PointCloud, RigidTransform};
use crate::kabsch::estimate_pose_kabsch;
use crate::metrics::nearest_neighbor;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Mean squared nearest-neighbor distance at the start of each iteration.
    pub matching_costs: Vec<f64>,
    pub converged: bool,
}

/// Point-to-point ICP: brute-force nearest-neighbor matching alternated
/// with a Kabsch fit, until the pose change (chordal + translation norm)
/// drops below `tol` or `max_iters` is reached.
pub fn icp_baseline(
    src: &PointCloud,
    tgt: &PointCloud,
    init: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult> {
    let mut pose = *init;
    let mut matching_costs = Vec::with_capacity(max_iters);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut matched = Vec::with_capacity(src.len());
        let mut cost = 0.0;
        for p in src.iter() {
            let (j, d2) = nearest_neighbor(tgt.points(), &pose.apply(p));
            matched.push(tgt.points()[j]);
            cost += d2;
        }
        matching_costs.push(cost / src.len() as f64);

        let pairs = CorrespondenceSet::with_unit_weights(src.clone(), PointCloud::new(matched)?)?;
        let next = estimate_pose_kabsch(&pairs)?;
        let change = next.rotation.chordal_distance(&pose.rotation) + (next.translation - pose.translation).norm();
        pose = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        transform: pose,
        iterations,
        matching_costs,
        converged,
    })
}
