//! Synthetic registration problems: base-cloud generators, the transform
//! sampling and corruption protocols (noise, independent resampling,
//! half-space crops), a point-to-point ICP baseline and point-cloud I/O.

mod icp;
pub mod io;
mod rng;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Point3, PointCloud, RigidTransform, Rotation};

pub use icp::{icp_baseline, IcpResult};
pub use rng::SynthRng;

/// Minimum shared fraction of original indices between the two crops.
pub const MIN_CROP_OVERLAP: f64 = 0.3;
/// Half-space pairs tried before settling for the best overlap seen.
pub const MAX_CROP_ATTEMPTS: usize = 100;

/// Points drawn uniformly inside the unit ball.
pub fn uniform_ball(n: usize, rng: &mut SynthRng) -> PointCloud {
    let points = (0..n)
        .map(|_| loop {
            let p = Point3::new(
                rng.uniform_in(-1.0, 1.0),
                rng.uniform_in(-1.0, 1.0),
                rng.uniform_in(-1.0, 1.0),
            );
            if p.norm_squared() <= 1.0 {
                break p;
            }
        })
        .collect();
    PointCloud::new(points).expect("generator output is finite and nonempty for n > 0")
}

pub fn random_unit_vector(rng: &mut SynthRng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Points drawn uniformly on the unit sphere.
pub fn sphere_surface(n: usize, rng: &mut SynthRng) -> PointCloud {
    PointCloud::new((0..n).map(|_| random_unit_vector(rng)).collect())
        .expect("generator output is finite and nonempty for n > 0")
}

/// Points uniform in the unit disk of the xy-plane with `|z| ≤ thickness`.
pub fn slab(n: usize, thickness: f64, rng: &mut SynthRng) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let (x, y) = loop {
                let x = rng.uniform_in(-1.0, 1.0);
                let y = rng.uniform_in(-1.0, 1.0);
                if x * x + y * y <= 1.0 {
                    break (x, y);
                }
            };
            Point3::new(x, y, rng.uniform_in(-thickness, thickness))
        })
        .collect();
    PointCloud::new(points).expect("generator output is finite and nonempty for n > 0")
}

/// Uniformly distributed rotation (normalized Gaussian 4-vector as a unit quaternion).
pub fn random_rotation(rng: &mut SynthRng) -> Rotation {
    let (w, x, y, z) = loop {
        let q = [rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()];
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Rotation::new(m).expect("unit quaternion yields a rotation")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseCloud {
    Ball,
    Sphere,
    Slab { thickness: f64 },
}

impl BaseCloud {
    pub fn generate(&self, n: usize, rng: &mut SynthRng) -> PointCloud {
        match *self {
            BaseCloud::Ball => uniform_ball(n, rng),
            BaseCloud::Sphere => sphere_surface(n, rng),
            BaseCloud::Slab { thickness } => slab(n, thickness, rng),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseCloud::Ball => "ball",
            BaseCloud::Sphere => "sphere",
            BaseCloud::Slab { .. } => "slab",
        }
    }
}

/// Sampling and corruption settings for one family of problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n_points: usize,
    pub cloud: BaseCloud,
    /// Euler-angle intervals in degrees, ordered z, y, x.
    pub rot_range_deg: [[f64; 2]; 3],
    /// Translation intervals, ordered x, y, z.
    pub trans_range: [[f64; 2]; 3],
    pub noise_sigma: f64,
    pub noise_clamp: f64,
    pub crop_keep_fraction: f64,
    pub independent_resample: bool,
    pub seed: u64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            n_points: 1024,
            cloud: BaseCloud::Ball,
            rot_range_deg: [[0.0, 45.0]; 3],
            trans_range: [[-0.5, 0.5]; 3],
            noise_sigma: 0.0,
            noise_clamp: 0.05,
            crop_keep_fraction: 1.0,
            independent_resample: false,
            seed: 0,
        }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.n_points == 0 {
            return bad("n_points must be positive");
        }
        let ordered = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !self.rot_range_deg.iter().all(ordered) || !self.trans_range.iter().all(ordered) {
            return bad("ranges must be finite and ordered");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be nonnegative");
        }
        if self.noise_clamp.is_nan() || self.noise_clamp < 0.0 {
            return bad("noise_clamp must be nonnegative");
        }
        if !(self.crop_keep_fraction > 0.0 && self.crop_keep_fraction <= 1.0) {
            return bad("crop_keep_fraction must lie in (0, 1]");
        }
        if let BaseCloud::Slab { thickness } = self.cloud {
            if !(thickness >= 0.0 && thickness.is_finite()) {
                return bad("slab thickness must be nonnegative");
            }
        }
        Ok(())
    }

    /// Base-cloud size consumed by [`make_problem`].
    pub fn base_points_needed(&self) -> usize {
        if self.independent_resample {
            2 * self.n_points
        } else {
            self.n_points
        }
    }

    /// Points kept by each half-space crop, `⌊fraction · n⌋` (at least one).
    pub fn crop_count(&self) -> usize {
        crop_count(self.n_points, self.crop_keep_fraction)
    }
}

fn crop_count(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) + 1e-9).floor() as usize).clamp(1, n)
}

/// Euler angles uniform per axis, composed `R_z R_y R_x`; translation uniform per axis.
pub fn sample_transform(spec: &ProblemSpec, rng: &mut SynthRng) -> RigidTransform {
    let angles: Vec<f64> = spec
        .rot_range_deg
        .iter()
        .map(|r| rng.uniform_in(r[0], r[1]).to_radians())
        .collect();
    let translation = Vector3::from_iterator(spec.trans_range.iter().map(|r| rng.uniform_in(r[0], r[1])));
    RigidTransform {
        rotation: Rotation::from_euler_zyx(angles[0], angles[1], angles[2]),
        translation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProblem {
    /// Index-paired points that survived both crops.
    pub correspondences: CorrespondenceSet,
    pub gt: RigidTransform,
    /// Observed source (cropped, noisy).
    pub source_cloud: PointCloud,
    /// Observed target (cropped).
    pub target_cloud: PointCloud,
    /// Per selected index: kept in both clouds.
    pub overlap_mask: Vec<bool>,
    /// Per-coordinate perturbation applied to each selected source point.
    pub noise: Vec<Vector3<f64>>,
}

/// Indices of the `keep` points with the largest signed distance along
/// `normal` from the centroid; ties broken by index.
pub fn half_space_crop(points: &[Point3], normal: &Vector3<f64>, keep: usize) -> Vec<usize> {
    let centroid = points.iter().sum::<Point3>() / points.len() as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - centroid).dot(normal), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = order.into_iter().take(keep).map(|(_, i)| i).collect();
    kept.sort_unstable();
    kept
}

/// Source noise is added after cropping; the target is never perturbed.
pub fn make_problem(spec: &ProblemSpec, base_cloud: &PointCloud, rng: &mut SynthRng) -> Result<LabeledProblem> {
    spec.validate()?;
    let n = spec.n_points;
    let needed = spec.base_points_needed();
    if base_cloud.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            available: base_cloud.len(),
        });
    }

    let mut order: Vec<usize> = (0..base_cloud.len()).collect();
    rng.shuffle(&mut order);
    let base = base_cloud.points();
    let source: Vec<Point3> = order[..n].iter().map(|&i| base[i]).collect();
    let target_base: Vec<Point3> = if spec.independent_resample {
        order[n..2 * n].iter().map(|&i| base[i]).collect()
    } else {
        source.clone()
    };

    let gt = sample_transform(spec, rng);
    let target: Vec<Point3> = target_base.iter().map(|p| gt.apply(p)).collect();

    let (kept_source, kept_target) = if spec.crop_keep_fraction < 1.0 {
        let keep = spec.crop_count();
        let mut best: Option<(usize, Vec<usize>, Vec<usize>)> = None;
        for _ in 0..MAX_CROP_ATTEMPTS {
            let ks = half_space_crop(&source, &random_unit_vector(rng), keep);
            let kt = half_space_crop(&target, &random_unit_vector(rng), keep);
            let shared = count_shared(&ks, &kt);
            if best.as_ref().is_none_or(|b| shared > b.0) {
                best = Some((shared, ks, kt));
            }
            if shared as f64 >= MIN_CROP_OVERLAP * n as f64 {
                break;
            }
        }
        let (_, ks, kt) = best.expect("at least one attempt");
        (ks, kt)
    } else {
        ((0..n).collect(), (0..n).collect())
    };

    let clamp = spec.noise_clamp;
    let noise: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian())
                .map(|g| (spec.noise_sigma * g).clamp(-clamp, clamp))
        })
        .collect();
    let noisy_source: Vec<Point3> = source.iter().zip(&noise).map(|(p, d)| p + d).collect();

    let mut in_source = vec![false; n];
    let mut in_target = vec![false; n];
    kept_source.iter().for_each(|&i| in_source[i] = true);
    kept_target.iter().for_each(|&i| in_target[i] = true);
    let overlap_mask: Vec<bool> = (0..n).map(|i| in_source[i] && in_target[i]).collect();
    let shared: Vec<usize> = (0..n).filter(|&i| overlap_mask[i]).collect();
    if shared.is_empty() {
        return Err(Error::InsufficientPoints {
            needed: 1,
            available: 0,
        });
    }

    let correspondences = CorrespondenceSet::with_unit_weights(
        PointCloud::new(shared.iter().map(|&i| noisy_source[i]).collect())?,
        PointCloud::new(shared.iter().map(|&i| target[i]).collect())?,
    )?;
    Ok(LabeledProblem {
        correspondences,
        gt,
        source_cloud: PointCloud::new(kept_source.iter().map(|&i| noisy_source[i]).collect())?,
        target_cloud: PointCloud::new(kept_target.iter().map(|&i| target[i]).collect())?,
        overlap_mask,
        noise,
    })
}

fn count_shared(a: &[usize], b: &[usize]) -> usize {
    // both sorted
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

/// Base cloud plus problem for one seed, the way the harness draws trials.
pub fn generate_problem(spec: &ProblemSpec, seed: u64) -> Result<LabeledProblem> {
    let mut rng = SynthRng::new(seed);
    let base = spec.cloud.generate(spec.base_points_needed(), &mut rng);
    make_problem(spec, &base, &mut rng)
}
