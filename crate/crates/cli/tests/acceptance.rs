//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints its `[acceptance] C<n> <name>: PASS|FAIL (<detail>)` line;
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::Vector3;
use rigid_refine::diagnostics::{
    determinant_redundancy_residual, divergence_report, envelope_bound, envelope_calibration_spec, licq_check,
    singularity_margin, ENVELOPE_SEED,
};
use rigid_refine::gradcheck::{
    jacobian_kabsch, max_rotation_sensitivity, reflected_axes_problem, run_gradcheck, REL_TOLERANCE,
};
use rigid_refine::metrics::{chamfer_distance, euler_zyx, mean_point_distance, rotation_error};
use rigid_refine::refiner::{linearized_constraint, ConstraintIndex};
use rigid_refine::synth::{
    generate_problem, random_rotation, sample_transform, uniform_ball, BaseCloud, ProblemSpec, SynthRng,
};
use rigid_refine::{
    assemble_kkt, center, cross_covariance, estimate_pose_kabsch, kabsch_rotation, optimal_translation, refine,
    solve_kkt, CorrespondenceSet, Error, PointCloud, RigidTransform, Rotation,
};

fn report(id: &str, name: &str, pass: bool, detail: String) -> bool {
    println!("[acceptance] C{id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn noisy_correspondences(rng: &mut SynthRng, n: usize, noise: f64) -> CorrespondenceSet {
    let src = uniform_ball(n, rng);
    let gt = RigidTransform::new(random_rotation(rng), Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()))
        .unwrap();
    let tgt: Vec<_> = src
        .iter()
        .map(|p| gt.apply(p) + Vector3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * noise)
        .collect();
    let weights = (0..n).map(|_| rng.uniform_in(0.2, 2.0)).collect();
    CorrespondenceSet::new(src, PointCloud::new(tgt).unwrap(), weights).unwrap()
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).ceil() as usize;
    values[idx]
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn c01_kabsch_optimality() -> bool {
    let start = Instant::now();
    let mut rng = SynthRng::new(1);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..200 {
        let c = noisy_correspondences(&mut rng, 4, 0.3);
        let kabsch = c.weighted_cost(&estimate_pose_kabsch(&c).unwrap());
        let best = (0..100_000)
            .map(|_| {
                let r = random_rotation(&mut rng);
                c.weighted_cost(&RigidTransform::new(r, optimal_translation(&r, &c)).unwrap())
            })
            .fold(f64::INFINITY, f64::min);
        worst_gap = worst_gap.max(kabsch - best);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "1",
        "Kabsch optimality",
        worst_gap <= 1e-6 && secs < 60.0,
        format!("max(kabsch - best sample) = {worst_gap:.3e}, {secs:.1} s"),
    )
}

fn c02_exact_recovery() -> bool {
    let spec = ProblemSpec {
        n_points: 64,
        ..ProblemSpec::default()
    };
    let (mut worst_rot, mut worst_trans) = (0.0f64, 0.0f64);
    for seed in 0..500 {
        let p = generate_problem(&spec, seed).unwrap();
        let est = estimate_pose_kabsch(&p.correspondences).unwrap();
        worst_rot = worst_rot.max(rotation_error(&est.rotation, &p.gt.rotation).iso_deg);
        worst_trans = worst_trans.max((est.translation - p.gt.translation).norm());
    }
    report(
        "2",
        "exact recovery",
        worst_rot <= 1e-9 && worst_trans <= 1e-12,
        format!("max iso error {worst_rot:.3e} deg, max translation error {worst_trans:.3e}"),
    )
}

fn c03_scale_invariance() -> bool {
    let mut rng = SynthRng::new(3);
    let mut worst = 0.0f64;
    let mut mse_increases = true;
    let mse = |c: &CorrespondenceSet| c.weighted_cost(&estimate_pose_kabsch(c).unwrap()) / c.weight_sum();
    for _ in 0..100 {
        let c = noisy_correspondences(&mut rng, 32, 0.02);
        let r = kabsch_rotation(&cross_covariance(&center(&c))).unwrap();
        for a in [0.1, 3.0, 10.0] {
            let scaled = CorrespondenceSet::new(
                c.source().clone(),
                PointCloud::new(c.target().iter().map(|p| p * a).collect()).unwrap(),
                c.weights().to_vec(),
            )
            .unwrap();
            let r_a = kabsch_rotation(&cross_covariance(&center(&scaled))).unwrap();
            worst = worst.max((r_a.matrix() - r.matrix()).norm());
            if a == 10.0 && mse(&scaled) <= mse(&c) {
                mse_increases = false;
            }
        }
    }
    report(
        "3",
        "scale invariance",
        worst <= 1e-9 && mse_increases,
        format!("max rotation change {worst:.3e}, mse increases at a = 10: {mse_increases}"),
    )
}

fn c04_refiner_fixed_point() -> bool {
    let spec = ProblemSpec {
        n_points: 64,
        ..ProblemSpec::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..500 {
        let p = generate_problem(&spec, seed).unwrap();
        let init = estimate_pose_kabsch(&p.correspondences).unwrap();
        let trace = refine(&p.correspondences, &init, 5).unwrap();
        for pose in &trace.poses[1..] {
            let d = (pose.rotation.matrix() - init.rotation.matrix()).norm() + (pose.translation - init.translation).norm();
            worst = worst.max(d);
        }
    }
    report("4", "refiner fixed point", worst <= 1e-8, format!("max pose deviation {worst:.3e}"))
}

fn c05_kkt_correctness() -> bool {
    let mut rng = SynthRng::new(5);
    let (mut worst_residual, mut worst_constraint) = (0.0f64, 0.0f64);
    for seed in 0..500 {
        let n = [3, 16, 256][seed % 3];
        let c = noisy_correspondences(&mut rng, n, 0.05);
        let r_prev = random_rotation(&mut rng);
        let sol = solve_kkt(&assemble_kkt(&center(&c), &r_prev)).unwrap();
        worst_residual = worst_residual.max(sol.relative_residual);
        for k in ConstraintIndex::all() {
            worst_constraint = worst_constraint.max(linearized_constraint(k, &sol.candidate.0, &r_prev).abs());
        }
    }
    report(
        "5",
        "KKT correctness",
        worst_residual <= 1e-8 && worst_constraint <= 1e-8,
        format!("max relative residual {worst_residual:.3e}, max linearized constraint {worst_constraint:.3e}"),
    )
}

fn c06_column_norm_bound() -> bool {
    let mut rng = SynthRng::new(6);
    let mut iterations = 0;
    let mut min_norm = f64::INFINITY;
    while iterations < 10_000 {
        let c = noisy_correspondences(&mut rng, 16, 0.3);
        let init = RigidTransform::new(random_rotation(&mut rng), Vector3::zeros()).unwrap();
        let trace = refine(&c, &init, 5).unwrap();
        for cand in trace.candidates() {
            min_norm = min_norm.min(singularity_margin(cand).min_col_norm);
            iterations += 1;
        }
    }
    report(
        "6",
        "column-norm bound",
        min_norm >= 1.0 - 1e-9,
        format!("{iterations} iterations, min column norm {min_norm:.12}"),
    )
}

fn c07_licq_and_determinant_redundancy() -> bool {
    let mut rng = SynthRng::new(7);
    let full_rank = (0..10_000).filter(|_| licq_check(&random_rotation(&mut rng)) == 6).count();
    let worst = (0..1000)
        .map(|_| {
            let r = nalgebra::Matrix3::from_fn(|_, _| rng.gaussian());
            determinant_redundancy_residual(&r, &random_rotation(&mut rng))
        })
        .fold(0.0, f64::max);
    report(
        "7",
        "LICQ",
        full_rank == 10_000 && worst <= 1e-12,
        format!("rank 6 on {full_rank}/10000, max redundancy residual {worst:.3e}"),
    )
}

fn c08_differentiability() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let (mut worst_abs, mut worst_significant) = (0.0f64, 0.0f64);
    for seed in 0..50 {
        for n in [4, 16, 64] {
            let out = run_gradcheck(seed, n).unwrap();
            worst_abs = worst_abs.max(out.comparison.max_abs_error);
            worst_significant = worst_significant.max(out.comparison.max_rel_error_significant);
            worst = worst.max(out.comparison.max_rel_error);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "8",
        "differentiability",
        worst <= REL_TOLERANCE && secs < 300.0,
        format!(
            "{} cases; max gated relative error {worst:.3e}; \
             max absolute error {worst_abs:.3e}; max relative error on significant entries {worst_significant:.3e}; {secs:.1} s",
            50 * 3
        ),
    )
}

fn c09_svd_gradient_caveat() -> bool {
    let octahedron = reflected_axes_problem(1.0, 1.0, 1.0).unwrap();
    let source = octahedron.source().clone();
    let equal = CorrespondenceSet::with_unit_weights(source.clone(), source).unwrap();
    let refused = matches!(jacobian_kabsch(&center(&equal)), Err(Error::IllConditioned { .. }));

    let gaps = [0.4, 0.2, 0.1, 0.05, 0.025];
    let sensitivities: Vec<f64> = gaps
        .iter()
        .map(|g| {
            let c = reflected_axes_problem(1.5, 1.0, (1.0f64 - g).sqrt()).unwrap();
            max_rotation_sensitivity(&jacobian_kabsch(&center(&c)).unwrap())
        })
        .collect();
    let monotone = sensitivities.windows(2).all(|w| w[1] > w[0]);
    let scaled: Vec<String> = sensitivities
        .iter()
        .zip(gaps)
        .map(|(s, g)| format!("{:.3}", s * g))
        .collect();
    report(
        "9",
        "SVD-gradient caveat",
        refused && monotone,
        format!("equal singular values refused: {refused}; sensitivity monotone: {monotone}; sensitivity x gap = [{}]", scaled.join(", ")),
    )
}

struct DivergenceSample {
    divergence: f64,
    distance: Option<f64>,
    det_g_normalized: f64,
}

fn divergence_population(spec: &ProblemSpec, seeds: std::ops::Range<u64>) -> Vec<DivergenceSample> {
    seeds
        .map(|seed| {
            let p = generate_problem(spec, seed).unwrap();
            let c = &p.correspondences;
            let k = estimate_pose_kabsch(c).unwrap();
            let trace = refine(c, &k, 5).unwrap();
            let r = divergence_report(&trace, &k, &center(c));
            DivergenceSample {
                divergence: r.divergence,
                distance: r.max_col_distance,
                det_g_normalized: r.det_g_normalized,
            }
        })
        .collect()
}

fn slab_spec() -> ProblemSpec {
    ProblemSpec {
        cloud: BaseCloud::Slab { thickness: 1e-3 },
        ..envelope_calibration_spec()
    }
}

fn c10a_divergence_envelope() -> bool {
    // seeds disjoint from the calibration run
    let population = divergence_population(&envelope_calibration_spec(), ENVELOPE_SEED + 10_000..ENVELOPE_SEED + 11_000);
    let mut slack: Vec<f64> = population
        .iter()
        .filter(|s| s.det_g_normalized >= 1e-2)
        .map(|s| s.divergence - envelope_bound(s.distance.expect("well-conditioned")))
        .collect();
    let count = slack.len();
    let p95 = percentile(&mut slack, 0.95);
    report(
        "10a",
        "divergence envelope (well-conditioned)",
        count > 0 && p95 <= 0.0,
        format!("{count} well-conditioned trials, 95th percentile of D - envelope = {p95:.3e}"),
    )
}

fn c10b_divergence_on_near_planar_slabs() -> bool {
    let population = divergence_population(&slab_spec(), 0..100);
    let max_d = population.iter().map(|s| s.divergence).fold(0.0, f64::max);
    let exceeding = population.iter().filter(|s| s.divergence > 0.5).count();
    report(
        "10b",
        "divergence on near-planar slabs",
        exceeding >= 1,
        format!("{exceeding}/100 seeds with D > 0.5, max D = {max_d:.3e}"),
    )
}

fn c10c_divergence_rank_statistic() -> bool {
    let mut ill: Vec<f64> = divergence_population(&slab_spec(), 0..200)
        .into_iter()
        .filter(|s| s.det_g_normalized < 1e-4)
        .map(|s| s.divergence)
        .collect();
    let mut well: Vec<f64> = divergence_population(&envelope_calibration_spec(), 0..200)
        .into_iter()
        .filter(|s| s.det_g_normalized >= 1e-2)
        .map(|s| s.divergence)
        .collect();
    let (n_ill, n_well) = (ill.len(), well.len());
    let (m_ill, m_well) = (median(&mut ill), median(&mut well));
    report(
        "10c",
        "divergence median rank statistic",
        n_ill > 0 && n_well > 0 && m_ill > m_well,
        format!("median D ill-conditioned ({n_ill}) {m_ill:.3e} vs well-conditioned ({n_well}) {m_well:.3e}"),
    )
}

fn c11_metrics_closed_form() -> bool {
    let e = rotation_error(&Rotation::identity(), &Rotation::about_z(30f64.to_radians()));
    let rot_ok = (e.iso_deg - 30.0).abs() <= 1e-9 && (e.aniso_deg - Vector3::new(30.0, 0.0, 0.0)).amax() <= 1e-9;

    let origin = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
    let unit_x = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
    let pair = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    let chamfer_ok = chamfer_distance(&origin, &origin) == 0.0
        && chamfer_distance(&origin, &unit_x) == 2.0
        && chamfer_distance(&pair, &origin) == 2.0;

    let cloud = uniform_ball(50, &mut SynthRng::new(11));
    let gt = RigidTransform::new(Rotation::about_x(0.3), Vector3::new(1.0, 2.0, 3.0)).unwrap();
    let shifted = RigidTransform::new(gt.rotation, gt.translation + Vector3::new(0.0, 0.0, 0.1)).unwrap();
    let mpd_same = mean_point_distance(&cloud, &gt, &gt);
    let mpd_shift = mean_point_distance(&cloud, &shifted, &gt);
    let expected_shift = (shifted.translation - gt.translation).norm();
    let mpd_ok = mpd_same == 0.0 && (mpd_shift - expected_shift).abs() <= 1e-12;
    report(
        "11",
        "metrics closed form",
        rot_ok && chamfer_ok && mpd_ok,
        format!(
            "iso {:.12} aniso ({:.3e}, {:.3e}, {:.3e}); chamfer {chamfer_ok}; mean point distance {mpd_same} / {mpd_shift}",
            e.iso_deg, e.aniso_deg.x, e.aniso_deg.y, e.aniso_deg.z
        ),
    )
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rigid-refine-acceptance-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_cli(config: &PathBuf, out: &PathBuf, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_rigid-refine"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RIGID_REFINE_THREADS", threads)
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(out).unwrap()
}

fn c12_determinism() -> bool {
    let dir = scratch_dir("determinism");
    let config = dir.join("experiment.conf");
    std::fs::write(
        &config,
        "method = refined\nrefinements = 5\ntrials = 24\nproblem.n_points = 128\nproblem.noise_sigma = 0.01\nproblem.crop_keep_fraction = 0.7\nproblem.seed = 9\n",
    )
    .unwrap();
    let first = run_cli(&config, &dir.join("a.csv"), "1");
    let second = run_cli(&config, &dir.join("b.csv"), "1");
    let parallel = run_cli(&config, &dir.join("c.csv"), "4");
    std::fs::remove_dir_all(&dir).unwrap();
    report(
        "12",
        "determinism",
        !first.is_empty() && first == second && first == parallel,
        format!(
            "{} bytes; repeat identical: {}; 1 vs 4 threads identical: {}",
            first.len(),
            first == second,
            first == parallel
        ),
    )
}

fn c13_corruption_protocol_fidelity() -> bool {
    let noisy = ProblemSpec {
        n_points: 256,
        noise_sigma: 0.01,
        noise_clamp: 0.05,
        ..ProblemSpec::default()
    };
    let max_noise = (0..200)
        .flat_map(|seed| generate_problem(&noisy, seed).unwrap().noise)
        .map(|d| d.amax())
        .fold(0.0, f64::max);
    let clamp_ok = max_noise <= 0.05;

    let crop_ok = [10usize, 100, 333, 1000, 1024].iter().all(|&n| {
        let spec = ProblemSpec {
            n_points: n,
            crop_keep_fraction: 0.7,
            ..ProblemSpec::default()
        };
        let expected = (7 * n) / 10;
        (0..5).all(|seed| {
            let p = generate_problem(&spec, seed).unwrap();
            p.source_cloud.len() == expected && p.target_cloud.len() == expected
        })
    });

    let spec = ProblemSpec::default();
    let mut rng = SynthRng::new(13);
    let draws = 10_000;
    let mut sums = Vector3::zeros();
    for _ in 0..draws {
        let angles = euler_zyx(sample_transform(&spec, &mut rng).rotation.matrix()).angles;
        sums += angles.map(f64::to_degrees);
    }
    let means = sums / draws as f64;
    let three_sigma = 3.0 * 45.0 / (12.0f64.sqrt() * (draws as f64).sqrt());
    let euler_ok = means.iter().all(|m| (m - 22.5).abs() <= three_sigma);
    report(
        "13",
        "corruption protocol fidelity",
        clamp_ok && crop_ok && euler_ok,
        format!(
            "max |noise| {max_noise:.4}; crop counts exact: {crop_ok}; Euler means ({:.3}, {:.3}, {:.3}) vs 22.5 +/- {three_sigma:.3}",
            means.x, means.y, means.z
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [fn() -> bool; 15] = [
        c01_kabsch_optimality,
        c02_exact_recovery,
        c03_scale_invariance,
        c04_refiner_fixed_point,
        c05_kkt_correctness,
        c06_column_norm_bound,
        c07_licq_and_determinant_redundancy,
        c08_differentiability,
        c09_svd_gradient_caveat,
        c10a_divergence_envelope,
        c10b_divergence_on_near_planar_slabs,
        c10c_divergence_rank_statistic,
        c11_metrics_closed_form,
        c12_determinism,
        c13_corruption_protocol_fidelity,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!("[acceptance] {} of {} checks passed (criterion 10 has three)", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
