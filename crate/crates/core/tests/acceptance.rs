//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line even when others fail.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use aerial_pickup::coverage::{max_sweep_distance, plan_sweep, ConvexRegion, SweepParams, Vec2};
use aerial_pickup::geometry::{
    inverse_project_pair, project_point, world_to_camera, CameraIntrinsics, Pose, Rotation, Vec3,
};
use aerial_pickup::sim::experiments::{detection_map, fusion_eval};
use aerial_pickup::sim::{run, scenarios, DetectionMapConfig, FusionEvalConfig};
use aerial_pickup::tracking::{assignment_cost, hungarian, kf_predict, kf_update, KfParams, Track};
use aerial_pickup::vision::{ColorId, Detection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn inverse_projection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = CameraIntrinsics::new(612.0, 608.0, 318.5, 243.0, 640, 480).unwrap();
    let (mut worst_rel, mut worst_residual, mut trials) = (0.0f64, 0.0f64, 0);
    while trials < 1000 {
        let tilt = Rotation::from_euler(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-3.1..3.1));
        let pose = Pose::new(Rotation::nadir().compose(&tilt), Vec3::new(0.0, 0.0, rng.random_range(2.0..12.0)));
        let length = rng.random_range(0.05..1.0);
        let yaw: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let c = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5));
        let half = Vec3::new(yaw.cos(), yaw.sin(), 0.0) * (length / 2.0);
        let (p1, p2) = (world_to_camera(&(c + half), &pose), world_to_camera(&(c - half), &pose));
        let (Ok(u1), Ok(u2)) = (project_point(&p1, &k), project_point(&p2, &k)) else {
            continue;
        };
        if !(k.contains(&u1) && k.contains(&u2)) {
            continue;
        }
        trials += 1;
        let r_cw = pose.rotation.inverse();
        let Ok((q1, q2)) = inverse_project_pair(&u1, &u2, &r_cw, length, &k) else {
            return outcome(false, format!("inversion failed on trial {trials}"));
        };
        worst_rel = worst_rel.max((q1 - p1).norm() / p1.norm()).max((q2 - p2).norm() / p2.norm());
        let normal = r_cw.rotate(&Vec3::z());
        let distance_residual = ((q1 - q2).norm() - length).abs();
        let plane_residual = normal.dot(&(q1 - q2)).abs();
        worst_residual = worst_residual.max(distance_residual.max(plane_residual) / length);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_rel <= 1e-9 && worst_residual <= 1e-9 && secs < 1.0,
        format!("1000 round-trips, max relative error {worst_rel:.2e}, max residual/l {worst_residual:.2e}, {secs:.3} s"),
    )
}

/// Fraction of grid cell centers inside `region` seen by a square footprint
/// moved along the waypoint polyline in 5 cm steps.
fn footprint_coverage(region: &ConvexRegion, waypoints: &[Vec3], fov: f64, cell: f64) -> f64 {
    let mut samples: Vec<(Vec2, f64)> = Vec::new();
    for w in waypoints.windows(2) {
        let n = ((w[1] - w[0]).norm() / 0.05).ceil().max(1.0) as usize;
        for i in 0..=n {
            let p = w[0] + (w[1] - w[0]) * (i as f64 / n as f64);
            samples.push((Vec2::new(p.x, p.y), p.z * (fov / 2.0).tan()));
        }
    }
    let (lo, hi) = region.bounding_box();
    let (mut inside, mut seen) = (0usize, 0usize);
    let mut y = lo.y + cell / 2.0;
    while y < hi.y {
        let mut x = lo.x + cell / 2.0;
        while x < hi.x {
            let p = Vec2::new(x, y);
            if region.contains(&p) {
                inside += 1;
                if samples.iter().any(|(c, h)| (p.x - c.x).abs() <= *h && (p.y - c.y).abs() <= *h) {
                    seen += 1;
                }
            }
            x += cell;
        }
        y += cell;
    }
    seen as f64 / inside as f64
}

fn sweep_spacing() -> Outcome {
    let spot = (max_sweep_distance(10.0, FRAC_PI_2, 0.5) - 10.0).abs();
    let zero = max_sweep_distance(10.0, FRAC_PI_2, 1.0).abs();
    let region = ConvexRegion::rectangle(0.0, 0.0, 40.0, 30.0).unwrap();
    let mut worst = 1.0f64;
    for (altitude, fov_deg, overlap, heading) in
        [(5.0, 60.0, 0.2, None), (4.0, 77.3, 0.0, None), (8.0, 45.0, 0.5, Some(FRAC_PI_2)), (5.0, 60.0, 0.1, Some(0.5))]
    {
        let fov = f64::to_radians(fov_deg);
        let plan = plan_sweep(&region, &SweepParams { altitude, fov, overlap, heading }, 0).unwrap();
        worst = worst.min(footprint_coverage(&region, &plan.waypoints, fov, 0.25));
    }
    outcome(
        spot <= 1e-12 && zero <= 1e-12 && worst >= 0.99,
        format!("spot errors {spot:.1e} / {zero:.1e}, worst plan coverage {:.2}%", worst * 100.0),
    )
}

fn collision() -> Outcome {
    let start = Instant::now();
    let config = scenarios::collision();
    let ball = Vec3::new(0.0, 0.0, config.agent_params.servo.ball_height);
    let (m, _) = run(config, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let min = m.min_pairwise_distance.unwrap_or(0.0);
    let end = Vec3::from(m.final_agent_positions[0]);
    let offset = (end - ball).norm();
    outcome(
        min >= 0.95 && offset <= 0.2 && secs < 10.0,
        format!("min distance {min:.3} m, priority agent {offset:.3} m from servo point, {secs:.2} s"),
    )
}

fn fusion() -> Outcome {
    let report = fusion_eval(&FusionEvalConfig::default()).unwrap();
    let fused = report.median_fused_rmse;
    let end = report.median_odometry_end_error;
    outcome(
        (0.10..=0.20).contains(&fused) && end >= 3.0 * fused,
        format!(
            "{} seeds over {:.0} m: median fused RMSE {fused:.3} m, odometry end error {end:.3} m ({:.1}x)",
            report.seeds.len(),
            report.trajectory_length,
            end / fused
        ),
    )
}

fn moving_pickup() -> Outcome {
    let radius = 0.15;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for seed in 1..=20 {
        let mut config = scenarios::moving_pickup();
        config.seed = seed;
        let (m, _) = run(config, None).unwrap();
        let delivered = m.objects_delivered == 1 && m.delivery_times[0] <= 120.0;
        let err = m.grasp_track_errors.last().copied().unwrap_or(f64::INFINITY);
        if delivered && err < radius {
            good += 1;
            worst = worst.max(err);
        }
    }
    outcome(good >= 18, format!("{good}/20 seeds delivered within 120 s with grasp error < {radius} m (worst {worst:.3} m)"))
}

fn detection() -> Outcome {
    let config = DetectionMapConfig::default();
    let r = detection_map(&config).unwrap();
    let centered = config.altitudes.iter().zip(&r.clean_center_errors).all(|(z, e)| *e < 0.005 * z);
    let worst = config.altitudes.iter().zip(&r.clean_center_errors).map(|(z, e)| e / z).fold(0.0, f64::max);
    outcome(
        centered && r.median_border_error > r.median_center_error && r.blank_border_cells >= 1,
        format!(
            "centered error up to {:.4}% of altitude, median border {:.4} m vs center {:.4} m, {} blank border cells",
            worst * 100.0,
            r.median_border_error,
            r.median_center_error,
            r.blank_border_cells
        ),
    )
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..cost[row].len() {
            if !used[c] {
                used[c] = true;
                best = best.min(cost[row][c] + go(cost, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(cost, 0, &mut vec![false; cost[0].len()])
}

fn hungarian_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let cost: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let pairs = hungarian(&cost);
        if pairs.len() != 6 {
            return outcome(false, format!("incomplete assignment of {} pairs", pairs.len()));
        }
        worst = worst.max((assignment_cost(&cost, &pairs) - brute_force(&cost)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 1.0, format!("100 instances, max cost gap {worst:.1e}, {secs:.3} s"))
}

fn digest_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, Sha256::digest(std::fs::read(&path).unwrap()).to_vec())
        })
        .collect()
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(scenarios::full_arena(), Some(a.path())).unwrap();
    run(scenarios::full_arena(), Some(b.path())).unwrap();
    let (da, db) = (digest_dir(a.path()), digest_dir(b.path()));
    outcome(da == db && da.contains_key("metrics.json"), format!("{} files hashed per run, identical: {}", da.len(), da == db))
}

fn kf_sanity() -> Outcome {
    let params = KfParams::default();
    let (x0, y0, vx, vy, dt) = (1.5, -2.0, 0.42, -0.17, 0.1);
    let det = |t: f64| Detection {
        timestamp: t,
        position: Vec3::new(x0 + vx * t, y0 + vy * t, 0.0),
        color: ColorId(0),
        blob_area: 100,
    };
    let mut track = Track::from_detection(0, &det(0.0), &params);
    let mut samples = vec![(0.0, det(0.0).position)];
    for i in 1..=60 {
        let t = i as f64 * dt;
        track = kf_update(&kf_predict(&track, dt, &params), &det(t), &params);
        samples.push((t, det(t).position));
    }
    // Closed-form least-squares slope per axis.
    let n = samples.len() as f64;
    let tm = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let slope = |axis: usize| {
        let pm = samples.iter().map(|s| s.1[axis]).sum::<f64>() / n;
        let num: f64 = samples.iter().map(|s| (s.0 - tm) * (s.1[axis] - pm)).sum();
        let den: f64 = samples.iter().map(|s| (s.0 - tm).powi(2)).sum();
        num / den
    };
    let err = (track.velocity().x - slope(0)).abs().max((track.velocity().y - slope(1)).abs());
    outcome(err <= 1e-3, format!("velocity error vs least squares {err:.2e} m/s after 60 updates"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("inverse projection round-trip", inverse_projection),
        ("sweep spacing and coverage", sweep_spacing),
        ("collision scenario", collision),
        ("fusion accuracy", fusion),
        ("moving pickup", moving_pickup),
        ("detection map", detection),
        ("hungarian oracle", hungarian_oracle),
        ("full-arena determinism", determinism),
        ("kalman velocity sanity", kf_sanity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !result.pass {
            failed += 1;
        }
        println!("{} {}. {name}: {}", if result.pass { "PASS" } else { "FAIL" }, i + 1, result.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
