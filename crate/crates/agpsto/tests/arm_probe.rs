use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use agpsto::asto::sample_batch;
use agpsto::objective::Objective;
use agpsto::planner::prior_for;
use agpsto::scenario::load_scenario;
use std::sync::Arc;

#[test]
fn probe_arm_sampling() {
    let sc = load_scenario(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/b4_arm_block.toml"))).unwrap();
    let n = 6usize;
    let dt = 0.125f64;
    let gp = prior_for(&sc.world, &sc.start, &sc.goal, n, dt, 1.0, 768.0).unwrap();
    let theta = gp.mean_trajectory();
    let obj = Objective::new(gp.clone(), Arc::clone(&sc.world), vec![0.01; n], 1.0).unwrap();
    let coords = theta.interior_position_coords();
    let (mu, k) = gp.marginal(&coords);
    println!("marginal dim {} cov frobenius {:.2} diag range {:.3}..{:.3}",
        coords.len(), k.norm(),
        (0..k.nrows()).map(|i| k[(i,i)]).fold(f64::INFINITY, f64::min),
        (0..k.nrows()).map(|i| k[(i,i)]).fold(f64::NEG_INFINITY, f64::max));
    let d = sc.world.robot.dof();
    let lo = DVector::from_fn(coords.len(), |i, _| sc.world.robot.limits_min[i % d]);
    let hi = DVector::from_fn(coords.len(), |i, _| sc.world.robot.limits_max[i % d]);
    let k_upper = (&hi - &lo).norm_squared() / 1.25;
    println!("k_upper_tol {k_upper:.1}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (draws, uniform, _) = sample_batch(&mu, &k, 2000, k_upper, &lo, &hi, &mut rng);
    println!("uniform fallback: {uniform}");
    let mut feasible = 0;
    let mut pen_stats: Vec<f64> = vec![];
    for (v, _) in &draws {
        let traj = theta.with_interior_positions(v, dt).unwrap();
        if obj.sample_feasible(&traj, 8).unwrap() { feasible += 1; }
        let pen = agpsto::world::max_penetration(&traj, gp.sde(), &sc.world.robot, &sc.world.grid, 8).unwrap();
        pen_stats.push(pen);
    }
    pen_stats.sort_by(|a,b| a.partial_cmp(b).unwrap());
    println!("feasible: {feasible}/2000; penetration quantiles: min {:.3} p10 {:.3} p50 {:.3}",
        pen_stats[0], pen_stats[200], pen_stats[1000]);
    // and the straight-line mean itself?
    let pen0 = agpsto::world::max_penetration(&theta, gp.sde(), &sc.world.robot, &sc.world.grid, 8).unwrap();
    println!("prior mean penetration: {pen0:.3}");

    // hand-designed fold-under detour: bend joints 2-3 inward mid-path
    for (label, detour) in [
        ("fold", vec![
            -0.1, -1.1, 0.6,
            0.35, -1.5, 1.2,
            0.9, -0.9, 1.3,
            1.2, 0.0, 0.8,
        ]),
        ("outer", vec![
            0.2, -0.5, -0.4,
            0.7, -0.6, -0.3,
            1.1, -0.3, 0.1,
            1.25, 0.1, 0.3,
        ]),
    ] {
        let v = DVector::from_vec(detour);
        let traj = theta.with_interior_positions(&v, dt).unwrap();
        let pen = agpsto::world::max_penetration(&traj, gp.sde(), &sc.world.robot, &sc.world.grid, 8).unwrap();
        let cost = obj.evaluate(&traj).unwrap();
        println!("hand {label}: penetration {pen:.3} cost {cost:.3}");
    }

    // uniform draws over the joint box
    let (draws, _, _) = sample_batch(&mu, &(k.clone()*1e9), 2000, 1.0, &lo, &hi, &mut rng);
    let mut feas = 0;
    let mut best_pen = f64::INFINITY;
    for (v, _) in &draws {
        let traj = theta.with_interior_positions(v, dt).unwrap();
        let pen = agpsto::world::max_penetration(&traj, gp.sde(), &sc.world.robot, &sc.world.grid, 8).unwrap();
        best_pen = best_pen.min(pen);
        if pen <= 0.0 { feas += 1; }
    }
    println!("uniform draws feasible: {feas}/2000 best_pen {best_pen:.3}");
}
