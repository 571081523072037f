//! Heavier randomized sweeps, ignored by default:
//!
//! ```sh
//! cargo test -p uot --test stress -- --ignored --nocapture
//! ```

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uot::*;

fn random_line(rng: &mut ChaCha8Rng, n: usize) -> FiniteMetricSpace {
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.5..2.5)).collect();
    xs.sort_by(f64::total_cmp);
    FiniteMetricSpace::build_euclidean(xs.into_iter().map(|x| vec![x]).collect()).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, space: &FiniteMetricSpace, atoms: usize) -> DiscreteMeasure {
    let n = space.len();
    let mut indices: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let atoms: Vec<(usize, f64)> = indices
        .into_iter()
        .take(atoms)
        .map(|i| (i, rng.gen_range(0.05..3.0)))
        .collect();
    DiscreteMeasure::new(space, &atoms).unwrap()
}

#[test]
#[ignore]
fn solver_matches_oracle_on_two_thousand_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for trial in 0..2000 {
        let space = random_line(&mut rng, 5);
        let mu0 = random_measure(&mut rng, &space, 1 + trial % 2);
        let mu1 = random_measure(&mut rng, &space, 1 + (trial / 2) % 2);
        for cost in [PairCost::hk(), PairCost::whe()] {
            let sol = solve_uot(&space, &cost, &mu0, &mu1, &SolveOptions::default()).unwrap();
            let oracle = brute_force_uot(&space, &cost, &mu0, &mu1, 9).unwrap();
            let diff = (sol.value - oracle.value).abs();
            if diff > worst {
                worst = diff;
                println!("trial {trial} {cost:?}: diff {diff:.3e}");
            }
            assert!(
                diff <= 1e-4,
                "trial {trial} {cost:?}: solver {} vs oracle {}",
                sol.value,
                oracle.value
            );
        }
    }
    println!("2000-instance sweep worst disagreement: {worst:.3e}");
}

#[test]
#[ignore]
fn dirac_path_energy_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_residual = 0.0_f64;
    for _ in 0..300 {
        let r0 = rng.gen_range(0.1..3.0);
        let r_n = rng.gen_range(0.1..3.0);
        let d = rng.gen_range(0.0..3.0);
        let n = *[3usize, 17, 64].iter().nth(rng.gen_range(0..3)).unwrap();
        let (value, state) = dirac_fn_min(r0, r_n, d, n).unwrap();
        let residual = state.stationarity_residual(d);
        worst_residual = worst_residual.max(residual / (1.0 + r0.max(r_n)));
        assert!(
            residual <= 1e-7 * (1.0 + r0.max(r_n)),
            "residual {residual} at (r0 = {r0}, rN = {r_n}, d = {d}, N = {n})"
        );
        // For d below the right angle the cone-geodesic discretization is
        // an admissible competitor, so the minimum cannot exceed it.
        if d < FRAC_PI_2 && d > 0.0 {
            let space = FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap();
            let y0 = ConePoint::new(0, r0);
            let y1 = ConePoint::new(1, r_n);
            let geo = cone_geodesic(&space, &y0, &y1).unwrap();
            let mut radii = Vec::with_capacity(n + 1);
            let mut thetas = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let r = geo.radius_at(t);
                let ratio = (((1.0 - t) * r0 + t * r_n * d.cos()) / r).clamp(-1.0, 1.0);
                radii.push(r);
                thetas.push(ratio.acos());
            }
            let steps: Vec<f64> = (1..=n).map(|i| (thetas[i] - thetas[i - 1]).abs()).collect();
            let competitor = fn_energy(&radii, &steps);
            assert!(
                value <= competitor + 1e-9 * (1.0 + competitor),
                "solver value {value} above the geodesic competitor {competitor}"
            );
        }
    }
    println!("300-case sweep worst scaled residual: {worst_residual:.3e}");
}

#[test]
#[ignore]
fn wasserstein_random_instances_certify() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..200 {
        let space = random_line(&mut rng, 30);
        let mu0 = random_measure(&mut rng, &space, 15);
        let raw = random_measure(&mut rng, &space, 12);
        let mu1 = scale(&raw, mu0.total_mass() / raw.total_mass()).unwrap();
        let (w, plan) = wasserstein(2.0, &space, &mu0, &mu1).unwrap();
        let plan = plan.unwrap();
        let primal = plan.cost(&space, 2.0);
        let dual = plan.dual_value(&mu0, &mu1);
        assert!((primal - w * w).abs() <= 1e-9 * (1.0 + primal));
        assert!(primal - dual <= 1e-8 * (1.0 + primal), "gap {}", primal - dual);
    }
}
