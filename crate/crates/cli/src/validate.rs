//! The runtime invariant suite behind `uot validate`: seeded randomized
//! checks of the library's metric, distance and solver contracts. Each
//! check prints one PASS/FAIL line; the command exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uot::*;

type CheckResult = std::result::Result<(), String>;

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = (&'static str, fn(&mut ChaCha8Rng) -> CheckResult);

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let checks: Vec<Check> = vec![
        ("cone-distance-forms-agree", cone_forms_agree),
        ("cone-distance-triangle", cone_triangle),
        ("cone-truncation-monotone", cone_truncation_monotone),
        ("cone-geodesic-constant-speed", geodesic_constant_speed),
        ("cone-min-radius-closed-form", min_radius_grid),
        ("classical-triangle-inequalities", classical_triangles),
        ("wasserstein-duality-gap", wasserstein_duality),
        ("lipschitz-contraction", contraction),
        ("uot-solver-vs-brute-force", uot_oracle),
        ("uot-inequality-suite", uot_inequalities),
        ("whe-reconstruction", whe_reconstruction),
        ("minplus-properties", minplus_props),
        ("dirac-path-energy-solver", fn_solver),
        ("hilbertian-parallel-sum", hilbertian_checks),
        ("measure-json-round-trip", measure_roundtrip),
    ];
    let mut outcomes = Vec::new();
    for (idx, (name, f)) in checks.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64));
        let result = f(&mut rng);
        let outcome = CheckOutcome {
            name,
            passed: result.is_ok(),
            detail: result.err().unwrap_or_default(),
        };
        let line = if outcome.passed {
            format!("PASS {name}")
        } else {
            format!("FAIL {name}: {}", outcome.detail)
        };
        crate::print_line(&line);
        outcomes.push(outcome);
    }
    outcomes
}

fn random_segment(rng: &mut ChaCha8Rng) -> (FiniteMetricSpace, f64) {
    let d = rng.gen_range(0.05..3.5);
    (
        FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap(),
        d,
    )
}

fn random_line_space(rng: &mut ChaCha8Rng, n: usize) -> FiniteMetricSpace {
    // Sorted coordinates so index clamping is a 1-Lipschitz map.
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    xs.sort_by(f64::total_cmp);
    FiniteMetricSpace::build_euclidean(xs.into_iter().map(|x| vec![x]).collect()).unwrap()
}

fn random_measure(
    rng: &mut ChaCha8Rng,
    space: &FiniteMetricSpace,
    atoms: usize,
) -> DiscreteMeasure {
    let n = space.len();
    let mut picked: Vec<usize> = (0..n).collect();
    for i in (1..picked.len()).rev() {
        let j = rng.gen_range(0..=i);
        picked.swap(i, j);
    }
    let atoms: Vec<(usize, f64)> = picked
        .into_iter()
        .take(atoms)
        .map(|i| (i, rng.gen_range(0.1..2.0)))
        .collect();
    DiscreteMeasure::new(space, &atoms).unwrap()
}

fn cone_forms_agree(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..1000 {
        let (space, _) = random_segment(rng);
        let y0 = ConePoint::new(0, rng.gen_range(0.0..3.0));
        let y1 = ConePoint::new(1, rng.gen_range(0.0..3.0));
        let cutoff = rng.gen_range(0.01..PI);
        let sine = cone_distance(&space, &y0, &y1, cutoff);
        let cosine = cone_distance_cosine_form(&space, &y0, &y1, cutoff);
        if (sine - cosine).abs() > 1e-12 {
            return Err(format!("forms differ by {}", (sine - cosine).abs()));
        }
    }
    Ok(())
}

fn cone_triangle(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..300 {
        let space = random_line_space(rng, 3);
        let pts: Vec<ConePoint> = (0..3)
            .map(|i| ConePoint::new(i, rng.gen_range(0.0..2.0)))
            .collect();
        let ab = cone_distance(&space, &pts[0], &pts[1], PI);
        let bc = cone_distance(&space, &pts[1], &pts[2], PI);
        let ac = cone_distance(&space, &pts[0], &pts[2], PI);
        if ac > ab + bc + 1e-10 {
            return Err(format!("triangle violated by {}", ac - ab - bc));
        }
    }
    Ok(())
}

fn cone_truncation_monotone(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..300 {
        let (space, _) = random_segment(rng);
        let y0 = ConePoint::new(0, rng.gen_range(0.0..2.0));
        let y1 = ConePoint::new(1, rng.gen_range(0.0..2.0));
        let half = cone_distance(&space, &y0, &y1, FRAC_PI_2);
        let full = cone_distance(&space, &y0, &y1, PI);
        if half > full + 1e-14 {
            return Err("truncated distance exceeds canonical one".into());
        }
    }
    Ok(())
}

fn geodesic_constant_speed(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..40 {
        let (mut space, _) = random_segment(rng);
        let y0 = ConePoint::new(0, rng.gen_range(0.1..2.0));
        let y1 = ConePoint::new(1, rng.gen_range(0.1..2.0));
        let geo = cone_geodesic(&space, &y0, &y1).map_err(|e| e.to_string())?;
        let total = cone_distance(&space, &y0, &y1, PI);
        for k in 0..=6 {
            for l in (k + 1)..=6 {
                let (s, t) = (k as f64 / 6.0, l as f64 / 6.0);
                let ps = geo.eval(&mut space, s).map_err(|e| e.to_string())?;
                let pt = geo.eval(&mut space, t).map_err(|e| e.to_string())?;
                let seg = cone_distance(&space, &ps, &pt, PI);
                if (seg - (t - s) * total).abs() > 1e-9 {
                    return Err(format!(
                        "speed defect {} at ({s}, {t})",
                        (seg - (t - s) * total).abs()
                    ));
                }
            }
        }
    }
    Ok(())
}

fn min_radius_grid(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..25 {
        let d = rng.gen_range(0.01..PI - 0.01);
        let space = FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d]]).unwrap();
        let y0 = ConePoint::new(0, rng.gen_range(0.1..2.0));
        let y1 = ConePoint::new(1, rng.gen_range(0.1..2.0));
        let (_, r_min) = min_radius(&space, &y0, &y1).map_err(|e| e.to_string())?;
        let geo = cone_geodesic(&space, &y0, &y1).map_err(|e| e.to_string())?;
        let mut scan = f64::INFINITY;
        for k in 0..=100_000 {
            scan = scan.min(geo.radius_at(k as f64 / 100_000.0));
        }
        if (scan - r_min).abs() > 1e-8 {
            return Err(format!("closed form {r_min} vs grid {scan}"));
        }
        if d <= FRAC_PI_2 {
            let floor = y0.r().min(y1.r()) / 2.0_f64.sqrt();
            if r_min < floor - 1e-12 {
                return Err(format!("r_min {r_min} below the sqrt(2) floor {floor}"));
            }
        }
    }
    Ok(())
}

fn classical_triangles(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..40 {
        let space = random_line_space(rng, 6);
        let a = random_measure(rng, &space, 2);
        let b = random_measure(rng, &space, 2);
        let c = random_measure(rng, &space, 2);
        let he = |x: &DiscreteMeasure, y: &DiscreteMeasure| hellinger(2.0, x, y).unwrap();
        if he(&a, &c) > he(&a, &b) + he(&b, &c) + 1e-9 {
            return Err("Hellinger triangle inequality violated".into());
        }
        // Equal-mass versions for the Wasserstein side.
        let t = a.total_mass();
        let b_eq = scale(&b, t / b.total_mass()).unwrap();
        let c_eq = scale(&c, t / c.total_mass()).unwrap();
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| {
            wasserstein(2.0, &space, x, y).unwrap().0
        };
        if w(&a, &c_eq) > w(&a, &b_eq) + w(&b_eq, &c_eq) + 1e-9 {
            return Err("Wasserstein triangle inequality violated".into());
        }
    }
    Ok(())
}

fn wasserstein_duality(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..40 {
        let space = random_line_space(rng, 7);
        let mu0 = random_measure(rng, &space, 3);
        let mass = mu0.total_mass();
        let raw = random_measure(rng, &space, 3);
        let mu1 = scale(&raw, mass / raw.total_mass()).unwrap();
        let (w, plan) = wasserstein(2.0, &space, &mu0, &mu1).map_err(|e| e.to_string())?;
        let plan = plan.ok_or("expected a finite plan")?;
        let primal = plan.cost(&space, 2.0);
        if (primal - w * w).abs() > 1e-9 {
            return Err("plan cost does not match the reported distance".into());
        }
        let dual = plan.dual_value(&mu0, &mu1);
        if primal - dual > 1e-8 {
            return Err(format!("duality gap {}", primal - dual));
        }
        for (i, &x) in plan.rows.iter().enumerate() {
            for (j, &y) in plan.cols.iter().enumerate() {
                if plan.entry(i, j) > 1e-10 {
                    let c = space.dist(x, y).powi(2);
                    if (plan.phi[i] + plan.psi[j] - c).abs() > 1e-8 {
                        return Err("complementary slackness violated".into());
                    }
                }
            }
        }
    }
    Ok(())
}

fn contraction(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..25 {
        let space = random_line_space(rng, 6);
        let mu0 = random_measure(rng, &space, 3);
        let raw = random_measure(rng, &space, 3);
        let mu1 = scale(&raw, mu0.total_mass() / raw.total_mass()).unwrap();
        // Index clamping on the sorted line is 1-Lipschitz.
        let merge = |i: usize| Some(i.clamp(1, 4));
        let f0 = pushforward(&mu0, &space, merge).unwrap();
        let f1 = pushforward(&mu1, &space, merge).unwrap();
        let he = hellinger(2.0, &mu0, &mu1).unwrap();
        let he_f = hellinger(2.0, &f0, &f1).unwrap();
        if he_f > he + 1e-9 {
            return Err("Hellinger expanded under a merge map".into());
        }
        let hk = hk_distance(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        let hk_f = hk_distance(&space, &f0, &f1).map_err(|e| e.to_string())?;
        if hk_f > hk + 1e-8 {
            return Err(format!("HK expanded under a 1-Lipschitz map: {hk_f} > {hk}"));
        }
    }
    Ok(())
}

fn uot_oracle(rng: &mut ChaCha8Rng) -> CheckResult {
    for trial in 0..20 {
        let space = random_line_space(rng, 4);
        let mu0 = random_measure(rng, &space, 1 + trial % 2);
        let mu1 = random_measure(rng, &space, 1 + (trial / 2) % 2);
        for cost in [PairCost::hk(), PairCost::whe()] {
            let sol = solve_uot(&space, &cost, &mu0, &mu1, &SolveOptions::default())
                .map_err(|e| e.to_string())?;
            let oracle =
                brute_force_uot(&space, &cost, &mu0, &mu1, 9).map_err(|e| e.to_string())?;
            if (sol.value - oracle.value).abs() > 1e-4 {
                return Err(format!(
                    "solver {} vs oracle {} (trial {trial})",
                    sol.value, oracle.value
                ));
            }
        }
    }
    Ok(())
}

fn uot_inequalities(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..25 {
        let space = random_line_space(rng, 6);
        let mu0 = random_measure(rng, &space, 3);
        let mu1 = random_measure(rng, &space, 3);
        let hk = hk_distance(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        let whe = whe_cost(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        if hk * hk > 2.0 * whe.value + 1e-8 {
            return Err(format!("HK^2 {} > 2 WHe {}", hk * hk, 2.0 * whe.value));
        }
        // 1-homogeneity in mass.
        let lam = 3.0;
        let hk_scaled = hk_distance(
            &space,
            &scale(&mu0, lam).unwrap(),
            &scale(&mu1, lam).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let rel = (hk_scaled * hk_scaled - lam * hk * hk).abs() / (1.0 + lam * hk * hk);
        if rel > 1e-8 {
            return Err(format!("mass scaling defect {rel}"));
        }
        // Subadditivity on sums.
        let nu0 = random_measure(rng, &space, 2);
        let nu1 = random_measure(rng, &space, 2);
        let joint = hk_distance(&space, &mu0.add(&nu0).unwrap(), &mu1.add(&nu1).unwrap())
            .map_err(|e| e.to_string())?;
        let split = hk_distance(&space, &nu0, &nu1).map_err(|e| e.to_string())?;
        if joint * joint > hk * hk + split * split + 1e-8 {
            return Err("subadditivity violated".into());
        }
    }
    Ok(())
}

fn whe_reconstruction(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..25 {
        let space = random_line_space(rng, 5);
        let mu0 = random_measure(rng, &space, 2);
        let mu1 = random_measure(rng, &space, 2);
        let sol = whe_cost(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        let he = hellinger(2.0, &mu0, &sol.nu_star).unwrap();
        let (w, _) = wasserstein(2.0, &space, &sol.nu_star, &mu1).unwrap();
        let recomposed = he * he + w * w;
        if (recomposed - sol.value).abs() > 1e-6 * (1.0 + sol.value) {
            return Err(format!("recomposition {recomposed} vs value {}", sol.value));
        }
        // The part of nu_star singular w.r.t. mu0 sits on atoms of mu1.
        let (_, singular) = lebesgue_decompose(&sol.nu_star, &mu0).unwrap();
        for &(i, _) in singular.atoms() {
            if mu1.mass_at(i) == 0.0 {
                return Err(format!("singular atom at {i} off the support of mu1"));
            }
        }
    }
    Ok(())
}

fn minplus_props(rng: &mut ChaCha8Rng) -> CheckResult {
    // Discrete metric grows at least linearly.
    let disc = CostMatrix::discrete(4);
    for n in 1..=32 {
        let v = minplus_infconv(&disc, &disc, 0, 3, n).map_err(|e| e.to_string())?;
        if v < n as f64 - 1e-9 {
            return Err(format!("discrete metric at N = {n}: {v}"));
        }
    }
    // One-step self-convolution of the fine path metric halves the square.
    let coords: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64 / 100.0]).collect();
    let line = FiniteMetricSpace::build_euclidean(coords).unwrap();
    let rho2 = CostMatrix::squared_metric(&line);
    let v = minplus_infconv(&rho2, &rho2, 0, 100, 1).map_err(|e| e.to_string())?;
    if (v - 0.5).abs() > 0.01 {
        return Err(format!("path-graph one-step value {v}"));
    }
    // Monotonicity under entrywise domination, random instances.
    for _ in 0..10 {
        let n = 4;
        let big = CostMatrix::from_fn(n, |i, j| {
            if i == j {
                0.0
            } else {
                1.0 + ((i * 7 + j * 3) % 5) as f64
            }
        });
        let shrink = rng.gen_range(0.2..0.9);
        let small = CostMatrix::from_fn(n, |i, j| shrink * big.get(i, j));
        for steps in [1, 2, 5] {
            let v_small = minplus_infconv(&small, &big, 0, 3, steps).unwrap();
            let v_big = minplus_infconv(&big, &big, 0, 3, steps).unwrap();
            if v_small > v_big + 1e-12 {
                return Err("monotonicity violated".into());
            }
        }
    }
    Ok(())
}

fn fn_solver(rng: &mut ChaCha8Rng) -> CheckResult {
    // Zero distance gives the telescoped linear interpolant exactly.
    let (v, _) = dirac_fn_min(1.0, 2.0, 0.0, 16).map_err(|e| e.to_string())?;
    if (v - 1.0).abs() > 1e-12 {
        return Err(format!("d = 0 value {v}"));
    }
    for _ in 0..10 {
        let r0 = rng.gen_range(0.3..2.0);
        let r_n = rng.gen_range(0.3..2.0);
        let d = rng.gen_range(0.1..1.5);
        let n = 32;
        let (value, state) = dirac_fn_min(r0, r_n, d, n).map_err(|e| e.to_string())?;
        let residual = state.stationarity_residual(d);
        if residual > 1e-8 * (1.0 + r0.max(r_n)) {
            return Err(format!("stationarity residual {residual}"));
        }
        let budget = (r0 - r_n) * (r0 - r_n) + r0 * r_n * d.min(FRAC_PI_2).powi(2);
        if value <= budget {
            let r_lo = (1.0 - PI / 4.0) * r0.min(r_n);
            let r_hi = r0.max(r_n);
            for &r in &state.radii[1..n] {
                if r < r_lo - 1e-9 || r > r_hi + 1e-9 {
                    return Err(format!("radius {r} escapes [{r_lo}, {r_hi}]"));
                }
            }
            let d_cap = (1.0 / (n as f64).sqrt()) * (PI / (2.0 - FRAC_PI_2))
                * (r0 * r_n).sqrt()
                / r0.min(r_n);
            for &s in &state.steps {
                if s > d_cap + 1e-9 {
                    return Err(format!("step {s} above the cap {d_cap}"));
                }
            }
        }
    }
    Ok(())
}

fn hilbertian_checks(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..100 {
        let dim = rng.gen_range(1..=6);
        let spd = |rng: &mut ChaCha8Rng| -> SpdMatrix {
            // Random factor times its transpose plus a diagonal shift.
            let f: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let rows: Vec<Vec<f64>> = (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            let mut s = 0.0;
                            for k in 0..dim {
                                s += f[i][k] * f[j][k];
                            }
                            s + if i == j { 0.5 } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            SpdMatrix::new(rows).unwrap()
        };
        let a = spd(rng);
        let b = spd(rng);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = parallel_sum(&a, &b).map_err(|e| e.to_string())?;
        let (value, _) = one_step_quadratic(&a, &b, &v).map_err(|e| e.to_string())?;
        let closed = p.quad(&v);
        if (value - closed).abs() > 1e-8 * (1.0 + closed.abs()) {
            return Err(format!("one-step {value} vs parallel sum {closed}"));
        }
        if p.quad(&v) > a.quad(&v) + 1e-10 || p.quad(&v) > b.quad(&v) + 1e-10 {
            return Err("parallel sum escapes the Loewner bound".into());
        }
    }
    // Grid fixtures in dimensions 1 and 2.
    let a1 = SpdMatrix::new(vec![vec![1.0]]).unwrap();
    let r1 = grid_metric_check(
        &a1,
        &a1,
        &[1.0],
        &GridSpec {
            step: 0.01,
            margin: 0.25,
        },
    )
    .map_err(|e| e.to_string())?;
    if r1.gap.abs() > 0.02 * r1.closed_form {
        return Err(format!("line fixture gap {}", r1.gap));
    }
    let a2 = SpdMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let b2 = SpdMatrix::new(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
    let r2 = grid_metric_check(
        &a2,
        &b2,
        &[1.0, 0.5],
        &GridSpec {
            step: 0.05,
            margin: 0.25,
        },
    )
    .map_err(|e| e.to_string())?;
    if r2.gap.abs() > 0.02 * r2.closed_form {
        return Err(format!("plane fixture gap {}", r2.gap));
    }
    Ok(())
}

fn measure_roundtrip(rng: &mut ChaCha8Rng) -> CheckResult {
    for _ in 0..50 {
        let space = random_line_space(rng, 5);
        let mu = random_measure(rng, &space, 3);
        let text = mu.to_json("fixture");
        let (back, _) = DiscreteMeasure::from_json(&space, &text).map_err(|e| e.to_string())?;
        if back != mu {
            return Err("round trip changed the measure".into());
        }
    }
    Ok(())
}
