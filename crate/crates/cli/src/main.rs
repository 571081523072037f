//! Command-line harness: loads spaces and measures from JSON, dispatches
//! to the distance solvers and experiment runners, and emits JSON reports
//! plus plot-ready CSV tables.
//!
//! Exit status: 0 on success, 1 on solver failure (with a machine-readable
//! error object on stdout), 2 on input validation failure.

mod report;
mod validate;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use report::{error_object, write_csv_with_sidecar, CsvRow};
use uot::*;

/// Default relative solver tolerance; the UOT_TOL environment variable
/// overrides it, and --tol overrides both.
fn default_tol() -> f64 {
    std::env::var("UOT_TOL")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-7)
}

#[derive(Parser)]
#[command(
    name = "uot",
    about = "Unbalanced optimal-transport distances and infimal-convolution experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceKind {
    Hellinger,
    Wasserstein,
    Hk,
    Whe,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CostKind {
    /// Squared metric of the space.
    Metric,
    /// Squared discrete metric: 0 on the diagonal, 1 off it.
    Discrete,
}

#[derive(Subcommand)]
enum Cmd {
    /// Distance between two measures loaded from JSON files.
    Distance {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        mu0: PathBuf,
        #[arg(long)]
        mu1: PathBuf,
        #[arg(long, value_enum)]
        kind: DistanceKind,
        /// Exponent for the Hellinger/Wasserstein families.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Relative solver tolerance (defaults to UOT_TOL or 1e-7).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Min-plus chained minimization over a space's point set.
    InfconvDp {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        z0: usize,
        #[arg(long)]
        z1: usize,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, value_enum, default_value_t = CostKind::Metric)]
        c1: CostKind,
        #[arg(long, value_enum, default_value_t = CostKind::Metric)]
        c2: CostKind,
        /// Also chain the first cost against itself (stability probe).
        #[arg(long, default_value_t = false)]
        stability: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geodesic-discretization convergence experiment between Diracs.
    Converge {
        /// Endpoint class; only weighted Diracs are supported.
        #[arg(long, default_value = "dirac")]
        endpoints: String,
        /// Base distance between the two atoms.
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
        #[arg(long, default_value_t = 1.0)]
        m1: f64,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dirac-path energy minimizer for fixed endpoint radii.
    FnMin {
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        rn: f64,
        #[arg(long)]
        d: f64,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parallel sum of two SPD matrices, with the one-step minimizer and
    /// an optional lattice cross-check.
    ParallelSum {
        /// Inline JSON matrix, e.g. "[[1.0, 0.0], [0.0, 2.0]]".
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Inline JSON vector, e.g. "[1.0, 0.5]".
        #[arg(long)]
        v: Option<String>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full randomized invariant suite.
    Validate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Input or validation problem: exit status 2.
    Input(String),
    /// Solver problem: exit status 1.
    Solver(String),
}

impl Failure {
    fn emit(&self) -> ExitCode {
        let (kind, msg, code) = match self {
            Failure::Input(m) => ("input", m, 2),
            Failure::Solver(m) => ("solver", m, 1),
        };
        print_line(&serde_json::to_string_pretty(&error_object(kind, msg)).unwrap());
        ExitCode::from(code)
    }
}

/// Writes to stdout ignoring broken pipes, so `uot ... | head` does not
/// panic.
fn print_line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

/// Maps library errors onto the exit-code contract: malformed or
/// out-of-domain inputs are validation failures, everything else is a
/// solver failure.
fn classify(e: uot::Error) -> Failure {
    match e {
        uot::Error::DimensionMismatch { .. }
        | uot::Error::Disconnected(_, _)
        | uot::Error::PointOutOfRange { .. }
        | uot::Error::SpaceMismatch
        | uot::Error::UnmappedAtom(_)
        | uot::Error::InvalidParameter(_)
        | uot::Error::Domain(_)
        | uot::Error::UnsupportedEndpoints(_)
        | uot::Error::InvalidMetric(_)
        | uot::Error::Parse(_) => Failure::Input(e.to_string()),
        _ => Failure::Solver(e.to_string()),
    }
}

fn load_space(path: &Path) -> std::result::Result<FiniteMetricSpace, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    FiniteMetricSpace::from_json(&text).map_err(input_err)
}

fn load_measure(path: &Path, space: &FiniteMetricSpace) -> std::result::Result<DiscreteMeasure, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(DiscreteMeasure::from_json(space, &text).map_err(input_err)?.0)
}

fn finish(report: Value, out: Option<&Path>) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(&report).unwrap();
    print_line(&text);
    if let Some(path) = out {
        fs::write(path, text).map_err(input_err)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(failure) => failure.emit(),
    }
}

fn run(cmd: Cmd) -> std::result::Result<ExitCode, Failure> {
    match cmd {
        Cmd::Distance {
            space,
            mu0,
            mu1,
            kind,
            p,
            tol,
            out,
        } => {
            let started = Instant::now();
            let space = load_space(&space)?;
            let mu0 = load_measure(&mu0, &space)?;
            let mu1 = load_measure(&mu1, &space)?;
            let tol = tol.unwrap_or_else(default_tol);
            let report = distance_report(&space, &mu0, &mu1, kind, p, tol, started)?;
            finish(report, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::InfconvDp {
            space,
            z0,
            z1,
            n_list,
            c1,
            c2,
            stability,
            out,
        } => {
            let started = Instant::now();
            let space = load_space(&space)?;
            let build = |kind: CostKind| match kind {
                CostKind::Metric => CostMatrix::squared_metric(&space),
                CostKind::Discrete => CostMatrix::discrete(space.len()),
            };
            let c1m = build(c1);
            let c2m = build(c2);
            let mut rows = Vec::new();
            for &n in &n_list {
                let v = minplus_infconv(&c1m, &c2m, z0, z1, n).map_err(classify)?;
                rows.push(json!({ "N": n, "value": v }));
            }
            let stability_rows = if stability {
                let probe = stability_probe(&c1m, z0, z1, &n_list).map_err(classify)?;
                Some(json!({
                    "base": probe.base,
                    "rows": probe.rows.iter().map(|&(n, f)| json!({"N": n, "F_N": f})).collect::<Vec<_>>(),
                }))
            } else {
                None
            };
            let report = json!({
                "kind": "infconv-dp",
                "z0": z0,
                "z1": z1,
                "values": rows,
                "stability": stability_rows,
                "tolerances": { "exact_over_candidate_set": true },
                "wall_time_s": started.elapsed().as_secs_f64(),
            });
            finish(report, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Converge {
            endpoints,
            d,
            m0,
            m1,
            n_list,
            out,
        } => {
            let started = Instant::now();
            if endpoints != "dirac" {
                return Err(Failure::Input(format!(
                    "unsupported endpoint class {endpoints:?}; only \"dirac\" is available"
                )));
            }
            if !(d >= 0.0) {
                return Err(Failure::Input(format!("invalid distance {d}")));
            }
            let mut space =
                FiniteMetricSpace::build_euclidean(vec![vec![0.0], vec![d.max(1e-9)]])
                    .map_err(classify)?;
            let mu0 = DiscreteMeasure::dirac(&space, 0, m0).map_err(classify)?;
            let mu1 = DiscreteMeasure::dirac(&space, 1, m1).map_err(classify)?;
            let reports = geodesic_energy_experiment(&mut space, &mu0, &mu1, &n_list)
                .map_err(classify)?;
            let rows: Vec<CsvRow> = reports.iter().map(CsvRow::from).collect();
            let sidecar = json!({
                "kind": "converge",
                "endpoints": { "d": d, "m0": m0, "m1": m1 },
                "N": n_list,
                "tolerances": { "per_step_solver_tol": default_tol() },
                "reference": reports.first().map(|r| r.reference),
                "lower_bound": reports.first().map(|r| r.lower_bound),
                "wall_time_s": started.elapsed().as_secs_f64(),
            });
            let mut report = sidecar.clone();
            report["rows"] = json!(rows);
            report["csv"] = json!(report::render_csv(&rows, true));
            if let Some(path) = &out {
                let sidecar_path =
                    write_csv_with_sidecar(path, &rows, true, &sidecar).map_err(input_err)?;
                report["files"] = json!([path.display().to_string(), sidecar_path]);
            }
            finish(report, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::FnMin {
            r0,
            rn,
            d,
            n_list,
            out,
        } => {
            let started = Instant::now();
            let reference = r0 * r0 + rn * rn - 2.0 * r0 * rn * d.min(PI).cos();
            let mut rows = Vec::new();
            let mut states = Vec::new();
            for &n in &n_list {
                let (value, state) = dirac_fn_min(r0, rn, d, n).map_err(classify)?;
                rows.push(CsvRow {
                    n,
                    value,
                    reference,
                    gap: value - reference,
                });
                states.push(json!({
                    "N": n,
                    "lambda": state.lambda,
                    "stationarity_residual": state.stationarity_residual(d),
                }));
            }
            let sidecar = json!({
                "kind": "fn-min",
                "r0": r0, "rN": rn, "d": d,
                "reference_is_convergence_target": d <= FRAC_PI_2,
                "states": states,
                "tolerances": { "stationarity": 1e-8 },
                "wall_time_s": started.elapsed().as_secs_f64(),
            });
            let mut report = sidecar.clone();
            report["rows"] = json!(rows);
            report["csv"] = json!(report::render_csv(&rows, false));
            if let Some(path) = &out {
                let sidecar_path =
                    write_csv_with_sidecar(path, &rows, false, &sidecar).map_err(input_err)?;
                report["files"] = json!([path.display().to_string(), sidecar_path]);
            }
            finish(report, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ParallelSum {
            a,
            b,
            v,
            grid_step,
            margin,
            out,
        } => {
            let started = Instant::now();
            let parse_matrix = |text: &str| -> std::result::Result<SpdMatrix, Failure> {
                let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(input_err)?;
                SpdMatrix::new(rows).map_err(classify)
            };
            let a = parse_matrix(&a)?;
            let b = parse_matrix(&b)?;
            let p = parallel_sum(&a, &b).map_err(classify)?;
            let entries: Vec<Vec<f64>> = (0..p.dim())
                .map(|i| (0..p.dim()).map(|j| p.entry(i, j)).collect())
                .collect();
            let mut report = json!({
                "kind": "parallel-sum",
                "parallel_sum": entries,
                "tolerances": { "route_agreement": 1e-10 },
                "wall_time_s": 0.0,
            });
            if let Some(v_text) = v {
                let v: Vec<f64> = serde_json::from_str(&v_text).map_err(input_err)?;
                let (value, z) = one_step_quadratic(&a, &b, &v).map_err(classify)?;
                report["one_step"] = json!({
                    "value": value,
                    "closed_form": p.quad(&v),
                    "minimizer": z,
                });
                if let Some(step) = grid_step {
                    let check = grid_metric_check(&a, &b, &v, &GridSpec { step, margin })
                        .map_err(classify)?;
                    report["grid_check"] = json!({
                        "metric_value": check.metric_value,
                        "closed_form": check.closed_form,
                        "gap": check.gap,
                        "predicted_slack": check.predicted_slack,
                        "coarse": check.coarse,
                    });
                }
            }
            report["wall_time_s"] = json!(started.elapsed().as_secs_f64());
            finish(report, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Validate { seed, out } => {
            let started = Instant::now();
            let outcomes = validate::run_all(seed);
            let all_passed = outcomes.iter().all(|o| o.passed);
            let report = json!({
                "kind": "validate",
                "seed": seed,
                "passed": all_passed,
                "checks": outcomes.iter().map(|o| json!({
                    "name": o.name,
                    "passed": o.passed,
                    "detail": o.detail,
                })).collect::<Vec<_>>(),
                "wall_time_s": started.elapsed().as_secs_f64(),
            });
            finish(report, out.as_deref())?;
            if all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn distance_report(
    space: &FiniteMetricSpace,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    kind: DistanceKind,
    p: f64,
    tol: f64,
    started: Instant,
) -> std::result::Result<Value, Failure> {
    let opts = SolveOptions {
        tol,
        ..SolveOptions::default()
    };
    let mut report = json!({
        "kind": format!("{kind:?}").to_lowercase(),
        "tolerances": { "tol": tol, "mass_balance": 1e-12 },
    });
    match kind {
        DistanceKind::Hellinger => {
            let value = hellinger(p, mu0, mu1).map_err(classify)?;
            report["p"] = json!(p);
            report["value"] = json!(value);
            report["value_squared"] = json!(value * value);
        }
        DistanceKind::Wasserstein => {
            let (value, plan) = wasserstein(p, space, mu0, mu1).map_err(classify)?;
            report["p"] = json!(p);
            report["value"] = json!(if value.is_finite() { json!(value) } else { json!("inf") });
            if value.is_finite() {
                report["value_squared"] = json!(value * value);
            }
            if let Some(plan) = plan {
                report["duality_gap"] =
                    json!(plan.cost(space, p) - plan.dual_value(mu0, mu1));
            }
        }
        DistanceKind::Hk | DistanceKind::Whe => {
            let cost = match kind {
                DistanceKind::Hk => PairCost::hk(),
                _ => PairCost::whe(),
            };
            let sol = solve_uot(space, &cost, mu0, mu1, &opts).map_err(classify)?;
            match kind {
                DistanceKind::Hk => {
                    report["value"] = json!(sol.value.max(0.0).sqrt());
                    report["value_squared"] = json!(sol.value);
                }
                _ => {
                    report["value"] = json!(sol.value);
                    let whe = whe_cost(space, mu0, mu1).map_err(classify)?;
                    report["nu_star"] = json!(whe.nu_star.atoms());
                    report["nu_star_json"] = json!(whe.nu_star.to_json("space"));
                }
            }
            report["solver"] = json!({
                "sweeps": sol.sweeps,
                "max_iter": opts.max_iter,
                "epsilon_schedule": opts.epsilon_schedule,
            });
            // Oracle comparison on tiny supports.
            if mu0.atoms().len() <= 2 && mu1.atoms().len() <= 2 {
                let oracle = brute_force_uot(space, &cost, mu0, mu1, 9).map_err(classify)?;
                report["oracle"] = json!({
                    "brute_force_value": oracle.value,
                    "difference": (sol.value - oracle.value).abs(),
                    "local_modulus": oracle.local_modulus,
                });
            }
        }
    }
    report["wall_time_s"] = json!(started.elapsed().as_secs_f64());
    Ok(report)
}
