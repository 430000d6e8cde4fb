//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p dphase-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dphase::control::{ControlConfig, Objective, SolutionOperator, TrackingObjective};
use dphase::convexity::{check_sum_lemma, estimate_modulus, ModulusClaim, RealLine, SamplerConfig, SobolevSpace};
use dphase::solver::{solve_inner, Init, SolverConfig};
use dphase::*;
use dphase_cli::{parse_config, run, Overrides, EXIT_OK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = std::result::Result<String, String>;

fn random_field(grid: Grid64, rng: &mut ChaCha8Rng, amp: f64) -> GridFunction64 {
    let vals = (0..grid.num_nodes()).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    GridFunction64::from_values(grid, vals).unwrap()
}

fn random_weight(grid: Grid64, rng: &mut ChaCha8Rng) -> WeightField64 {
    let nodal = random_field(grid, rng, 1.0).map(|v| v + 1.0);
    WeightField64::from_nodal(&nodal, 2.0).unwrap()
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Criterion 1: Energy gradient vs. fourth-order central differences of `J`.
fn gradient_consistency() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (n, m) in [(1, 31), (2, 15)] {
        let grid = Grid64::new(n, m).unwrap();
        let configs = [
            Exponents64::equal_growth(2.0, n, 0.0).unwrap(),
            Exponents64::new(4.0, 4.0 / 3.0, n, 1e-6).unwrap(),
        ];
        for e in configs {
            for _ in 0..20 {
                let u = random_field(grid, &mut rng, 0.2);
                let f = random_field(grid, &mut rng, 1.0);
                let mu = random_weight(grid, &mut rng);
                let g = energy_gradient(&u, &f, &mu, &e).unwrap();
                let t = 1e-4 * grid.spacing();
                let vol = grid.cell_volume();
                let fd: Vec<f64> = (0..grid.num_nodes())
                    .map(|k| {
                        let ek = GridFunction64::indicator(grid, k);
                        let j = |a: f64| energy_change(&u, &ek, a, &f, &mu, &e).unwrap();
                        (8.0 * (j(t) - j(-t)) - (j(2.0 * t) - j(-2.0 * t))) / (12.0 * t) / vol
                    })
                    .collect();
                let fd = GridFunction64::from_values(grid, fd).unwrap();
                worst = worst.max((&g - &fd).max_abs() / g.max_abs());
                count += 1;
            }
        }
    }
    ensure(worst <= 1e-6, format!("worst relative error {worst:.2e} <= 1e-6 over {count} instances"))
}

/// Criterion 2: Weak residual vs. the pairing of the strong residual with a test function.
fn weak_strong_correspondence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = Grid64::new(2, 15).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = random_field(grid, &mut rng, 0.3);
        let f = random_field(grid, &mut rng, 1.0);
        let mu = random_weight(grid, &mut rng);
        let strong = &apply_pseudo_operator(&u, &mu, &e).unwrap() - &f;
        for _ in 0..20 {
            let phi = random_field(grid, &mut rng, 1.0);
            let weak = weak_residual(&u, &f, &mu, &e, &phi).unwrap();
            let pairing = strong.inner(&phi);
            let scale = weak.abs().max(pairing.abs());
            if scale > 0.0 {
                worst = worst.max((weak - pairing).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-12, format!("worst relative mismatch {worst:.2e} <= 1e-12 over 400 pairs"))
}

/// Floor for the two-dimensional operator gap, fixed from the first oracle
/// run (measured 0.49 on this instance) with a wide safety margin.
const OPERATOR_GAP_FLOOR: f64 = 0.01;

/// Criterion 3: Pseudo vs. divergence operator.
fn operator_mismatch() -> Verdict {
    let relative_gap = |grid: Grid64, e: &Exponents64, u: &GridFunction64| {
        let mu = WeightField64::constant(grid, 1.0).unwrap();
        let a = apply_pseudo_operator(u, &mu, e).unwrap();
        let b = apply_divergence_operator(u, &mu, e).unwrap();
        (&a - &b).l2_norm() / a.l2_norm()
    };
    let g1 = Grid64::new(1, 31).unwrap();
    let u1 = GridFunction64::from_fn(g1, |x| x[0] * (1.0 - x[0]) * (3.0 * x[0]).sin());
    let one_d = relative_gap(g1, &Exponents64::new(4.0, 4.0 / 3.0, 1, 1e-6).unwrap(), &u1);

    let g2 = Grid64::new(2, 15).unwrap();
    let aniso = GridFunction64::from_fn(g2, |x| x[0] * (1.0 - x[0]) * (std::f64::consts::PI * x[1]).sin());
    let two_d = relative_gap(g2, &Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap(), &aniso);
    let quad = relative_gap(g2, &Exponents64::equal_growth(2.0, 2, 0.0).unwrap(), &aniso);
    ensure(
        one_d <= 1e-14 && two_d >= OPERATOR_GAP_FLOOR && quad <= 1e-12,
        format!(
            "n=1 gap {one_d:.2e} <= 1e-14; n=2 anisotropic gap {two_d:.3} >= {OPERATOR_GAP_FLOOR}; p=q=2 gap {quad:.2e} <= 1e-12"
        ),
    )
}

/// Criterion 4: Quadratic case: error against `x(1-x)/2` of the piecewise-linear
/// reconstruction, sampled at nodes and cell midpoints.
fn quadratic_convergence() -> Verdict {
    let exact = |x: f64| 0.5 * x * (1.0 - x);
    let e = Exponents64::equal_growth(2.0, 1, 0.0).unwrap();
    let mut errors = Vec::new();
    let mut nodal = Vec::new();
    for m in [15, 31, 63] {
        let grid = Grid64::new(1, m).unwrap();
        let f = GridFunction64::constant(grid, 2.0);
        let mu = WeightField64::constant(grid, 1.0).unwrap();
        let r = solve_inner(&f, &mu, &e, &SolverConfig::quadratic()).unwrap();
        if !r.converged() {
            return Err(format!("solve for m = {m} ended with {}", r.status));
        }
        let h = grid.spacing();
        let mut worst = 0.0f64;
        let mut worst_node = 0.0f64;
        for i in 0..=(m as isize) {
            let (ul, ur) = (r.u_star.at(&[i - 1]), r.u_star.at(&[i]));
            let (xl, xr) = (i as f64 * h, (i + 1) as f64 * h);
            worst_node = worst_node.max((ur - exact(xr)).abs());
            worst = worst.max((ur - exact(xr)).abs()).max((0.5 * (ul + ur) - exact(0.5 * (xl + xr))).abs());
        }
        errors.push(worst);
        nodal.push(worst_node);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    ensure(
        ratios.iter().all(|&r| r >= 3.5),
        format!(
            "max errors {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3} >= 3.5 (nodal errors <= {:.1e})",
            errors[0],
            errors[1],
            errors[2],
            ratios[0],
            ratios[1],
            nodal.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

/// Criterion 5: Two initializations reach the same state.
fn uniqueness() -> Verdict {
    let grid = Grid64::new(2, 15).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let mu = WeightField64::from_fn(grid, 1.0, |x| x[0]).unwrap();
    let f = GridFunction64::constant(grid, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = random_field(grid, &mut rng, 0.2);
    let cfg = SolverConfig::general().with_tol(1e-8);
    let a = solve_inner(&f, &mu, &e, &cfg).unwrap();
    let b = solve_inner(&f, &mu, &e, &cfg.clone().with_init(Init::Given(start))).unwrap();
    if !(a.converged() && b.converged()) {
        return Err(format!("solves ended with {} and {}", a.status, b.status));
    }
    let gap = sobolev_norm(&(&a.u_star - &b.u_star), 4.0).unwrap();
    ensure(
        gap <= 1e-6,
        format!("sobolev_norm gap {gap:.2e} <= 1e-6 ({} and {} iterations)", a.iterations, b.iterations),
    )
}

/// Criterion 6: Exponent validator.
fn exponent_validator() -> Verdict {
    let strict: Result<Exponents64> = validate_exponents(4.0 / 3.0, 2, ExponentMode::Strict, None);
    let p_exact = matches!(&strict, Ok(e) if e.p() == 4.0);
    let degenerate = validate_exponents::<f64>(2.0, 2, ExponentMode::Strict, None).is_err();
    let relaxed_equal = validate_exponents::<f64>(2.0, 2, ExponentMode::Relaxed, Some(2.0)).is_err();
    let relaxed_below = validate_exponents::<f64>(3.0, 2, ExponentMode::Relaxed, Some(2.5)).is_err();
    ensure(
        p_exact && degenerate && relaxed_equal && relaxed_below,
        format!(
            "q=4/3,n=2 strict -> p=4 exactly: {p_exact}; q=2,n=2 strict rejected: {degenerate}; relaxed p<=q rejected: {}",
            relaxed_equal && relaxed_below
        ),
    )
}

/// Criterion 7: Hyperconvexity lab.
fn hyperconvexity() -> Verdict {
    let seed = 20240601;
    let square = estimate_modulus(&RealLine, |x: &f64| x * x, 2.0, &SamplerConfig::new(seed, 10_000)).unwrap();
    let square_ok = (0.49..=0.5).contains(&square.c_estimate);

    let grid = Grid64::new(1, 5).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 1, 1e-6).unwrap();
    let mu = WeightField64::constant(grid, 1.0).unwrap();
    let zero = GridFunction64::zeros(grid);
    let space = SobolevSpace { grid, exponent: 4.0 };
    let sampler = SamplerConfig::new(seed, 1000);
    let j = |u: &GridFunction64| energy(u, &zero, &mu, &e).unwrap().total;
    let energy_cert = estimate_modulus(&space, j, 4.0, &sampler).unwrap();
    let energy_ok = energy_cert.c_estimate > 0.0 && energy_cert.failures == 0;

    let (p, q) = (4.0, 4.0 / 3.0);
    let norm = |u: &GridFunction64| sobolev_norm(u, p).unwrap();
    let h = estimate_modulus(&space, |u: &GridFunction64| norm(u).powf(p) / p, p, &sampler).unwrap();
    let g = estimate_modulus(&space, |u: &GridFunction64| norm(u).powf(q) / q, q, &sampler).unwrap();
    let sum = |u: &GridFunction64| norm(u).powf(p) / p + norm(u).powf(q) / q;
    let lemma = check_sum_lemma(
        ModulusClaim::from_certificate(&h),
        ModulusClaim::from_certificate(&g),
        &space,
        sum,
        &sampler,
    );
    let lemma_ok = matches!(&lemma, Ok(c) if c.passed() && c.c_estimate == h.c_estimate);
    let lemma_detail = match &lemma {
        Ok(c) => format!("sum lemma at c = {:.4e}: {} failures", c.c_estimate, c.failures),
        Err(err) => format!("sum lemma error: {err}"),
    };
    ensure(
        square_ok && energy_ok && lemma_ok,
        format!(
            "x^2: c = {:.6} in [0.49, 0.5]; J (1-D m=5): c = {:.4e}, {} failures; {lemma_detail}",
            square.c_estimate, energy_cert.c_estimate, energy_cert.failures
        ),
    )
}

/// Criterion 8: Adjoint reduced gradient vs. central differences of the reduced objective.
fn adjoint_gradient() -> Verdict {
    let grid = Grid64::new(2, 15).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let mu = WeightField64::from_fn(grid, 1.0, |x| x[0]).unwrap();
    let cfg = ControlConfig::default();
    let psi = SolutionOperator::new(mu, e, cfg.inner.clone()).unwrap();
    let fhat = GridFunction64::from_fn(grid, |x| 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
    let obj = TrackingObjective {
        target: psi.apply(&fhat).unwrap(),
        alpha: 1e-6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_field(grid, &mut rng, 0.5).map(|v| v + 1.0);
    let u = psi.apply(&f).unwrap();
    let g = psi.reduced_gradient_at(&f, &u, &obj, &cfg).unwrap();
    let reduced = |fp: &GridFunction64| {
        let up = psi.apply_from(fp, Some(&u)).unwrap();
        obj.evaluate(fp, &up)
    };
    let t = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let d = random_field(grid, &mut rng, 1.0);
        let fd = (reduced(&f.axpy(t, &d)) - reduced(&f.axpy(-t, &d))) / (2.0 * t);
        let an = g.inner(&d);
        worst = worst.max((fd - an).abs() / an.abs());
    }
    ensure(worst <= 1e-4, format!("worst relative error {worst:.2e} <= 1e-4 over 10 directions"))
}

fn read_record(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Criterion 9: End-to-end control on the bundled tracking instance.
fn end_to_end_control(scratch: &Path) -> Verdict {
    let out = scratch.join("control");
    let flags = Overrides {
        out: Some(out.clone()),
        ..Overrides::default()
    };
    let cfg = parse_config(Some(&fixture("control_tracking.toml")), &flags).map_err(|e| e.to_string())?;
    let outcome = run(&cfg).map_err(|e| e.to_string())?;
    let rec = read_record(&out.join("report.txt"));
    let num = |k: &str| rec[k].parse::<f64>().unwrap();
    let (stationarity, objective, reference) = (num("stationarity"), num("objective"), num("reference_objective"));
    ensure(
        outcome.exit_code == EXIT_OK && stationarity <= 1e-5 && objective <= reference + 1e-8,
        format!(
            "exit {}, {} outer iterations, stationarity {stationarity:.2e} <= 1e-5, objective {objective:.6e} <= {:.6e} + 1e-8",
            outcome.exit_code, rec["outer_iterations"], reference
        ),
    )
}

/// Criterion 10: Two CLI runs per acceptance command produce byte-identical artifacts.
fn determinism(scratch: &Path) -> Verdict {
    let fixtures = [
        "solve_quadratic.toml",
        "solve_double_phase.toml",
        "compare_ops.toml",
        "convexity_energy.toml",
        "convexity_sum.toml",
        "control_tracking.toml",
        "exponents.toml",
    ];
    let mut files = 0;
    for name in fixtures {
        let mut outputs = Vec::new();
        for run_index in 0..2 {
            let out = scratch.join(format!("det-{run_index}-{name}"));
            let flags = Overrides {
                out: Some(out.clone()),
                ..Overrides::default()
            };
            let cfg = parse_config(Some(&fixture(name)), &flags).map_err(|e| format!("{name}: {e}"))?;
            let outcome = run(&cfg).map_err(|e| format!("{name}: {e}"))?;
            let mut contents: Vec<(String, Vec<u8>)> = outcome
                .artifacts
                .iter()
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
                .collect();
            contents.sort();
            outputs.push((outcome.exit_code, contents));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{name}: artifacts differ between runs"));
        }
        files += outputs[0].1.len();
    }
    Ok(format!("{} commands, {files} artifacts byte-identical across two runs", fixtures.len()))
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let scratch_path = scratch.path().to_path_buf();
    type Check<'a> = (u32, &'a str, Duration, Box<dyn Fn() -> Verdict + 'a>);
    let minute = Duration::from_secs(60);
    let checks: Vec<Check> = vec![
        (1, "gradient consistency", minute, Box::new(gradient_consistency)),
        (2, "weak/strong correspondence", minute, Box::new(weak_strong_correspondence)),
        (3, "operator mismatch and coincidence", minute, Box::new(operator_mismatch)),
        (4, "quadratic-case convergence", minute, Box::new(quadratic_convergence)),
        (5, "uniqueness of the solution operator", minute, Box::new(uniqueness)),
        (6, "exponent validator", minute, Box::new(exponent_validator)),
        (7, "hyperconvexity lab", minute, Box::new(hyperconvexity)),
        (8, "adjoint reduced gradient", 2 * minute, Box::new(adjoint_gradient)),
        (9, "end-to-end control", 5 * minute, Box::new(|| end_to_end_control(&scratch_path))),
        (10, "determinism", 10 * minute, Box::new(|| determinism(&scratch_path))),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in &checks {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}")),
            other => other,
        };
        match verdict {
            Ok(detail) => println!("[PASS] criterion {id:>2}: {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {id:>2}: {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
