//! Independent numerical oracles for the discrete energy, its derivatives,
//! the solver and the control layer.

use dphase::control::{
    gateaux_derivative, reduced_gradient, ControlConfig, SolutionOperator, TrackingObjective,
};
use dphase::solver::{solve_inner, verify_weak_form, Init, SolverConfig};
use dphase::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: Grid64, rng: &mut ChaCha8Rng, amp: f64) -> GridFunction64 {
    let vals = (0..grid.num_nodes()).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    GridFunction64::from_values(grid, vals).unwrap()
}

fn random_weight(grid: Grid64, rng: &mut ChaCha8Rng) -> WeightField64 {
    let nodal = GridFunction64::from_values(grid, (0..grid.num_nodes()).map(|_| rng.random_range(0.0..2.0)).collect())
        .unwrap();
    WeightField64::from_nodal(&nodal, 2.0).unwrap()
}

/// Energy written out directly from its definition, node by node, with
/// zero boundary values and the weight averaged at edge midpoints.
fn reference_energy(u: &GridFunction64, f: &GridFunction64, mu: &WeightField64, e: &Exponents64) -> f64 {
    let grid = *u.grid();
    let (n, m, h) = (grid.dim(), grid.interior_per_axis() as isize, grid.spacing());
    let eps2 = e.regularization().powi(2);
    let mut total = 0.0;
    for axis in 0..n {
        let w = mu.axis(axis).values();
        let mut k = 0;
        // Edges are ordered like nodes with the difference axis extended by one.
        let ranges: Vec<Vec<isize>> = (0..n)
            .map(|d| if d == axis { (0..=m).collect() } else { (0..m).collect() })
            .collect();
        let mut visit = |idx: &[isize]| {
            let mut left = idx.to_vec();
            left[axis] -= 1;
            let s = (u.at(idx) - u.at(&left)) / h;
            let pi = (s * s + eps2).sqrt();
            total += pi.powf(e.p()) / e.p() + w[k] * pi.powf(e.q()) / e.q();
            k += 1;
        };
        if n == 1 {
            for &i in &ranges[0] {
                visit(&[i]);
            }
        } else {
            for &i in &ranges[0] {
                for &j in &ranges[1] {
                    visit(&[i, j]);
                }
            }
        }
    }
    let load: f64 = u.values().iter().zip(f.values()).map(|(a, b)| a * b).sum();
    (total - load) * grid.cell_volume()
}

fn configurations() -> Vec<(Exponents64, Grid64)> {
    let mut out = Vec::new();
    for (n, m) in [(1, 31), (2, 15)] {
        let grid = Grid64::new(n, m).unwrap();
        out.push((Exponents64::equal_growth(2.0, n, 0.0).unwrap(), grid));
        out.push((Exponents64::new(4.0, 4.0 / 3.0, n, 1e-6).unwrap(), grid));
    }
    out
}

#[test]
fn energy_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (e, grid) in configurations() {
        for _ in 0..5 {
            let u = random_field(grid, &mut rng, 0.2);
            let f = random_field(grid, &mut rng, 1.0);
            let mu = random_weight(grid, &mut rng);
            let j = energy(&u, &f, &mu, &e).unwrap().total;
            let r = reference_energy(&u, &f, &mu, &e);
            assert!((j - r).abs() <= 1e-12 * r.abs().max(1.0), "{j} vs {r}");
        }
    }
}

/// Fourth-order central difference of `J` along each nodal indicator.
fn fd_gradient(u: &GridFunction64, f: &GridFunction64, mu: &WeightField64, e: &Exponents64, t: f64) -> GridFunction64 {
    let grid = *u.grid();
    let vol = grid.cell_volume();
    let vals = (0..grid.num_nodes())
        .map(|k| {
            let ek = GridFunction64::indicator(grid, k);
            let j = |a: f64| energy_change(u, &ek, a, f, mu, e).unwrap();
            (8.0 * (j(t) - j(-t)) - (j(2.0 * t) - j(-2.0 * t))) / (12.0 * t) / vol
        })
        .collect();
    GridFunction64::from_values(grid, vals).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (e, grid) in configurations() {
        for _ in 0..5 {
            let u = random_field(grid, &mut rng, 0.2);
            let f = random_field(grid, &mut rng, 1.0);
            let mu = random_weight(grid, &mut rng);
            let g = energy_gradient(&u, &f, &mu, &e).unwrap();
            let fd = fd_gradient(&u, &f, &mu, &e, 1e-4 * grid.spacing());
            let rel = (&g - &fd).max_abs() / g.max_abs();
            assert!(rel <= 1e-6, "p = {}, n = {}: {rel:e}", e.p(), grid.dim());
        }
    }
}

#[test]
fn summation_by_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, m) in [(1, 12), (2, 9)] {
        let grid = Grid64::new(n, m).unwrap();
        let u = random_field(grid, &mut rng, 1.0);
        let w = random_field(grid, &mut rng, 1.0);
        let lhs: f64 = (0..n)
            .map(|a| {
                let du = forward_diff(&u, a).unwrap();
                let dw = forward_diff(&w, a).unwrap();
                quadrature(&du.zip_map(&dw, |x, y| x * y))
            })
            .sum();
        let rhs = w.inner(&neg_laplacian(&u));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}

#[test]
fn weak_and_strong_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (e, grid) in configurations() {
        let u = random_field(grid, &mut rng, 0.3);
        let f = random_field(grid, &mut rng, 1.0);
        let mu = random_weight(grid, &mut rng);
        let strong = &apply_pseudo_operator(&u, &mu, &e).unwrap() - &f;
        for _ in 0..5 {
            let phi = random_field(grid, &mut rng, 1.0);
            let weak = weak_residual(&u, &f, &mu, &e, &phi).unwrap();
            let pairing = strong.inner(&phi);
            assert!((weak - pairing).abs() <= 1e-12 * pairing.abs().max(1e-300).max(weak.abs()));
        }
    }
}

#[test]
fn hessian_matches_gradient_differences_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (e, grid) in configurations() {
        let u = random_field(grid, &mut rng, 0.3);
        let f = GridFunction64::zeros(grid);
        let mu = random_weight(grid, &mut rng);
        let v = random_field(grid, &mut rng, 1.0);
        let w = random_field(grid, &mut rng, 1.0);
        let hv = hessian_apply(&u, &v, &mu, &e).unwrap();
        let hw = hessian_apply(&u, &w, &mu, &e).unwrap();
        let (a, b) = (w.inner(&hv), v.inner(&hw));
        assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");

        let t = 1e-6;
        let gp = energy_gradient(&u.axpy(t, &v), &f, &mu, &e).unwrap();
        let gm = energy_gradient(&u.axpy(-t, &v), &f, &mu, &e).unwrap();
        let fd = (&gp - &gm).scaled(0.5 / t);
        let rel = (&fd - &hv).l2_norm() / hv.l2_norm();
        assert!(rel <= 1e-5, "p = {}: {rel:e}", e.p());
    }
}

/// Tridiagonal (Thomas) solve of the 1-D Poisson system `2 * (-u'') = f`.
fn thomas_poisson(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    let (a, b) = (-2.0 / (h * h), 4.0 / (h * h));
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = a / b;
    d[0] = f[0] / b;
    for i in 1..m {
        let den = b - a * c[i - 1];
        c[i] = a / den;
        d[i] = (f[i] - a * d[i - 1]) / den;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[test]
fn quadratic_solve_matches_tridiagonal_oracle() {
    let grid = Grid64::new(1, 63).unwrap();
    let f = GridFunction64::constant(grid, 2.0);
    let mu = WeightField64::constant(grid, 1.0).unwrap();
    let e = Exponents64::equal_growth(2.0, 1, 0.0).unwrap();
    let r = solve_inner(&f, &mu, &e, &SolverConfig::quadratic()).unwrap();
    assert!(r.converged());
    let oracle = thomas_poisson(f.values(), grid.spacing());
    let err = r.u_star.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8, "{err:e}");
    // The 3-point stencil is exact on quadratics.
    for (k, &v) in oracle.iter().enumerate() {
        let x = grid.node_coords(k)[0];
        assert!((v - 0.5 * x * (1.0 - x)).abs() <= 1e-12);
    }
}

/// Max error over the domain of the piecewise-linear reconstruction,
/// sampled at nodes and edge midpoints.
fn reconstruction_error(u: &GridFunction64, exact: impl Fn(f64) -> f64) -> f64 {
    let grid = *u.grid();
    let (m, h) = (grid.interior_per_axis() as isize, grid.spacing());
    let mut worst = 0.0f64;
    for i in 0..=m {
        let (xl, xr) = (i as f64 * h, (i + 1) as f64 * h);
        let (ul, ur) = (u.at(&[i - 1]), u.at(&[i]));
        worst = worst.max((ur - exact(xr)).abs()).max((0.5 * (ul + ur) - exact(0.5 * (xl + xr))).abs());
    }
    worst
}

#[test]
fn quadratic_case_is_second_order() {
    let exact = |x: f64| 0.5 * x * (1.0 - x);
    let e = Exponents64::equal_growth(2.0, 1, 0.0).unwrap();
    let errors: Vec<f64> = [15, 31, 63]
        .iter()
        .map(|&m| {
            let grid = Grid64::new(1, m).unwrap();
            let f = GridFunction64::constant(grid, 2.0);
            let mu = WeightField64::constant(grid, 1.0).unwrap();
            let r = solve_inner(&f, &mu, &e, &SolverConfig::quadratic().with_tol(1e-12)).unwrap();
            reconstruction_error(&r.u_star, exact)
        })
        .collect();
    for pair in errors.windows(2) {
        assert!(pair[0] / pair[1] >= 3.5, "{errors:?}");
    }
}

#[test]
fn weak_check_is_bounded_by_tolerance() {
    let grid = Grid64::new(2, 9).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let mu = WeightField64::from_fn(grid, 1.0, |x| x[0]).unwrap();
    let f = GridFunction64::constant(grid, 1.0);
    let cfg = SolverConfig::general();
    let r = solve_inner(&f, &mu, &e, &cfg).unwrap();
    assert!(r.converged());
    let check = verify_weak_form(&r, &f, &mu, &e).unwrap();
    assert!(check <= cfg.tol_grad * grid.cell_volume() * (1.0 + 1e-9));
}

#[test]
fn solution_is_unique_across_initializations() {
    let grid = Grid64::new(2, 15).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let mu = WeightField64::from_fn(grid, 1.0, |x| x[0]).unwrap();
    let f = GridFunction64::constant(grid, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = random_field(grid, &mut rng, 0.1);
    let cfg = SolverConfig::general().with_tol(1e-8);
    let a = solve_inner(&f, &mu, &e, &cfg).unwrap();
    let b = solve_inner(&f, &mu, &e, &cfg.clone().with_init(Init::Given(start))).unwrap();
    assert!(a.converged() && b.converged());
    let gap = sobolev_norm(&(&a.u_star - &b.u_star), 4.0).unwrap();
    assert!(gap <= 1e-6, "{gap:e}");
}

fn control_setup(m: usize) -> (Grid64, WeightField64, Exponents64, ControlConfig<f64>) {
    let grid = Grid64::new(2, m).unwrap();
    let mu = WeightField64::from_fn(grid, 1.0, |x| x[0]).unwrap();
    let e = Exponents64::new(4.0, 4.0 / 3.0, 2, 1e-6).unwrap();
    let cfg = ControlConfig {
        cg_tol: 1e-12,
        ..ControlConfig::default()
    };
    (grid, mu, e, cfg)
}

#[test]
fn gateaux_derivative_matches_finite_differences() {
    let (grid, mu, e, cfg) = control_setup(7);
    let f = GridFunction64::from_fn(grid, |x| 1.0 + x[0] * x[1]);
    let dir = GridFunction64::from_fn(grid, |x| (3.0 * x[0] - x[1]).sin());
    let w = gateaux_derivative(&f, &dir, &mu, &e, &cfg).unwrap();
    let psi = SolutionOperator::new(mu, e, cfg.inner.clone()).unwrap();
    let t = 1e-4;
    let up = psi.apply(&f.axpy(t, &dir)).unwrap();
    let um = psi.apply(&f.axpy(-t, &dir)).unwrap();
    let fd = (&up - &um).scaled(0.5 / t);
    let rel = (&fd - &w).l2_norm() / w.l2_norm();
    assert!(rel <= 1e-5, "{rel:e}");
}

#[test]
fn derivative_is_linear_in_direction() {
    let (grid, mu, e, cfg) = control_setup(7);
    let f = GridFunction64::constant(grid, 1.0);
    let h1 = GridFunction64::from_fn(grid, |x| x[0]);
    let h2 = GridFunction64::from_fn(grid, |x| (5.0 * x[1]).cos());
    let (a, b) = (0.7, -2.5);
    let w1 = gateaux_derivative(&f, &h1, &mu, &e, &cfg).unwrap();
    let w2 = gateaux_derivative(&f, &h2, &mu, &e, &cfg).unwrap();
    let w12 = gateaux_derivative(&f, &h1.scaled(a).axpy(b, &h2), &mu, &e, &cfg).unwrap();
    let combo = w1.scaled(a).axpy(b, &w2);
    assert!((&w12 - &combo).l2_norm() <= 1e-9 * combo.l2_norm());
}

#[test]
fn reduced_gradient_matches_finite_differences() {
    let (grid, mu, e, cfg) = control_setup(7);
    let psi = SolutionOperator::new(mu.clone(), e, cfg.inner.clone()).unwrap();
    let fhat = GridFunction64::from_fn(grid, |x| 1.0 + x[1]);
    let obj = TrackingObjective {
        target: psi.apply(&fhat).unwrap(),
        alpha: 1e-6,
    };
    let f = GridFunction64::from_fn(grid, |x| 0.5 + x[0] * x[1]);
    let g = reduced_gradient(&f, &obj, &mu, &e, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let d = random_field(grid, &mut rng, 1.0);
        let t = 1e-3;
        let jp = psi.reduced_objective(&f.axpy(t, &d), &obj).unwrap();
        let jm = psi.reduced_objective(&f.axpy(-t, &d), &obj).unwrap();
        let fd = (jp - jm) / (2.0 * t);
        let an = g.inner(&d);
        assert!((fd - an).abs() <= 1e-4 * an.abs(), "{fd:e} vs {an:e}");
    }
}
