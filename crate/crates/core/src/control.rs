//! Optimal control through the solution operator `psi: f -> u`.
//!
//! The reduced objective is `j(f) = E(f, psi(f))`. Its gradient comes from
//! one adjoint solve with the (self-adjoint) Hessian of the energy at
//! `psi(f)`, and [`optimize_control`] runs Armijo gradient descent on `j`
//! until the discrete first-order condition `|grad j|_inf <= tol` holds.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cg::{conjugate_gradient, truncated_cg};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::phase::{Exponents, Linearization, WeightField};
use crate::scalar::Scalar;
use crate::solver::{solve_inner, Init, SolveReport, SolverConfig, MIN_STEP};

/// A cost `E(f, u)` with partial gradients in the discrete `L^2` inner
/// product: `d/dt E(f + t df, u + t du) = <grad_f, df> + <grad_u, du>`.
pub trait Objective<T: Scalar> {
    fn evaluate(&self, f: &GridFunction<T>, u: &GridFunction<T>) -> T;
    fn grad_u(&self, f: &GridFunction<T>, u: &GridFunction<T>) -> GridFunction<T>;
    fn grad_f(&self, f: &GridFunction<T>, u: &GridFunction<T>) -> GridFunction<T>;
}

/// `E(f, u) = |u - u_d|^2 / 2 + alpha |f|^2 / 2` in the discrete `L^2` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingObjective<T> {
    pub target: GridFunction<T>,
    pub alpha: T,
}

impl<T: Scalar> Objective<T> for TrackingObjective<T> {
    fn evaluate(&self, f: &GridFunction<T>, u: &GridFunction<T>) -> T {
        let half = T::of(0.5);
        let r = u - &self.target;
        half * r.inner(&r) + half * self.alpha * f.inner(f)
    }

    fn grad_u(&self, _f: &GridFunction<T>, u: &GridFunction<T>) -> GridFunction<T> {
        u - &self.target
    }

    fn grad_f(&self, f: &GridFunction<T>, _u: &GridFunction<T>) -> GridFunction<T> {
        f.scaled(self.alpha)
    }
}

/// Checks both partial gradients against central differences of
/// `evaluate` along `probes` random directions. Fails when the relative
/// error exceeds `1e-6` beyond the round-off floor of the difference
/// quotient, `eps_mach |E| / step`.
pub fn objective_self_test<T: Scalar>(
    obj: &dyn Objective<T>,
    f: &GridFunction<T>,
    u: &GridFunction<T>,
    seed: u64,
    probes: usize,
) -> Result<()> {
    let tol = 1e-6;
    let step = T::of(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction = || {
        let vals = (0..f.grid().num_nodes())
            .map(|_| T::of(StandardNormal.sample(&mut rng)))
            .collect();
        GridFunction::from_values(*f.grid(), vals).expect("finite samples")
    };
    for k in 0..probes {
        let (df, du) = (direction(), direction());
        let two = T::of(2.0);
        let fd_f = (obj.evaluate(&f.axpy(step, &df), u) - obj.evaluate(&f.axpy(-step, &df), u)) / (two * step);
        let fd_u = (obj.evaluate(f, &u.axpy(step, &du)) - obj.evaluate(f, &u.axpy(-step, &du))) / (two * step);
        let an_f = obj.grad_f(f, u).inner(&df);
        let an_u = obj.grad_u(f, u).inner(&du);
        let floor = T::of(10.0) * T::epsilon() * obj.evaluate(f, u).abs() / step;
        for (name, fd, an) in [("grad_f", fd_f, an_f), ("grad_u", fd_u, an_u)] {
            let scale = fd.abs().max(an.abs()).max(T::of(1e-8));
            let rel = (((fd - an).abs() - floor).max(T::zero()) / scale).to_f64_lossy();
            if rel > tol {
                return Err(Error::ObjectiveSelfTest(format!(
                    "{name} probe {k}: analytic {an}, finite difference {fd}, relative error {rel:.3e}"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig<T> {
    pub inner: SolverConfig<T>,
    /// Stop once `|grad j|_inf` is at most this.
    pub tol_reduced: T,
    pub max_outer: usize,
    /// Relative residual target of the Hessian solves.
    pub cg_tol: T,
    pub cg_max: usize,
    /// Regularization weight of the bundled tracking objective.
    pub alpha: T,
    pub armijo_c: T,
    pub backtrack: T,
    /// Step tried on the first outer iteration; later ones use Barzilai-Borwein.
    pub initial_step: T,
    /// Metric in which the outer descent direction is the gradient.
    pub metric: ControlMetric,
    /// Relative residual target of the direction solve under
    /// [`ControlMetric::State`]; a truncated solve still gives descent.
    pub direction_tol: T,
}

/// Metric of the outer gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMetric {
    /// Plain discrete `L^2`: step along `-grad j`, Barzilai-Borwein lengths.
    L2,
    /// `<d, d>_M = |psi'(f) d|^2 + alpha |d|^2`, the metric the state map
    /// induces on controls. With `H` the energy Hessian at `psi(f)` the step
    /// is `-H (I + alpha H^2)^{-1} H grad j`. The state map behaves like an
    /// inverse elliptic operator with strongly varying coefficients, which
    /// makes the `L^2` gradient extremely ill-conditioned; this metric
    /// removes that, and unit steps are tried first.
    State,
}

impl<T: Scalar> Default for ControlConfig<T> {
    fn default() -> Self {
        Self {
            inner: SolverConfig::general().with_tol(T::of(1e-11)),
            tol_reduced: T::of(1e-8),
            max_outer: 2000,
            cg_tol: T::of(1e-11),
            cg_max: 20_000,
            alpha: T::of(1e-6),
            armijo_c: T::of(1e-4),
            backtrack: T::of(0.5),
            initial_step: T::one(),
            metric: ControlMetric::State,
            direction_tol: T::of(1e-6),
        }
    }
}

impl<T: Scalar> ControlConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive (got {v})")))
            }
        };
        positive("tol_reduced", self.tol_reduced)?;
        positive("cg_tol", self.cg_tol)?;
        positive("initial_step", self.initial_step)?;
        positive("direction_tol", self.direction_tol)?;
        if !(self.alpha >= T::zero()) {
            return Err(Error::Config(format!("alpha must be >= 0 (got {})", self.alpha)));
        }
        if !(self.cg_tol < self.tol_reduced) {
            return Err(Error::Config(format!(
                "cg_tol ({}) must be below tol_reduced ({})",
                self.cg_tol, self.tol_reduced
            )));
        }
        if self.max_outer < 1 || self.cg_max < 1 {
            return Err(Error::Config("max_outer and cg_max must be at least 1".into()));
        }
        let in_unit = |v: T| v > T::zero() && v < T::one();
        if !in_unit(self.armijo_c) || !in_unit(self.backtrack) {
            return Err(Error::Config("armijo_c and backtrack must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Bit pattern of a field, used as an exact cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FieldKey(Vec<u64>);

impl FieldKey {
    fn of<T: Scalar>(f: &GridFunction<T>) -> Self {
        FieldKey(f.values().iter().map(|v| v.to_f64_lossy().to_bits()).collect())
    }
}

/// `psi: f -> u` for a fixed weight, exponents and inner solver, with a
/// content-keyed cache of solved states.
#[derive(Debug)]
pub struct SolutionOperator<T> {
    mu: WeightField<T>,
    exponents: Exponents<T>,
    inner: SolverConfig<T>,
    cache: RwLock<HashMap<FieldKey, GridFunction<T>>>,
}

impl<T: Scalar> SolutionOperator<T> {
    pub fn new(mu: WeightField<T>, exponents: Exponents<T>, inner: SolverConfig<T>) -> Result<Self> {
        inner.validate()?;
        Ok(Self {
            mu,
            exponents,
            inner,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn weight(&self) -> &WeightField<T> {
        &self.mu
    }

    pub fn exponents(&self) -> &Exponents<T> {
        &self.exponents
    }

    pub fn cached_states(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Runs the inner solver from `init` (or the configured start) and
    /// fails unless it converges.
    pub fn solve_report(&self, f: &GridFunction<T>, init: Option<&GridFunction<T>>) -> Result<SolveReport<T>> {
        let mut cfg = self.inner.clone();
        if let Some(u0) = init {
            cfg.init = Init::Given(u0.clone());
        }
        let report = solve_inner(f, &self.mu, &self.exponents, &cfg)?;
        if !report.converged() {
            return Err(Error::NotConverged(format!(
                "inner solve stopped with status {} after {} iterations (gradient {})",
                report.status, report.iterations, report.final_grad_norm
            )));
        }
        Ok(report)
    }

    /// `psi(f)`, served from the cache when `f` was solved before.
    pub fn apply(&self, f: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.apply_from(f, None)
    }

    /// `psi(f)` with a warm start for the inner solver on a cache miss.
    pub fn apply_from(&self, f: &GridFunction<T>, init: Option<&GridFunction<T>>) -> Result<GridFunction<T>> {
        let key = FieldKey::of(f);
        if let Some(u) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(u.clone());
        }
        let u = self.solve_report(f, init)?.u_star;
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, u.clone());
        Ok(u)
    }

    fn hessian_solve(&self, u: &GridFunction<T>, rhs: &GridFunction<T>, cfg: &ControlConfig<T>) -> Result<GridFunction<T>> {
        let lin = Linearization::new(u, &self.mu, &self.exponents)?;
        Ok(conjugate_gradient(|v| lin.apply(v), rhs, cfg.cg_tol, cfg.cg_max)?.solution)
    }

    /// Directional derivative of `psi` at `f` along `h`: the solution `w`
    /// of `H(psi(f)) w = h`.
    pub fn derivative(&self, f: &GridFunction<T>, h: &GridFunction<T>, cfg: &ControlConfig<T>) -> Result<GridFunction<T>> {
        f.same_grid(h)?;
        let u = self.apply(f)?;
        self.hessian_solve(&u, h, cfg)
    }

    /// `grad_f E + lambda` with the adjoint state `H(u) lambda = grad_u E`,
    /// evaluated at a given state `u = psi(f)`.
    pub fn reduced_gradient_at(
        &self,
        f: &GridFunction<T>,
        u: &GridFunction<T>,
        obj: &dyn Objective<T>,
        cfg: &ControlConfig<T>,
    ) -> Result<GridFunction<T>> {
        let gu = obj.grad_u(f, u);
        let gf = obj.grad_f(f, u);
        if gu.max_abs() == T::zero() {
            return Ok(gf);
        }
        let lambda = self.hessian_solve(u, &gu, cfg)?;
        Ok(&gf + &lambda)
    }

    pub fn reduced_gradient(&self, f: &GridFunction<T>, obj: &dyn Objective<T>, cfg: &ControlConfig<T>) -> Result<GridFunction<T>> {
        let u = self.apply(f)?;
        self.reduced_gradient_at(f, &u, obj, cfg)
    }

    /// Reduced objective `j(f) = E(f, psi(f))`.
    pub fn reduced_objective(&self, f: &GridFunction<T>, obj: &dyn Objective<T>) -> Result<T> {
        let u = self.apply(f)?;
        Ok(obj.evaluate(f, &u))
    }
}

/// `psi(f)` by a fresh inner solve.
pub fn solution_operator<T: Scalar>(
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
    cfg: &SolverConfig<T>,
) -> Result<GridFunction<T>> {
    SolutionOperator::new(mu.clone(), *e, cfg.clone())?.apply(f)
}

/// Gateaux derivative of `psi` at `f` along `h`.
pub fn gateaux_derivative<T: Scalar>(
    f: &GridFunction<T>,
    h: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
    cfg: &ControlConfig<T>,
) -> Result<GridFunction<T>> {
    cfg.validate()?;
    SolutionOperator::new(mu.clone(), *e, cfg.inner.clone())?.derivative(f, h, cfg)
}

/// Gradient of `f -> E(f, psi(f))` by the adjoint method.
pub fn reduced_gradient<T: Scalar>(
    f: &GridFunction<T>,
    obj: &dyn Objective<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
    cfg: &ControlConfig<T>,
) -> Result<GridFunction<T>> {
    cfg.validate()?;
    SolutionOperator::new(mu.clone(), *e, cfg.inner.clone())?.reduced_gradient(f, obj, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlStatus {
    Stationary,
    MaxIterations,
    LineSearchStall,
}

impl std::fmt::Display for ControlStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControlStatus::Stationary => "stationary",
            ControlStatus::MaxIterations => "max-iterations",
            ControlStatus::LineSearchStall => "line-search-stall",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport<T> {
    pub f_star: GridFunction<T>,
    pub u_star: GridFunction<T>,
    pub status: ControlStatus,
    pub outer_iters: usize,
    /// Reduced objective after every accepted step, starting at `f0`.
    pub objective_trace: Vec<T>,
    /// `|grad j(f_star)|_inf`.
    pub stationarity: T,
}

impl<T: Scalar> ControlReport<T> {
    pub fn converged(&self) -> bool {
        self.status == ControlStatus::Stationary
    }
}

/// Reduced-gradient descent on `j(f) = E(f, psi(f))` from `f0`.
///
/// Each trial step re-solves the state equation warm-started at the current
/// state; a trial whose inner solve fails is treated like a rejected step.
pub fn optimize_control<T: Scalar>(
    obj: &dyn Objective<T>,
    f0: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
    cfg: &ControlConfig<T>,
) -> Result<ControlReport<T>> {
    cfg.validate()?;
    let psi = SolutionOperator::new(mu.clone(), *e, cfg.inner.clone())?;
    let mut f = f0.clone();
    let mut u = psi.apply(&f)?;
    objective_self_test(obj, &f, &u, 0x5eed, 3)?;
    let mut j = obj.evaluate(&f, &u);
    let mut g = psi.reduced_gradient_at(&f, &u, obj, cfg)?;
    let mut trace = vec![j];
    let direction = |g: &GridFunction<T>, u: &GridFunction<T>| -> Result<GridFunction<T>> {
        match cfg.metric {
            ControlMetric::L2 => Ok(g.clone()),
            ControlMetric::State => {
                let lin = Linearization::new(u, mu, e)?;
                let hg = lin.apply(g);
                if cfg.alpha == T::zero() {
                    return Ok(lin.apply(&hg));
                }
                let v = truncated_cg(
                    |z| z.axpy(cfg.alpha, &lin.apply(&lin.apply(z))),
                    &hg,
                    cfg.direction_tol,
                    cfg.cg_max,
                )?;
                Ok(lin.apply(&v.solution))
            }
        }
    };
    // (s, s) and (s, y) of the last accepted step, for Barzilai-Borwein.
    let mut prev: Option<(T, T)> = None;
    let mut last_step = cfg.initial_step;
    let mut status = ControlStatus::MaxIterations;
    let mut outer_iters = 0;
    let min_step = T::of(MIN_STEP);

    for _ in 0..cfg.max_outer {
        if g.max_abs() <= cfg.tol_reduced {
            status = ControlStatus::Stationary;
            break;
        }
        let d = direction(&g, &u)?;
        let slope = g.inner(&d);
        let mut step = match (cfg.metric, prev) {
            (ControlMetric::State, _) | (_, None) => cfg.initial_step,
            (ControlMetric::L2, Some((ss, sy))) if sy > T::zero() => ss / sy,
            (ControlMetric::L2, Some(_)) => last_step,
        };
        let accepted = loop {
            let f_trial = f.axpy(-step, &d);
            if let Ok(u_trial) = psi.apply_from(&f_trial, Some(&u)) {
                let j_trial = obj.evaluate(&f_trial, &u_trial);
                if j_trial <= j - cfg.armijo_c * step * slope {
                    break Some((f_trial, u_trial, j_trial));
                }
            }
            step = step * cfg.backtrack;
            if step < min_step {
                break None;
            }
        };
        let Some((f_next, u_next, j_next)) = accepted else {
            status = ControlStatus::LineSearchStall;
            break;
        };
        let g_next = psi.reduced_gradient_at(&f_next, &u_next, obj, cfg)?;
        let s = &f_next - &f;
        prev = Some((s.inner(&s), s.inner(&(&g_next - &g))));
        f = f_next;
        u = u_next;
        j = j_next;
        g = g_next;
        trace.push(j);
        last_step = step;
        outer_iters += 1;
    }
    if status == ControlStatus::MaxIterations && g.max_abs() <= cfg.tol_reduced {
        status = ControlStatus::Stationary;
    }
    Ok(ControlReport {
        stationarity: g.max_abs(),
        f_star: f,
        u_star: u,
        status,
        outer_iters,
        objective_trace: trace,
    })
}
