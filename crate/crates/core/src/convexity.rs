//! Sampling-based falsification of `gamma`-hyperconvexity.
//!
//! A functional `F` is `gamma`-hyperconvex with modulus `c > 0` when
//!
//! ```text
//! F(t x + (1-t) y) + c min(t, 1-t) |x - y|^gamma <= t F(x) + (1-t) F(y)
//! ```
//!
//! for all `x, y` and `t` in `(0,1)`. The routines here evaluate that
//! inequality on seeded random triples. A certificate is evidence gathered
//! on finitely many samples, not a proof.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{sobolev_norm, Grid, GridFunction};
use crate::scalar::Scalar;

/// Relative round-off allowance on a trial, scaled by the largest of the
/// three functional values involved.
pub const TRIAL_TOL: f64 = 1e-10;

/// Bisection steps used by [`estimate_modulus`].
pub const BISECTION_STEPS: usize = 40;

/// A normed space the sampler can draw points from.
pub trait TrialSpace<T: Scalar> {
    type Point: Clone;

    /// `theta x + (1 - theta) y`.
    fn combine(&self, theta: T, x: &Self::Point, y: &Self::Point) -> Self::Point;

    /// `|x - y|` in the space's norm.
    fn distance(&self, x: &Self::Point, y: &Self::Point) -> T;

    /// A random point of norm `radius`.
    fn sample(&self, rng: &mut ChaCha8Rng, radius: T) -> Self::Point;
}

/// The real line with `|x|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RealLine;

impl<T: Scalar> TrialSpace<T> for RealLine {
    type Point = T;

    fn combine(&self, theta: T, x: &T, y: &T) -> T {
        theta * *x + (T::one() - theta) * *y
    }

    fn distance(&self, x: &T, y: &T) -> T {
        (*x - *y).abs()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, radius: T) -> T {
        if rng.random_bool(0.5) {
            radius
        } else {
            -radius
        }
    }
}

/// Grid functions normed by [`sobolev_norm`] with a fixed exponent.
#[derive(Debug, Clone, Copy)]
pub struct SobolevSpace<T> {
    pub grid: Grid<T>,
    pub exponent: T,
}

impl<T: Scalar> TrialSpace<T> for SobolevSpace<T> {
    type Point = GridFunction<T>;

    fn combine(&self, theta: T, x: &Self::Point, y: &Self::Point) -> Self::Point {
        let one_minus = T::one() - theta;
        x.zip_map(y, |a, b| theta * a + one_minus * b)
    }

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> T {
        sobolev_norm(&(x - y), self.exponent).expect("norm exponent validated")
    }

    fn sample(&self, rng: &mut ChaCha8Rng, radius: T) -> Self::Point {
        loop {
            let vals = (0..self.grid.num_nodes())
                .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let g = GridFunction::from_values(self.grid, vals).expect("finite samples");
            let norm = sobolev_norm(&g, self.exponent).expect("norm exponent validated");
            if norm > T::zero() {
                return g.scaled(radius / norm);
            }
        }
    }
}

/// How trial triples are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig<T> {
    pub seed: u64,
    pub trials: usize,
    /// Point norms are log-uniform in `[radius_min, radius_max]`.
    pub radius_min: T,
    pub radius_max: T,
    /// `theta` is uniform in `[theta_min, 1 - theta_min]`.
    pub theta_min: T,
    /// Values of `theta` used for the first trials, before random ones.
    pub theta_anchors: Vec<T>,
    /// Pairs closer than this are redrawn.
    pub min_separation: T,
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn new(seed: u64, trials: usize) -> Self {
        Self {
            seed,
            trials,
            radius_min: T::of(0.1),
            radius_max: T::of(10.0),
            theta_min: T::of(0.01),
            theta_anchors: vec![T::of(0.5), T::of(0.01)],
            min_separation: T::of(0.1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Trial("at least one trial is required".into()));
        }
        if !(self.radius_min > T::zero() && self.radius_min <= self.radius_max) {
            return Err(Error::Trial("radius range must satisfy 0 < min <= max".into()));
        }
        let half = T::of(0.5);
        if !(self.theta_min > T::zero() && self.theta_min < half) {
            return Err(Error::Trial("theta_min must lie in (0, 1/2)".into()));
        }
        if self
            .theta_anchors
            .iter()
            .any(|&t| !(t > T::zero() && t < T::one()))
        {
            return Err(Error::Trial("theta anchors must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// One evaluation of the hyperconvexity inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperconvexityTrial<T, P> {
    pub x: P,
    pub y: P,
    pub theta: T,
    pub gamma: T,
    pub c: T,
    /// `theta F(x) + (1-theta) F(y) - F(theta x + (1-theta) y)`.
    pub gap: T,
    /// `min(theta, 1-theta) |x - y|^gamma`; the penalty is `c` times this.
    pub weight: T,
    pub tol: T,
    pub defect: T,
}

impl<T: Scalar, P> HyperconvexityTrial<T, P> {
    pub fn passed(&self) -> bool {
        self.defect >= -self.tol
    }

    /// Defect the same triple would have with modulus `c`.
    pub fn defect_at(&self, c: T) -> T {
        self.gap - c * self.weight
    }
}

fn check_theta<T: Scalar>(theta: T) -> Result<()> {
    if theta > T::zero() && theta < T::one() {
        Ok(())
    } else {
        Err(Error::Trial(format!("theta must lie in (0,1) (got {theta})")))
    }
}

fn check_modulus<T: Scalar>(c: T) -> Result<()> {
    if c > T::zero() && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Trial(format!("modulus c must be strictly positive (got {c})")))
    }
}

fn evaluate<T, S, F>(space: &S, func: &F, x: S::Point, y: S::Point, theta: T, gamma: T, c: T) -> HyperconvexityTrial<T, S::Point>
where
    T: Scalar,
    S: TrialSpace<T>,
    F: Fn(&S::Point) -> T,
{
    let fx = func(&x);
    let fy = func(&y);
    let fm = func(&space.combine(theta, &x, &y));
    let one_minus = T::one() - theta;
    let gap = theta * fx + one_minus * fy - fm;
    let weight = theta.min(one_minus) * space.distance(&x, &y).powf(gamma);
    let scale = fx.abs().max(fy.abs()).max(fm.abs());
    HyperconvexityTrial {
        x,
        y,
        theta,
        gamma,
        c,
        gap,
        weight,
        tol: T::of(TRIAL_TOL) * scale,
        defect: gap - c * weight,
    }
}

/// Evaluates the inequality for one triple. Rejects `theta` outside `(0,1)`
/// and any `c <= 0`.
pub fn run_trial<T, S, F>(
    space: &S,
    func: F,
    x: &S::Point,
    y: &S::Point,
    theta: T,
    gamma: T,
    c: T,
) -> Result<HyperconvexityTrial<T, S::Point>>
where
    T: Scalar,
    S: TrialSpace<T>,
    F: Fn(&S::Point) -> T,
{
    check_theta(theta)?;
    check_modulus(c)?;
    Ok(evaluate(space, &func, x.clone(), y.clone(), theta, gamma, c))
}

/// The `k`-th sampled triple; every trial index has its own RNG stream.
fn draw<T: Scalar, S: TrialSpace<T>>(space: &S, cfg: &SamplerConfig<T>, k: usize) -> (S::Point, S::Point, T) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k as u64);
    let theta = match cfg.theta_anchors.get(k) {
        Some(&t) => t,
        None => {
            let lo = cfg.theta_min.to_f64_lossy();
            T::of(rng.random_range(lo..=1.0 - lo))
        }
    };
    let (ln_lo, ln_hi) = (
        cfg.radius_min.to_f64_lossy().ln(),
        cfg.radius_max.to_f64_lossy().ln(),
    );
    let radius = |rng: &mut ChaCha8Rng| {
        if ln_hi > ln_lo {
            T::of(rng.random_range(ln_lo..ln_hi).exp())
        } else {
            cfg.radius_min
        }
    };
    let r = radius(&mut rng);
    let x = space.sample(&mut rng, r);
    let mut y = x.clone();
    for _ in 0..1000 {
        let r = radius(&mut rng);
        y = space.sample(&mut rng, r);
        if space.distance(&x, &y) >= cfg.min_separation {
            break;
        }
    }
    (x, y, theta)
}

fn sample_trials<T, S, F>(space: &S, func: &F, gamma: T, c: T, cfg: &SamplerConfig<T>) -> Vec<HyperconvexityTrial<T, S::Point>>
where
    T: Scalar,
    S: TrialSpace<T>,
    F: Fn(&S::Point) -> T,
{
    (0..cfg.trials)
        .map(|k| {
            let (x, y, theta) = draw(space, cfg, k);
            evaluate(space, func, x, y, theta, gamma, c)
        })
        .collect()
}

/// Outcome of a batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate<T> {
    pub seed: u64,
    pub trials: usize,
    pub gamma: T,
    pub c_estimate: T,
    pub failures: usize,
    pub worst_defect: T,
}

impl<T: Scalar> ConvexityCertificate<T> {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.c_estimate > T::zero()
    }

    /// Line-oriented `key = value` record.
    pub fn to_record(&self) -> String {
        self.to_string()
    }
}

impl<T: Scalar> fmt::Display for ConvexityCertificate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = |v: T| crate::io::fmt17(v.to_f64_lossy());
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "N = {}", self.trials)?;
        writeln!(f, "gamma = {}", g(self.gamma))?;
        writeln!(f, "c_estimate = {}", g(self.c_estimate))?;
        writeln!(f, "failures = {}", self.failures)?;
        writeln!(f, "worst_defect = {}", g(self.worst_defect))
    }
}

fn worst_defect<T: Scalar, P>(trials: &[HyperconvexityTrial<T, P>], c: T) -> T {
    trials
        .iter()
        .map(|t| t.defect_at(c))
        .fold(T::infinity(), |a, b| a.min(b))
}

/// Largest modulus `c` certified on `cfg.trials` sampled triples.
///
/// A modulus counts as certified only if every trial clears the round-off
/// band, `defect(c) >= tol`. The search bisects [`BISECTION_STEPS`] times on
/// `[0, c_hi]` with `c_hi` ten times the largest observed ratio
/// `gap / weight`. When no positive modulus is certified the estimate is 0
/// and `failures` counts the trials that reject the smallest modulus probed.
pub fn estimate_modulus<T, S, F>(space: &S, func: F, gamma: T, cfg: &SamplerConfig<T>) -> Result<ConvexityCertificate<T>>
where
    T: Scalar,
    S: TrialSpace<T>,
    F: Fn(&S::Point) -> T,
{
    cfg.validate()?;
    let trials = sample_trials(space, &func, gamma, T::zero(), cfg);
    let certified = |c: T| trials.iter().all(|t| t.defect_at(c) >= t.tol);
    let rejecting = |c: T| trials.iter().filter(|t| t.defect_at(c) < t.tol).count();

    let ratio = trials
        .iter()
        .filter(|t| t.weight > T::zero())
        .map(|t| t.gap / t.weight)
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let c_hi = if ratio > T::zero() && ratio.is_finite() {
        T::of(10.0) * ratio
    } else {
        T::one()
    };
    let (mut lo, mut hi) = (T::zero(), c_hi);
    let half = T::of(0.5);
    for _ in 0..BISECTION_STEPS {
        let mid = half * (lo + hi);
        if certified(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let failures = if lo > T::zero() {
        trials.iter().filter(|t| t.defect_at(lo) < -t.tol).count()
    } else {
        rejecting(hi)
    };
    Ok(ConvexityCertificate {
        seed: cfg.seed,
        trials: trials.len(),
        gamma,
        c_estimate: lo,
        failures,
        worst_defect: worst_defect(&trials, lo),
    })
}

/// A hyperconvexity claim: exponent and modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusClaim<T> {
    pub gamma: T,
    pub c: T,
}

impl<T: Scalar> ModulusClaim<T> {
    pub fn from_certificate(cert: &ConvexityCertificate<T>) -> Self {
        Self {
            gamma: cert.gamma,
            c: cert.c_estimate,
        }
    }
}

/// Checks that `h + g` is `p`-hyperconvex with `h`'s modulus, given `h`
/// `p`-hyperconvex with modulus `c` and `g` `q`-hyperconvex with `c' > 0`,
/// `q < p`. The `g` contribution `c' |x - y|^q` is nonnegative and is
/// simply dropped, so the sum keeps `(p, c)`.
///
/// Trials use the sampler configuration as given; passing the one used to
/// certify `h` replays the same triples.
pub fn check_sum_lemma<T, S, F>(
    h: ModulusClaim<T>,
    g: ModulusClaim<T>,
    space: &S,
    sum: F,
    cfg: &SamplerConfig<T>,
) -> Result<ConvexityCertificate<T>>
where
    T: Scalar,
    S: TrialSpace<T>,
    F: Fn(&S::Point) -> T,
{
    cfg.validate()?;
    check_modulus(h.c)?;
    check_modulus(g.c)?;
    if !(g.gamma < h.gamma) {
        return Err(Error::Trial(format!(
            "sum lemma needs q < p (got p = {}, q = {})",
            h.gamma, g.gamma
        )));
    }
    let trials = sample_trials(space, &sum, h.gamma, h.c, cfg);
    let failures = trials.iter().filter(|t| !t.passed()).count();
    Ok(ConvexityCertificate {
        seed: cfg.seed,
        trials: trials.len(),
        gamma: h.gamma,
        c_estimate: h.c,
        failures,
        worst_defect: worst_defect(&trials, h.c),
    })
}
