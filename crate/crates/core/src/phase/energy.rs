//! Discrete double phase energy on the staggered lattice and everything
//! derived from it: the exact gradient, the axis-separable (pseudo) operator,
//! the divergence-form operator, the weak-form residual and the Hessian action.
//!
//! On every axis-`i` edge with forward difference `s`, the energy density is
//! `pi(s)^p / p + mu * pi(s)^q / q` with `pi(s) = sqrt(s^2 + eps^2)`, and the
//! flux is its derivative `(pi^{p-2} + mu pi^{q-2}) s`.

use crate::error::{Error, Result};
use crate::grid::{difference_adjoint, forward_diff, EdgeField, GridFunction, Quadrature};
use crate::phase::{Exponents, WeightField};
use crate::scalar::Scalar;

/// The three summands of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub p_term: T,
    pub q_term: T,
    pub load_term: T,
    pub total: T,
}

pub(crate) fn check_state<T: Scalar>(
    u: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<()> {
    if u.grid() != mu.grid() {
        return Err(Error::GridMismatch);
    }
    if e.dim() != u.grid().dim() {
        return Err(Error::Exponents(format!(
            "exponents declared for n = {} but the grid has n = {}",
            e.dim(),
            u.grid().dim()
        )));
    }
    Ok(())
}

fn check_all<T: Scalar>(
    u: &GridFunction<T>,
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<()> {
    u.same_grid(f)?;
    check_state(u, mu, e)
}

/// Flux coefficient `pi^{p-2} + mu pi^{q-2}` from the squared magnitude `s2`.
/// Returns `None` when `pi = 0`, where the flux vanishes.
#[inline]
fn flux_coefficient<T: Scalar>(s2: T, mu: T, e: &Exponents<T>) -> Option<T> {
    let eps = e.regularization();
    let pi = (s2 + eps * eps).sqrt();
    if pi == T::zero() {
        return None;
    }
    let two = T::of(2.0);
    Some(pi.powf(e.p() - two) + mu * pi.powf(e.q() - two))
}

/// Per-axis edge fluxes of the axis-separable energy.
pub fn pseudo_fluxes<T: Scalar>(
    u: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<Vec<EdgeField<T>>> {
    check_state(u, mu, e)?;
    (0..u.grid().dim())
        .map(|axis| {
            let d = forward_diff(u, axis)?;
            let w = mu.axis(axis).values();
            let vals = d
                .values()
                .iter()
                .zip(w)
                .map(|(&s, &m)| flux_coefficient(s * s, m, e).map_or(T::zero(), |c| c * s))
                .collect();
            EdgeField::from_values(*u.grid(), axis, vals)
        })
        .collect()
}

/// Discrete energy `J(u)` split into its three terms.
pub fn energy<T: Scalar>(
    u: &GridFunction<T>,
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<EnergyBreakdown<T>> {
    check_all(u, f, mu, e)?;
    let eps2 = e.regularization() * e.regularization();
    let (p, q) = (e.p(), e.q());
    let mut p_term = T::zero();
    let mut q_term = T::zero();
    for axis in 0..u.grid().dim() {
        let d = forward_diff(u, axis)?;
        let pi = d.map(|s| (s * s + eps2).sqrt());
        p_term = p_term + pi.map(|r| r.powf(p)).quadrature();
        q_term = q_term + pi.zip_map(mu.axis(axis), |r, m| m * r.powf(q)).quadrature();
    }
    let p_term = p_term / p;
    let q_term = q_term / q;
    let load_term = u.zip_map(f, |a, b| a * b).quadrature();
    Ok(EnergyBreakdown {
        p_term,
        q_term,
        load_term,
        total: p_term + q_term - load_term,
    })
}

/// `(pi(s + a t)^r - pi(s)^r) / r` without cancellation, via
/// `pi'^2 - pi^2 = a t (2 s + a t)`.
#[inline]
fn power_increment<T: Scalar>(s: T, t: T, a: T, eps2: T, r: T) -> T {
    let pi2 = s * s + eps2;
    let step = a * t;
    if pi2 == T::zero() {
        return step.abs().powf(r) / r;
    }
    let delta = step * (s + s + step);
    let half = T::of(0.5);
    pi2.powf(half * r) * (half * r * (delta / pi2).ln_1p()).exp_m1() / r
}

/// `J(u + a d) - J(u)`, evaluated edge by edge so that it stays accurate
/// when the change is many orders of magnitude below `J(u)`.
pub fn energy_change<T: Scalar>(
    u: &GridFunction<T>,
    d: &GridFunction<T>,
    a: T,
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<T> {
    check_all(u, f, mu, e)?;
    u.same_grid(d)?;
    let eps2 = e.regularization() * e.regularization();
    let mut acc = T::zero();
    for axis in 0..u.grid().dim() {
        let s = forward_diff(u, axis)?;
        let t = forward_diff(d, axis)?;
        let w = mu.axis(axis).values();
        for ((&si, &ti), &mi) in s.values().iter().zip(t.values()).zip(w) {
            if ti == T::zero() {
                continue;
            }
            acc = acc + power_increment(si, ti, a, eps2, e.p());
            if mi != T::zero() {
                acc = acc + mi * power_increment(si, ti, a, eps2, e.q());
            }
        }
    }
    let load = d.zip_map(f, |x, y| x * y).values().iter().copied().sum::<T>();
    Ok((acc - a * load) * u.grid().cell_volume())
}

/// Exact gradient of [`energy`] in the discrete `L^2` inner product:
/// `inner(energy_gradient(u), w)` is the derivative of `J` at `u` along `w`.
pub fn energy_gradient<T: Scalar>(
    u: &GridFunction<T>,
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<GridFunction<T>> {
    check_all(u, f, mu, e)?;
    Ok(&apply_pseudo_operator(u, mu, e)? - f)
}

/// `-sum_i d_i(|d_i u|^{p-2} d_i u + mu |d_i u|^{q-2} d_i u)` on the staggered lattice.
pub fn apply_pseudo_operator<T: Scalar>(
    u: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<GridFunction<T>> {
    let mut out = GridFunction::zeros(*u.grid());
    for flux in pseudo_fluxes(u, mu, e)? {
        out = &out + &difference_adjoint(&flux);
    }
    Ok(out)
}

/// `-div(|grad u|^{p-2} grad u + mu |grad u|^{q-2} grad u)`.
///
/// On an axis-`i` edge the gradient magnitude combines the axis-`i`
/// difference with the mean of the four transverse differences at the two
/// end nodes (zero at boundary nodes).
pub fn apply_divergence_operator<T: Scalar>(
    u: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<GridFunction<T>> {
    check_state(u, mu, e)?;
    let grid = *u.grid();
    let n = grid.dim();
    let diffs = (0..n)
        .map(|axis| forward_diff(u, axis))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GridFunction::zeros(grid);
    for axis in 0..n {
        let d = diffs[axis].values();
        let w = mu.axis(axis).values();
        let transverse = if n == 2 {
            Some(mean_transverse(&diffs[1 - axis], axis))
        } else {
            None
        };
        let vals = d
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut s2 = s * s;
                if let Some(t) = &transverse {
                    s2 = s2 + t[k] * t[k];
                }
                flux_coefficient(s2, w[k], e).map_or(T::zero(), |c| c * s)
            })
            .collect();
        out = &out + &difference_adjoint(&EdgeField::from_values(grid, axis, vals)?);
    }
    Ok(out)
}

/// For every axis-`axis` edge of a 2-D grid, the mean of the four
/// differences of `other` (an edge field on the other axis) that touch the
/// edge's end nodes.
fn mean_transverse<T: Scalar>(other: &EdgeField<T>, axis: usize) -> Vec<T> {
    let grid = *other.grid();
    let m = grid.interior_per_axis();
    let ov = other.values();
    let quarter = T::of(0.25);
    // Transverse difference at interior node `a` (along `axis`) and transverse
    // edge position `b` (0..=m).
    let at = |a: isize, b: usize| -> T {
        if a < 0 || a >= m as isize {
            return T::zero();
        }
        let a = a as usize;
        let idx = if axis == 0 {
            // `other` is the axis-1 field, laid out as (x node, y edge).
            a * (m + 1) + b
        } else {
            // `other` is the axis-0 field, laid out as (x edge, y node).
            b * m + a
        };
        ov[idx]
    };
    let lay = grid.layout(axis);
    let mut out = vec![T::zero(); grid.num_edges(axis)];
    for (e, slot) in out.iter_mut().enumerate() {
        let (o, k, i) = lay.split_edge(e);
        // Position of the edge across the transverse direction.
        let j = if axis == 0 { i } else { o };
        let (left, right) = (k as isize - 1, k as isize);
        *slot = quarter * (at(left, j) + at(left, j + 1) + at(right, j) + at(right, j + 1));
    }
    out
}

/// Weak-form residual: `sum_i quadrature(flux_i * d_i phi) - quadrature(f phi)`.
pub fn weak_residual<T: Scalar>(
    u: &GridFunction<T>,
    f: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
    phi: &GridFunction<T>,
) -> Result<T> {
    check_all(u, f, mu, e)?;
    u.same_grid(phi)?;
    let mut lhs = T::zero();
    for (axis, flux) in pseudo_fluxes(u, mu, e)?.iter().enumerate() {
        let dphi = forward_diff(phi, axis)?;
        lhs = lhs + flux.zip_map(&dphi, |a, b| a * b).quadrature();
    }
    Ok(lhs - f.zip_map(phi, |a, b| a * b).quadrature())
}

/// Derivative of the flux with respect to the edge difference `s`.
///
/// With `eps > 0` this is the exact derivative of the regularized flux,
/// `pi^{r-4}((r-1)s^2 + eps^2)` per phase; with `eps = 0` it is
/// `(r-1)|s|^{r-2}`.
#[inline]
fn flux_slope<T: Scalar>(s: T, mu: T, e: &Exponents<T>) -> T {
    let eps = e.regularization();
    let one = T::one();
    if eps > T::zero() {
        let eps2 = eps * eps;
        let s2 = s * s;
        let pi2 = s2 + eps2;
        let four = T::of(4.0);
        let half = T::of(0.5);
        let phase = |r: T| pi2.powf(half * (r - four)) * ((r - one) * s2 + eps2);
        let mut a = phase(e.p());
        if mu != T::zero() {
            a = a + mu * phase(e.q());
        }
        a
    } else {
        let two = T::of(2.0);
        let abs = s.abs();
        let mut a = (e.p() - one) * abs.powf(e.p() - two);
        if mu != T::zero() {
            a = a + mu * (e.q() - one) * abs.powf(e.q() - two);
        }
        a
    }
}

/// The linearization of the energy gradient at a fixed state `u`:
/// `w -> sum_i D_i^T diag(a_i) D_i w` with per-edge coefficients `a_i`.
#[derive(Debug, Clone)]
pub struct Linearization<T> {
    coefficients: Vec<EdgeField<T>>,
}

impl<T: Scalar> Linearization<T> {
    pub fn new(u: &GridFunction<T>, mu: &WeightField<T>, e: &Exponents<T>) -> Result<Self> {
        check_state(u, mu, e)?;
        let regularized = e.regularization() > T::zero();
        let coefficients = (0..u.grid().dim())
            .map(|axis| {
                let d = forward_diff(u, axis)?;
                let w = mu.axis(axis).values();
                let mut vals = Vec::with_capacity(d.values().len());
                for (edge, (&s, &m)) in d.values().iter().zip(w).enumerate() {
                    let a = flux_slope(s, m, e);
                    if !regularized && !(a > T::zero() && a.is_finite()) {
                        return Err(Error::SingularLinearization {
                            axis,
                            edge,
                            coefficient: a.to_f64_lossy(),
                        });
                    }
                    vals.push(a);
                }
                EdgeField::from_values(*u.grid(), axis, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[EdgeField<T>] {
        &self.coefficients
    }

    pub fn apply(&self, w: &GridFunction<T>) -> GridFunction<T> {
        let mut out = GridFunction::zeros(*w.grid());
        for a in &self.coefficients {
            let dw = forward_diff(w, a.axis()).expect("axis in range");
            out = &out + &difference_adjoint(&a.zip_map(&dw, |c, x| c * x));
        }
        out
    }
}

/// Hessian of the energy at `u` applied to `w`.
pub fn hessian_apply<T: Scalar>(
    u: &GridFunction<T>,
    w: &GridFunction<T>,
    mu: &WeightField<T>,
    e: &Exponents<T>,
) -> Result<GridFunction<T>> {
    u.same_grid(w)?;
    Ok(Linearization::new(u, mu, e)?.apply(w))
}
