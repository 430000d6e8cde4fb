//! The weight `mu` of the second phase, sampled on edge midpoints.

use crate::error::{Error, Result};
use crate::grid::{EdgeField, Grid, GridFunction};
use crate::scalar::Scalar;

/// Per-axis edge values of `mu` with a declared bound `0 <= mu <= mu1`.
///
/// Zero is an admissible value: on `{mu = 0}` the energy has pure
/// `p`-growth, on `{mu > 0}` both growths are present.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField<T> {
    axes: Vec<EdgeField<T>>,
    bound: T,
}

impl<T: Scalar> WeightField<T> {
    pub fn new(axes: Vec<EdgeField<T>>, bound: T) -> Result<Self> {
        let grid = *axes
            .first()
            .ok_or_else(|| Error::Weight("no axes given".into()))?
            .grid();
        if axes.len() != grid.dim() {
            return Err(Error::Weight(format!(
                "expected {} axes, got {}",
                grid.dim(),
                axes.len()
            )));
        }
        if !(bound > T::zero()) || !bound.is_finite() {
            return Err(Error::Weight(format!("bound mu1 must be positive (got {bound})")));
        }
        for (i, a) in axes.iter().enumerate() {
            if *a.grid() != grid || a.axis() != i {
                return Err(Error::GridMismatch);
            }
            if let Some(v) = a
                .values()
                .iter()
                .find(|&&v| !(v >= T::zero() && v <= bound))
            {
                return Err(Error::Weight(format!(
                    "value {v} on axis {i} outside [0, {bound}]"
                )));
            }
        }
        Ok(Self { axes, bound })
    }

    /// Constant weight `mu0`; the declared bound is `mu0`, or 1 when `mu0 = 0`.
    pub fn constant(grid: Grid<T>, mu0: T) -> Result<Self> {
        let bound = if mu0 > T::zero() { mu0 } else { T::one() };
        Self::from_fn(grid, bound, |_| mu0)
    }

    /// Samples `mu` at edge midpoints.
    pub fn from_fn(grid: Grid<T>, bound: T, mu: impl Fn(&[T]) -> T) -> Result<Self> {
        let axes = (0..grid.dim())
            .map(|axis| {
                let vals = (0..grid.num_edges(axis))
                    .map(|e| mu(&grid.edge_midpoint(axis, e)[..grid.dim()]))
                    .collect();
                EdgeField::from_values(grid, axis, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes, bound)
    }

    /// Edge value is the mean of the two adjacent nodal values. Only interior
    /// nodes are known, so an edge touching the boundary takes the value of
    /// its single interior neighbor.
    pub fn from_nodal(mu: &GridFunction<T>, bound: T) -> Result<Self> {
        let grid = *mu.grid();
        let half = T::of(0.5);
        let vals = mu.values();
        let axes = (0..grid.dim())
            .map(|axis| {
                let mut out = vec![T::zero(); grid.num_edges(axis)];
                grid.layout(axis).for_each_edge(|e, l, r| {
                    out[e] = match (l, r) {
                        (Some(l), Some(r)) => half * (vals[l] + vals[r]),
                        (Some(k), None) | (None, Some(k)) => vals[k],
                        (None, None) => T::zero(),
                    };
                });
                EdgeField::from_values(grid, axis, out)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes, bound)
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        self.axes[0].grid()
    }

    #[inline]
    pub fn axis(&self, i: usize) -> &EdgeField<T> {
        &self.axes[i]
    }

    /// Declared upper bound `mu1`.
    #[inline]
    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn is_identically_zero(&self) -> bool {
        self.axes
            .iter()
            .all(|a| a.values().iter().all(|&v| v == T::zero()))
    }

    /// Largest `|mu(e) - mu(e')| / h` over pairs of same-axis edges that are
    /// neighbors along some coordinate direction.
    pub fn lipschitz_quotient(&self) -> T {
        let grid = *self.grid();
        let h = grid.spacing();
        let m = grid.interior_per_axis();
        let mut worst = T::zero();
        for (axis, field) in self.axes.iter().enumerate() {
            let v = field.values();
            let lay = grid.layout(axis);
            for o in 0..lay.outer {
                for i in 0..lay.inner {
                    for k in 0..=m {
                        let here = v[lay.edge(o, k, i)];
                        if k < m {
                            worst = worst.max((v[lay.edge(o, k + 1, i)] - here).abs() / h);
                        }
                        if i + 1 < lay.inner {
                            worst = worst.max((v[lay.edge(o, k, i + 1)] - here).abs() / h);
                        }
                        if o + 1 < lay.outer {
                            worst = worst.max((v[lay.edge(o + 1, k, i)] - here).abs() / h);
                        }
                    }
                }
            }
        }
        worst
    }
}
