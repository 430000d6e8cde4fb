//! Uniform tensor grids on the unit cube with ghost-zero Dirichlet boundary,
//! staggered forward differences, midpoint quadrature and discrete norms.
//!
//! Nodes are stored in lexicographic order of their coordinates, with the
//! first axis varying slowest. Boundary nodes are never stored; every
//! difference that touches the boundary reads a zero there.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid of `m` interior nodes per axis on `(0,1)^n`.
#[derive(Debug, Clone, Copy)]
pub struct Grid<T> {
    n: usize,
    m: usize,
    h: T,
}

impl<T> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m
    }
}

impl<T> Eq for Grid<T> {}

impl<T: Scalar> Grid<T> {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if m < 1 {
            return Err(Error::Resolution(m));
        }
        Ok(Self {
            n,
            m,
            h: T::one() / T::count(m + 1),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn interior_per_axis(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.h
    }

    /// `h^n`, the weight of one node (or one edge) in the quadrature.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.n as i32)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    /// Number of axis-`axis` edges: `(m+1)` along that axis, `m` along the others.
    #[inline]
    pub fn num_edges(&self, axis: usize) -> usize {
        debug_assert!(axis < self.n);
        (self.m + 1) * self.m.pow(self.n as u32 - 1)
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.n {
            Ok(())
        } else {
            Err(Error::AxisOutOfRange { axis, dim: self.n })
        }
    }

    /// Interior multi-index of node `k`.
    pub fn node_multi_index(&self, k: usize) -> [usize; 2] {
        match self.n {
            1 => [k, 0],
            _ => [k / self.m, k % self.m],
        }
    }

    /// Coordinates of node `k`; only the first `n` entries are meaningful.
    pub fn node_coords(&self, k: usize) -> [T; 2] {
        let idx = self.node_multi_index(k);
        let c = |i: usize| T::count(i + 1) * self.h;
        match self.n {
            1 => [c(idx[0]), T::zero()],
            _ => [c(idx[0]), c(idx[1])],
        }
    }

    /// Coordinates of the midpoint of axis-`axis` edge `e`.
    pub fn edge_midpoint(&self, axis: usize, e: usize) -> [T; 2] {
        let lay = self.layout(axis);
        let (o, k, i) = lay.split_edge(e);
        let half = T::of(0.5);
        let along = (T::count(k) + half) * self.h;
        match (self.n, axis) {
            (1, _) => [along, T::zero()],
            (_, 0) => [along, T::count(i + 1) * self.h],
            _ => [T::count(o + 1) * self.h, along],
        }
    }

    pub(crate) fn layout(&self, axis: usize) -> AxisLayout {
        AxisLayout {
            m: self.m,
            outer: self.m.pow(axis as u32),
            inner: self.m.pow((self.n - 1 - axis) as u32),
        }
    }
}

/// Index arithmetic for the lines of nodes along one axis.
///
/// A line is fixed by `(outer, inner)`; position `k` along it runs over
/// `0..m` for nodes and `0..=m` for edges, edge `k` joining nodes `k-1` and `k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisLayout {
    pub m: usize,
    pub outer: usize,
    pub inner: usize,
}

impl AxisLayout {
    #[inline]
    pub fn node(&self, o: usize, k: usize, i: usize) -> usize {
        (o * self.m + k) * self.inner + i
    }

    #[inline]
    pub fn edge(&self, o: usize, k: usize, i: usize) -> usize {
        (o * (self.m + 1) + k) * self.inner + i
    }

    #[inline]
    pub fn split_edge(&self, e: usize) -> (usize, usize, usize) {
        let i = e % self.inner;
        let rest = e / self.inner;
        (rest / (self.m + 1), rest % (self.m + 1), i)
    }

    /// Visits every edge as `(edge, left node, right node)`; `None` marks a
    /// ghost boundary node.
    pub fn for_each_edge(&self, mut visit: impl FnMut(usize, Option<usize>, Option<usize>)) {
        for o in 0..self.outer {
            for i in 0..self.inner {
                for k in 0..=self.m {
                    let left = (k > 0).then(|| self.node(o, k - 1, i));
                    let right = (k < self.m).then(|| self.node(o, k, i));
                    visit(self.edge(o, k, i), left, right);
                }
            }
        }
    }
}

/// Nodal values on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        Self {
            grid,
            values: vec![c; grid.num_nodes()],
        }
    }

    pub fn from_values(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::Length {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the interior node coordinates.
    pub fn from_fn(grid: Grid<T>, f: impl Fn(&[T]) -> T) -> Self {
        let values = (0..grid.num_nodes())
            .map(|k| f(&grid.node_coords(k)[..grid.dim()]))
            .collect();
        Self { grid, values }
    }

    /// Nodal indicator of node `k`.
    pub fn indicator(grid: Grid<T>, k: usize) -> Self {
        let mut g = Self::zeros(grid);
        g.values[k] = T::one();
        g
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value at a multi-index that may lie on the boundary (index `-1` or
    /// `m`), where it is zero.
    pub fn at(&self, idx: &[isize]) -> T {
        let m = self.grid.m as isize;
        if idx.iter().any(|&i| i < 0 || i >= m) {
            return T::zero();
        }
        let k = idx.iter().fold(0usize, |acc, &i| acc * self.grid.m + i as usize);
        self.values[k]
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self + a * x`.
    pub fn axpy(&self, a: T, x: &Self) -> Self {
        self.zip_map(x, |s, xv| s + a * xv)
    }

    /// Discrete `L^2` inner product `sum(a b) h^n`.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Discrete `L^2` norm.
    pub fn l2_norm(&self) -> T {
        self.inner(self).sqrt()
    }
}

impl<T: Scalar> Add for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn add(self, rhs: Self) -> GridFunction<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn sub(self, rhs: Self) -> GridFunction<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul<T> for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn mul(self, c: T) -> GridFunction<T> {
        self.scaled(c)
    }
}

impl<T: Scalar> Neg for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn neg(self) -> GridFunction<T> {
        self.map(|v| -v)
    }
}

/// One value per axis-`axis` edge, including the edges that touch the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField<T> {
    grid: Grid<T>,
    axis: usize,
    values: Vec<T>,
}

impl<T: Scalar> EdgeField<T> {
    pub fn zeros(grid: Grid<T>, axis: usize) -> Result<Self> {
        grid.check_axis(axis)?;
        Ok(Self {
            grid,
            axis,
            values: vec![T::zero(); grid.num_edges(axis)],
        })
    }

    pub fn from_values(grid: Grid<T>, axis: usize, values: Vec<T>) -> Result<Self> {
        grid.check_axis(axis)?;
        if values.len() != grid.num_edges(axis) {
            return Err(Error::Length {
                expected: grid.num_edges(axis),
                got: values.len(),
            });
        }
        Ok(Self { grid, axis, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn axis(&self) -> usize {
        self.axis
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            axis: self.axis,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.grid == other.grid && self.axis == other.axis);
        Self {
            grid: self.grid,
            axis: self.axis,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Midpoint-rule integration over the unit cube.
pub trait Quadrature<T> {
    fn quadrature(&self) -> T;
}

impl<T: Scalar> Quadrature<T> for GridFunction<T> {
    fn quadrature(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }
}

impl<T: Scalar> Quadrature<T> for EdgeField<T> {
    fn quadrature(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }
}

pub fn quadrature<T: Scalar>(field: &impl Quadrature<T>) -> T {
    field.quadrature()
}

/// Forward difference `(u_right - u_left) / h` on every axis-`axis` edge.
pub fn forward_diff<T: Scalar>(u: &GridFunction<T>, axis: usize) -> Result<EdgeField<T>> {
    let grid = *u.grid();
    grid.check_axis(axis)?;
    let inv_h = T::one() / grid.spacing();
    let mut out = vec![T::zero(); grid.num_edges(axis)];
    let vals = u.values();
    grid.layout(axis).for_each_edge(|e, l, r| {
        let ul = l.map_or(T::zero(), |k| vals[k]);
        let ur = r.map_or(T::zero(), |k| vals[k]);
        out[e] = (ur - ul) * inv_h;
    });
    Ok(EdgeField {
        grid,
        axis,
        values: out,
    })
}

/// Adjoint of [`forward_diff`] in the discrete inner products:
/// `quadrature(e * forward_diff(w)) == inner(difference_adjoint(e), w)`.
pub fn difference_adjoint<T: Scalar>(e: &EdgeField<T>) -> GridFunction<T> {
    let grid = *e.grid();
    let inv_h = T::one() / grid.spacing();
    let mut out = vec![T::zero(); grid.num_nodes()];
    let ev = e.values();
    grid.layout(e.axis()).for_each_edge(|k, l, r| {
        if let Some(l) = l {
            out[l] = out[l] - ev[k] * inv_h;
        }
        if let Some(r) = r {
            out[r] = out[r] + ev[k] * inv_h;
        }
    });
    GridFunction { grid, values: out }
}

/// Negative second difference `(2u_k - u_{k-1} - u_{k+1}) / h^2` along `axis`.
pub fn neg_second_difference<T: Scalar>(u: &GridFunction<T>, axis: usize) -> Result<GridFunction<T>> {
    let grid = *u.grid();
    grid.check_axis(axis)?;
    let lay = grid.layout(axis);
    let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
    let two = T::of(2.0);
    let vals = u.values();
    let mut out = vec![T::zero(); grid.num_nodes()];
    for o in 0..lay.outer {
        for i in 0..lay.inner {
            for k in 0..lay.m {
                let left = if k > 0 { vals[lay.node(o, k - 1, i)] } else { T::zero() };
                let right = if k + 1 < lay.m { vals[lay.node(o, k + 1, i)] } else { T::zero() };
                let c = lay.node(o, k, i);
                out[c] = (two * vals[c] - left - right) * inv_h2;
            }
        }
    }
    Ok(GridFunction { grid, values: out })
}

/// Sum over axes of the negative second differences: the 3-point (1-D)
/// or 5-point (2-D) discrete `-Laplacian`.
pub fn neg_laplacian<T: Scalar>(u: &GridFunction<T>) -> GridFunction<T> {
    let mut acc = GridFunction::zeros(*u.grid());
    for axis in 0..u.grid().dim() {
        acc = &acc + &neg_second_difference(u, axis).expect("axis in range");
    }
    acc
}

/// Discrete `W_0^{1,p}` norm `[sum_i quadrature(|D_i u|^p)]^{1/p}`.
pub fn sobolev_norm<T: Scalar>(u: &GridFunction<T>, p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(Error::NormExponent(p.to_f64_lossy()));
    }
    let mut total = T::zero();
    for axis in 0..u.grid().dim() {
        total = total + forward_diff(u, axis)?.map(|d| d.abs().powf(p)).quadrature();
    }
    Ok(total.powf(p.recip()))
}
