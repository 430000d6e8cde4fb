//! Exact inverse of the Dirichlet `-Laplacian` on the grid by separable
//! sine transforms. Used as the metric of the Sobolev gradient.

use crate::grid::{Grid, GridFunction};
use crate::scalar::Scalar;

/// `(-Laplacian_h)^{-1}` for the 3-point / 5-point stencil.
#[derive(Debug, Clone)]
pub struct LaplacianInverse<T> {
    grid: Grid<T>,
    /// Orthonormal sine basis, `m x m`, symmetric.
    basis: Vec<T>,
    /// 1-D eigenvalues `4 / h^2 sin^2(pi j h / 2)`.
    eig: Vec<T>,
}

impl<T: Scalar> LaplacianInverse<T> {
    pub fn new(grid: Grid<T>) -> Self {
        let m = grid.interior_per_axis();
        let h = grid.spacing();
        let pi = T::PI();
        let norm = (T::of(2.0) * h).sqrt();
        let mut basis = vec![T::zero(); m * m];
        for j in 0..m {
            for k in 0..m {
                basis[j * m + k] = norm * (pi * T::count((j + 1) * (k + 1)) * h).sin();
            }
        }
        let four_over_h2 = T::of(4.0) / (h * h);
        let eig = (0..m)
            .map(|j| {
                let s = (pi * T::count(j + 1) * h * T::of(0.5)).sin();
                four_over_h2 * s * s
            })
            .collect();
        Self { grid, basis, eig }
    }

    fn transform(&self, v: &mut [T]) {
        let m = self.grid.interior_per_axis();
        let mut line = vec![T::zero(); m];
        for axis in 0..self.grid.dim() {
            let lay = self.grid.layout(axis);
            for o in 0..lay.outer {
                for i in 0..lay.inner {
                    for (j, out) in line.iter_mut().enumerate() {
                        let row = &self.basis[j * m..(j + 1) * m];
                        *out = (0..m).map(|k| row[k] * v[lay.node(o, k, i)]).sum();
                    }
                    for (k, &val) in line.iter().enumerate() {
                        v[lay.node(o, k, i)] = val;
                    }
                }
            }
        }
    }

    pub fn apply(&self, g: &GridFunction<T>) -> GridFunction<T> {
        assert_eq!(g.grid(), &self.grid, "fields live on different grids");
        let mut v = g.values().to_vec();
        self.transform(&mut v);
        for (k, val) in v.iter_mut().enumerate() {
            let idx = self.grid.node_multi_index(k);
            let lambda = (0..self.grid.dim()).map(|d| self.eig[idx[d]]).sum::<T>();
            *val = *val / lambda;
        }
        self.transform(&mut v);
        GridFunction::from_values(self.grid, v).expect("finite values")
    }
}
