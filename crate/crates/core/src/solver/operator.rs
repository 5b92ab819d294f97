//! Matrix-free `(2d+1)`-point Dirichlet Laplacian on a tensor grid of `n^d`
//! interior nodes, with optional node masks and a nonnegative diagonal shift,
//! and a Jacobi-preconditioned conjugate gradient solver for it.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::SolveStats;

/// Chunk length for deterministic reductions.
const REDUCE_CHUNK: usize = 1 << 14;

/// `(-Delta_h + diag(shift))` restricted to free nodes. Masked nodes carry
/// an identity row and no coupling to free nodes.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    free: Option<Vec<bool>>,
    shift: Option<Vec<f64>>,
}

impl StencilOperator {
    pub fn new(dim: usize, n: usize, h: f64) -> Self {
        Self {
            dim,
            n,
            h,
            free: None,
            shift: None,
        }
    }

    pub fn with_mask(mut self, free: Vec<bool>) -> Self {
        assert_eq!(free.len(), self.len());
        self.free = Some(free);
        self
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        assert_eq!(shift.len(), self.len());
        self.shift = Some(shift);
        self
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.free.as_ref().is_none_or(|f| f[idx])
    }

    fn strides(&self) -> Vec<usize> {
        (0..self.dim)
            .map(|k| self.n.pow((self.dim - 1 - k) as u32))
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let base = 2.0 * self.dim as f64 / (self.h * self.h);
        (0..self.len())
            .map(|i| {
                if self.is_free(i) {
                    base + self.shift.as_ref().map_or(0.0, |s| s[i])
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// `y = A x`. Work is split into slabs along the first axis.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let d = self.dim;
        let strides = self.strides();
        let slab = if d == 1 { n } else { strides[0] };
        let rows_per_slab = slab / n;
        let inv_h2 = 1.0 / (self.h * self.h);
        let center = 2.0 * d as f64;
        let free = self.free.as_deref();
        let shift = self.shift.as_deref();
        let is_free = |i: usize| free.is_none_or(|f| f[i]);

        y.par_chunks_mut(slab).enumerate().for_each(|(s, yslab)| {
            let mut coords = vec![0usize; d.saturating_sub(1)];
            for r in 0..rows_per_slab {
                let row = s * rows_per_slab + r;
                // coordinates of this row on the first d-1 axes
                let mut rem = row;
                for k in (0..d.saturating_sub(1)).rev() {
                    coords[k] = rem % n;
                    rem /= n;
                }
                let base = row * n;
                for j in 0..n {
                    let idx = base + j;
                    let out = &mut yslab[r * n + j];
                    if !is_free(idx) {
                        *out = x[idx];
                        continue;
                    }
                    let mut acc = center * x[idx];
                    if j > 0 && is_free(idx - 1) {
                        acc -= x[idx - 1];
                    }
                    if j + 1 < n && is_free(idx + 1) {
                        acc -= x[idx + 1];
                    }
                    for (k, &c) in coords.iter().enumerate() {
                        let st = strides[k];
                        if c > 0 && is_free(idx - st) {
                            acc -= x[idx - st];
                        }
                        if c + 1 < n && is_free(idx + st) {
                            acc -= x[idx + st];
                        }
                    }
                    let mut v = acc * inv_h2;
                    if let Some(sh) = shift {
                        v += sh[idx] * x[idx];
                    }
                    *out = v;
                }
            }
        });
    }

    /// Right-hand side contribution of prescribed values on masked nodes:
    /// `sum over masked neighbours of value / h^2` at each free node.
    pub fn boundary_lift(&self, masked_values: &[f64]) -> Vec<f64> {
        let n = self.n;
        let strides = self.strides();
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; self.len()];
        let mut coords = vec![0usize; self.dim];
        for (idx, o) in out.iter_mut().enumerate() {
            decode(idx, n, &mut coords);
            if !self.is_free(idx) {
                continue;
            }
            let mut acc = 0.0;
            for k in 0..self.dim {
                let st = strides[k];
                if coords[k] > 0 && !self.is_free(idx - st) {
                    acc += masked_values[idx - st];
                }
                if coords[k] + 1 < n && !self.is_free(idx + st) {
                    acc += masked_values[idx + st];
                }
            }
            *o = acc * inv_h2;
        }
        out
    }
}

/// Decode a lexicographic node index into per-axis coordinates.
pub(crate) fn decode(mut idx: usize, n: usize, coords: &mut [usize]) {
    for c in coords.iter_mut().rev() {
        *c = idx % n;
        idx /= n;
    }
}

/// Fixed-order dot product: chunk partials are computed in parallel, then
/// summed sequentially, so the result does not depend on thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, stopping at
/// relative residual `||b - A x|| <= tol * ||b||`.
pub fn conjugate_gradient(
    op: &StencilOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: 0.0,
                wall_time: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.par_iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; len];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it + 1,
                    residual: res,
                    wall_time: start.elapsed().as_secs_f64(),
                },
            ));
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(&inv_diag))
            .for_each(|(z, (r, m))| *z = r * m);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: res,
    })
}

/// Default iteration cap: generous multiple of the grid diameter in nodes.
pub fn default_max_iter(n: usize, dim: usize) -> usize {
    50 * n * dim + 1000
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(op: &StencilOperator) -> Vec<Vec<f64>> {
        let len = op.len();
        (0..len)
            .map(|j| {
                let mut e = vec![0.0; len];
                e[j] = 1.0;
                let mut col = vec![0.0; len];
                op.apply(&e, &mut col);
                col
            })
            .collect()
    }

    #[test]
    fn one_dimensional_stencil() {
        let op = StencilOperator::new(1, 3, 0.25);
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        op.apply(&x, &mut y);
        assert_eq!(y, [0.0 * 16.0, 0.0, 4.0 * 16.0]);
    }

    #[test]
    fn masked_operator_is_symmetric() {
        let n = 4;
        let mut free = vec![true; n * n * n];
        free[5] = false;
        free[22] = false;
        let shift: Vec<f64> = (0..n * n * n).map(|i| (i % 3) as f64).collect();
        let op = StencilOperator::new(3, n, 0.2).with_mask(free).with_shift(shift);
        let cols = dense(&op);
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                if op.is_free(i) && op.is_free(j) {
                    assert!((cols[i][j] - cols[j][i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cg_solves_small_system() {
        let op = StencilOperator::new(2, 7, 0.125);
        let b: Vec<f64> = (0..49).map(|i| (i as f64 * 0.37).sin()).collect();
        let (x, stats) = conjugate_gradient(&op, &b, 1e-12, 1000).unwrap();
        let mut ax = vec![0.0; 49];
        op.apply(&x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9);
        }
        assert!(stats.residual <= 1e-12);
    }

    #[test]
    fn cg_reports_stagnation() {
        let op = StencilOperator::new(3, 9, 0.1);
        let b = vec![1.0; 729];
        assert!(matches!(
            conjugate_gradient(&op, &b, 1e-14, 2),
            Err(Error::Solver { iterations: 2, .. })
        ));
    }
}
