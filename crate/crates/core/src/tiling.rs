//! Lattice tiling of space by the scaled cells `eps * ((-1, 1]^d + i)`, `i in 2Z^d`.
//!
//! Every point of R^d lies in exactly one cell: cell faces are half-open with
//! the upper face included, so `x_k = eps * (i_k + 1)` belongs to cell `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open axis-aligned box `(lo_1, hi_1) x ... x (lo_d, hi_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "box corners have dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidParameter("box must be bounded and nonempty".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `(0, 1)^d`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Membership in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| v > a && v < b)
    }

    /// Intersection with another box, `None` when it has empty interior.
    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(AxisBox { lo, hi })
        } else {
            None
        }
    }

    /// Drop the last coordinate (footprint of the box on the first d-1 axes).
    pub fn footprint(&self) -> AxisBox {
        let d = self.dim();
        AxisBox {
            lo: self.lo[..d - 1].to_vec(),
            hi: self.hi[..d - 1].to_vec(),
        }
    }
}

/// Tiling by `eps * (A + i)` with `A = (-1, 1]^d` and `i in 2Z^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingSpec {
    pub dim: usize,
    pub epsilon: f64,
}

impl TilingSpec {
    pub fn new(dim: usize, epsilon: f64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { dim, epsilon })
    }

    pub fn cell(&self, index: Vec<i64>) -> Cell {
        Cell::new(index, self.epsilon)
    }

    /// The unique cell containing `x`.
    pub fn cell_of_point(&self, x: &[f64]) -> Cell {
        let index = x.iter().map(|&v| lattice_coordinate(v / self.epsilon)).collect();
        self.cell(index)
    }

    /// All cells meeting the open box `domain`, in lexicographic index order.
    pub fn cells_intersecting(&self, domain: &AxisBox) -> Result<Vec<Cell>> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "domain dimension {} does not match tiling dimension {}",
                domain.dim(),
                self.dim
            )));
        }
        // cell i meets (lo, hi) iff eps(i-1) < hi and eps(i+1) > lo
        let ranges: Vec<Vec<i64>> = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(&lo, &hi)| {
                let first = lattice_coordinate(lo / self.epsilon);
                let mut axis = Vec::new();
                let mut i = first;
                while self.epsilon * (i as f64 - 1.0) < hi {
                    if self.epsilon * (i as f64 + 1.0) > lo {
                        axis.push(i);
                    }
                    i += 2;
                }
                axis
            })
            .collect();
        let mut cells = Vec::new();
        for_each_multi_index(&ranges, |index| cells.push(self.cell(index.to_vec())));
        Ok(cells)
    }
}

/// Smallest even integer `i` with `t <= i + 1`, i.e. the lattice index of
/// the half-open interval `(i - 1, i + 1]` containing `t`.
fn lattice_coordinate(t: f64) -> i64 {
    2 * ((t - 1.0) / 2.0).ceil() as i64
}

/// Visit the cartesian product of `ranges` in lexicographic order.
pub(crate) fn for_each_multi_index<T: Copy>(ranges: &[Vec<T>], mut visit: impl FnMut(&[T])) {
    if ranges.iter().any(|r| r.is_empty()) {
        return;
    }
    let d = ranges.len();
    let mut pos = vec![0usize; d];
    let mut current: Vec<T> = ranges.iter().map(|r| r[0]).collect();
    loop {
        visit(&current);
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pos[k] += 1;
            if pos[k] < ranges[k].len() {
                current[k] = ranges[k][pos[k]];
                break;
            }
            pos[k] = 0;
            current[k] = ranges[k][0];
        }
    }
}

/// One lattice cell `eps * ((-1, 1]^d + i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: Vec<i64>,
    pub epsilon: f64,
}

impl Cell {
    pub fn new(index: Vec<i64>, epsilon: f64) -> Self {
        Self { index, epsilon }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.index.iter().map(|&i| self.epsilon * i as f64).collect()
    }

    pub fn half_width(&self) -> f64 {
        self.epsilon
    }

    pub fn measure(&self) -> f64 {
        (2.0 * self.epsilon).powi(self.dim() as i32)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.epsilon * (self.dim() as f64).sqrt()
    }

    pub fn bounds(&self) -> AxisBox {
        AxisBox {
            lo: self.index.iter().map(|&i| self.epsilon * (i as f64 - 1.0)).collect(),
            hi: self.index.iter().map(|&i| self.epsilon * (i as f64 + 1.0)).collect(),
        }
    }

    /// Half-open membership, upper faces included.
    pub fn contains(&self, x: &[f64]) -> bool {
        let b = self.bounds();
        x.iter()
            .zip(b.lo.iter().zip(&b.hi))
            .all(|(&v, (&lo, &hi))| v > lo && v <= hi)
    }

    /// True when the cell is not contained in the closure of `domain`.
    pub fn meets_boundary(&self, domain: &AxisBox) -> bool {
        let b = self.bounds();
        b.lo.iter()
            .zip(&b.hi)
            .zip(domain.lo.iter().zip(&domain.hi))
            .any(|((&lo, &hi), (&dlo, &dhi))| lo < dlo || hi > dhi)
    }
}
