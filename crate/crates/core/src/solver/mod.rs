//! Finite-difference solvers on `(0,1)^d`: the perforated Dirichlet problem
//! `-Delta u = f` off the holes, the limit problem `(-Delta + mu) u = f`,
//! the oscillating corrector, and the convergence metrics.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::potential_ball;
use crate::error::{Error, Result};
use crate::holes::{disjointness_check, Hole, SeparationParams, SpatialIndex};
use crate::potential::{graph_samples, Potential, QuadratureSpec};
use crate::quadrature::gauss_legendre;
use crate::tiling::AxisBox;

pub mod operator;

use operator::{conjugate_gradient, default_max_iter, StencilOperator};

/// Uniform grid of `n^d` interior nodes `x_j = h (j + 1)`, `h = 1/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!("grid needs d >= 1 and n >= 1, got d = {dim}, n = {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.h()
    }

    pub fn decode(&self, idx: usize, coords: &mut [usize]) {
        operator::decode(idx, self.n, coords);
    }

    pub fn node(&self, idx: usize, x: &mut [f64]) {
        let mut rem = idx;
        for k in (0..self.dim).rev() {
            x[k] = self.coordinate(rem % self.n);
            rem /= self.n;
        }
    }

    pub fn domain(&self) -> AxisBox {
        AxisBox::unit(self.dim)
    }

    /// Node values of `f`.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> GridField {
        let values = (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.dim],
                |x, idx| {
                    self.node(idx, x);
                    f(x)
                },
            )
            .collect();
        GridField { grid: *self, values }
    }

    pub fn zeros(&self) -> GridField {
        GridField {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    /// Inclusive node-index range along one axis covering `[lo, hi]`.
    fn index_range(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let h = self.h();
        let first = ((lo / h) - 1.0).ceil().max(0.0);
        let last = ((hi / h) - 1.0).floor().min(self.n as f64 - 1.0);
        if first > last {
            None
        } else {
            Some((first as usize, last as usize))
        }
    }
}

/// Values at interior nodes; the trace on the boundary is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("grid field has non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L^2 norm `sqrt(sum v^2 h^d)`.
    pub fn l2_norm(&self) -> f64 {
        (operator::dot(&self.values, &self.values) * self.grid.h().powi(self.grid.dim as i32)).sqrt()
    }

    pub fn scaled(&self, t: f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        same_grid(self, other)?;
        Ok(GridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// Restriction to a coarser nested grid by nodal injection; requires
    /// `(n_coarse + 1)` to divide `(n_fine + 1)`.
    pub fn inject(&self, coarse: &Grid) -> Result<GridField> {
        let fine = self.grid;
        if coarse.dim != fine.dim || !(fine.n + 1).is_multiple_of(coarse.n + 1) {
            return Err(Error::Structural(format!(
                "grid n = {} is not nested in n = {}",
                coarse.n, fine.n
            )));
        }
        let ratio = (fine.n + 1) / (coarse.n + 1);
        let mut coords = vec![0usize; coarse.dim];
        let values = (0..coarse.len())
            .map(|idx| {
                coarse.decode(idx, &mut coords);
                let fi = coords.iter().fold(0usize, |acc, &j| acc * fine.n + ((j + 1) * ratio - 1));
                self.values[fi]
            })
            .collect();
        Ok(GridField { grid: *coarse, values })
    }

    /// Multilinear interpolation with zero boundary trace.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = self.grid;
        let h = g.h();
        let np = g.n + 2; // including boundary nodes
        let mut base = vec![0usize; g.dim];
        let mut frac = vec![0.0; g.dim];
        for k in 0..g.dim {
            let t = (x[k] / h).clamp(0.0, (np - 1) as f64);
            let i = (t.floor() as usize).min(np - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << g.dim) {
            let mut w = 1.0;
            let mut idx = 0usize;
            let mut inside = true;
            for k in 0..g.dim {
                let bit = (corner >> (g.dim - 1 - k)) & 1;
                let p = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                if p == 0 || p == np - 1 {
                    inside = false;
                }
                idx = idx * g.n + p.saturating_sub(1);
            }
            if inside && w != 0.0 {
                total += w * self.values[idx];
            }
        }
        total
    }

    /// Binary layout: text line `d n h`, then node values in lexicographic
    /// order as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {:.16e}", self.grid.dim, self.grid.n, self.grid.h())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<GridField> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            input.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
        let text = String::from_utf8_lossy(&header).into_owned();
        let parts: Vec<&str> = text.split_whitespace().collect();
        let bad = || Error::Structural(format!("bad field header `{text}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let dim: usize = parts[0].parse().map_err(|_| bad())?;
        let n: usize = parts[1].parse().map_err(|_| bad())?;
        let grid = Grid::new(dim, n)?;
        let mut values = vec![0.0; grid.len()];
        let mut buf = [0u8; 8];
        for v in values.iter_mut() {
            input.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        GridField::new(grid, values)
    }

    /// CSV samples `t,x1..xd,value` at `points` equispaced stations on the
    /// segment from `start` to `end`.
    pub fn write_line_csv<W: Write>(&self, mut out: W, start: &[f64], end: &[f64], points: usize) -> Result<()> {
        let d = self.grid.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        let mut x = vec![0.0; d];
        for s in 0..points {
            let t = if points > 1 { s as f64 / (points - 1) as f64 } else { 0.0 };
            for k in 0..d {
                x[k] = start[k] + t * (end[k] - start[k]);
            }
            let mut row = vec![format!("{t:.16e}")];
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", self.interpolate(&x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn same_grid(a: &GridField, b: &GridField) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Structural(format!("grid mismatch: {:?} vs {:?}", a.grid, b.grid)));
    }
    Ok(())
}

/// Node weights `w_j = mu(V_j) / h^d` over the dual cells `V_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMeasure {
    pub grid: Grid,
    pub weights: Vec<f64>,
}

impl LumpedMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.grid.h().powi(self.grid.dim as i32)
    }

    pub fn scaled(&self, t: f64) -> LumpedMeasure {
        LumpedMeasure {
            grid: self.grid,
            weights: self.weights.iter().map(|w| t * w).collect(),
        }
    }

    pub fn as_field(&self) -> GridField {
        GridField {
            grid: self.grid,
            values: self.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Map holes smaller than `2h` to their nearest node instead of failing.
    pub override_tiny_holes: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            override_tiny_holes: false,
        }
    }
}

/// Dirichlet mask for closed hole balls: `false` on nodes inside a hole.
pub fn hole_mask(holes: &[Hole], grid: &Grid, override_tiny: bool) -> Result<Vec<bool>> {
    let h = grid.h();
    let mut free = vec![true; grid.len()];
    for hole in holes.iter().filter(|h| !h.is_empty()) {
        if !hole.is_ball() {
            return Err(Error::InvalidParameter(
                "the solver accepts ball-shaped holes only".into(),
            ));
        }
        if hole.center.len() != grid.dim {
            return Err(Error::Structural("hole and grid dimensions differ".into()));
        }
        if hole.radius < 2.0 * h {
            if !override_tiny {
                return Err(Error::Resolution(format!(
                    "hole radius {} at {:?} is below 2h = {} (h = {h})",
                    hole.radius,
                    hole.cell_index,
                    2.0 * h
                )));
            }
            // nearest node, if it is an interior node
            let mut idx = 0usize;
            let mut inside = true;
            for &c in &hole.center {
                let j = (c / h).round() - 1.0;
                if j < 0.0 || j > grid.n as f64 - 1.0 {
                    inside = false;
                }
                idx = idx * grid.n + j.max(0.0) as usize;
            }
            if inside {
                log::warn!("tiny hole at {:?} mapped to its nearest node", hole.cell_index);
                free[idx] = false;
            }
            continue;
        }
        let ranges: Option<Vec<(usize, usize)>> = hole
            .center
            .iter()
            .map(|&c| grid.index_range(c - hole.radius, c + hole.radius))
            .collect();
        let Some(ranges) = ranges else { continue };
        let axes: Vec<Vec<usize>> = ranges.iter().map(|&(a, b)| (a..=b).collect()).collect();
        let r2 = hole.radius * hole.radius;
        crate::tiling::for_each_multi_index(&axes, |ix| {
            let mut d2 = 0.0;
            let mut idx = 0usize;
            for k in 0..grid.dim {
                let x = grid.coordinate(ix[k]);
                d2 += (x - hole.center[k]) * (x - hole.center[k]);
                idx = idx * grid.n + ix[k];
            }
            if d2 <= r2 {
                free[idx] = false;
            }
        });
    }
    Ok(free)
}

/// `-Delta_h u = f` on free nodes, `u = 0` on nodes inside the holes.
pub fn solve_perforated(f: &GridField, holes: &[Hole], opts: &SolveOptions) -> Result<(GridField, SolveStats)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = f.grid;
    let free = hole_mask(holes, &grid, opts.override_tiny_holes)?;
    let rhs: Vec<f64> = f.values.iter().zip(&free).map(|(v, &fr)| if fr { *v } else { 0.0 }).collect();
    let op = StencilOperator::new(grid.dim, grid.n, grid.h()).with_mask(free.clone());
    let (mut u, stats) = conjugate_gradient(&op, &rhs, opts.tol, default_max_iter(grid.n, grid.dim))?;
    for (v, &fr) in u.iter_mut().zip(&free) {
        if !fr {
            *v = 0.0;
        }
    }
    Ok((GridField { grid, values: u }, stats))
}

/// `(-Delta_h + diag(w)) u = f`.
pub fn solve_limit(f: &GridField, mu: &LumpedMeasure, tol: f64) -> Result<(GridField, SolveStats)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if f.grid != mu.grid {
        return Err(Error::Structural("source and measure live on different grids".into()));
    }
    if let Some(w) = mu.weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid measure: node weight {w}")));
    }
    let grid = f.grid;
    let op = StencilOperator::new(grid.dim, grid.n, grid.h()).with_shift(mu.weights.clone());
    let (u, stats) = conjugate_gradient(&op, &f.values, tol, default_max_iter(grid.n, grid.dim))?;
    Ok((GridField { grid, values: u }, stats))
}

/// Plain Dirichlet Poisson solve `-Delta_h u = f`.
pub fn solve_poisson(f: &GridField, tol: f64) -> Result<(GridField, SolveStats)> {
    solve_perforated(
        f,
        &[],
        &SolveOptions {
            tol,
            override_tiny_holes: false,
        },
    )
}

/// Lumps `mu` onto the dual cells `x_j + (-h/2, h/2]^d`.
pub fn lump_measure(mu: &Potential, grid: &Grid, quad: &QuadratureSpec) -> Result<LumpedMeasure> {
    quad.validate()?;
    let mut weights = vec![0.0; grid.len()];
    lump_into(mu, grid, quad, &mut weights)?;
    Ok(LumpedMeasure { grid: *grid, weights })
}

fn lump_into(mu: &Potential, grid: &Grid, quad: &QuadratureSpec, weights: &mut [f64]) -> Result<()> {
    let h = grid.h();
    let d = grid.dim;
    let vol = h.powi(d as i32);
    match mu {
        Potential::Sum(parts) => {
            for p in parts {
                lump_into(p, grid, quad, weights)?;
            }
        }
        Potential::Density(den) => {
            // fraction of each dual interval inside the support, per axis
            let fractions: Vec<Vec<f64>> = (0..d)
                .map(|k| {
                    (0..grid.n)
                        .map(|j| {
                            let x = grid.coordinate(j);
                            match &den.support {
                                Some(s) => ((x + 0.5 * h).min(s.hi[k]) - (x - 0.5 * h).max(s.lo[k])).max(0.0) / h,
                                None => 1.0,
                            }
                        })
                        .collect()
                })
                .collect();
            let (gx, gw) = gauss_legendre(quad.volume_order);
            let bad = weights
                .par_iter_mut()
                .enumerate()
                .map_init(
                    || (vec![0usize; d], vec![0.0; d], vec![0.0; d]),
                    |(coords, x, y), (idx, w)| {
                        grid.decode(idx, coords);
                        let frac: f64 = coords.iter().enumerate().map(|(k, &j)| fractions[k][j]).product();
                        if frac == 0.0 {
                            return false;
                        }
                        grid.node(idx, x);
                        let value = if quad.volume_order == 1 && frac == 1.0 {
                            (den.f)(x)
                        } else {
                            // Gauss rule on the dual cell clipped to the support
                            let mut lo = vec![0.0; d];
                            let mut hi = vec![0.0; d];
                            for k in 0..d {
                                lo[k] = x[k] - 0.5 * h;
                                hi[k] = x[k] + 0.5 * h;
                                if let Some(s) = &den.support {
                                    lo[k] = lo[k].max(s.lo[k]);
                                    hi[k] = hi[k].min(s.hi[k]);
                                }
                            }
                            let mut acc = 0.0;
                            let axes: Vec<Vec<usize>> = vec![(0..gx.len()).collect(); d];
                            crate::tiling::for_each_multi_index(&axes, |ix| {
                                let mut wt = 1.0;
                                for k in 0..d {
                                    y[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * gx[ix[k]];
                                    wt *= 0.5 * gw[ix[k]];
                                }
                                acc += wt * (den.f)(y);
                            });
                            acc
                        };
                        *w += value * frac;
                        !value.is_finite() || value < 0.0
                    },
                )
                .reduce(|| false, |a, b| a || b);
            if bad {
                return Err(Error::Evaluation(format!("density `{}` is negative or not finite on the grid", den.label)));
            }
        }
        Potential::SurfaceGraph(sg) => {
            let n = grid.n;
            let columns = n.pow(d as u32 - 1);
            let mut coords = vec![0usize; d - 1];
            for col in 0..columns {
                operator::decode(col, n, &mut coords);
                let lo: Vec<f64> = coords.iter().map(|&j| grid.coordinate(j) - 0.5 * h).collect();
                let hi: Vec<f64> = coords.iter().map(|&j| grid.coordinate(j) + 0.5 * h).collect();
                let foot = AxisBox { lo, hi };
                let mut bad = None;
                graph_samples(sg, &foot, quad.surface_refine, |_, z, m| {
                    if !m.is_finite() || m < 0.0 {
                        bad.get_or_insert(m);
                    }
                    // dual interval (h(k + 1/2), h(k + 3/2)] along the last axis
                    let k = (z / h - 1.5).ceil();
                    if k >= 0.0 && k < n as f64 {
                        weights[col * n + k as usize] += m / vol;
                    }
                });
                if let Some(m) = bad {
                    return Err(Error::Evaluation(format!("surface `{}` has weight {m}", sg.label)));
                }
            }
        }
    }
    Ok(())
}

/// C^2 cutoff: 1 on `(-inf, 1/2]`, 0 on `[1, inf)`, quintic smoothstep between.
pub fn cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * t - 1.0;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Human-readable description of [`cutoff`], reported in study metadata.
pub const CUTOFF_DESCRIPTION: &str = "phi(t) = 1 - S(2t - 1), S(s) = 6s^5 - 15s^4 + 10s^3, plateau 1 on t <= 1/2, 0 on t >= 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    /// `w = 1 - sum_i phi_i H_i` at the nodes.
    pub field: GridField,
    /// `||V||_{L^2(Omega)}` with `V = 1 - w`.
    pub v_norm: f64,
}

/// The corrector `w = 1 - sum_i phi((|x - x_i| - a_i)/r_i) H_i(x)`.
///
/// The node field is returned for inspection; the norm of `V = 1 - w` is
/// integrated per hole in polar coordinates, since the supports are disjoint
/// and `V` varies on the hole scale, far below typical grid spacings.
pub fn corrector_field(holes: &[Hole], seps: &SeparationParams, grid: &Grid) -> Result<Corrector> {
    let rep = disjointness_check(holes, seps)?;
    if !rep.disjoint {
        return Err(Error::Geometry(format!(
            "separation balls overlap, first pair {:?}",
            rep.overlapping_pairs[0]
        )));
    }
    let d = grid.dim;
    for (i, hole) in holes.iter().enumerate() {
        if !hole.is_empty() && !(seps.gap(i, hole) > 0.0) {
            return Err(Error::Geometry(format!(
                "hole {:?}: R - a = {} must be positive",
                hole.cell_index,
                seps.gap(i, hole)
            )));
        }
    }
    let index = SpatialIndex::new(holes, &seps.radii);
    let bump = |i: usize, x: &[f64]| -> f64 {
        let hole = &holes[i];
        if hole.is_empty() {
            return 0.0;
        }
        let r = crate::holes::dist2(x, &hole.center).sqrt();
        let t = (r - hole.radius) / seps.gap(i, hole);
        cutoff(t) * potential_ball(x, &hole.center, hole.radius, d)
    };
    let field = grid.sample(|x| 1.0 - index.candidates(x).into_iter().map(|i| bump(i, x)).sum::<f64>());
    let domain = grid.domain();
    let mut total = 0.0;
    for (i, hole) in holes.iter().enumerate() {
        if hole.is_empty() {
            continue;
        }
        total += ball_profile_integral(hole, seps.radii[i], &domain, |rho| {
            let t = (rho - hole.radius) / (seps.radii[i] - hole.radius);
            let v = if rho <= hole.radius { 1.0 } else { cutoff(t) * (hole.radius / rho).powi(d as i32 - 2) };
            v * v
        })?;
    }
    Ok(Corrector {
        field,
        v_norm: total.sqrt(),
    })
}

/// `int_{B(c, R) cap domain} q(|x - c|) dx` for a radial profile `q`.
fn ball_profile_integral(hole: &Hole, support: f64, domain: &AxisBox, q: impl Fn(f64) -> f64) -> Result<f64> {
    let d = hole.dim();
    let area = crate::capacity::sphere_area(d)?;
    let a = hole.radius;
    let fraction = SphereFraction::new(&hole.center, support, domain);
    let (gx, gw) = gauss_legendre(8);
    let mut total = 0.0;
    // inside the ball: profile is smooth in rho
    let mut panel = |lo: f64, hi: f64, log_scale: bool| {
        if hi <= lo {
            return;
        }
        let (tlo, thi) = if log_scale { (lo.ln(), hi.ln()) } else { (lo, hi) };
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (tlo + thi) + 0.5 * (thi - tlo) * x;
            let (rho, jac) = if log_scale { (t.exp(), t.exp()) } else { (t, 1.0) };
            total += 0.5 * (thi - tlo) * w * jac * q(rho) * area * rho.powi(d as i32 - 1) * fraction.at(rho);
        }
    };
    const PANELS: usize = 24;
    for p in 0..PANELS {
        panel(a * p as f64 / PANELS as f64, a * (p + 1) as f64 / PANELS as f64, false);
    }
    // outside: (a/rho)^{d-2} decays, integrate in log rho on each cutoff piece
    let knee = a + 0.5 * (support - a);
    for (lo, hi) in [(a, knee), (knee, support)] {
        if hi <= lo {
            continue;
        }
        let ratio = (hi / lo).powf(1.0 / PANELS as f64);
        let mut r0 = lo;
        for p in 0..PANELS {
            let r1 = if p + 1 == PANELS { hi } else { r0 * ratio };
            panel(r0, r1, true);
            r0 = r1;
        }
    }
    Ok(total)
}

/// Fraction of the sphere `|x - c| = rho` inside a box.
enum SphereFraction {
    Constant(f64),
    Sampled { center: Vec<f64>, dirs: Vec<Vec<f64>>, domain: AxisBox },
}

impl SphereFraction {
    fn new(center: &[f64], support: f64, domain: &AxisBox) -> Self {
        // exact when every axis either clears both faces or has the centre
        // on one face and clears the other
        let mut factor = 1.0;
        let mut exact = true;
        for k in 0..center.len() {
            let (c, lo, hi) = (center[k], domain.lo[k], domain.hi[k]);
            if c - support >= lo && c + support <= hi {
                continue;
            }
            if (c == lo && c + support <= hi) || (c == hi && c - support >= lo) {
                factor *= 0.5;
                continue;
            }
            exact = false;
        }
        if exact {
            return SphereFraction::Constant(factor);
        }
        SphereFraction::Sampled {
            center: center.to_vec(),
            dirs: halton_directions(center.len(), 4096),
            domain: domain.clone(),
        }
    }

    fn at(&self, rho: f64) -> f64 {
        match self {
            SphereFraction::Constant(f) => *f,
            SphereFraction::Sampled { center, dirs, domain } => {
                let mut x = vec![0.0; center.len()];
                let inside = dirs
                    .iter()
                    .filter(|u| {
                        for k in 0..x.len() {
                            x[k] = center[k] + rho * u[k];
                        }
                        domain.contains(&x)
                    })
                    .count();
                inside as f64 / dirs.len() as f64
            }
        }
    }
}

/// Deterministic quasi-uniform unit vectors from a Halton sequence through
/// the Box-Muller transform.
fn halton_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let halton = |mut i: u64, b: u64| {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    (1..=count as u64)
        .map(|i| {
            let mut v = Vec::with_capacity(dim);
            let mut k = 0;
            while v.len() < dim {
                let u1 = halton(i, PRIMES[k % PRIMES.len()]).max(1e-12);
                let u2 = halton(i, PRIMES[(k + 1) % PRIMES.len()]);
                let r = (-2.0 * u1.ln()).sqrt();
                v.push(r * (2.0 * std::f64::consts::PI * u2).cos());
                if v.len() < dim {
                    v.push(r * (2.0 * std::f64::consts::PI * u2).sin());
                }
                k += 2;
            }
            let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            v.iter().map(|t| t / norm).collect()
        })
        .collect()
}

/// `sum grad_h (u1 - u2) . grad_h g h^d` with forward differences.
pub fn weak_witness(u1: &GridField, u2: &GridField, g: &GridField) -> Result<f64> {
    let diff = u1.sub(u2)?;
    same_grid(&diff, g)?;
    let grid = diff.grid;
    Ok(crate::capacity::edge_pairing(&diff.values, &g.values, grid.dim, grid.n, grid.h()))
}

/// Discrete `||u1 - u2||_{L^2}`.
pub fn l2_distance(u1: &GridField, u2: &GridField) -> Result<f64> {
    Ok(u1.sub(u2)?.l2_norm())
}

/// `amplitude * prod_k sin(m_k pi x_k)` sampled on the grid.
pub fn sine_mode(grid: &Grid, modes: &[usize], amplitude: f64) -> GridField {
    let modes = modes.to_vec();
    grid.sample(move |x| {
        amplitude
            * x.iter()
                .zip(&modes)
                .map(|(v, &m)| (m as f64 * std::f64::consts::PI * v).sin())
                .product::<f64>()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn hole(c: &[f64], a: f64) -> Hole {
        Hole::new(c.to_vec(), a, vec![0; c.len()]).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::new(3, 7).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_eq!(g.len(), 343);
        let mut x = [0.0; 3];
        g.node(7 + 2, &mut x);
        assert_eq!(x, [0.125, 0.25, 0.375]);
    }

    #[test]
    fn full_hole_gives_zero_solution() {
        let grid = Grid::new(3, 15).unwrap();
        let f = grid.sample(|_| 1.0);
        let (u, stats) = solve_perforated(&f, &[hole(&[0.5, 0.5, 0.5], 1.0)], &SolveOptions::default()).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn holes_stay_zero_and_lower_the_solution() {
        let grid = Grid::new(3, 31).unwrap();
        let f = grid.sample(|_| 1.0);
        let opts = SolveOptions::default();
        let (u0, _) = solve_perforated(&f, &[], &opts).unwrap();
        let holes = vec![hole(&[0.3, 0.5, 0.5], 0.1), hole(&[0.7, 0.4, 0.6], 0.08)];
        let (u1, _) = solve_perforated(&f, &holes, &opts).unwrap();
        let mask = hole_mask(&holes, &grid, false).unwrap();
        assert!(mask.iter().any(|m| !m));
        for ((a, b), m) in u1.values.iter().zip(&u0.values).zip(&mask) {
            if !m {
                assert_eq!(*a, 0.0);
            }
            assert!(*a >= -1e-12 && *a <= b + 1e-9);
        }
        let more = vec![holes[0].clone(), holes[1].clone(), hole(&[0.5, 0.8, 0.2], 0.07)];
        let (u2, _) = solve_perforated(&f, &more, &opts).unwrap();
        for (a, b) in u2.values.iter().zip(&u1.values) {
            assert!(*a <= b + 1e-9);
        }
    }

    #[test]
    fn tiny_holes_need_override() {
        let grid = Grid::new(3, 15).unwrap();
        let f = grid.sample(|_| 1.0);
        let holes = vec![hole(&[0.5, 0.5, 0.5], 0.05)];
        assert!(matches!(
            solve_perforated(&f, &holes, &SolveOptions::default()),
            Err(Error::Resolution(_))
        ));
        let opts = SolveOptions {
            override_tiny_holes: true,
            ..Default::default()
        };
        let (u, _) = solve_perforated(&f, &holes, &opts).unwrap();
        assert_eq!(u.values[7 * 225 + 7 * 15 + 7], 0.0);
    }

    #[test]
    fn limit_with_zero_measure_is_plain_poisson() {
        let grid = Grid::new(3, 15).unwrap();
        let f = grid.sample(|x| x[0] * (1.0 - x[1]));
        let zero = LumpedMeasure {
            grid,
            weights: vec![0.0; grid.len()],
        };
        let (a, _) = solve_limit(&f, &zero, 1e-10).unwrap();
        let (b, _) = solve_perforated(&f, &[], &SolveOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert_eq!(a.values, b.values);
        let neg = LumpedMeasure {
            grid,
            weights: vec![-1.0; grid.len()],
        };
        assert!(matches!(solve_limit(&f, &neg, 1e-8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn stronger_potential_lowers_solution() {
        let grid = Grid::new(3, 15).unwrap();
        let f = grid.sample(|_| 1.0);
        let w = grid.sample(|x| 10.0 + 30.0 * x[2]);
        let mu = LumpedMeasure { grid, weights: w.values };
        let (u1, _) = solve_limit(&f, &mu, 1e-10).unwrap();
        let (u2, _) = solve_limit(&f, &mu.scaled(2.0), 1e-10).unwrap();
        for (a, b) in u2.values.iter().zip(&u1.values) {
            assert!(*a <= *b + 1e-12);
        }
    }

    #[test]
    fn lumping_constant_and_plane() {
        let grid = Grid::new(3, 15).unwrap();
        let dom = AxisBox::unit(3);
        let q = QuadratureSpec::default();
        let c = lump_measure(&Potential::constant(2.5, &dom).unwrap(), &grid, &q).unwrap();
        for w in &c.weights {
            assert_relative_eq!(*w, 2.5, max_relative = 1e-12);
        }
        let p = lump_measure(&Potential::plane(0.5, 1.0, &dom).unwrap(), &grid, &q).unwrap();
        let h = grid.h();
        let mut x = [0.0; 3];
        for (idx, w) in p.weights.iter().enumerate() {
            grid.node(idx, &mut x);
            if x[2] == 0.5 {
                assert_relative_eq!(*w, 1.0 / h, max_relative = 1e-12);
            } else {
                assert_eq!(*w, 0.0);
            }
        }
        // dual cells cover (h/2, 1 - h/2)^2 of the unit-area plane
        assert_relative_eq!(p.total_mass(), (1.0 - h) * (1.0 - h), max_relative = 1e-12);
        let z = lump_measure(&Potential::zero(&dom), &grid, &q).unwrap();
        assert!(z.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn cutoff_is_c2_with_plateaus() {
        assert_eq!(cutoff(0.2), 1.0);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert_eq!(cutoff(3.0), 0.0);
        let e = 1e-5;
        for &t in &[0.5, 1.0] {
            let d1 = (cutoff(t + e) - cutoff(t - e)) / (2.0 * e);
            let d2 = (cutoff(t + e) - 2.0 * cutoff(t) + cutoff(t - e)) / (e * e);
            assert!(d1.abs() < 1e-6 && d2.abs() < 1e-3, "t={t}: {d1} {d2}");
        }
        let mut last = 1.0;
        for k in 0..=100 {
            let v = cutoff(0.5 + 0.005 * k as f64);
            assert!(v <= last && (0.0..=1.0).contains(&v));
            last = v;
        }
    }

    #[test]
    fn corrector_plateaus_and_norm() {
        let grid = Grid::new(3, 31).unwrap();
        let eps = 0.25;
        let holes = vec![Hole::new(vec![0.5, 0.5, 0.5], 0.1, vec![2, 2, 2]).unwrap()];
        let seps = SeparationParams::uniform(eps, 1.0, 1).unwrap();
        let c = corrector_field(&holes, &seps, &grid).unwrap();
        let mut x = [0.0; 3];
        for (idx, w) in c.field.values.iter().enumerate() {
            grid.node(idx, &mut x);
            let r = crate::holes::dist2(&x, &[0.5, 0.5, 0.5]).sqrt();
            if r <= 0.1 {
                assert_eq!(*w, 0.0);
            }
            if r > eps {
                assert_eq!(*w, 1.0);
            }
        }
        // polar quadrature against a fine brute-force midpoint sum
        let a: f64 = 0.1;
        let r = eps - a;
        let m = 200;
        let hh = 2.0 * eps / m as f64;
        let mut brute = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = [(i as f64 + 0.5) * hh - eps, (j as f64 + 0.5) * hh - eps, (k as f64 + 0.5) * hh - eps];
                    let rho = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    let v = if rho <= a { 1.0 } else { cutoff((rho - a) / r) * a / rho };
                    brute += v * v;
                }
            }
        }
        brute *= hh.powi(3);
        assert_relative_eq!(c.v_norm * c.v_norm, brute, max_relative = 2e-3);
    }

    #[test]
    fn corrector_clips_at_domain_faces() {
        // centre on a face: exactly half the ball; on an edge: a quarter
        let grid = Grid::new(3, 7).unwrap();
        let seps = SeparationParams::uniform(0.25, 1.0, 1).unwrap();
        let full = corrector_field(&[Hole::new(vec![0.5; 3], 0.05, vec![2, 2, 2]).unwrap()], &seps, &grid).unwrap();
        let face = corrector_field(&[Hole::new(vec![0.0, 0.5, 0.5], 0.05, vec![0, 2, 2]).unwrap()], &seps, &grid).unwrap();
        let edge = corrector_field(&[Hole::new(vec![0.0, 0.0, 0.5], 0.05, vec![0, 0, 2]).unwrap()], &seps, &grid).unwrap();
        let sq = |c: &Corrector| c.v_norm * c.v_norm;
        assert_relative_eq!(sq(&face), 0.5 * sq(&full), max_relative = 1e-12);
        assert_relative_eq!(sq(&edge), 0.25 * sq(&full), max_relative = 1e-12);
        // sampled fallback for an off-face centre agrees with the exact half
        let shifted = Hole::new(vec![1e-13, 0.5, 0.5], 0.05, vec![0, 2, 2]).unwrap();
        let s = corrector_field(&[shifted], &seps, &grid).unwrap();
        assert_relative_eq!(sq(&s), sq(&face), max_relative = 2e-2);
    }

    #[test]
    fn corrector_rejects_bad_geometry() {
        let grid = Grid::new(3, 7).unwrap();
        let holes = vec![Hole::new(vec![0.5; 3], 0.3, vec![2, 2, 2]).unwrap()];
        let seps = SeparationParams::uniform(0.25, 1.0, 1).unwrap();
        assert!(matches!(corrector_field(&holes, &seps, &grid), Err(Error::Geometry(_))));
    }

    #[test]
    fn witness_and_distance_basics() {
        let grid = Grid::new(3, 15).unwrap();
        let u = sine_mode(&grid, &[1, 1, 1], 1.0);
        let v = sine_mode(&grid, &[2, 1, 1], 0.3);
        assert_eq!(weak_witness(&u, &u, &v).unwrap(), 0.0);
        let d = u.sub(&v).unwrap();
        assert!(weak_witness(&u, &v, &d).unwrap() > 0.0);
        assert_eq!(l2_distance(&u, &u).unwrap(), 0.0);
        assert_relative_eq!(l2_distance(&u.scaled(2.0), &u).unwrap(), u.l2_norm(), max_relative = 1e-14);
        // orthogonal sine modes: ||u - v||^2 = ||u||^2 + ||v||^2 = 1/8 + 0.09/8
        assert_relative_eq!(l2_distance(&u, &v).unwrap(), ((1.0 + 0.09) / 8.0f64).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(l2_distance(&u, &v).unwrap(), l2_distance(&v, &u).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn injection_and_binary_round_trip() {
        let fine = Grid::new(3, 15).unwrap();
        let coarse = Grid::new(3, 7).unwrap();
        let f = fine.sample(|x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let c = f.inject(&coarse).unwrap();
        assert_eq!(c, coarse.sample(|x| x[0] + 10.0 * x[1] + 100.0 * x[2]));
        assert!(f.inject(&Grid::new(3, 6).unwrap()).is_err());

        let mut buf = Vec::new();
        c.write_binary(&mut buf).unwrap();
        assert!(buf.starts_with(b"3 7 1.25"));
        assert_eq!(buf.len(), "3 7 1.2500000000000000e-1\n".len() + 8 * 343);
        let back = GridField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_zero_trace() {
        let grid = Grid::new(2, 7).unwrap();
        let f = sine_mode(&grid, &[1, 2], 1.0);
        let mut x = [0.0; 2];
        grid.node(12, &mut x);
        assert_relative_eq!(f.interpolate(&x), f.values[12], max_relative = 1e-14);
        assert_eq!(f.interpolate(&[0.0, 0.3]), 0.0);
        let mut buf = Vec::new();
        f.write_line_csv(&mut buf, &[0.0, 0.5], &[1.0, 0.5], 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("t,x1,x2,value\n"));
    }

    #[test]
    fn sine_mode_is_discrete_eigenvector() {
        let grid = Grid::new(3, 15).unwrap();
        let h = grid.h();
        let u = sine_mode(&grid, &[1, 1, 1], 1.0);
        let lam = 3.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let (v, _) = solve_poisson(&u.scaled(lam), 1e-12).unwrap();
        for (a, b) in v.values.iter().zip(&u.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
