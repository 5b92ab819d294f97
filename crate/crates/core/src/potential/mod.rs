//! Target potentials: nonnegative measures built from densities, weighted
//! surface measures on graphs, and finite sums of those.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_box;
use crate::solver::Grid;
use crate::tiling::{for_each_multi_index, AxisBox, Cell, TilingSpec};

pub mod expr;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Quadrature resolution for cell masses and lumping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss points per axis for densities.
    pub volume_order: usize,
    /// Midpoint subdivisions per axis of a footprint for graph measures.
    pub surface_refine: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            volume_order: 4,
            surface_refine: 16,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.volume_order == 0 || self.surface_refine == 0 {
            return Err(Error::InvalidParameter("quadrature orders must be >= 1".into()));
        }
        Ok(())
    }
}

/// Absolutely continuous part `f dx`, optionally supported on a box.
#[derive(Clone)]
pub struct Density {
    pub f: ScalarFn,
    pub support: Option<AxisBox>,
    /// Integrability exponent `p >= d` of the density.
    pub integrability: f64,
    pub label: String,
}

/// `weight * dS` on the graph `{(x', s(x'))}` of a C^1 function.
#[derive(Clone)]
pub struct SurfaceGraph {
    pub s: ScalarFn,
    pub grad_s: VectorFn,
    pub weight: ScalarFn,
    pub weight_bound: f64,
    pub lipschitz: Option<f64>,
    /// Restricts the graph to `x'` in this (d-1)-box.
    pub footprint: Option<AxisBox>,
    pub label: String,
}

#[derive(Clone)]
pub enum Potential {
    Density(Density),
    SurfaceGraph(SurfaceGraph),
    Sum(Vec<Potential>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Potential {
    /// `c * 1_domain`.
    pub fn constant(c: f64, domain: &AxisBox) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("constant density must be >= 0, got {c}")));
        }
        Ok(Potential::Density(Density {
            f: Arc::new(move |_| c),
            support: Some(domain.clone()),
            integrability: f64::INFINITY,
            label: format!("constant({c})"),
        }))
    }

    /// `amplitude * prod_k sin(pi (x_k - lo_k) / (hi_k - lo_k))` on the
    /// domain, zero outside. Lipschitz on all of R^d.
    pub fn sine_density(amplitude: f64, domain: &AxisBox) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!("amplitude must be >= 0, got {amplitude}")));
        }
        let dom = domain.clone();
        Ok(Potential::Density(Density {
            f: Arc::new(move |x: &[f64]| {
                amplitude
                    * x.iter()
                        .zip(dom.lo.iter().zip(&dom.hi))
                        .map(|(v, (a, b))| (std::f64::consts::PI * (v - a) / (b - a)).sin())
                        .product::<f64>()
            }),
            support: Some(domain.clone()),
            integrability: f64::INFINITY,
            label: format!("sine_density({amplitude})"),
        }))
    }

    /// Arbitrary nonnegative density.
    pub fn density(f: ScalarFn, support: Option<AxisBox>, integrability: f64, label: impl Into<String>) -> Self {
        Potential::Density(Density {
            f,
            support,
            integrability,
            label: label.into(),
        })
    }

    /// `weight * dS` on the hyperplane `x_d = z0`, over the footprint of `domain`.
    pub fn plane(z0: f64, weight: f64, domain: &AxisBox) -> Result<Self> {
        let d = domain.dim();
        let mut coeffs = vec![0.0; d];
        coeffs[0] = z0;
        let mut p = Self::graph(weight, &coeffs, domain)?;
        if let Potential::SurfaceGraph(g) = &mut p {
            g.label = format!("plane({z0}, {weight})");
        }
        Ok(p)
    }

    /// `weight * dS` on the graph of
    /// `s(x') = c_0 + sum_m c_m x'_m + sum_m c_{d-1+m} x'_m^2`,
    /// missing coefficients being zero, over the footprint of `domain`.
    pub fn graph(weight: f64, coeffs: &[f64], domain: &AxisBox) -> Result<Self> {
        let d = domain.dim();
        if d < 2 {
            return Err(Error::InvalidParameter("graph measures need d >= 2".into()));
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!("surface weight must be >= 0, got {weight}")));
        }
        if coeffs.is_empty() || coeffs.len() > 2 * d - 1 {
            return Err(Error::InvalidParameter(format!(
                "graph takes 1..={} coefficients, got {}",
                2 * d - 1,
                coeffs.len()
            )));
        }
        let mut c = coeffs.to_vec();
        c.resize(2 * d - 1, 0.0);
        let m = d - 1;
        let lin: Vec<f64> = c[1..1 + m].to_vec();
        let quad: Vec<f64> = c[1 + m..].to_vec();
        let c0 = c[0];
        let (l1, q1) = (lin.clone(), quad.clone());
        let s: ScalarFn = Arc::new(move |x: &[f64]| {
            c0 + x.iter().zip(l1.iter().zip(&q1)).map(|(v, (l, q))| l * v + q * v * v).sum::<f64>()
        });
        let (l2, q2) = (lin.clone(), quad.clone());
        let grad_s: VectorFn = Arc::new(move |x: &[f64], g: &mut [f64]| {
            for k in 0..g.len() {
                g[k] = l2[k] + 2.0 * q2[k] * x[k];
            }
        });
        let foot = domain.footprint();
        let lipschitz = (0..m)
            .map(|k| {
                let xm = foot.lo[k].abs().max(foot.hi[k].abs());
                let g = lin[k].abs() + 2.0 * quad[k].abs() * xm;
                g * g
            })
            .sum::<f64>()
            .sqrt();
        Ok(Potential::SurfaceGraph(SurfaceGraph {
            s,
            grad_s,
            weight: Arc::new(move |_| weight),
            weight_bound: weight,
            lipschitz: Some(lipschitz),
            footprint: Some(foot),
            label: format!("graph({weight}; {coeffs:?})"),
        }))
    }

    pub fn sum(parts: Vec<Potential>) -> Self {
        Potential::Sum(parts)
    }

    pub fn zero(domain: &AxisBox) -> Self {
        Potential::constant(0.0, domain).expect("zero is a valid density")
    }

    pub fn label(&self) -> String {
        match self {
            Potential::Density(d) => d.label.clone(),
            Potential::SurfaceGraph(g) => g.label.clone(),
            Potential::Sum(parts) => {
                let inner: Vec<String> = parts.iter().map(Potential::label).collect();
                format!("sum([{}])", inner.join(", "))
            }
        }
    }

    /// `int_region g dmu`. Region faces are half-open (upper face included)
    /// for the surface part, matching the tiling convention.
    pub fn integrate(&self, region: &AxisBox, quad: &QuadratureSpec, g: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        quad.validate()?;
        match self {
            Potential::Density(d) => {
                let bx = match &d.support {
                    Some(s) => match region.intersect(s) {
                        Some(b) => b,
                        None => return Ok(0.0),
                    },
                    None => region.clone(),
                };
                let mut bad = None;
                let v = integrate_box(&bx, quad.volume_order, |x| {
                    let fx = (d.f)(x);
                    if !fx.is_finite() || fx < 0.0 {
                        bad.get_or_insert(fx);
                    }
                    fx * g(x)
                });
                match bad {
                    Some(fx) => Err(Error::Evaluation(format!("density `{}` evaluated to {fx}", d.label))),
                    None => Ok(v),
                }
            }
            Potential::SurfaceGraph(sg) => {
                let mut total = 0.0;
                let mut bad = None;
                graph_samples(sg, &region.footprint(), quad.surface_refine, |xp, z, w| {
                    if z > region.lo[region.dim() - 1] && z <= region.hi[region.dim() - 1] {
                        let mut x = xp.to_vec();
                        x.push(z);
                        if !w.is_finite() || w < 0.0 {
                            bad.get_or_insert(w);
                        }
                        total += w * g(&x);
                    }
                });
                match bad {
                    Some(w) => Err(Error::Evaluation(format!("surface `{}` has weight {w}", sg.label))),
                    None => Ok(total),
                }
            }
            Potential::Sum(parts) => parts.iter().map(|p| p.integrate(region, quad, g)).sum(),
        }
    }

    /// `mu(region)`.
    pub fn mass(&self, region: &AxisBox, quad: &QuadratureSpec) -> Result<f64> {
        self.integrate(region, quad, &|_| 1.0)
    }

    /// `mu(A_i^eps)`.
    pub fn cell_mass(&self, cell: &Cell, quad: &QuadratureSpec) -> Result<f64> {
        self.mass(&cell.bounds(), quad)
    }

    /// Pointwise density value (0 for purely singular measures).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Density(d) => match &d.support {
                Some(s) if !s.contains(x) => 0.0,
                _ => (d.f)(x),
            },
            Potential::SurfaceGraph(_) => 0.0,
            Potential::Sum(parts) => parts.iter().map(|p| p.density_at(x)).sum(),
        }
    }
}

/// Midpoint samples of a graph measure over `footprint`: calls
/// `visit(x', s(x'), weight * sqrt(1 + |grad s|^2) * dA)`.
pub(crate) fn graph_samples(sg: &SurfaceGraph, footprint: &AxisBox, refine: usize, mut visit: impl FnMut(&[f64], f64, f64)) {
    let fp = match &sg.footprint {
        Some(f) => match footprint.intersect(f) {
            Some(b) => b,
            None => return,
        },
        None => footprint.clone(),
    };
    let m = fp.dim();
    let steps: Vec<f64> = fp.lo.iter().zip(&fp.hi).map(|(a, b)| (b - a) / refine as f64).collect();
    let da: f64 = steps.iter().product();
    let axes: Vec<Vec<usize>> = vec![(0..refine).collect(); m];
    let mut xp = vec![0.0; m];
    let mut grad = vec![0.0; m];
    for_each_multi_index(&axes, |ix| {
        for k in 0..m {
            xp[k] = fp.lo[k] + (ix[k] as f64 + 0.5) * steps[k];
        }
        (sg.grad_s)(&xp, &mut grad);
        let area = (1.0 + grad.iter().map(|g| g * g).sum::<f64>()).sqrt();
        let z = (sg.s)(&xp);
        visit(&xp, z, (sg.weight)(&xp) * area * da);
    });
}

/// Piecewise-constant field over lattice cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub epsilon: f64,
    pub dim: usize,
    pub entries: Vec<(Cell, f64)>,
}

impl CellField {
    pub fn new(epsilon: f64, dim: usize, entries: Vec<(Cell, f64)>) -> Self {
        Self { epsilon, dim, entries }
    }

    fn lookup(&self) -> HashMap<&[i64], f64> {
        self.entries.iter().map(|(c, v)| (c.index.as_slice(), *v)).collect()
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let spec = TilingSpec {
            dim: self.dim,
            epsilon: self.epsilon,
        };
        let cell = spec.cell_of_point(x);
        self.entries
            .iter()
            .find(|(c, _)| c.index == cell.index)
            .map_or(0.0, |(_, v)| *v)
    }

    /// `sum_i value_i |A_i|`.
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(c, v)| v * c.measure()).sum()
    }

    /// Average of the field over each half-open dual box
    /// `x_j + (-h/2, h/2]^d` of the grid nodes, from exact box-cell overlaps.
    pub fn dual_cell_averages(&self, grid: &Grid) -> Vec<f64> {
        let table = self.lookup();
        let eps = self.epsilon;
        let d = self.dim;
        let h = grid.h();
        // overlaps are separable: per-axis lists indexed by node coordinate
        let per_axis: Vec<Vec<(i64, f64)>> = (0..grid.n)
            .map(|j| {
                let xc = grid.coordinate(j);
                let (lo, hi) = (xc - 0.5 * h, xc + 0.5 * h);
                let mut axis = Vec::new();
                let mut i = 2 * ((lo / eps - 1.0) / 2.0).ceil() as i64;
                loop {
                    let (clo, chi) = (eps * (i as f64 - 1.0), eps * (i as f64 + 1.0));
                    if clo >= hi {
                        break;
                    }
                    let overlap = chi.min(hi) - clo.max(lo);
                    if overlap > 0.0 {
                        axis.push((i, overlap / h));
                    }
                    i += 2;
                }
                axis
            })
            .collect();
        let mut coords = vec![0usize; d];
        let mut key = vec![0i64; d];
        (0..grid.len())
            .map(|idx| {
                grid.decode(idx, &mut coords);
                let ranges: Vec<Vec<(i64, f64)>> = coords.iter().map(|&j| per_axis[j].clone()).collect();
                let mut acc = 0.0;
                for_each_multi_index(&ranges, |pick| {
                    let mut w = 1.0;
                    for k in 0..d {
                        key[k] = pick[k].0;
                        w *= pick[k].1;
                    }
                    if let Some(v) = table.get(key.as_slice()) {
                        acc += v * w;
                    }
                });
                acc
            })
            .collect()
    }
}

/// Cell averages `mu(A_i)/|A_i|` on every cell meeting `domain`.
pub fn cell_average_field(mu: &Potential, spec: &TilingSpec, domain: &AxisBox, quad: &QuadratureSpec) -> Result<CellField> {
    let cells = spec.cells_intersecting(domain)?;
    let entries = cells
        .into_iter()
        .map(|c| {
            let m = mu.cell_mass(&c, quad)?;
            let v = m / c.measure();
            Ok((c, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellField::new(spec.epsilon, spec.dim, entries))
}

/// `(int_window |field - mu|^p)^{1/p}` with `mu` a density, by tensor Gauss
/// quadrature on `subdiv^d` sub-boxes of every cell-window intersection.
pub fn lp_distance_to_density(field: &CellField, mu: &Potential, window: &AxisBox, p: f64, order: usize, subdiv: usize) -> Result<f64> {
    let mut total = 0.0;
    for (cell, v) in &field.entries {
        let bx = match cell.bounds().intersect(window) {
            Some(b) => b,
            None => continue,
        };
        let d = bx.dim();
        let axes: Vec<Vec<usize>> = vec![(0..subdiv).collect(); d];
        for_each_multi_index(&axes, |ix| {
            let lo: Vec<f64> = (0..d)
                .map(|k| bx.lo[k] + (bx.hi[k] - bx.lo[k]) * ix[k] as f64 / subdiv as f64)
                .collect();
            let hi: Vec<f64> = (0..d)
                .map(|k| bx.lo[k] + (bx.hi[k] - bx.lo[k]) * (ix[k] + 1) as f64 / subdiv as f64)
                .collect();
            let sub = AxisBox { lo, hi };
            total += integrate_box(&sub, order, |x| (v - mu.density_at(x)).abs().powf(p));
        });
    }
    if !total.is_finite() {
        return Err(Error::Evaluation("L^p distance is not finite".into()));
    }
    Ok(total.powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassScaling {
    pub epsilons: Vec<f64>,
    pub max_masses: Vec<f64>,
    /// Log-log slope of max mass against eps; `None` when degenerate.
    pub slope: Option<f64>,
}

/// `max_i mu(A_i^eps)` over cells meeting `domain` for each eps, with the
/// least-squares log-log slope.
pub fn max_cell_mass_scaling(mu: &Potential, dim: usize, domain: &AxisBox, eps_list: &[f64], quad: &QuadratureSpec) -> Result<MassScaling> {
    if eps_list.len() < 3 {
        return Err(Error::InsufficientData(format!("need >= 3 values of eps, got {}", eps_list.len())));
    }
    let mut max_masses = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let spec = TilingSpec::new(dim, eps)?;
        let mut best = 0.0f64;
        for c in spec.cells_intersecting(domain)? {
            best = best.max(mu.cell_mass(&c, quad)?);
        }
        max_masses.push(best);
    }
    let slope = loglog_slope(eps_list, &max_masses);
    Ok(MassScaling {
        epsilons: eps_list.to_vec(),
        max_masses,
        slope,
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` if any value is not positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
