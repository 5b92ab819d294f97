//! Numerical evaluation of the separation/capacity assumptions, of the
//! capacity-density convergence, and of discrete `H^{-1}(Omega)` norms.

use serde::{Deserialize, Serialize};

use crate::capacity::capacity_ball;
use crate::error::{Error, Result};
use crate::holes::{Hole, SeparationParams};
use crate::potential::{CellField, Potential, QuadratureSpec};
use crate::solver::operator::{conjugate_gradient, default_max_iter, dot, StencilOperator};
use crate::solver::{lump_measure, Grid, GridField};
use crate::tiling::{AxisBox, Cell, TilingSpec};

/// Tolerance for the Poisson solve behind the H^{-1} norm.
pub const HMINUS1_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub epsilon: f64,
    /// `max_i R_i`.
    pub max_r: f64,
    /// `sup_i a_i / R_i`.
    pub sup_a_over_r: f64,
    /// `sum_i a_i^{2(d-2)} R_i^{2-d}`.
    pub sum_a2: f64,
    /// `sup_i |A_i| R_i^{-d}`.
    pub sup_a3: f64,
    /// `sum_i a_i^{d-2} diam A_i`.
    pub sum_a4: f64,
    /// `sum_i a_i^{d-2}`.
    pub sum_a6: f64,
    /// `sup_i diam A_i / R_i`.
    pub diam_over_r: f64,
    /// Cells meeting the boundary of the domain, included in the sums above.
    pub boundary_cells: usize,
    /// Share of `sum_a6` contributed by boundary cells.
    pub sum_a6_boundary: f64,
}

/// Direct sums and suprema over the holes; `holes`, `seps.radii` and
/// `cells` must be index-aligned.
pub fn assumption_quantities(holes: &[Hole], seps: &SeparationParams, cells: &[Cell], domain: &AxisBox) -> Result<AssumptionReport> {
    if holes.len() != cells.len() || holes.len() != seps.radii.len() {
        return Err(Error::Structural(format!(
            "{} holes, {} cells, {} separation radii",
            holes.len(),
            cells.len(),
            seps.radii.len()
        )));
    }
    if let Some((h, c)) = holes.iter().zip(cells).find(|(h, c)| h.cell_index != c.index) {
        return Err(Error::Structural(format!(
            "hole of cell {:?} paired with cell {:?}",
            h.cell_index, c.index
        )));
    }
    let mut rep = AssumptionReport {
        epsilon: seps.epsilon,
        max_r: 0.0,
        sup_a_over_r: 0.0,
        sum_a2: 0.0,
        sup_a3: 0.0,
        sum_a4: 0.0,
        sum_a6: 0.0,
        diam_over_r: 0.0,
        boundary_cells: 0,
        sum_a6_boundary: 0.0,
    };
    for ((hole, cell), &r) in holes.iter().zip(cells).zip(&seps.radii) {
        let d = cell.dim() as i32;
        let a = hole.radius;
        let ad2 = a.powi(d - 2);
        rep.max_r = rep.max_r.max(r);
        rep.sup_a_over_r = rep.sup_a_over_r.max(a / r);
        rep.sum_a2 += ad2 * ad2 * r.powi(2 - d);
        rep.sup_a3 = rep.sup_a3.max(cell.measure() / r.powi(d));
        rep.sum_a4 += ad2 * cell.diameter();
        rep.sum_a6 += ad2;
        rep.diam_over_r = rep.diam_over_r.max(cell.diameter() / r);
        if cell.meets_boundary(domain) {
            rep.boundary_cells += 1;
            rep.sum_a6_boundary += ad2;
        }
    }
    Ok(rep)
}

/// `sum_i cap(K_i)/|A_i| 1_{A_i}` for ball holes.
pub fn capacity_density(holes: &[Hole], epsilon: f64) -> Result<CellField> {
    let dim = holes.first().map_or(3, Hole::dim);
    let entries = holes
        .iter()
        .map(|h| {
            let cell = Cell::new(h.cell_index.clone(), epsilon);
            let cap = capacity_ball(dim, h.radius)?.value;
            let v = cap / cell.measure();
            Ok((cell, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellField::new(epsilon, dim, entries))
}

/// Discrete `||nu||_{H^{-1}}`: solve `-Delta_h phi = nu`, return
/// `sqrt(<nu, phi> h^d)`.
pub fn hminus1_norm(nu: &GridField) -> Result<f64> {
    if nu.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("H^-1 argument has non-finite values".into()));
    }
    let grid = nu.grid;
    let op = StencilOperator::new(grid.dim, grid.n, grid.h());
    let (phi, _) = conjugate_gradient(&op, &nu.values, HMINUS1_TOL, default_max_iter(grid.n, grid.dim))?;
    let pairing = dot(&nu.values, &phi) * grid.h().powi(grid.dim as i32);
    Ok(pairing.max(0.0).sqrt())
}

/// `|| capacity density - mu ||_{H^{-1}(Omega)}`, both sides lumped onto the
/// dual cells of `grid`.
pub fn ldc_deviation(holes: &[Hole], epsilon: f64, mu: &Potential, grid: &Grid, quad: &QuadratureSpec) -> Result<f64> {
    let lumped = lump_measure(mu, grid, quad)?;
    let values = if holes.is_empty() {
        vec![0.0; grid.len()]
    } else {
        capacity_density(holes, epsilon)?.dual_cell_averages(grid)
    };
    let diff: Vec<f64> = values.iter().zip(&lumped.weights).map(|(a, b)| a - b).collect();
    hminus1_norm(&GridField { grid: *grid, values: diff })
}

/// `|| field_a - field_b ||_{H^{-1}}` between two cell fields (Cauchy proxy).
pub fn cell_field_distance(a: &CellField, b: &CellField, grid: &Grid) -> Result<f64> {
    let va = a.dual_cell_averages(grid);
    let vb = b.dual_cell_averages(grid);
    let diff: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    hminus1_norm(&GridField { grid: *grid, values: diff })
}

/// Smooth test functions for distributional pairings on `Omega`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TestFunction {
    /// `exp(1 - 1/(1 - |x - c|^2/r^2))` on `B(c, r)`, zero outside.
    Bump { center: Vec<f64>, radius: f64 },
    /// `prod_k sin(m_k pi x_k)` on the unit cube.
    SineMode { modes: Vec<usize> },
}

impl TestFunction {
    pub fn validate(&self, domain: &AxisBox) -> Result<()> {
        match self {
            TestFunction::Bump { center, radius } => {
                let inside = center.len() == domain.dim()
                    && *radius > 0.0
                    && center
                        .iter()
                        .zip(domain.lo.iter().zip(&domain.hi))
                        .all(|(c, (lo, hi))| c - radius >= *lo && c + radius <= *hi);
                if inside {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "bump at {center:?} with radius {radius} is not supported inside the domain"
                    )))
                }
            }
            TestFunction::SineMode { modes } => {
                let unit = domain.lo.iter().all(|v| *v == 0.0) && domain.hi.iter().all(|v| *v == 1.0);
                if modes.len() != domain.dim() || !unit || modes.contains(&0) {
                    return Err(Error::InvalidParameter(format!("sine mode {modes:?} does not vanish on the domain boundary")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Bump { center, radius } => {
                let s = crate::holes::dist2(x, center) / (radius * radius);
                if s >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s)).exp()
                }
            }
            TestFunction::SineMode { modes } => x
                .iter()
                .zip(modes)
                .map(|(v, &m)| (m as f64 * std::f64::consts::PI * v).sin())
                .product(),
        }
    }

    /// Upper bound of the Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            // max |d/dt exp(1 - 1/(1-t^2))| = 1.1217... at t ~ 0.6
            TestFunction::Bump { radius, .. } => 1.13 / radius,
            TestFunction::SineMode { modes } => {
                std::f64::consts::PI * modes.iter().map(|&m| (m * m) as f64).sum::<f64>().sqrt()
            }
        }
    }
}

/// `<nu, g> = sum_j nu_j g(x_j) h^d` for a node density `nu`.
pub fn dprime_pairing(nu: &GridField, g: &TestFunction) -> Result<f64> {
    let grid = nu.grid;
    g.validate(&grid.domain())?;
    let gv = grid.sample(|x| g.eval(x));
    Ok(dot(&nu.values, &gv.values) * grid.h().powi(grid.dim as i32))
}

/// `<mu, g>` by quadrature on the cells of a fine tiling of the domain.
pub fn measure_pairing(mu: &Potential, g: &TestFunction, domain: &AxisBox, quad: &QuadratureSpec, resolution: f64) -> Result<f64> {
    g.validate(domain)?;
    let spec = TilingSpec::new(domain.dim(), resolution)?;
    let mut total = 0.0;
    for cell in spec.cells_intersecting(domain)? {
        if let Some(bx) = cell.bounds().intersect(domain) {
            total += mu.integrate(&bx, quad, &|x| g.eval(x))?;
        }
    }
    Ok(total)
}

/// `<sum_i cap(K_i)/|A_i| 1_{A_i}, g>`, integrating `g` over each cell.
pub fn capacity_density_pairing(holes: &[Hole], epsilon: f64, g: &TestFunction, domain: &AxisBox, order: usize) -> Result<f64> {
    g.validate(domain)?;
    let field = capacity_density(holes, epsilon)?;
    let mut total = 0.0;
    for (cell, v) in &field.entries {
        if *v == 0.0 {
            continue;
        }
        if let Some(bx) = cell.bounds().intersect(domain) {
            total += v * crate::quadrature::integrate_box(&bx, order, |x| g.eval(x));
        }
    }
    Ok(total)
}

/// `<sum_i cap(K_i)/|K_i| 1_{K_i}, g>`: capacity mass spread over the holes.
/// Ball integrals use a tensor Gauss rule on the bounding cube with the
/// ball indicator, so quadrature bias cancels between `|K_i|` and `int g`.
pub fn hole_density_pairing(holes: &[Hole], g: &TestFunction, domain: &AxisBox) -> Result<f64> {
    g.validate(domain)?;
    let mut total = 0.0;
    for hole in holes.iter().filter(|h| !h.is_empty()) {
        let d = hole.dim();
        let cap = capacity_ball(d, hole.radius)?.value;
        let bx = AxisBox {
            lo: hole.center.iter().map(|c| c - hole.radius).collect(),
            hi: hole.center.iter().map(|c| c + hole.radius).collect(),
        };
        let ball_volume = crate::quadrature::integrate_box(&bx, 6, |x| if hole.contains(x) { 1.0 } else { 0.0 });
        if ball_volume == 0.0 {
            continue;
        }
        let gint = crate::quadrature::integrate_box(&bx, 6, |x| {
            if hole.contains(x) && domain.contains(x) {
                g.eval(x)
            } else {
                0.0
            }
        });
        total += cap * gint / ball_volume;
    }
    Ok(total)
}
