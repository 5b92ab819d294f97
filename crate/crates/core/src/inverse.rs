//! Capacity-matched hole construction: one ball per lattice cell whose
//! Newtonian capacity equals the cell mass of the target potential.

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::unit_ball_capacity;
use crate::error::{Error, Result};
use crate::holes::{Hole, HoleTemplate, SeparationParams};
use crate::potential::{Potential, QuadratureSpec};
use crate::tiling::{AxisBox, Cell, TilingSpec};

/// Largest ball inside a cell of half-width eps has radius `c1 * eps`.
pub const DEFAULT_C1: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionReport {
    pub epsilon: f64,
    pub dim: usize,
    pub c1: f64,
    pub holes: Vec<Hole>,
    /// `mu(A_i^eps)`, aligned with `holes`.
    pub cell_masses: Vec<f64>,
    pub max_radius_ratio: f64,
    /// Cells with zero mass, which carry empty holes.
    pub skipped: Vec<Vec<i64>>,
}

/// JSON sidecar of the hole CSV.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ConstructionHeader {
    pub epsilon: f64,
    pub c1: f64,
    pub max_radius_ratio: f64,
    pub total_mass: f64,
}

impl ConstructionReport {
    pub fn total_mass(&self) -> f64 {
        self.cell_masses.iter().sum()
    }

    pub fn header(&self) -> ConstructionHeader {
        ConstructionHeader {
            epsilon: self.epsilon,
            c1: self.c1,
            max_radius_ratio: self.max_radius_ratio,
            total_mass: self.total_mass(),
        }
    }

    pub fn separation(&self) -> SeparationParams {
        SeparationParams::uniform(self.epsilon, self.c1, self.holes.len())
            .expect("construction parameters are positive")
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.holes
            .iter()
            .map(|h| Cell::new(h.cell_index.clone(), self.epsilon))
            .collect()
    }

    pub fn min_nonempty_radius(&self) -> Option<f64> {
        self.holes
            .iter()
            .filter(|h| !h.is_empty())
            .map(|h| h.radius)
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn max_radius(&self) -> f64 {
        self.holes.iter().map(|h| h.radius).fold(0.0, f64::max)
    }
}

/// Reference shape for congruent holes: its capacity and the radius of its
/// minimal enclosing ball.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateShape {
    pub shape_id: String,
    pub capacity: f64,
    pub enclosing_radius: f64,
}

impl TemplateShape {
    pub fn unit_ball(dim: usize) -> Result<Self> {
        Ok(Self {
            shape_id: "ball".into(),
            capacity: unit_ball_capacity(dim)?,
            enclosing_radius: 1.0,
        })
    }
}

fn masses(mu: &Potential, cells: &[Cell], quad: &QuadratureSpec) -> Result<Vec<f64>> {
    cells.par_iter().map(|c| mu.cell_mass(c, quad)).collect()
}

/// Ball `B(eps i, (mu(A_i)/((d-2) S_d))^{1/(d-2)})` in every cell meeting `domain`.
pub fn construct_holes(mu: &Potential, spec: &TilingSpec, domain: &AxisBox, quad: &QuadratureSpec) -> Result<ConstructionReport> {
    let report = construct_holes_template(mu, spec, domain, quad, &TemplateShape::unit_ball(spec.dim)?)?;
    Ok(ConstructionReport {
        holes: report
            .holes
            .into_iter()
            .map(|mut h| {
                h.template = None;
                h
            })
            .collect(),
        ..report
    })
}

/// Holes congruent to `(mu(A_i)/cap(K))^{1/(d-2)} K`, recorded by their
/// enclosing balls and template tags.
pub fn construct_holes_template(
    mu: &Potential,
    spec: &TilingSpec,
    domain: &AxisBox,
    quad: &QuadratureSpec,
    template: &TemplateShape,
) -> Result<ConstructionReport> {
    let d = spec.dim;
    if d < 3 {
        return Err(Error::InvalidParameter(format!("hole construction requires d >= 3, got {d}")));
    }
    if !(template.capacity > 0.0) || !template.capacity.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "template capacity must be positive, got {}",
            template.capacity
        )));
    }
    let cells = spec.cells_intersecting(domain)?;
    let cell_masses = masses(mu, &cells, quad)?;
    let c1 = DEFAULT_C1;
    let limit = c1 * spec.epsilon;
    let exponent = 1.0 / (d as f64 - 2.0);
    let mut holes = Vec::with_capacity(cells.len());
    let mut skipped = Vec::new();
    let mut max_ratio = 0.0f64;
    for (cell, &m) in cells.iter().zip(&cell_masses) {
        if m < 0.0 {
            return Err(Error::Evaluation(format!("negative cell mass {m} at {:?}", cell.index)));
        }
        let scale = if m == 0.0 { 0.0 } else { (m / template.capacity).powf(exponent) };
        let radius = scale * template.enclosing_radius;
        if radius >= limit {
            return Err(Error::Construction {
                cell: cell.index.clone(),
                radius,
                limit,
            });
        }
        if m == 0.0 {
            skipped.push(cell.index.clone());
        }
        max_ratio = max_ratio.max(radius / limit);
        let mut hole = Hole::new(cell.center(), radius, cell.index.clone())?;
        hole.template = Some(HoleTemplate {
            shape_id: template.shape_id.clone(),
            reference_capacity: template.capacity,
            scale,
        });
        holes.push(hole);
    }
    Ok(ConstructionReport {
        epsilon: spec.epsilon,
        dim: d,
        c1,
        holes,
        cell_masses,
        max_radius_ratio: max_ratio,
        skipped,
    })
}
