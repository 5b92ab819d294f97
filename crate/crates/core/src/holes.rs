//! Hole families: closed balls with their enclosing-ball data, separation
//! radii, the disjointness check, and the hole CSV format.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tiling::{for_each_multi_index, Cell};

/// Relative slack used for tangency comparisons of lattice-aligned balls.
const TOUCH_TOL: f64 = 1e-12;

/// Tag for holes built from a scaled reference shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleTemplate {
    pub shape_id: String,
    pub reference_capacity: f64,
    pub scale: f64,
}

/// Closed ball `B(center, radius)`; radius 0 is the empty hole.
#[derive(Debug, Clone, PartialEq)]
pub struct Hole {
    pub center: Vec<f64>,
    pub radius: f64,
    pub cell_index: Vec<i64>,
    pub template: Option<HoleTemplate>,
}

impl Hole {
    pub fn new(center: Vec<f64>, radius: f64, cell_index: Vec<i64>) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("hole radius must be >= 0, got {radius}")));
        }
        Ok(Self {
            center,
            radius,
            cell_index,
            template: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radius == 0.0
    }

    /// Diameter of a ball; equals the upper Jung bound `2a`.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn is_ball(&self) -> bool {
        self.template.as_ref().is_none_or(|t| t.shape_id == "ball")
    }

    /// Closed-ball membership; the empty hole contains nothing.
    pub fn contains(&self, x: &[f64]) -> bool {
        !self.is_empty() && dist2(x, &self.center) <= self.radius * self.radius
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Separation radii `R_i` of the disjoint balls `B(x_i, R_i)` around the holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationParams {
    pub epsilon: f64,
    pub c1: f64,
    pub radii: Vec<f64>,
}

impl SeparationParams {
    /// `R_i = c1 * eps` for every hole.
    pub fn uniform(epsilon: f64, c1: f64, count: usize) -> Result<Self> {
        if !(c1 > 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "separation needs c1 > 0 and eps > 0, got c1 = {c1}, eps = {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            c1,
            radii: vec![c1 * epsilon; count],
        })
    }

    /// `r_i = R_i - a_i`, the width of the cutoff annulus.
    pub fn gap(&self, i: usize, hole: &Hole) -> f64 {
        self.radii[i] - hole.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointnessReport {
    pub disjoint: bool,
    pub inside_cells: bool,
    pub overlapping_pairs: Vec<(usize, usize)>,
    pub escaping_holes: Vec<usize>,
}

impl DisjointnessReport {
    pub fn ok(&self) -> bool {
        self.disjoint && self.inside_cells
    }
}

/// Checks that the open balls `B(x_i, R_i)` are pairwise disjoint and that
/// `B(x_i, c1 eps)` lies inside the owning cell.
pub fn disjointness_check(holes: &[Hole], seps: &SeparationParams) -> Result<DisjointnessReport> {
    if holes.len() != seps.radii.len() {
        return Err(Error::Structural(format!(
            "{} holes but {} separation radii",
            holes.len(),
            seps.radii.len()
        )));
    }
    let index = SpatialIndex::new(holes, &seps.radii);
    let mut pairs = Vec::new();
    for (i, hole) in holes.iter().enumerate() {
        for j in index.candidates(&hole.center) {
            if j <= i {
                continue;
            }
            let reach = seps.radii[i] + seps.radii[j];
            if dist2(&hole.center, &holes[j].center).sqrt() < reach * (1.0 - TOUCH_TOL) {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    let inner = seps.c1 * seps.epsilon;
    let escaping: Vec<usize> = holes
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            let cell = Cell::new(h.cell_index.clone(), seps.epsilon);
            let c = cell.center();
            h.center
                .iter()
                .zip(&c)
                .any(|(x, c)| (x - c).abs() + inner > seps.epsilon * (1.0 + TOUCH_TOL))
        })
        .map(|(i, _)| i)
        .collect();
    Ok(DisjointnessReport {
        disjoint: pairs.is_empty(),
        inside_cells: escaping.is_empty(),
        overlapping_pairs: pairs,
        escaping_holes: escaping,
    })
}

/// Uniform bucket grid over ball centers for neighbour queries. A query at
/// `x` returns every ball whose support radius could reach `x`.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    bucket: f64,
    dim: usize,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialIndex {
    pub fn new(holes: &[Hole], support: &[f64]) -> Self {
        let max_r = support.iter().cloned().fold(0.0f64, f64::max);
        let bucket = if max_r > 0.0 { 2.0 * max_r } else { 1.0 };
        let dim = holes.first().map_or(0, Hole::dim);
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, h) in holes.iter().enumerate() {
            map.entry(bucket_key(&h.center, bucket)).or_default().push(i);
        }
        Self { bucket, dim, map }
    }

    /// Ball indices in the 3^d buckets around `x`, ascending.
    pub fn candidates(&self, x: &[f64]) -> Vec<usize> {
        let key = bucket_key(x, self.bucket);
        let ranges: Vec<Vec<i64>> = key.iter().map(|&k| vec![k - 1, k, k + 1]).collect();
        let mut out = Vec::new();
        if self.dim == 0 {
            return out;
        }
        for_each_multi_index(&ranges, |k| {
            if let Some(v) = self.map.get(k) {
                out.extend_from_slice(v);
            }
        });
        out.sort_unstable();
        out
    }
}

fn bucket_key(x: &[f64], bucket: f64) -> Vec<i64> {
    x.iter().map(|v| (v / bucket).floor() as i64).collect()
}

/// Writes holes as CSV: `i1..id, cx1..cxd, radius`, 17 significant digits.
pub fn write_holes_csv<W: Write>(mut out: W, holes: &[Hole]) -> Result<()> {
    let d = holes.first().map_or(0, Hole::dim);
    let mut header: Vec<String> = (1..=d).map(|k| format!("i{k}")).collect();
    header.extend((1..=d).map(|k| format!("cx{k}")));
    header.push("radius".into());
    writeln!(out, "{}", header.join(","))?;
    for h in holes {
        let mut row: Vec<String> = h.cell_index.iter().map(|i| i.to_string()).collect();
        row.extend(h.center.iter().map(|&v| fmt17(v)));
        row.push(fmt17(h.radius));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the CSV written by [`write_holes_csv`].
pub fn read_holes_csv<R: BufRead>(input: R) -> Result<Vec<Hole>> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Ok(Vec::new()),
    };
    let cols = header.split(',').count();
    if cols < 3 || (cols - 1) % 2 != 0 {
        return Err(Error::Structural(format!("bad hole CSV header `{header}`")));
    }
    let d = (cols - 1) / 2;
    let mut holes = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Structural(format!("hole CSV line {}: {} fields", ln + 2, fields.len())));
        }
        let parse_err = |e: &dyn std::fmt::Display| Error::Structural(format!("hole CSV line {}: {e}", ln + 2));
        let index = fields[..d]
            .iter()
            .map(|s| s.trim().parse::<i64>().map_err(|e| parse_err(&e)))
            .collect::<Result<Vec<_>>>()?;
        let center = fields[d..2 * d]
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(&e)))
            .collect::<Result<Vec<_>>>()?;
        let radius = fields[2 * d].trim().parse::<f64>().map_err(|e| parse_err(&e))?;
        holes.push(Hole::new(center, radius, index)?);
    }
    Ok(holes)
}

/// 17 significant digits, round-trips every f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
