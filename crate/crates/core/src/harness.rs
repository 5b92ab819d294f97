//! eps-sweeps: construction, diagnostics and both solves per eps, collected
//! into a self-contained report with registered trend checks.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{assumption_quantities, capacity_density, cell_field_distance, ldc_deviation, AssumptionReport};
use crate::error::{Error, Result};
use crate::holes::disjointness_check;
use crate::inverse::{construct_holes, ConstructionReport};
use crate::potential::{expr, CellField, Potential, QuadratureSpec};
use crate::solver::{
    corrector_field, l2_distance, lump_measure, sine_mode, solve_limit, solve_perforated, weak_witness, Grid, GridField,
    SolveOptions, SolveStats, CUTOFF_DESCRIPTION,
};
use crate::tiling::{AxisBox, TilingSpec};

/// Right-hand side `f` of both problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Constant(f64),
    /// `amplitude * prod_k sin(pi x_k)`.
    SineMode(f64),
}

impl Source {
    pub fn parse(text: &str) -> Result<Self> {
        match expr::parse(text)? {
            expr::Expr::Call(name, args) => {
                let v: Vec<f64> = args
                    .iter()
                    .map(|a| match a {
                        expr::Expr::Number(v) => Ok(*v),
                        _ => Err(Error::Config(format!("`{name}` takes one number"))),
                    })
                    .collect::<Result<_>>()?;
                if v.len() != 1 {
                    return Err(Error::Config(format!("`{name}` takes one number")));
                }
                match name.as_str() {
                    "constant" => Ok(Source::Constant(v[0])),
                    "sine_mode" => Ok(Source::SineMode(v[0])),
                    other => Err(Error::Config(format!("unknown source `{other}`"))),
                }
            }
            _ => Err(Error::Config("source must be `constant(c)` or `sine_mode(a)`".into())),
        }
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        match *self {
            Source::Constant(c) => grid.sample(move |_| c),
            Source::SineMode(a) => sine_mode(grid, &vec![1; grid.dim], a),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            Source::Constant(c) => c >= 0.0,
            Source::SineMode(a) => a >= 0.0,
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_panel() -> Vec<Vec<usize>> {
    Vec::new()
}

fn default_lump_order() -> usize {
    1
}

/// `[study]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub dim: usize,
    pub potential: String,
    pub source: String,
    pub epsilons: Vec<f64>,
    pub grid_n: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub override_tiny_holes: bool,
}

/// `[quadrature]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "QuadratureSection::default_volume")]
    pub volume_order: usize,
    #[serde(default = "QuadratureSection::default_surface")]
    pub surface_refine: usize,
    /// Gauss order used when lumping densities onto dual cells.
    #[serde(default = "default_lump_order")]
    pub lump_order: usize,
}

impl QuadratureSection {
    fn default_volume() -> usize {
        QuadratureSpec::default().volume_order
    }
    fn default_surface() -> usize {
        QuadratureSpec::default().surface_refine
    }
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            volume_order: Self::default_volume(),
            surface_refine: Self::default_surface(),
            lump_order: default_lump_order(),
        }
    }
}

/// `[panel]` section: witness test functions `prod sin(m_k pi x_k)`.
/// Empty means `(1,..,1)`, `(3,1,..,1)` and `(3,3,1,..,1)`; odd modes so
/// that configurations symmetric about the mid-planes do not pair to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSection {
    #[serde(default = "default_panel")]
    pub modes: Vec<Vec<usize>>,
}

impl Default for PanelSection {
    fn default() -> Self {
        Self { modes: default_panel() }
    }
}

/// `[output]` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub write_fields: bool,
}

/// Study configuration as read from a sectioned `key = value` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub panel: PanelSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn domain(&self) -> AxisBox {
        AxisBox::unit(self.study.dim)
    }

    pub fn potential(&self) -> Result<Potential> {
        expr::parse_potential(&self.study.potential, &self.domain())
    }

    pub fn source(&self) -> Result<Source> {
        Source::parse(&self.study.source)
    }

    pub fn quad(&self) -> QuadratureSpec {
        QuadratureSpec {
            volume_order: self.quadrature.volume_order,
            surface_refine: self.quadrature.surface_refine,
        }
    }

    pub fn lump_quad(&self) -> QuadratureSpec {
        QuadratureSpec {
            volume_order: self.quadrature.lump_order,
            surface_refine: self.quadrature.surface_refine,
        }
    }

    pub fn panel_modes(&self) -> Vec<Vec<usize>> {
        if !self.panel.modes.is_empty() {
            return self.panel.modes.clone();
        }
        let d = self.study.dim;
        (0..3)
            .map(|k| {
                let mut m = vec![1; d];
                m[..k].fill(3);
                m
            })
            .collect()
    }

    pub fn grid(&self, row: usize) -> Result<Grid> {
        Grid::new(self.study.dim, self.study.grid_n[row])
    }

    /// Finest grid, on which the limit problem is solved.
    pub fn fine_grid(&self) -> Result<Grid> {
        let n = self.study.grid_n.iter().copied().max().unwrap_or(1);
        Grid::new(self.study.dim, n)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.study;
        if s.dim < 3 {
            return Err(Error::Config(format!("dim must be >= 3, got {}", s.dim)));
        }
        if s.epsilons.is_empty() || s.epsilons.len() != s.grid_n.len() {
            return Err(Error::Config(format!(
                "{} epsilons but {} grid sizes",
                s.epsilons.len(),
                s.grid_n.len()
            )));
        }
        if s.epsilons.iter().any(|e| !(*e > 0.0)) || s.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("epsilons must be positive and strictly decreasing".into()));
        }
        if !(s.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        let fine = s.grid_n.iter().copied().max().unwrap_or(0);
        if let Some(n) = s.grid_n.iter().find(|&&n| n == 0 || (fine + 1) % (n + 1) != 0) {
            return Err(Error::Config(format!(
                "grid n = {n} does not nest in the finest grid n = {fine} ((n+1) must divide {})",
                fine + 1
            )));
        }
        if self.panel.modes.iter().any(|m| m.len() != s.dim || m.contains(&0)) {
            return Err(Error::Config("panel modes need d positive entries".into()));
        }
        self.potential()?;
        self.source()?;
        self.quad().validate()?;
        self.lump_quad().validate()?;
        Ok(())
    }
}

/// One eps of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub epsilon: f64,
    pub h: f64,
    pub grid_n: usize,
    pub cells: usize,
    pub holes: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    pub assumptions: AssumptionReport,
    pub disjoint: bool,
    pub ldc_deviation: f64,
    /// `H^{-1}` distance to the previous row's capacity density.
    pub ldc_cauchy: Option<f64>,
    pub corrector_norm: f64,
    pub l2_error: f64,
    pub l2_relative: f64,
    pub witnesses: Vec<f64>,
    pub solve: SolveStats,
}

/// Pass/fail modes for a report column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    /// Every consecutive value strictly smaller.
    StrictDecrease,
    /// Strict decrease, or every value exactly zero (already at the limit).
    DecreaseOrVanish,
    /// `prev / next >= factor` for every consecutive pair.
    MinRatio(f64),
    /// Log-log slope against eps within `tol` of `target`.
    Slope { target: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendResult {
    pub column: String,
    pub mode: TrendMode,
    pub pass: bool,
    /// `prev / next` per consecutive pair.
    pub ratios: Vec<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub potential: String,
    pub source: String,
    pub dim: usize,
    pub cutoff: String,
    pub rows: Vec<StudyRow>,
    /// Set when the study stopped early; rows hold everything before it.
    pub failure: Option<String>,
    /// Whether the failure was numerical rather than a validation error.
    pub failure_numerical: bool,
}

impl StudyReport {
    /// Column names usable with [`trend_check`].
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "epsilon",
            "h",
            "min_radius",
            "max_radius",
            "sup_a_over_r",
            "sum_a2",
            "sup_a3",
            "sum_a4",
            "sum_a6",
            "diam_over_r",
            "max_r",
            "ldc_deviation",
            "ldc_cauchy",
            "corrector_norm",
            "l2_error",
            "l2_relative",
            "iterations",
            "residual",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let panels = self.rows.first().map_or(0, |r| r.witnesses.len());
        cols.extend((0..panels).map(|k| format!("witness_{k}")));
        cols
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let get = |r: &StudyRow| -> Option<f64> {
            Some(match name {
                "epsilon" => r.epsilon,
                "h" => r.h,
                "min_radius" => r.min_radius,
                "max_radius" => r.max_radius,
                "sup_a_over_r" => r.assumptions.sup_a_over_r,
                "sum_a2" => r.assumptions.sum_a2,
                "sup_a3" => r.assumptions.sup_a3,
                "sum_a4" => r.assumptions.sum_a4,
                "sum_a6" => r.assumptions.sum_a6,
                "diam_over_r" => r.assumptions.diam_over_r,
                "max_r" => r.assumptions.max_r,
                "ldc_deviation" => r.ldc_deviation,
                "ldc_cauchy" => r.ldc_cauchy.unwrap_or(f64::NAN),
                "corrector_norm" => r.corrector_norm,
                "l2_error" => r.l2_error,
                "l2_relative" => r.l2_relative,
                "iterations" => r.solve.iterations as f64,
                "residual" => r.solve.residual,
                w if w.starts_with("witness_") => {
                    let k: usize = w["witness_".len()..].parse().ok()?;
                    r.witnesses.get(k)?.abs()
                }
                _ => return None,
            })
        };
        self.rows
            .iter()
            .map(|r| get(r).ok_or_else(|| Error::UnknownColumn(name.to_string())))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cols = self.columns();
        writeln!(out, "{}", cols.join(","))?;
        for i in 0..self.rows.len() {
            let mut fields = Vec::with_capacity(cols.len());
            for c in &cols {
                let v = self.column(c)?[i];
                fields.push(format!("{v:.16e}"));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Checks registered for every study; `l2_relative` is the headline.
    pub fn default_checks(&self) -> Vec<(String, TrendMode)> {
        let mut checks: Vec<(String, TrendMode)> = [
            "l2_relative",
            "ldc_deviation",
            "corrector_norm",
            "sup_a_over_r",
            "sum_a2",
            "sum_a4",
        ]
        .iter()
        .map(|c| (c.to_string(), TrendMode::DecreaseOrVanish))
        .collect();
        let panels = self.rows.first().map_or(0, |r| r.witnesses.len());
        checks.extend((0..panels).map(|k| (format!("witness_{k}"), TrendMode::DecreaseOrVanish)));
        checks
    }

    pub fn summary(&self) -> Result<StudySummary> {
        let checks = if self.rows.len() < 2 {
            Vec::new()
        } else {
            self.default_checks()
                .into_iter()
                .map(|(c, m)| trend_check(self, &c, m))
                .collect::<Result<Vec<_>>>()?
        };
        let pass = self.failure.is_none() && checks.iter().all(|c| c.pass);
        Ok(StudySummary {
            potential: self.potential.clone(),
            source: self.source.clone(),
            rows: self.rows.len(),
            failure: self.failure.clone(),
            checks,
            pass,
            cutoff: self.cutoff.clone(),
        })
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<StudySummary> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("study.csv"))?)?;
        let summary = self.summary()?;
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub potential: String,
    pub source: String,
    pub rows: usize,
    pub failure: Option<String>,
    pub checks: Vec<TrendResult>,
    pub pass: bool,
    pub cutoff: String,
}

/// Evaluates a trend on one report column.
pub fn trend_check(report: &StudyReport, column: &str, mode: TrendMode) -> Result<TrendResult> {
    let values = report.column(column)?;
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "trend on `{column}` needs >= 2 rows, got {}",
            values.len()
        )));
    }
    let ratios: Vec<f64> = values.windows(2).map(|w| w[0] / w[1]).collect();
    let strict = values.windows(2).all(|w| w[1] < w[0]);
    let mut slope = None;
    let pass = match mode {
        TrendMode::StrictDecrease => strict,
        TrendMode::DecreaseOrVanish => strict || values.iter().all(|&v| v == 0.0),
        TrendMode::MinRatio(f) => values.windows(2).all(|w| w[1] > 0.0 && w[0] / w[1] >= f),
        TrendMode::Slope { target, tol } => {
            let eps = report.column("epsilon")?;
            slope = crate::potential::loglog_slope(&eps, &values);
            slope.is_some_and(|s| (s - target).abs() <= tol)
        }
    };
    Ok(TrendResult {
        column: column.to_string(),
        mode,
        pass,
        ratios,
        slope,
    })
}

/// Runs the sweep. Stage errors end the sweep; the report keeps the rows
/// completed before the failure and names the failing stage.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mu = cfg.potential()?;
    let source = cfg.source()?;
    let domain = cfg.domain();
    let quad = cfg.quad();
    let lump_quad = cfg.lump_quad();
    let opts = SolveOptions {
        tol: cfg.study.tol,
        override_tiny_holes: cfg.study.override_tiny_holes,
    };
    let mut report = StudyReport {
        potential: mu.label(),
        source: cfg.study.source.clone(),
        dim: cfg.study.dim,
        cutoff: CUTOFF_DESCRIPTION.to_string(),
        rows: Vec::new(),
        failure: None,
        failure_numerical: false,
    };

    // Construction and resolution are checked for every eps before any
    // solve, so an infeasible row fails fast; earlier rows still run.
    let mut constructions = Vec::with_capacity(cfg.study.epsilons.len());
    let mut pre_failure = None;
    for (row, &eps) in cfg.study.epsilons.iter().enumerate() {
        match prepare_row(cfg, row, eps, &mu, &domain, &quad) {
            Ok(c) => constructions.push(c),
            Err(e) => {
                pre_failure = Some(e);
                break;
            }
        }
    }

    if !constructions.is_empty() {
        let fine = cfg.fine_grid()?;
        let limit = (|| -> Result<GridField> {
            let lumped = lump_measure(&mu, &fine, &lump_quad)?;
            let (u, stats) = solve_limit(&source.sample(&fine), &lumped, opts.tol)?;
            log::info!("limit solve n={} iterations={} residual={:e}", fine.n, stats.iterations, stats.residual);
            Ok(u)
        })();
        let limit = match limit {
            Ok(u) => u,
            Err(e) => {
                let e = e.at_stage("limit", 0.0);
                report.failure_numerical = e.is_numerical();
                report.failure = Some(e.to_string());
                return Ok(report);
            }
        };

        let mut previous: Option<CellField> = None;
        for (row, construction) in constructions.iter().enumerate() {
            let eps = construction.epsilon;
            match study_row(cfg, row, construction, &mu, &source, &domain, &lump_quad, &opts, &limit, previous.as_ref()) {
                Ok((r, density)) => {
                    log::info!(
                        "eps={} holes={} l2_rel={:.4e} ldc={:.4e} corrector={:.4e}",
                        eps,
                        r.holes,
                        r.l2_relative,
                        r.ldc_deviation,
                        r.corrector_norm
                    );
                    report.rows.push(r);
                    previous = Some(density);
                }
                Err(e) => {
                    report.failure_numerical = e.is_numerical();
                    report.failure = Some(e.to_string());
                    return Ok(report);
                }
            }
        }
    }
    if let Some(e) = pre_failure {
        report.failure_numerical = e.is_numerical();
        report.failure = Some(e.to_string());
    }
    Ok(report)
}

/// Builds the holes of one row and checks that the row grid resolves them.
fn prepare_row(
    cfg: &StudyConfig,
    row: usize,
    eps: f64,
    mu: &Potential,
    domain: &AxisBox,
    quad: &QuadratureSpec,
) -> Result<ConstructionReport> {
    let spec = TilingSpec::new(cfg.study.dim, eps).map_err(|e| e.at_stage("tiling", eps))?;
    let construction = construct_holes(mu, &spec, domain, quad).map_err(|e| e.at_stage("construct", eps))?;
    let h = cfg.grid(row)?.h();
    if let Some(a) = construction.min_nonempty_radius() {
        if a < 2.0 * h && !cfg.study.override_tiny_holes {
            return Err(Error::Resolution(format!(
                "smallest hole radius {a} is below 2h = {} (h = {h}); refine the grid or set override_tiny_holes",
                2.0 * h
            ))
            .at_stage("resolution", eps));
        }
    }
    Ok(construction)
}

#[allow(clippy::too_many_arguments)]
fn study_row(
    cfg: &StudyConfig,
    row: usize,
    construction: &ConstructionReport,
    mu: &Potential,
    source: &Source,
    domain: &AxisBox,
    lump_quad: &QuadratureSpec,
    opts: &SolveOptions,
    limit: &GridField,
    previous: Option<&CellField>,
) -> Result<(StudyRow, CellField)> {
    let grid = cfg.grid(row)?;
    let eps = construction.epsilon;
    let seps = construction.separation();
    let check = disjointness_check(&construction.holes, &seps).map_err(|e| e.at_stage("disjointness", eps))?;
    if !check.ok() {
        return Err(Error::Geometry(format!(
            "{} overlapping pairs, {} holes outside their cells",
            check.overlapping_pairs.len(),
            check.escaping_holes.len()
        ))
        .at_stage("disjointness", eps));
    }
    let cells = construction.cells();
    let assumptions = assumption_quantities(&construction.holes, &seps, &cells, domain)
        .map_err(|e| e.at_stage("assumptions", eps))?;
    let density = capacity_density(&construction.holes, eps).map_err(|e| e.at_stage("assumptions", eps))?;
    let ldc = ldc_deviation(&construction.holes, eps, mu, &grid, lump_quad).map_err(|e| e.at_stage("ldc", eps))?;
    let ldc_cauchy = previous
        .map(|p| cell_field_distance(p, &density, &grid))
        .transpose()
        .map_err(|e| e.at_stage("ldc", eps))?;
    let corrector = corrector_field(&construction.holes, &seps, &grid).map_err(|e| e.at_stage("corrector", eps))?;

    let f = source.sample(&grid);
    let (u_eps, stats) = solve_perforated(&f, &construction.holes, opts).map_err(|e| e.at_stage("perforated", eps))?;
    let u = limit.inject(&grid).map_err(|e| e.at_stage("restrict", eps))?;
    let l2_error = l2_distance(&u_eps, &u)?;
    let u_norm = u.l2_norm();
    let l2_relative = if u_norm > 0.0 { l2_error / u_norm } else { l2_error };
    let witnesses = cfg
        .panel_modes()
        .iter()
        .map(|m| weak_witness(&u_eps, &u, &sine_mode(&grid, m, 1.0)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("witness", eps))?;

    if cfg.output.write_fields {
        if let Some(dir) = &cfg.output.dir {
            fs::create_dir_all(dir)?;
            u_eps.write_binary(fs::File::create(dir.join(format!("u_eps_{row}.bin")))?)?;
            u.write_binary(fs::File::create(dir.join(format!("u_limit_{row}.bin")))?)?;
        }
    }

    let nonempty = construction.holes.iter().filter(|h| !h.is_empty()).count();
    Ok((
        StudyRow {
            epsilon: eps,
            h: grid.h(),
            grid_n: grid.n,
            cells: cells.len(),
            holes: nonempty,
            min_radius: construction.min_nonempty_radius().unwrap_or(0.0),
            max_radius: construction.max_radius(),
            assumptions,
            disjoint: check.disjoint,
            ldc_deviation: ldc,
            ldc_cauchy,
            corrector_norm: corrector.v_norm,
            l2_error,
            l2_relative,
            witnesses,
            solve: stats,
        },
        density,
    ))
}

/// Named checks of a summary, keyed by column.
pub fn checks_by_column(summary: &StudySummary) -> BTreeMap<String, bool> {
    summary.checks.iter().map(|c| (c.column.clone(), c.pass)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO_CFG: &str = r#"
[study]
dim = 3
potential = "constant(0)"
source = "constant(1)"
epsilons = [0.25, 0.125]
grid_n = [15, 15]
"#;

    fn report_with(values: &[f64]) -> StudyReport {
        let cfg = StudyConfig::parse(ZERO_CFG).unwrap();
        let mut rep = run_study(&cfg).unwrap();
        let template = rep.rows[0].clone();
        rep.rows = values
            .iter()
            .map(|&v| StudyRow {
                corrector_norm: v,
                ..template.clone()
            })
            .collect();
        rep
    }

    #[test]
    fn zero_potential_study_is_exact() {
        let cfg = StudyConfig::parse(ZERO_CFG).unwrap();
        let rep = run_study(&cfg).unwrap();
        assert!(rep.failure.is_none());
        assert_eq!(rep.rows.len(), 2);
        for r in &rep.rows {
            assert_eq!(r.holes, 0);
            assert_eq!(r.l2_error, 0.0);
            assert_eq!(r.ldc_deviation, 0.0);
            assert_eq!(r.corrector_norm, 0.0);
            assert!(r.witnesses.iter().all(|&w| w == 0.0));
        }
        assert!(rep.summary().unwrap().pass);
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = StudyConfig::parse(
            r#"
[study]
dim = 3
potential = "constant(10)"
source = "constant(1)"
epsilons = [0.25]
grid_n = [31]
override_tiny_holes = true
"#,
        )
        .unwrap();
        let a = run_study(&cfg).unwrap();
        assert!(a.failure.is_none(), "{:?}", a.failure);
        assert!(a.rows[0].l2_error > 0.0);
        let b = run_study(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn trend_modes() {
        let rep = report_with(&[3.0, 2.0, 1.0]);
        let t = trend_check(&rep, "corrector_norm", TrendMode::StrictDecrease).unwrap();
        assert!(t.pass);
        assert_eq!(t.ratios, vec![1.5, 2.0]);
        assert!(trend_check(&rep, "corrector_norm", TrendMode::MinRatio(1.5)).unwrap().pass);
        assert!(!trend_check(&rep, "corrector_norm", TrendMode::MinRatio(1.6)).unwrap().pass);

        let flat = report_with(&[2.0, 2.0]);
        assert!(!trend_check(&flat, "corrector_norm", TrendMode::StrictDecrease).unwrap().pass);
        assert!(!trend_check(&flat, "corrector_norm", TrendMode::DecreaseOrVanish).unwrap().pass);
        let zero = report_with(&[0.0, 0.0]);
        assert!(!trend_check(&zero, "corrector_norm", TrendMode::StrictDecrease).unwrap().pass);
        assert!(trend_check(&zero, "corrector_norm", TrendMode::DecreaseOrVanish).unwrap().pass);

        let single = report_with(&[1.0]);
        assert!(matches!(
            trend_check(&single, "corrector_norm", TrendMode::StrictDecrease),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            trend_check(&rep, "no_such_column", TrendMode::StrictDecrease),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad_nest = ZERO_CFG.replace("grid_n = [15, 15]", "grid_n = [14, 31]");
        assert!(matches!(StudyConfig::parse(&bad_nest), Err(Error::Config(_))));
        let increasing = ZERO_CFG.replace("[0.25, 0.125]", "[0.125, 0.25]");
        assert!(StudyConfig::parse(&increasing).is_err());
        let unknown = ZERO_CFG.replace("constant(0)", "blob(0)");
        assert!(StudyConfig::parse(&unknown).is_err());
        let extra = format!("{ZERO_CFG}\nbogus = 1\n");
        assert!(StudyConfig::parse(&extra).is_err());
    }

    #[test]
    fn unresolved_first_row_fails_before_solving() {
        let cfg = StudyConfig::parse(
            r#"
[study]
dim = 3
potential = "constant(20)"
source = "constant(1)"
epsilons = [0.25, 0.125]
grid_n = [31, 31]
"#,
        )
        .unwrap();
        let rep = run_study(&cfg).unwrap();
        assert!(rep.rows.is_empty());
        assert!(!rep.failure_numerical);
        let msg = rep.failure.unwrap();
        assert!(msg.contains("resolution") && msg.contains("0.25"), "{msg}");
    }
}
