//! Python bindings: capacities, hole construction, assumption checks, single
//! solves and full studies.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use homlab::capacity;
use homlab::diagnostics::assumption_quantities;
use homlab::harness::{run_study, StudyConfig};
use homlab::inverse::construct_holes;
use homlab::potential::expr::parse_potential;
use homlab::solver::{l2_distance, lump_measure, solve_limit, solve_perforated, SolveOptions};
use homlab::{AxisBox, Error, Grid, QuadratureSpec, TilingSpec};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// A constructed hole: closed ball `B(center, radius)` in lattice cell `cell_index`.
#[pyclass(name = "Hole", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyHole {
    #[pyo3(get)]
    cell_index: Vec<i64>,
    #[pyo3(get)]
    center: Vec<f64>,
    #[pyo3(get)]
    radius: f64,
}

#[pymethods]
impl PyHole {
    fn __repr__(&self) -> String {
        format!("Hole(cell_index={:?}, center={:?}, radius={:e})", self.cell_index, self.center, self.radius)
    }
}

/// Assumption quantities of one construction.
#[pyclass(name = "Assumptions", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyAssumptions {
    #[pyo3(get)]
    epsilon: f64,
    #[pyo3(get)]
    max_r: f64,
    #[pyo3(get)]
    sup_a_over_r: f64,
    #[pyo3(get)]
    sum_a2: f64,
    #[pyo3(get)]
    sup_a3: f64,
    #[pyo3(get)]
    sum_a4: f64,
    #[pyo3(get)]
    sum_a6: f64,
    #[pyo3(get)]
    diam_over_r: f64,
}

/// Result of one perforated/limit solve pair.
#[pyclass(name = "SolveResult", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySolveResult {
    #[pyo3(get)]
    holes: usize,
    #[pyo3(get)]
    l2_error: f64,
    #[pyo3(get)]
    l2_relative: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    u_eps: Vec<f64>,
    #[pyo3(get)]
    u_limit: Vec<f64>,
}

/// `(d-2) S_d a^{d-2}`.
#[pyfunction]
fn capacity_ball(d: usize, a: f64) -> PyResult<f64> {
    capacity::capacity_ball(d, a).map(|c| c.value).map_err(to_py)
}

/// Discrete capacity of the ball of radius `a` in the cube of half-width `half_width`.
#[pyfunction]
fn capacity_variational(d: usize, a: f64, half_width: f64, h: f64) -> PyResult<f64> {
    capacity::capacity_variational(d, a, half_width, h)
        .map(|c| c.value)
        .map_err(to_py)
}

#[pyfunction]
fn sphere_area(d: usize) -> PyResult<f64> {
    capacity::sphere_area(d).map_err(to_py)
}

fn build(potential: &str, dim: usize, epsilon: f64) -> Result<homlab::ConstructionReport, Error> {
    let dom = AxisBox::unit(dim);
    let mu = parse_potential(potential, &dom)?;
    construct_holes(&mu, &TilingSpec::new(dim, epsilon)?, &dom, &QuadratureSpec::default())
}

/// Capacity-matched holes for `potential` on the unit cube.
#[pyfunction]
fn construct(potential: &str, dim: usize, epsilon: f64) -> PyResult<Vec<PyHole>> {
    let rep = build(potential, dim, epsilon).map_err(to_py)?;
    Ok(rep
        .holes
        .into_iter()
        .map(|h| PyHole {
            cell_index: h.cell_index,
            center: h.center,
            radius: h.radius,
        })
        .collect())
}

#[pyfunction]
fn assumptions(potential: &str, dim: usize, epsilon: f64) -> PyResult<PyAssumptions> {
    let rep = build(potential, dim, epsilon).map_err(to_py)?;
    let a = assumption_quantities(&rep.holes, &rep.separation(), &rep.cells(), &AxisBox::unit(dim)).map_err(to_py)?;
    Ok(PyAssumptions {
        epsilon: a.epsilon,
        max_r: a.max_r,
        sup_a_over_r: a.sup_a_over_r,
        sum_a2: a.sum_a2,
        sup_a3: a.sup_a3,
        sum_a4: a.sum_a4,
        sum_a6: a.sum_a6,
        diam_over_r: a.diam_over_r,
    })
}

/// Solves `-Delta u_eps = c` in the perforated cube and `(-Delta + mu) u = c`
/// on the same grid of `n^d` interior nodes.
#[pyfunction]
#[pyo3(signature = (potential, dim, epsilon, n, source = 1.0, tol = 1e-8, override_tiny_holes = false))]
fn solve(
    potential: &str,
    dim: usize,
    epsilon: f64,
    n: usize,
    source: f64,
    tol: f64,
    override_tiny_holes: bool,
) -> PyResult<PySolveResult> {
    let run = || -> Result<PySolveResult, Error> {
        let dom = AxisBox::unit(dim);
        let mu = parse_potential(potential, &dom)?;
        let rep = construct_holes(&mu, &TilingSpec::new(dim, epsilon)?, &dom, &QuadratureSpec::default())?;
        let grid = Grid::new(dim, n)?;
        let f = grid.sample(|_| source);
        let opts = SolveOptions { tol, override_tiny_holes };
        let (u_eps, stats) = solve_perforated(&f, &rep.holes, &opts)?;
        let lumped = lump_measure(&mu, &grid, &QuadratureSpec { volume_order: 1, ..Default::default() })?;
        let (u, _) = solve_limit(&f, &lumped, tol)?;
        let l2_error = l2_distance(&u_eps, &u)?;
        let norm = u.l2_norm();
        Ok(PySolveResult {
            holes: rep.holes.iter().filter(|h| !h.is_empty()).count(),
            l2_error,
            l2_relative: if norm > 0.0 { l2_error / norm } else { l2_error },
            iterations: stats.iterations,
            u_eps: u_eps.values,
            u_limit: u.values,
        })
    };
    run().map_err(to_py)
}

/// Runs a study from config text; returns `(csv, summary_json)`.
#[pyfunction]
fn study(config: &str) -> PyResult<(String, String)> {
    let cfg = StudyConfig::parse(config).map_err(to_py)?;
    let report = run_study(&cfg).map_err(to_py)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(to_py)?;
    let summary = report.summary().map_err(to_py)?;
    let json = serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((String::from_utf8_lossy(&csv).into_owned(), json))
}

#[pymodule]
fn pyhomlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHole>()?;
    m.add_class::<PyAssumptions>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(capacity_ball, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_variational, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_area, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add_function(wrap_pyfunction!(assumptions, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(study, m)?)?;
    Ok(())
}
