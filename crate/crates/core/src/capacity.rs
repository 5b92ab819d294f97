//! Newtonian capacity of balls, exact and by discrete Dirichlet-energy
//! minimisation, and the equilibrium potential of a ball.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::operator::{conjugate_gradient, decode, default_max_iter, StencilOperator};

/// Relative residual for the condenser solve.
const CONDENSER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMethod {
    Exact,
    Variational,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub value: f64,
    pub method: CapacityMethod,
    pub dim: usize,
    /// Half-width `L` of the truncation box.
    pub truncation: Option<f64>,
    pub grid_h: Option<f64>,
}

/// Area of the unit sphere in R^d, `2 pi^{d/2} / Gamma(d/2)`, through the
/// recurrence `S_d = 2 pi S_{d-2} / (d-2)` from `S_2 = 2 pi`, `S_3 = 4 pi`.
pub fn sphere_area(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("sphere area needs d >= 2, got {d}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut s, mut k) = if d.is_multiple_of(2) { (two_pi, 2) } else { (2.0 * two_pi, 3) };
    while k < d {
        k += 2;
        s *= two_pi / (k - 2) as f64;
    }
    Ok(s)
}

/// `(d-2) S_d`, the capacity of the unit ball.
pub fn unit_ball_capacity(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!("capacity requires d >= 3, got {d}")));
    }
    Ok((d as f64 - 2.0) * sphere_area(d)?)
}

/// `cap(B(x, a)) = (d-2) S_d a^{d-2}`.
pub fn capacity_ball(d: usize, a: f64) -> Result<CapacityResult> {
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be >= 0, got {a}")));
    }
    let value = unit_ball_capacity(d)? * a.powi(d as i32 - 2);
    Ok(CapacityResult {
        value,
        method: CapacityMethod::Exact,
        dim: d,
        truncation: None,
        grid_h: None,
    })
}

/// Radius of the ball whose capacity is `cap`.
pub fn ball_radius_for_capacity(d: usize, cap: f64) -> Result<f64> {
    Ok((cap / unit_ball_capacity(d)?).powf(1.0 / (d as f64 - 2.0)))
}

/// Equilibrium potential of `B(center, a)`: 1 on the ball, `(a/r)^{d-2}` outside.
pub fn potential_ball(x: &[f64], center: &[f64], a: f64, d: usize) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let r = x.iter().zip(center).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    if r <= a {
        1.0
    } else {
        (a / r).powi(d as i32 - 2)
    }
}

/// Discrete lattice over the box `[-L, L]^d` with spacing `h`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CondenserGrid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub half_width: f64,
}

impl CondenserGrid {
    pub fn new(dim: usize, half_width: f64, h: f64) -> Result<Self> {
        let intervals = 2.0 * half_width / h;
        let rounded = intervals.round();
        if (intervals - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation width 2L = {} is not a multiple of h = {h}",
                2.0 * half_width
            )));
        }
        Ok(Self {
            dim,
            n: rounded as usize - 1,
            h,
            half_width,
        })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn coords(&self, idx: usize, scratch: &mut [usize], x: &mut [f64]) {
        decode(idx, self.n, scratch);
        for (xk, &j) in x.iter_mut().zip(scratch.iter()) {
            *xk = -self.half_width + self.h * (j as f64 + 1.0);
        }
    }
}

/// Sum over all lattice edges of `(v_p - v_q)^2 h^{d-2}`, with `v = 0` on the
/// box boundary. Equals `sum |grad_h v|^2 h^d` with forward differences.
pub(crate) fn lattice_energy(v: &[f64], dim: usize, n: usize, h: f64) -> f64 {
    edge_pairing(v, v, dim, n, h)
}

/// `sum over edges (u_p - u_q)(g_p - g_q) h^{d-2}` on `n^d` interior nodes
/// with zero boundary trace. Summation order is fixed.
pub(crate) fn edge_pairing(u: &[f64], g: &[f64], dim: usize, n: usize, h: f64) -> f64 {
    let mut total = 0.0;
    let mut coords = vec![0usize; dim];
    for idx in 0..u.len() {
        decode(idx, n, &mut coords);
        let mut stride = 1usize;
        for k in (0..dim).rev() {
            let (du_lo, dg_lo) = if coords[k] == 0 { (u[idx], g[idx]) } else { (0.0, 0.0) };
            let (du_hi, dg_hi) = if coords[k] + 1 < n {
                (u[idx + stride] - u[idx], g[idx + stride] - g[idx])
            } else {
                (-u[idx], -g[idx])
            };
            total += du_lo * dg_lo + du_hi * dg_hi;
            stride *= n;
        }
    }
    total * h.powi(dim as i32 - 2)
}

/// Relative capacity of `B(0, a)` in the cube `(-L, L)^d`: minimum of the
/// discrete Dirichlet energy over grid fields equal to 1 on nodes inside the
/// closed ball and 0 on the cube boundary.
pub fn capacity_variational(d: usize, a: f64, half_width: f64, h: f64) -> Result<CapacityResult> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!("capacity requires d >= 3, got {d}")));
    }
    let result = |value| CapacityResult {
        value,
        method: CapacityMethod::Variational,
        dim: d,
        truncation: Some(half_width),
        grid_h: Some(h),
    };
    if a == 0.0 {
        return Ok(result(0.0));
    }
    if !(a > 0.0) || a >= half_width {
        return Err(Error::Geometry(format!("need 0 < a < L, got a = {a}, L = {half_width}")));
    }
    if !(h > 0.0) || h >= a / 2.0 {
        return Err(Error::Resolution(format!("grid spacing h = {h} must be below a/2 = {}", a / 2.0)));
    }
    let (v, _) = condenser_field(CondenserGrid::new(d, half_width, h)?, a)?;
    let grid = CondenserGrid::new(d, half_width, h)?;
    Ok(result(lattice_energy(&v, d, grid.n, h)))
}

/// Discrete condenser potential: 1 on masked ball nodes, harmonic elsewhere.
pub(crate) fn condenser_field(grid: CondenserGrid, a: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    let len = grid.len();
    let mut free = vec![true; len];
    let mut scratch = vec![0usize; grid.dim];
    let mut x = vec![0.0; grid.dim];
    for (idx, f) in free.iter_mut().enumerate() {
        grid.coords(idx, &mut scratch, &mut x);
        *f = x.iter().map(|v| v * v).sum::<f64>() > a * a;
    }
    let prescribed: Vec<f64> = free.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect();
    let op = StencilOperator::new(grid.dim, grid.n, grid.h).with_mask(free.clone());
    let rhs = op.boundary_lift(&prescribed);
    let (mut v, stats) = conjugate_gradient(&op, &rhs, CONDENSER_TOL, default_max_iter(grid.n, grid.dim))?;
    log::debug!(
        "condenser solve n={} iterations={} residual={:e}",
        grid.n,
        stats.iterations,
        stats.residual
    );
    for (vi, &f) in v.iter_mut().zip(&free) {
        if !f {
            *vi = 1.0;
        }
    }
    Ok((v, free))
}

/// Removes truncation bias from two relative capacities at `L1 < L2` using
/// `1/cap_L = 1/cap_inf - beta / L^{d-2}`, with `beta` eliminated between the
/// pair. Exact for concentric spheres.
pub fn capacity_extrapolate(first: &CapacityResult, second: &CapacityResult) -> Result<CapacityResult> {
    let (l1, l2) = match (first.truncation, second.truncation) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Extrapolation("both results need a truncation width".into())),
    };
    if first.dim != second.dim || first.dim < 3 {
        return Err(Error::Extrapolation("results must share a dimension d >= 3".into()));
    }
    if l2 < 2.0 * l1 {
        return Err(Error::Extrapolation(format!("need L2 >= 2 L1, got L1 = {l1}, L2 = {l2}")));
    }
    if second.value > first.value {
        return Err(Error::Extrapolation(format!(
            "capacity must decrease in L: cap(L1) = {}, cap(L2) = {}",
            first.value, second.value
        )));
    }
    let value = if first.value == second.value {
        first.value
    } else if first.value == 0.0 || second.value == 0.0 {
        return Err(Error::Extrapolation("zero capacity at one truncation only".into()));
    } else {
        let p = first.dim as i32 - 2;
        let (t1, t2) = (l1.powi(p), l2.powi(p));
        let inv = (t2 / second.value - t1 / first.value) / (t2 - t1);
        if !(inv > 0.0) {
            return Err(Error::Extrapolation(format!("non-positive limit 1/cap = {inv}")));
        }
        1.0 / inv
    };
    Ok(CapacityResult {
        value,
        method: CapacityMethod::Extrapolated,
        dim: first.dim,
        truncation: None,
        grid_h: second.grid_h,
    })
}

/// Analytic relative capacity of `B(0, a)` inside the sphere of radius `L`.
pub fn spherical_condenser(d: usize, a: f64, l: f64) -> Result<f64> {
    let p = d as i32 - 2;
    Ok(unit_ball_capacity(d)? / (a.powi(-p) - l.powi(-p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(3).unwrap(), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(4).unwrap(), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(2).unwrap(), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(5).unwrap(), 8.0 * PI * PI / 3.0, max_relative = 1e-15);
        assert!(sphere_area(1).is_err());
    }

    #[test]
    fn exact_ball_capacity() {
        assert_eq!(capacity_ball(3, 1.0).unwrap().value, 4.0 * PI);
        assert_eq!(capacity_ball(3, 0.0).unwrap().value, 0.0);
        assert_relative_eq!(capacity_ball(4, 1.0).unwrap().value, 4.0 * PI * PI, max_relative = 1e-15);
        assert!(matches!(capacity_ball(2, 1.0), Err(Error::InvalidParameter(_))));
        let mut last = -1.0;
        for k in 0..20 {
            let v = capacity_ball(3, k as f64 * 0.1).unwrap().value;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn ball_potential_values() {
        let c = [0.0, 0.0, 0.0];
        assert_eq!(potential_ball(&[2.0, 0.0, 0.0], &c, 1.0, 3), 0.5);
        assert_eq!(potential_ball(&[0.3, 0.2, 0.1], &c, 1.0, 3), 1.0);
        assert_eq!(potential_ball(&[1.0, 0.0, 0.0], &c, 1.0, 5), 1.0);
        assert_eq!(potential_ball(&[0.0, 0.0, 0.0], &c, 0.0, 3), 0.0);
        assert!(potential_ball(&[1e6, 0.0, 0.0], &c, 1.0, 3) < 1e-5);
    }

    #[test]
    fn extrapolation_exact_for_spheres() {
        let mk = |v, l| CapacityResult {
            value: v,
            method: CapacityMethod::Variational,
            dim: 3,
            truncation: Some(l),
            grid_h: None,
        };
        let c5 = spherical_condenser(3, 1.0, 5.0).unwrap();
        let c10 = spherical_condenser(3, 1.0, 10.0).unwrap();
        let ext = capacity_extrapolate(&mk(c5, 5.0), &mk(c10, 10.0)).unwrap();
        assert_relative_eq!(ext.value, 4.0 * PI, max_relative = 1e-13);
        assert_eq!(ext.method, CapacityMethod::Extrapolated);

        let h5 = spherical_condenser(3, 0.5, 5.0).unwrap();
        let h10 = spherical_condenser(3, 0.5, 10.0).unwrap();
        let ext = capacity_extrapolate(&mk(h5, 5.0), &mk(h10, 10.0)).unwrap();
        assert_relative_eq!(ext.value, 2.0 * PI, max_relative = 1e-13);

        let same = capacity_extrapolate(&mk(7.0, 5.0), &mk(7.0, 10.0)).unwrap();
        assert_eq!(same.value, 7.0);

        assert!(matches!(
            capacity_extrapolate(&mk(7.0, 5.0), &mk(7.5, 10.0)),
            Err(Error::Extrapolation(_))
        ));
        assert!(capacity_extrapolate(&mk(7.0, 5.0), &mk(6.0, 8.0)).is_err());
    }

    #[test]
    fn condenser_value_matches_analytic() {
        assert_relative_eq!(spherical_condenser(3, 1.0, 10.0).unwrap(), 4.0 * PI * 10.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn variational_input_validation() {
        assert_eq!(capacity_variational(3, 0.0, 2.0, 0.25).unwrap().value, 0.0);
        assert!(matches!(capacity_variational(3, 1.0, 4.0, 0.5), Err(Error::Resolution(_))));
        assert!(matches!(capacity_variational(3, 2.0, 2.0, 0.25), Err(Error::Geometry(_))));
    }

    #[test]
    fn variational_capacity_is_monotone_in_radius() {
        let small = capacity_variational(3, 0.5, 2.0, 0.125).unwrap().value;
        let large = capacity_variational(3, 0.75, 2.0, 0.125).unwrap().value;
        assert!(small < large);
    }

    #[test]
    fn discrete_minimiser_beats_sampled_condenser_potential() {
        // the truncated spherical condenser potential vanishes outside the
        // inscribed sphere, so it is an admissible competitor
        let (d, a, l, h) = (3, 0.5, 2.0, 0.125);
        let min = capacity_variational(d, a, l, h).unwrap().value;
        let grid = CondenserGrid::new(d, l, h).unwrap();
        let mut scratch = vec![0; d];
        let mut x = vec![0.0; d];
        let v: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.coords(i, &mut scratch, &mut x);
                let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                if r <= a {
                    1.0
                } else {
                    ((a / r - a / l) / (1.0 - a / l)).max(0.0)
                }
            })
            .collect();
        let competitor = lattice_energy(&v, d, grid.n, h);
        assert!(min <= competitor);
        // and the sampled analytic potential is within O(h) of the condenser value
        let exact = spherical_condenser(d, a, l).unwrap();
        assert!((competitor - exact).abs() / exact < 0.15, "{competitor} vs {exact}");
    }
}
