use std::io::BufReader;

use approx::assert_relative_eq;
use proptest::prelude::*;

use homlab::capacity::{capacity_ball, capacity_extrapolate, capacity_variational, CapacityMethod, CapacityResult};
use homlab::diagnostics::{assumption_quantities, capacity_density, hminus1_norm};
use homlab::holes::{disjointness_check, read_holes_csv, write_holes_csv};
use homlab::inverse::construct_holes;
use homlab::potential::cell_average_field;
use homlab::solver::{solve_limit, solve_poisson, LumpedMeasure};
use homlab::{AxisBox, Grid, GridField, Potential, QuadratureSpec, TilingSpec};

fn condenser(d: usize, a: f64, l: f64) -> CapacityResult {
    // concentric spheres, written out independently of the library
    let s_d = match d {
        3 => 4.0 * std::f64::consts::PI,
        4 => 2.0 * std::f64::consts::PI.powi(2),
        _ => unreachable!(),
    };
    let p = d as i32 - 2;
    CapacityResult {
        value: p as f64 * s_d / (a.powi(-p) - l.powi(-p)),
        method: CapacityMethod::Variational,
        dim: d,
        truncation: Some(l),
        grid_h: None,
    }
}

#[test]
fn extrapolation_is_exact_for_spheres() {
    for (a, target) in [(1.0, 4.0 * std::f64::consts::PI), (0.5, 2.0 * std::f64::consts::PI)] {
        let ext = capacity_extrapolate(&condenser(3, a, 5.0), &condenser(3, a, 10.0)).unwrap();
        assert_relative_eq!(ext.value, target, max_relative = 1e-13);
    }
    let ext = capacity_extrapolate(&condenser(4, 1.0, 3.0), &condenser(4, 1.0, 6.0)).unwrap();
    assert_relative_eq!(ext.value, capacity_ball(4, 1.0).unwrap().value, max_relative = 1e-13);
}

#[test]
fn variational_capacity_is_monotone_in_radius() {
    let values: Vec<f64> = [0.5, 0.75, 1.0]
        .iter()
        .map(|&a| capacity_variational(3, a, 2.0, 0.125).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    // and decreasing in the truncation
    let l2 = capacity_variational(3, 0.5, 2.0, 0.125).unwrap().value;
    let l3 = capacity_variational(3, 0.5, 3.0, 0.125).unwrap().value;
    assert!(l3 < l2);
}

#[test]
fn poisson_solution_is_nonnegative_and_below_limit_free_solution() {
    // maximum principle: a nonnegative shift only lowers the solution
    let grid = Grid::new(3, 15).unwrap();
    let f = grid.sample(|_| 1.0);
    let (u0, _) = solve_poisson(&f, 1e-12).unwrap();
    let shift = LumpedMeasure {
        grid,
        weights: vec![25.0; grid.len()],
    };
    let (u1, _) = solve_limit(&f, &shift, 1e-12).unwrap();
    for (a, b) in u0.values.iter().zip(&u1.values) {
        assert!(*b > 0.0 && *b <= *a + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constructed_holes_are_disjoint_and_match_masses(
        c in 0.0f64..6.0,
        amp in 0.0f64..6.0,
        z0 in 0.05f64..0.95,
        w in 0.0f64..3.0,
        eps_pow in 2i32..5,
    ) {
        let dom = AxisBox::unit(3);
        let mu = Potential::sum(vec![
            Potential::constant(c, &dom).unwrap(),
            Potential::sine_density(amp, &dom).unwrap(),
            Potential::plane(z0, w, &dom).unwrap(),
        ]);
        let eps = 0.5f64.powi(eps_pow);
        let q = QuadratureSpec::default();
        let spec = TilingSpec::new(3, eps).unwrap();
        let rep = construct_holes(&mu, &spec, &dom, &q).unwrap();
        let check = disjointness_check(&rep.holes, &rep.separation()).unwrap();
        prop_assert!(check.ok());
        let density = capacity_density(&rep.holes, eps).unwrap();
        let average = cell_average_field(&mu, &spec, &dom, &q).unwrap();
        for ((_, a), (_, b)) in density.entries.iter().zip(&average.entries) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE));
        }
        prop_assert!(rep.holes.iter().all(|h| h.radius < eps));
    }

    #[test]
    fn hole_csv_round_trip_preserves_assumptions(c in 0.1f64..10.0, eps_pow in 2i32..4) {
        let dom = AxisBox::unit(3);
        let mu = Potential::constant(c, &dom).unwrap();
        let eps = 0.5f64.powi(eps_pow);
        let rep = construct_holes(&mu, &TilingSpec::new(3, eps).unwrap(), &dom, &QuadratureSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_holes_csv(&mut buf, &rep.holes).unwrap();
        let back = read_holes_csv(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(&back, &rep.holes);
        let a = assumption_quantities(&rep.holes, &rep.separation(), &rep.cells(), &dom).unwrap();
        let b = assumption_quantities(&back, &rep.separation(), &rep.cells(), &dom).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hminus1_norm_is_homogeneous_and_subadditive(s in -4.0f64..4.0, seed in 0u64..1000) {
        let grid = Grid::new(3, 7).unwrap();
        let mk = |k: u64| {
            let values = (0..grid.len())
                .map(|i| (((i as u64 + 1) * (seed + k + 7) * 2654435761) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            GridField::new(grid, values).unwrap()
        };
        let (a, b) = (mk(0), mk(1));
        let na = hminus1_norm(&a).unwrap();
        let nb = hminus1_norm(&b).unwrap();
        let sum = GridField::new(grid, a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect()).unwrap();
        prop_assert!(hminus1_norm(&sum).unwrap() <= na + nb + 1e-9);
        let scaled = hminus1_norm(&a.scaled(s)).unwrap();
        prop_assert!((scaled - s.abs() * na).abs() <= 1e-8 * na.max(1.0));
    }
}
