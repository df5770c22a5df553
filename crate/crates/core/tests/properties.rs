mod common;

use proptest::prelude::*;

use common::{bisect_resolvent, dot, setup};
use quench_control::grid::{laplacian_neumann, Field, Grid, Trajectory};
use quench_control::io::{trajectories_to_csv, trajectory_from_csv};
use quench_control::nonlocal::{Kernel, NonlocalOperator};
use quench_control::optimize::project_uad;
use quench_control::physics::{resolvent_obstacle, resolvent_quench, Level};

const SMALL: &str = "cells_x = 16\nsteps = 20\n";

fn field(grid: Grid) -> impl Strategy<Value = Field> {
    prop::collection::vec(-2.0..2.0f64, grid.len()).prop_map(move |v| Field::from_values(grid, v).unwrap())
}

fn trajectory(scale: f64) -> impl Strategy<Value = Trajectory> {
    let s = setup(SMALL);
    let (grid, time) = (s.grid(), s.time());
    prop::collection::vec(-scale..scale, grid.len() * time.nodes()).prop_map(move |v| {
        let snaps = v
            .chunks(grid.len())
            .map(|c| Field::from_values(grid, c.to_vec()).unwrap())
            .collect();
        Trajectory::new(time, snaps).unwrap()
    })
}

proptest! {
    #[test]
    fn quench_resolvent_is_monotone_and_nonexpansive(
        b1 in -3.0..4.0f64, b2 in -3.0..4.0f64, s in 1e-6..10.0f64,
    ) {
        let (r1, r2) = (resolvent_quench(b1, s).unwrap(), resolvent_quench(b2, s).unwrap());
        prop_assert!(r1 > 0.0 && r1 < 1.0);
        prop_assert!((r1 - r2) * (b1 - b2) >= 0.0);
        prop_assert!((r1 - r2).abs() <= (b1 - b2).abs() * (1.0 + 1e-12) + 1e-15);
        prop_assert!((r1 - bisect_resolvent(b1, s)).abs() <= 1e-10);
    }

    #[test]
    fn obstacle_resolvent_is_a_clip(b in -3.0..4.0f64, tau in 1e-4..1.0f64) {
        let (r, xi) = resolvent_obstacle(b, tau);
        prop_assert_eq!(r, b.clamp(0.0, 1.0));
        prop_assert!(common::sign_ok(r, xi));
        prop_assert!((r + tau * xi - b).abs() <= 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(u in trajectory(5.0)) {
        let s = setup(SMALL);
        let a = &s.problem.admissible;
        let once = project_uad(&u, a).unwrap();
        prop_assert!(a.contains(&once));
        let twice = project_uad(&once, a).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(
        f in field(Grid::new_2d(1.0, 6, 0.7, 5).unwrap()),
        g in field(Grid::new_2d(1.0, 6, 0.7, 5).unwrap()),
    ) {
        let lf = laplacian_neumann(&f).unwrap();
        let lg = laplacian_neumann(&g).unwrap();
        let scale = 1.0 + dot(&lf, &lf).sqrt() * dot(&g, &g).sqrt();
        prop_assert!((dot(&lf, &g) - dot(&f, &lg)).abs() <= 1e-12 * scale);
        prop_assert!(dot(&lf, &f) <= 1e-12 * scale);
    }

    #[test]
    fn nonlocal_derivative_adjoint_identity(
        base in field(Grid::new_1d(1.0, 24).unwrap()),
        v in field(Grid::new_1d(1.0, 24).unwrap()),
        w in field(Grid::new_1d(1.0, 24).unwrap()),
    ) {
        let op = NonlocalOperator::new(Kernel::Gaussian { amplitude: 1.0, width: 0.2 }, *base.grid()).unwrap();
        let lhs = dot(&op.apply_db_adjoint(&base, &v).unwrap(), &w);
        let rhs = dot(&v, &op.apply_db(&base, &w).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(u in trajectory(1e3)) {
        let text = trajectories_to_csv(&[("u", &u)]).unwrap();
        let back = trajectory_from_csv(&text, Some("u"), *u.grid(), *u.time()).unwrap();
        prop_assert_eq!(back, u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn costs_are_nonnegative_and_adapted_dominates(
        u in trajectory(2.0).prop_map(|u| u.map(|v| v.abs())),
        anchor in trajectory(2.0).prop_map(|u| u.map(|v| v.abs())),
        alpha in prop::sample::select(vec![1e-1, 1e-3, 0.0]),
    ) {
        let s = setup(SMALL);
        let level = Level::from_alpha(alpha, 1.0).unwrap();
        let (plain, _) = s.problem.cost(&u, level, None).unwrap();
        let (adapted, _) = s.problem.cost(&u, level, Some(&anchor)).unwrap();
        prop_assert!(plain >= 0.0);
        prop_assert!(adapted >= plain);
    }
}
