use phaseloc::channel::{observe, observe_noiseless};
use phaseloc::mle::{egs_estimate_in, refine_gd, CostField, EgsGrid, GdConfig};
use phaseloc::scenario::{default_scenario, Area, Pos, SeededRng};
use proptest::prelude::*;

#[test]
fn gradient_matches_central_differences() {
    let sc = default_scenario(3);
    let mut rng = SeededRng::new(21, 0);
    let obs = observe(&Pos::new(0.4, -2.2), &sc, &mut rng).unwrap();
    let field = CostField::new(&obs, &sc).unwrap();
    let h = 1e-7;
    for _ in 0..200 {
        let u = Pos::new(rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0));
        let (c, g) = field.cost_and_gradient(&u);
        assert!((c - field.cost(&u)).abs() <= 1e-12 * c.abs());
        let fx = (field.cost(&Pos::new(u.x + h, u.y)) - field.cost(&Pos::new(u.x - h, u.y))) / (2.0 * h);
        let fy = (field.cost(&Pos::new(u.x, u.y + h)) - field.cost(&Pos::new(u.x, u.y - h))) / (2.0 * h);
        let scale = g.norm().max(1e-3 * c.abs());
        assert!((g.x - fx).abs() < 1e-5 * scale, "x at {u:?}: {} vs {fx}", g.x);
        assert!((g.y - fy).abs() < 1e-5 * scale, "y at {u:?}: {} vs {fy}", g.y);
    }
}

#[test]
fn concentrated_cost_equals_cost_at_estimated_offset() {
    let sc = default_scenario(4);
    let obs = observe(&Pos::new(-3.0, 1.0), &sc, &mut SeededRng::new(1, 1)).unwrap();
    let field = CostField::new(&obs, &sc).unwrap();
    for (x, y) in [(0.0, 0.0), (-3.0, 1.0), (5.5, -7.25)] {
        let u = Pos::new(x, y);
        let (a, b) = (field.cost(&u), field.cost_with_phase_offset(&u));
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}

#[test]
fn grid_search_matches_exhaustive_argmin() {
    let sc = default_scenario(2);
    let truth = Pos::new(0.3, 0.35);
    let obs = observe(&truth, &sc, &mut SeededRng::new(2, 0)).unwrap();
    let field = CostField::new(&obs, &sc).unwrap();
    let area = Area::around(truth, 1.0, 0.8).unwrap();
    let k = 0.05;
    let gd = GdConfig::for_wavelength(sc.wavelength());
    let out = egs_estimate_in(&field, area, k, &gd).unwrap();

    let grid = EgsGrid::new(area, k * sc.wavelength()).unwrap();
    assert_eq!(out.eval_count, grid.count());
    let (mut best, mut best_cost) = (grid.point(0, 0), f64::INFINITY);
    for p in grid.points() {
        let c = field.cost(&p);
        if c < best_cost {
            best = p;
            best_cost = c;
        }
    }
    assert!((out.grid_best - best).norm() < 1e-12);
    assert!((out.grid_cost - best_cost).abs() <= 1e-12 * best_cost.abs());
    assert!(out.gd.cost <= out.grid_cost);
    assert!((out.estimate - truth).norm() < sc.wavelength() / 4.0);
}

#[test]
fn costs_at_matches_pointwise() {
    let sc = default_scenario(6);
    let obs = observe_noiseless(&Pos::new(2.0, 2.0), &sc).unwrap();
    let field = CostField::new(&obs, &sc).unwrap();
    let mut rng = SeededRng::new(3, 0);
    let pts: Vec<Pos> = (0..1500).map(|_| Pos::new(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0))).collect();
    for (p, c) in pts.iter().zip(field.costs_at(&pts)) {
        let exact = field.cost(p);
        assert!((c - exact).abs() <= 1e-12 * exact.abs().max(1e-30));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_descent_never_increases_cost(x in -9.0f64..9.0, y in -9.0f64..9.0, seed in 0u64..1000) {
        let sc = default_scenario(5);
        let obs = observe(&Pos::new(1.0, -1.0), &sc, &mut SeededRng::new(seed, 0)).unwrap();
        let field = CostField::new(&obs, &sc).unwrap();
        let start = Pos::new(x, y);
        let out = refine_gd(start, &field, &GdConfig::for_wavelength(sc.wavelength()));
        prop_assert!(out.cost <= field.cost(&start));
        prop_assert!((out.cost - field.cost(&out.point)).abs() <= 1e-12 * out.cost.abs());
    }

    #[test]
    fn noiseless_cost_is_minimal_at_the_truth(x in -9.0f64..9.0, y in -9.0f64..9.0, dx in -0.5f64..0.5, dy in -0.5f64..0.5) {
        let sc = default_scenario(7);
        let u = Pos::new(x, y);
        prop_assume!(sc.ap_positions().iter().all(|p| (p - u).norm() > 0.1));
        let field = CostField::new(&observe_noiseless(&u, &sc).unwrap(), &sc).unwrap();
        prop_assert!(field.cost(&u) <= field.cost(&Pos::new(x + dx, y + dy)) + 1e-12 * field.cost(&u).abs());
    }
}
