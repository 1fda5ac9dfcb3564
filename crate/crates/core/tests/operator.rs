use approx::assert_relative_eq;
use intermap::transfer::{
    apply_operator, apply_operator_at, check_cone_c0, converged_density, power_iterate, ConeParams, DensityGrid,
    FnDensity, GridSpec, IterationOptions,
};
use intermap::{BranchPoint, Half, MapSpec, RandomSystem};

fn two(p_lsv: f64, kappa: f64) -> RandomSystem {
    RandomSystem::new(
        vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, kappa).unwrap()],
        vec![p_lsv, 1.0 - p_lsv],
    )
    .unwrap()
}

#[test]
fn pointwise_operator_on_constants() {
    let s = two(0.6, 0.2);
    let one = FnDensity { left: |_x: f64| 1.0, right: |_u: f64| 1.0 };
    // xi = 1 at x = 1, each left term divides by 1 + (alpha + 1); DR = 2 - K.
    let expected = 0.6 / 2.5 + 0.4 / 2.5 + 0.6 / 2.0 + 0.4 / 1.8;
    assert_relative_eq!(apply_operator_at(&s, &one, BranchPoint::right(1.0)).unwrap(), expected, epsilon = 1e-12);
    let near_zero = apply_operator_at(&s, &one, BranchPoint::left(1e-12)).unwrap();
    assert_relative_eq!(near_zero, 1.0 + 0.6 / 2.0, epsilon = 1e-5);
    let zero = FnDensity { left: |_x: f64| 0.0, right: |_u: f64| 0.0 };
    assert_eq!(apply_operator_at(&s, &zero, BranchPoint::left(0.3)).unwrap(), 0.0);
}

#[test]
fn one_step_from_constant_is_decreasing() {
    let grid = GridSpec::with_nodes(1024).build().unwrap();
    let f = apply_operator(&two(0.6, 0.2), &DensityGrid::constant(grid, 1.0)).unwrap();
    assert!(f.left_values().windows(2).all(|w| w[1] <= w[0]));
    assert!(f.right_values().windows(2).all(|w| w[1] <= w[0]));
    assert_relative_eq!(f.mass(), 1.0, epsilon = 1e-12);
}

#[test]
fn hundred_steps_from_constant() {
    let grid = GridSpec::default().build().unwrap();
    let a = power_iterate(&two(0.6, 0.2), grid.clone(), IterationOptions::new(100)).unwrap();
    assert_eq!(a.residuals.len(), 100);
    // Frozen at 2048 nodes per half.
    assert_relative_eq!(a.residuals[99], 1.4294e-3, max_relative = 1e-3);
    assert!(a.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(check_cone_c0(&a.density).pass);
    assert!(a.density.pole_slope(Half::Left) < -0.3);
    assert!(a.density.pole_slope(Half::Right) < -0.3);

    let b = power_iterate(&two(0.6, 0.8), grid, IterationOptions::new(100)).unwrap();
    assert!(b.density.pole_slope(Half::Right).abs() < 0.05);
    assert!(b.density.max(Half::Right) < 2.0);
    assert!(b.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn converged_densities_respect_the_pole_bounds() {
    let grid = GridSpec::default().build().unwrap();
    let sa = two(0.6, 0.2);
    let a = converged_density(&sa, grid.clone(), 1_000_000, 1e-10).unwrap();
    assert!(a.converged);
    let p = ConeParams::new(&sa, None).unwrap();
    let slope = a.density.pole_slope(Half::Left);
    assert!(slope >= -p.t1 - 0.1 && slope <= 0.0, "{slope} vs t1 = {}", p.t1);
    // The density jumps up across 1/2.
    assert!(a.density.right_values()[0] > *a.density.left_values().last().unwrap());
    let next = apply_operator(&sa, &a.density).unwrap();
    assert!(next.l1_distance(&a.density).unwrap() < 1e-9);

    let sb = two(0.6, 0.8);
    let b = converged_density(&sb, grid, 1_000_000, 1e-10).unwrap();
    let slope = b.density.pole_slope(Half::Left);
    assert!((-0.6..=0.0).contains(&slope), "{slope}");
}

#[test]
fn cesaro_average_is_a_density() {
    let grid = GridSpec::with_nodes(512).build().unwrap();
    let options = IterationOptions { iterations: 50, tolerance: 0.0, cesaro: true };
    let r = power_iterate(&two(0.6, 0.2), grid, options).unwrap();
    assert_relative_eq!(r.density.mass(), 1.0, epsilon = 1e-12);
    assert!(check_cone_c0(&r.density).pass);
}
