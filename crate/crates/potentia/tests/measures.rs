//! Total variation, ball masses, Riesz potentials and energies, pinned
//! against closed-form kernels, radial integrals and discretization
//! cross-checks.

use num_complex::Complex;
use potentia::grid::Grid;
use potentia::measures::{
    ball_mass, energy_norms, potential_of_measure, potential_of_positive, riesz_gamma,
    total_variation, vanishing_diagnostic, GrowthVerdict, Measure, PositiveMeasure,
};
use potentia::weights::Weight;

type C = Complex<f64>;

fn c(re: f64, im: f64) -> C {
    Complex::new(re, im)
}

fn unit_atom(dim: usize) -> PositiveMeasure<f64> {
    PositiveMeasure::atomic(vec![vec![0.0; dim]], vec![1.0]).unwrap()
}

#[test]
fn total_variation_takes_euclidean_norms() {
    let mu = Measure::atomic(vec![vec![0.5, -0.5]], vec![vec![c(3.0, 0.0), c(0.0, 4.0)]]).unwrap();
    let nu = total_variation(&mu);
    let (points, masses) = nu.atoms().unwrap();
    assert_eq!(points.len(), 1);
    assert!((masses[0] - 5.0).abs() <= 1e-15);
}

#[test]
fn total_variation_of_zero_is_zero() {
    let mu = Measure::atomic(vec![vec![0.0, 0.0]], vec![vec![c(0.0, 0.0)]]).unwrap();
    let nu = total_variation(&mu);
    assert_eq!(nu.total_mass(), 0.0);
}

#[test]
fn opposite_atoms_do_not_cancel_in_total_variation() {
    let mu = Measure::atomic(
        vec![vec![0.25, 0.0], vec![-0.25, 0.0]],
        vec![vec![c(2.0, 1.0)], vec![c(-2.0, -1.0)]],
    )
    .unwrap();
    let nu = total_variation(&mu);
    let (_, masses) = nu.atoms().unwrap();
    assert!((masses[0] - masses[1]).abs() <= 1e-15);
    assert!(masses[0] > 0.0);

    // dense-grid cross-check: discretize the dipole and compare total mass
    let grid = Grid::<f64>::new(2, 32, 1.0).unwrap();
    let mut samples = vec![c(0.0, 0.0); grid.node_count()];
    let vol = grid.cell_volume();
    for (p, v) in [([0.25, 0.0], c(2.0, 1.0)), ([-0.25, 0.0], c(-2.0, -1.0))] {
        let node = grid.nearest_node(&p).unwrap();
        samples[node] += v / vol;
    }
    let dense = total_variation(&Measure::density(grid, 1, samples).unwrap());
    assert!((dense.total_mass() - nu.total_mass()).abs() <= 1e-12 * nu.total_mass());
}

#[test]
fn ball_mass_follows_the_open_ball_convention() {
    let nu = unit_atom(2);
    assert_eq!(ball_mass(&nu, &[0.0, 0.0], 1.0), 1.0);
    assert_eq!(ball_mass(&nu, &[0.0, 0.0], 0.0), 0.0);

    // atom exactly on the boundary is excluded; it enters for any larger r
    let off = PositiveMeasure::atomic(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
    assert_eq!(ball_mass(&off, &[0.0, 0.0], 1.0), 0.0);
    assert_eq!(ball_mass(&off, &[0.0, 0.0], 1.0 + 1e-12), 1.0);
}

#[test]
fn ball_mass_is_monotone_in_radius() {
    let nu = PositiveMeasure::atomic(
        vec![vec![0.1, 0.0], vec![0.5, 0.5], vec![-0.7, 0.2]],
        vec![1.0, 2.0, 3.0],
    )
    .unwrap();
    let mut prev = 0.0;
    for k in 1..40 {
        let r = 0.05 * k as f64;
        let m = ball_mass(&nu, &[0.0, 0.0], r);
        assert!(m >= prev);
        prev = m;
    }
}

#[test]
fn ball_mass_is_translation_invariant_for_atoms() {
    // dyadic coordinates keep the shifted arithmetic exact
    let nu = PositiveMeasure::atomic(vec![vec![0.25, -0.5]], vec![2.0]).unwrap();
    let shifted = PositiveMeasure::atomic(vec![vec![8.25, 15.5]], vec![2.0]).unwrap();
    for r in [0.1, 0.5, 1.0, 2.0] {
        assert_eq!(
            ball_mass(&nu, &[0.5, 0.25], r),
            ball_mass(&shifted, &[8.5, 16.25], r)
        );
    }
}

#[test]
fn inverse_distance_density_has_linear_ball_mass() {
    // nu = |x|^{-1} dx on the plane: nu(B(0,r)) = 2 pi r
    let grid = Grid::<f64>::new(2, 128, 1.0).unwrap();
    let h = grid.spacing();
    let samples: Vec<f64> = (0..grid.node_count())
        .map(|node| {
            let x = grid.node(node);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r == 0.0 {
                // inscribed-ball average of |x|^{-1}: N (h/2)^{-1} / (N - 1)
                4.0 / h
            } else {
                1.0 / r
            }
        })
        .collect();
    let nu = PositiveMeasure::density(grid, samples).unwrap();
    for r in [8.0 * h, 16.0 * h, 0.5] {
        let got = ball_mass(&nu, &[0.0, 0.0], r);
        let expect = std::f64::consts::TAU * r;
        assert!(
            (got - expect).abs() <= 0.02 * expect,
            "r = {r}: {got} vs {expect}"
        );
    }
}

#[test]
fn riesz_normalization_matches_closed_forms() {
    // N=2, m=1: pi * 2 * Gamma(1/2) / Gamma(1/2) = 2 pi
    let g21 = riesz_gamma::<f64>(2, 1.0).unwrap();
    assert!((g21 - std::f64::consts::TAU).abs() <= 1e-12);
    // N=3, m=1: pi^{3/2} * 2 * Gamma(1/2) / Gamma(1) = 2 pi^2
    let g31 = riesz_gamma::<f64>(3, 1.0).unwrap();
    assert!((g31 - 2.0 * std::f64::consts::PI.powi(2)).abs() <= 1e-12);
    assert!(riesz_gamma::<f64>(2, 2.0).is_err());
    assert!(riesz_gamma::<f64>(2, 0.0).is_err());
}

#[test]
fn point_mass_potential_matches_the_kernel() {
    let nu = unit_atom(2);
    let got = potential_of_positive(&nu, 1.0, &[2.0, 0.0]).unwrap();
    let expect = 1.0 / (4.0 * std::f64::consts::PI);
    assert!((got - expect).abs() <= 1e-15);
}

#[test]
fn symmetric_pair_doubles_the_potential_at_the_center() {
    let pair = PositiveMeasure::atomic(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, 1.0]).unwrap();
    let single = PositiveMeasure::atomic(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
    let got: f64 = potential_of_positive(&pair, 1.0, &[0.0, 0.0]).unwrap();
    let one: f64 = potential_of_positive(&single, 1.0, &[0.0, 0.0]).unwrap();
    assert!((got - 2.0 * one).abs() <= 1e-15 * got);
}

#[test]
fn potential_refuses_atom_locations() {
    let nu = unit_atom(2);
    assert!(matches!(
        potential_of_positive(&nu, 1.0, &[0.0, 0.0]),
        Err(potentia::Error::SingularEvaluation(_))
    ));
}

#[test]
fn point_mass_potential_obeys_the_scaling_law() {
    let nu = unit_atom(2);
    let m = 1.0;
    for s in [2.0, 4.0, 0.5] {
        let base = potential_of_positive(&nu, m, &[0.3, 0.4]).unwrap();
        let scaled = potential_of_positive(&nu, m, &[0.3 * s, 0.4 * s]).unwrap();
        let factor = s.powf(m - 2.0);
        assert!((scaled - factor * base).abs() <= 1e-14 * base);
    }
}

#[test]
fn potential_is_linear_in_the_measure() {
    let mu1 = Measure::atomic(vec![vec![0.5, 0.25]], vec![vec![c(1.0, 2.0)]]).unwrap();
    let mu2 = Measure::atomic(vec![vec![-0.75, 0.5]], vec![vec![c(-0.5, 1.0)]]).unwrap();
    let (a, b) = (3.0, -2.0);
    let combined = Measure::atomic(
        vec![vec![0.5, 0.25], vec![-0.75, 0.5]],
        vec![vec![c(1.0, 2.0) * a], vec![c(-0.5, 1.0) * b]],
    )
    .unwrap();
    let x = [2.0, -1.0];
    let p1 = potential_of_measure(&mu1, 1.0, &x).unwrap()[0];
    let p2 = potential_of_measure(&mu2, 1.0, &x).unwrap()[0];
    let pc = potential_of_measure(&combined, 1.0, &x).unwrap()[0];
    assert!((pc - (p1 * a + p2 * b)).norm() <= 1e-14 * pc.norm());
}

#[test]
fn density_potential_tracks_its_atomic_discretization() {
    // smooth blob supported well inside the box
    let grid = Grid::<f64>::new(2, 64, 1.0).unwrap();
    let vol = grid.cell_volume();
    let mut samples = vec![c(0.0, 0.0); grid.node_count()];
    let mut points = Vec::new();
    let mut values = Vec::new();
    for node in 0..grid.node_count() {
        let x = grid.node(node);
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 < 0.25 {
            let v = (-8.0 * r2).exp();
            samples[node] = c(v, 0.0);
            points.push(vec![x[0], x[1]]);
            values.push(vec![c(v * vol, 0.0)]);
        }
    }
    let density = Measure::density(grid, 1, samples).unwrap();
    let atomic = Measure::atomic(points, values).unwrap();
    for x in [[0.9, 0.0], [0.0, -0.8], [0.7, 0.7]] {
        let pd = potential_of_measure(&density, 1.0, &x).unwrap()[0];
        let pa = potential_of_measure(&atomic, 1.0, &x).unwrap()[0];
        assert!(
            (pd - pa).norm() <= 0.01 * pa.norm(),
            "at {x:?}: {pd} vs {pa}"
        );
    }
}

#[test]
fn zero_measure_has_zero_energies() {
    let mu = Measure::atomic(vec![vec![0.0, 0.0]], vec![vec![c(0.0, 0.0)]]).unwrap();
    let grid = Grid::<f64>::new(2, 32, 2.0).unwrap();
    let w = Weight::<f64>::power(2, 0.0).unwrap();
    let report = energy_norms(&mu, 1.0, 2.0, &w, &grid, 1.5).unwrap();
    assert_eq!(report.strong, 0.0);
    assert_eq!(report.weak, 0.0);
}

#[test]
fn supercritical_exponent_gives_stabilizing_truncations() {
    // p = 3 > N/(N-m) = 2: the outer integrand decays like r^{-2}
    let mu = Measure::from_positive(&unit_atom(2));
    let w = Weight::<f64>::power(2, 0.0).unwrap();
    let grid = Grid::<f64>::new(2, 128, 4.0).unwrap();
    let p = 3.0;
    let e = |radius: f64| {
        energy_norms(&mu, 1.0, p, &w, &grid, radius).unwrap().strong.powf(p)
    };
    let (e1, e2, e4) = (e(1.0), e(2.0), e(4.0));
    let inc1 = e2 - e1;
    let inc2 = e4 - e2;
    assert!(inc1 > 0.0 && inc2 > 0.0);
    assert!(inc2 <= 0.65 * inc1, "increments {inc1} then {inc2}");
}

#[test]
fn critical_exponent_gives_logarithmic_growth() {
    // p = 2 = N/(N-m): each doubling adds a constant to the energy's p-th power
    let mu = Measure::from_positive(&unit_atom(2));
    let w = Weight::<f64>::power(2, 0.0).unwrap();
    let grid = Grid::<f64>::new(2, 128, 4.0).unwrap();
    let p = 2.0;
    let e = |radius: f64| {
        energy_norms(&mu, 1.0, p, &w, &grid, radius).unwrap().strong.powf(p)
    };
    let (e1, e2, e4) = (e(1.0), e(2.0), e(4.0));
    let inc1 = e2 - e1;
    let inc2 = e4 - e2;
    assert!(inc1 > 0.0 && inc2 > 0.0);
    assert!(
        (inc2 / inc1 - 1.0).abs() <= 0.2,
        "increment ratio {} should be near 1",
        inc2 / inc1
    );
}

#[test]
fn weak_energy_is_dominated_by_strong_at_p_one() {
    let w = Weight::<f64>::power(2, -0.5).unwrap();
    let grid = Grid::<f64>::new(2, 64, 2.0).unwrap();
    for (pts, ms) in [
        (vec![vec![0.0, 0.0]], vec![1.0]),
        (vec![vec![0.3, -0.2], vec![-0.4, 0.5]], vec![0.7, 1.3]),
        (vec![vec![0.9, 0.9]], vec![2.0]),
    ] {
        let mu = Measure::from_positive(&PositiveMeasure::atomic(pts, ms).unwrap());
        let report = energy_norms(&mu, 1.0, 1.0, &w, &grid, 1.8).unwrap();
        assert!(
            report.weak <= report.strong * (1.0 + 1e-12),
            "weak {} strong {}",
            report.weak,
            report.strong
        );
    }
}

#[test]
fn growth_diagnostic_separates_critical_from_supercritical() {
    let nu = unit_atom(2);
    let radii: Vec<f64> = (0..6).map(|k| 0.25 * 2f64.powi(k)).collect();

    let critical = vanishing_diagnostic(&nu, 1.0, 2.0, 0.0, &radii).unwrap();
    assert_eq!(critical.verdict, GrowthVerdict::Diverges);
    assert_eq!(critical.predicted_rate, 0.0);
    assert!(
        (critical.fitted_rate - critical.predicted_rate).abs() <= 0.35,
        "fitted {} predicted {}",
        critical.fitted_rate,
        critical.predicted_rate
    );

    let supercritical = vanishing_diagnostic(&nu, 1.0, 3.0, 0.0, &radii).unwrap();
    assert_eq!(supercritical.verdict, GrowthVerdict::Converges);
    assert_eq!(supercritical.predicted_rate, -1.0);
    assert!(
        (supercritical.fitted_rate - supercritical.predicted_rate).abs() <= 0.35,
        "fitted {} predicted {}",
        supercritical.fitted_rate,
        supercritical.predicted_rate
    );

    // growth tables are monotone in the radius
    for report in [&critical, &supercritical] {
        for pair in report.table.windows(2) {
            assert!(pair[1].energy >= pair[0].energy);
            assert!(pair[1].radius > pair[0].radius);
        }
    }
}

#[test]
fn growth_diagnostic_of_nothing_converges() {
    let nu = PositiveMeasure::atomic(vec![vec![0.0, 0.0]], vec![0.0]).unwrap();
    let radii: Vec<f64> = (0..6).map(|k| 0.25 * 2f64.powi(k)).collect();
    let report = vanishing_diagnostic(&nu, 1.0, 2.0, 0.0, &radii).unwrap();
    assert_eq!(report.verdict, GrowthVerdict::Converges);
    assert!(report.table.iter().all(|row| row.energy == 0.0));
}

#[test]
fn constructors_reject_malformed_inputs() {
    assert!(PositiveMeasure::atomic(vec![vec![0.0, 0.0]], vec![-1.0]).is_err());
    assert!(Measure::atomic(vec![vec![0.0, 0.0]], vec![]).is_err());
    assert!(Measure::atomic(vec![vec![f64::NAN, 0.0]], vec![vec![c(1.0, 0.0)]]).is_err());
    let grid = Grid::<f64>::new(2, 32, 1.0).unwrap();
    assert!(Measure::density(grid, 1, vec![c(0.0, 0.0); 7]).is_err());
    assert!(PositiveMeasure::density(grid, vec![0.0; 7]).is_err());
}
