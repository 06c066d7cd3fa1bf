use proptest::prelude::*;
use qtt_core::model::ModelError;
use qtt_core::rates::RateError;
use qtt_core::steadystate::{evolve_ode, ode_horizon};
use qtt_core::{
    diagonalize, generator_for, solve_approximate, solve_full_liouvillian, solve_numerical, validate_secular, BathMap,
    BathSet, Level, Method, SolveError, SystemParams,
};

fn params() -> impl Strategy<Value = SystemParams> {
    (1.0..8.0f64, 10.0..60.0f64, 0.05..0.95f64, 0.001..0.1f64, 0.001..0.1f64, 0.001..0.1f64).prop_map(
        |(e1, e2, frac, gl, gm, gr)| {
            SystemParams::new(e1, e2, e1 + e2, frac * e1, BathMap::new(gl, gm, gr)).unwrap()
        },
    )
}

fn baths() -> impl Strategy<Value = BathSet> {
    (0.05..6.0f64, 0.05..6.0f64, 0.05..6.0f64).prop_map(|(l, m, r)| BathSet::new(l, m, r).unwrap())
}

fn max_deviation(p: &SystemParams, b: &BathSet) -> f64 {
    let num = solve_numerical(&generator_for(p, b).unwrap()).unwrap();
    let apx = solve_approximate(p, b).unwrap();
    (0..6).map(|k| (num.populations[k] - apx.populations[k]).abs()).fold(0.0, f64::max)
}

#[test]
fn reference_populations_ordering() {
    let p = SystemParams::reference();
    let s = solve_numerical(&generator_for(&p, &BathSet::new(2.0, 2.0, 0.2).unwrap()).unwrap()).unwrap();
    let rho = |k| s.population(Level::new(k));
    assert!(rho(1) < rho(4) && rho(4) < rho(2));
    assert!(rho(1) < rho(3) && rho(4) < rho(3) && rho(4) < rho(5));
    assert_eq!(s.method, Method::Numerical);
}

#[test]
fn approximation_improves_with_coupling() {
    // g = E1 closes the M2 transition; 0.99 is the nearest valid point.
    let b = BathSet::new(2.0, 2.0, 0.2).unwrap();
    let devs: Vec<f64> = [0.5, 0.75, 0.99]
        .iter()
        .map(|r| max_deviation(&SystemParams::resonant(4.0, 40.0, 4.0 * r, 0.04).unwrap(), &b))
        .collect();
    assert!(devs.windows(2).all(|w| w[1] <= w[0]), "{devs:?}");
    let at_e1 = SystemParams::resonant(4.0, 40.0, 4.0, 0.04).unwrap();
    assert!(matches!(
        generator_for(&at_e1, &b),
        Err(RateError::Model(ModelError::DegenerateFrequency { .. }))
    ));
}

#[test]
fn approximate_solver_outside_its_regime_still_answers() {
    // T_M > T_L, as in the alternate-terminal sweeps
    let p = SystemParams::reference();
    let b = BathSet::new(0.5, 4.0, 2.0).unwrap();
    let s = solve_approximate(&p, &b).unwrap();
    assert!((s.total() - 1.0).abs() < 1e-12);
    assert!(s.populations.iter().all(|&x| x >= 0.0));
}

#[test]
fn oracle_triangle_on_reference_grid() {
    let p = SystemParams::reference();
    for t_m in [0.05, 0.3, 1.0, 2.0, 4.0] {
        let b = BathSet::new(2.0, t_m, 0.2).unwrap();
        let w = generator_for(&p, &b).unwrap();
        let num = solve_numerical(&w).unwrap();
        let ode = evolve_ode(&w, [1.0 / 6.0; 6], ode_horizon(&w).unwrap()).unwrap();
        let full = solve_full_liouvillian(&p, &b).unwrap();
        for k in 0..6 {
            assert!((num.populations[k] - ode.populations[k]).abs() < 1e-8, "ode t_m={t_m}");
            assert!((num.populations[k] - full.populations[k]).abs() < 1e-8, "liouvillian t_m={t_m}");
        }
    }
}

#[test]
fn zero_temperature_everywhere_is_ground_state() {
    let p = SystemParams::reference();
    let s = solve_numerical(&generator_for(&p, &BathSet::uniform(0.0).unwrap()).unwrap()).unwrap();
    assert_eq!(s.populations, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn ode_reports_bad_initial_state() {
    let w = generator_for(&SystemParams::reference(), &BathSet::uniform(1.0).unwrap()).unwrap();
    assert_eq!(evolve_ode(&w, [0.2; 6], 1.0), Err(SolveError::InvalidInitialState));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn null_space_residual_is_small(p in params(), b in baths()) {
        let w = generator_for(&p, &b).unwrap();
        let s = solve_numerical(&w).unwrap();
        prop_assert!(s.residual < 1e-10 * w.matrix().amax());
        prop_assert!((s.total() - 1.0).abs() < 1e-14);
        prop_assert!(s.populations.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn equal_temperatures_give_gibbs_state(p in params(), t in 0.2..8.0f64) {
        let s = solve_numerical(&generator_for(&p, &BathSet::uniform(t).unwrap()).unwrap()).unwrap();
        let eig = diagonalize(&p);
        let w: Vec<f64> = eig.eigenvalues.iter().map(|e| (-e / t).exp()).collect();
        let z: f64 = w.iter().sum();
        for k in 0..6 {
            let gibbs = w[k] / z;
            if gibbs > 1e-12 {
                prop_assert!(((s.populations[k] - gibbs) / gibbs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oracles_agree_in_the_secular_regime(p in params(), b in baths()) {
        prop_assume!(validate_secular(&p).is_valid());
        let w = generator_for(&p, &b).unwrap();
        let num = solve_numerical(&w).unwrap();
        let full = solve_full_liouvillian(&p, &b).unwrap();
        for k in 0..6 {
            prop_assert!((num.populations[k] - full.populations[k]).abs() < 1e-8);
        }
    }
}
