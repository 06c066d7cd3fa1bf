//! Long-time integration of `d|ρ⟩/dt = W|ρ⟩` (Dormand–Prince 5(4)).

use nalgebra::{Matrix6, Vector6};

use super::{clean_populations, residual_f64, Method, SolveError, SteadyState};
use crate::model::{Level, DIM};
use crate::rates::PopulationGenerator;

/// Number of relaxation times used as the default horizon.
pub const HORIZON_RELAXATION_TIMES: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-17, max_steps: 5_000_000 }
    }
}

/// Slowest relaxation time `1/min|Re λ|` over the non-zero eigenvalues of W.
pub fn relaxation_time(generator: &PopulationGenerator) -> Result<f64, SolveError> {
    let mut eig: Vec<_> = generator.matrix().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    // eig[0] is the stationary mode
    let gap = eig[1..].iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if gap > 0.0 && gap.is_finite() {
        Ok(1.0 / gap)
    } else {
        Err(SolveError::DegenerateNullSpace { level: Level::new(1) })
    }
}

/// Default integration horizon: 100 relaxation times.
pub fn ode_horizon(generator: &PopulationGenerator) -> Result<f64, SolveError> {
    Ok(HORIZON_RELAXATION_TIMES * relaxation_time(generator)?)
}

pub fn evolve_ode(
    generator: &PopulationGenerator,
    initial: [f64; DIM],
    t_final: f64,
) -> Result<SteadyState, SolveError> {
    evolve_ode_with(generator, initial, t_final, OdeOptions::default())
}

// Dormand–Prince tableau (autonomous system, stage times unused)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dp_step(w: &Matrix6<f64>, y: &Vector6<f64>, h: f64) -> (Vector6<f64>, Vector6<f64>) {
    let mut k = [Vector6::zeros(); 7];
    for s in 0..7 {
        let mut arg = *y;
        for (r, kr) in k.iter().enumerate().take(s) {
            arg += kr * (h * A[s][r]);
        }
        k[s] = w * arg;
    }
    let mut y5 = *y;
    let mut err = Vector6::zeros();
    for s in 0..7 {
        y5 += k[s] * (h * B5[s]);
        err += k[s] * (h * (B5[s] - B4[s]));
    }
    (y5, err)
}

pub fn evolve_ode_with(
    generator: &PopulationGenerator,
    initial: [f64; DIM],
    t_final: f64,
    options: OdeOptions,
) -> Result<SteadyState, SolveError> {
    let total: f64 = initial.iter().sum();
    if initial.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 || !(t_final >= 0.0) {
        return Err(SolveError::InvalidInitialState);
    }
    let w = *generator.matrix();
    let mut y = Vector6::from_column_slice(&initial);
    let mut t = 0.0;
    let fastest = w.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut h = (0.01 / fastest).min(t_final);
    let mut steps = 0;
    while t < t_final {
        if steps >= options.max_steps || h <= 1e-14 * t.max(1.0) {
            return Err(SolveError::StiffnessFailure { t, steps });
        }
        steps += 1;
        let h_try = h.min(t_final - t);
        let (y_new, err) = dp_step(&w, &y, h_try);
        let norm = (0..DIM)
            .map(|i| err[i].abs() / (options.atol + options.rtol * y[i].abs().max(y_new[i].abs())))
            .fold(0.0, f64::max);
        if norm <= 1.0 {
            t += h_try;
            y = y_new;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_try * factor;
    }
    let raw: [f64; DIM] = y.into();
    if (raw.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SolveError::StiffnessFailure { t, steps });
    }
    let populations = if t_final == 0.0 { initial } else { clean_populations(raw)? };
    let residual = residual_f64(generator, &populations);
    Ok(SteadyState { populations, method: Method::OdeOracle, residual, precise: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BathSet, SystemParams};
    use crate::rates::generator_for;
    use crate::steadystate::solve_numerical;

    fn generator(t_m: f64) -> PopulationGenerator {
        generator_for(&SystemParams::reference(), &BathSet::new(2.0, t_m, 0.2).unwrap()).unwrap()
    }

    const MIXED: [f64; DIM] = [1.0 / 6.0; DIM];

    #[test]
    fn zero_horizon_is_identity() {
        let init = [0.1, 0.2, 0.3, 0.1, 0.2, 0.1];
        let s = evolve_ode(&generator(2.0), init, 0.0).unwrap();
        assert_eq!(s.populations, init);
        assert_eq!(s.method, Method::OdeOracle);
    }

    #[test]
    fn long_time_limit_matches_null_space() {
        let w = generator(2.0);
        let horizon = ode_horizon(&w).unwrap();
        let ode = evolve_ode(&w, MIXED, horizon).unwrap();
        let num = solve_numerical(&w).unwrap();
        for k in 0..DIM {
            assert!((ode.populations[k] - num.populations[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn unique_attractor() {
        let w = generator(0.8);
        let horizon = ode_horizon(&w).unwrap();
        let a = evolve_ode(&w, MIXED, horizon).unwrap();
        let b = evolve_ode(&w, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], horizon).unwrap();
        for k in 0..DIM {
            assert!((a.populations[k] - b.populations[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn population_sum_preserved_mid_flight() {
        let w = generator(1.5);
        let s = evolve_ode(&w, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3.0).unwrap();
        assert!((s.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_initial_state() {
        let w = generator(1.0);
        assert_eq!(evolve_ode(&w, [0.5; DIM], 1.0), Err(SolveError::InvalidInitialState));
        assert_eq!(
            evolve_ode(&w, [-0.1, 1.1, 0.0, 0.0, 0.0, 0.0], 1.0),
            Err(SolveError::InvalidInitialState)
        );
    }

    #[test]
    fn step_budget_exhaustion_is_reported() {
        let w = generator(1.0);
        let opts = OdeOptions { max_steps: 3, ..OdeOptions::default() };
        assert!(matches!(
            evolve_ode_with(&w, MIXED, 1e4, opts),
            Err(SolveError::StiffnessFailure { .. })
        ));
    }
}
