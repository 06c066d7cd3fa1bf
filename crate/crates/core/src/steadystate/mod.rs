//! Stationary populations of the population generator.
//!
//! [`solve_numerical`] is the production path. [`solve_approximate`] is the
//! closed form obtained by neglecting the two weakly populated levels `λ1`
//! and `λ4`. The ODE and full-Liouvillian routes in the submodules exist to
//! check the other two.

mod liouvillian;
mod ode;

pub use liouvillian::{full_liouvillian_density, solve_full_liouvillian, LiouvillianSolution};
pub use ode::{evolve_ode, evolve_ode_with, ode_horizon, relaxation_time, OdeOptions};

use std::fmt;

use thiserror::Error;

use crate::model::{Bath, BathSet, Level, SystemParams, DIM};
use crate::precision::{abs, real, to_f64, zero, Real, RealMatrix};
use crate::rates::{bose_occupation_real, generator_for, PopulationGenerator, RateError};

/// Round-off allowance below zero before a population counts as negative.
pub const NEGATIVE_POPULATION_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Numerical,
    Approximate,
    OdeOracle,
    FullLiouvillianOracle,
}

impl Method {
    pub fn short_name(self) -> &'static str {
        match self {
            Method::Numerical => "num",
            Method::Approximate => "apx",
            Method::OdeOracle => "ode",
            Method::FullLiouvillianOracle => "liouville",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("generator null space is not one-dimensional (state {level} has no escape route)")]
    DegenerateNullSpace { level: Level },
    #[error("population of {level} is {value:e}, below the round-off allowance")]
    NegativePopulation { level: Level, value: f64 },
    #[error("ODE integrator failed to meet tolerance at t = {t} after {steps} steps")]
    StiffnessFailure { t: f64, steps: usize },
    #[error("initial populations must be non-negative and sum to 1")]
    InvalidInitialState,
    #[error("full Liouvillian steady state has off-diagonal magnitude {max_off_diagonal:e}")]
    NonDiagonalSteadyState { max_off_diagonal: f64 },
    #[error("Liouvillian is singular after normalization")]
    SingularLiouvillian,
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Dressed-state populations `ρ_11 … ρ_66`.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub populations: [f64; DIM],
    pub method: Method,
    /// `‖W·ρ‖_max`.
    pub residual: f64,
    pub(crate) precise: Option<Vec<Real>>,
}

impl PartialEq for SteadyState {
    fn eq(&self, other: &Self) -> bool {
        self.populations == other.populations && self.method == other.method && self.residual == other.residual
    }
}

impl SteadyState {
    pub fn population(&self, level: Level) -> f64 {
        self.populations[level.index()]
    }

    /// Populations in extended precision (exact lift of the `f64` values
    /// when the solver did not keep its own).
    pub(crate) fn populations_real(&self) -> Vec<Real> {
        match &self.precise {
            Some(p) => p.clone(),
            None => self.populations.iter().map(|&x| real(x)).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.populations.iter().sum()
    }
}

/// Clamp round-off negatives and renormalize. Anything below
/// `−NEGATIVE_POPULATION_TOL` is reported.
pub(crate) fn clean_populations(raw: [f64; DIM]) -> Result<[f64; DIM], SolveError> {
    let mut out = raw;
    for (k, p) in out.iter_mut().enumerate() {
        if *p < -NEGATIVE_POPULATION_TOL {
            return Err(SolveError::NegativePopulation { level: Level::new(k as u8 + 1), value: *p });
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

fn residual_f64(w: &PopulationGenerator, populations: &[f64; DIM]) -> f64 {
    (w.matrix() * nalgebra::Vector6::from_column_slice(populations)).amax()
}

fn residual_real(w: &RealMatrix, populations: &[Real]) -> f64 {
    w.apply(populations).iter().map(|r| to_f64(&abs(r))).fold(0.0, f64::max)
}

/// Stationary vector by Grassmann–Taksar–Heyman elimination: states are
/// folded away one at a time using only off-diagonal rates, so no
/// subtraction occurs and every population keeps full relative accuracy.
/// The last state kept is `λ6` (ground), which every other level can decay
/// into.
pub fn solve_numerical(generator: &PopulationGenerator) -> Result<SteadyState, SolveError> {
    let total = generator.total_precise();
    let n = total.dim();
    // rates[i][j]: transition i → j
    let mut rates = RealMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rates.set(i, j, total.get(j, i).clone());
            }
        }
    }
    let mut exit = vec![zero(); n];
    for k in 0..n - 1 {
        let s = (k + 1..n).fold(zero(), |acc, j| acc + rates.get(k, j));
        if s <= zero() {
            return Err(SolveError::DegenerateNullSpace { level: Level::new(k as u8 + 1) });
        }
        for i in k + 1..n {
            let via = rates.get(i, k).clone() / &s;
            for j in k + 1..n {
                if i != j {
                    let add = &via * rates.get(k, j);
                    rates.add_to(i, j, &add);
                }
            }
        }
        exit[k] = s;
    }
    let mut pi = vec![zero(); n];
    pi[n - 1] = real(1.0);
    for k in (0..n - 1).rev() {
        let inflow = (k + 1..n).fold(zero(), |acc, i| acc + &pi[i] * rates.get(i, k));
        pi[k] = inflow / &exit[k];
    }
    let norm = pi.iter().fold(zero(), |acc, p| acc + p);
    let pi: Vec<Real> = pi.into_iter().map(|p| p / &norm).collect();

    let mut populations = [0.0; DIM];
    for (dst, p) in populations.iter_mut().zip(&pi) {
        *dst = to_f64(p);
    }
    let residual = residual_real(&total, &pi);
    Ok(SteadyState { populations, method: Method::Numerical, residual, precise: Some(pi) })
}

/// Emission/absorption coefficients `A_{μl}`, `B_{μl}` of eigenoperator `l`.
fn coefficients(params: &SystemParams, baths: &BathSet, bath: Bath, operator: u8) -> Result<(Real, Real), RateError> {
    let omega = crate::model::operator_frequency(params, bath, operator);
    let n = bose_occupation_real(omega, baths.get(bath))?;
    let gamma = real(params.gamma[bath]);
    Ok((&gamma * (&n + real(1.0)), gamma * n))
}

/// Closed-form populations with `ρ11 = ρ44 = 0`.
///
/// Valid in the regime where `λ1` and `λ4` are barely excited; it is
/// evaluated everywhere and simply deviates more outside that regime.
pub fn solve_approximate(params: &SystemParams, baths: &BathSet) -> Result<SteadyState, SolveError> {
    let (a_l1, b_l1) = coefficients(params, baths, Bath::L, 1)?;
    let (a_l2, b_l2) = coefficients(params, baths, Bath::L, 2)?;
    let (a_m1, b_m1) = coefficients(params, baths, Bath::M, 1)?;
    let (a_m2, b_m2) = coefficients(params, baths, Bath::M, 2)?;
    let (a_r1, b_r1) = coefficients(params, baths, Bath::R, 1)?;
    let two = real(2.0);

    let two_b_m1 = &two * &b_m1;
    let two_a_m1 = &two * &a_m1;
    let two_a_l2 = &two * &a_l2;
    let two_b_l2 = &two * &b_l2;
    // recurring brackets
    let p = &two_b_m1 * &b_l1 + (&two_a_m1 + &b_l1) * (&two_b_l2 + &b_r1);
    let q = &two * &a_m2 * &a_l2 + &a_r1 * (&two_a_l2 + &b_m2);

    let d2 = &two_a_l2 * (&two_b_m1 * &b_l1 + &b_r1 * (&two_a_m1 + &b_l1)) + &b_m2 * &p;
    let d3 = &two_b_m1 * &q
        + &a_l1 * (&two_a_l2 * (&two_b_m1 + &b_r1) + &b_m2 * (&two_b_m1 + &two_b_l2 + &b_r1));
    let d5 = &two_b_l2 * (&a_r1 * &b_l1 + &two_a_m1 * (&a_l1 + &a_r1)) + &a_m2 * &p;
    let d6 = &b_l1 * &q
        + &two_a_m1 * (&two * &a_m2 * &a_l2 + (&a_l1 + &a_r1) * (&two_a_l2 + &b_m2));
    let d = &d2 + &d3 + &d5 + &d6;

    let pi = vec![zero(), d2 / &d, d3 / &d, zero(), d5 / &d, d6 / &d];
    let mut populations = [0.0; DIM];
    for (dst, p) in populations.iter_mut().zip(&pi) {
        *dst = to_f64(p);
    }
    let generator = generator_for(params, baths)?;
    let residual = residual_real(&generator.total_precise(), &pi);
    Ok(SteadyState { populations, method: Method::Approximate, residual, precise: Some(pi) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::diagonalize;

    fn reference() -> SystemParams {
        SystemParams::reference()
    }

    fn fig2(t_m: f64) -> BathSet {
        BathSet::new(2.0, t_m, 0.2).unwrap()
    }

    #[test]
    fn equal_temperatures_give_gibbs() {
        let baths = BathSet::uniform(2.0).unwrap();
        let w = generator_for(&reference(), &baths).unwrap();
        let s = solve_numerical(&w).unwrap();
        let eig = diagonalize(&reference());
        let boltz: Vec<f64> = eig.eigenvalues.iter().map(|e| (-e / 2.0).exp()).collect();
        let z: f64 = boltz.iter().sum();
        for k in 0..DIM {
            let expected = boltz[k] / z;
            assert!((s.populations[k] - expected).abs() <= 1e-12 * expected, "level {k}");
        }
    }

    #[test]
    fn reference_population_ordering() {
        let w = generator_for(&reference(), &fig2(2.0)).unwrap();
        let s = solve_numerical(&w).unwrap();
        let p = s.populations;
        assert!((s.total() - 1.0).abs() < 1e-12);
        assert!(s.residual < 1e-10 * w.matrix().amax());
        let mut sorted = p;
        sorted.sort_by(f64::total_cmp);
        assert_eq!(&sorted[..2], &[p[0], p[3]]);
        assert!(p[0] < p[1] && p[3] < p[1]);
    }

    #[test]
    fn zero_temperature_settles_in_ground_state() {
        let w = generator_for(&reference(), &BathSet::uniform(0.0).unwrap()).unwrap();
        let s = solve_numerical(&w).unwrap();
        assert_eq!(s.populations, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn disconnected_generator_is_rejected() {
        // two closed classes {λ1, λ2} and {λ3..λ6}
        let mut m = nalgebra::Matrix6::zeros();
        m[(1, 0)] = 1.0;
        m[(0, 0)] = -1.0;
        m[(0, 1)] = 1.0;
        m[(1, 1)] = -1.0;
        m[(5, 2)] = 1.0;
        m[(2, 2)] = -1.0;
        m[(2, 5)] = 0.5;
        m[(5, 5)] = -0.5;
        m[(5, 3)] = 1.0;
        m[(3, 3)] = -1.0;
        m[(5, 4)] = 1.0;
        m[(4, 4)] = -1.0;
        let zero = nalgebra::Matrix6::zeros();
        let w = PopulationGenerator::from_matrices(crate::model::BathMap::new(m, zero, zero));
        assert!(matches!(solve_numerical(&w), Err(SolveError::DegenerateNullSpace { .. })));
    }

    #[test]
    fn approximate_close_to_numerical() {
        let w = generator_for(&reference(), &fig2(2.0)).unwrap();
        let num = solve_numerical(&w).unwrap();
        let apx = solve_approximate(&reference(), &fig2(2.0)).unwrap();
        assert_eq!(apx.populations[0], 0.0);
        assert_eq!(apx.populations[3], 0.0);
        assert!((apx.total() - 1.0).abs() < 1e-12);
        for k in 0..DIM {
            assert!((apx.populations[k] - num.populations[k]).abs() < 0.02);
        }
    }

    #[test]
    fn approximate_matches_reduced_generator() {
        // The closed form is the exact null vector of the generator with
        // λ1, λ4 and the channels V_L3, V_M3, V_R2, V_R3 removed.
        for t_m in [0.3, 1.0, 2.0, 3.5] {
            let baths = fig2(t_m);
            let w = generator_for(&reference(), &baths).unwrap();
            let reduced = w.without_levels(&[Level::new(1), Level::new(4)]);
            let red = solve_reduced(&reduced);
            let apx = solve_approximate(&reference(), &baths).unwrap();
            for k in 0..DIM {
                // f64 LU on the reduced block: absolute round-off ~1e-16
                assert!((apx.populations[k] - red[k]).abs() <= 1e-13 + 1e-9 * red[k], "t_m {t_m} level {k}");
            }
        }
    }

    /// Row-replacement LU on the 4×4 block {λ2, λ3, λ5, λ6}.
    fn solve_reduced(w: &PopulationGenerator) -> [f64; DIM] {
        let keep = [1usize, 2, 4, 5];
        let mut a = nalgebra::Matrix4::from_fn(|i, j| w.matrix()[(keep[i], keep[j])]);
        a.row_mut(0).fill(1.0);
        let x = a.lu().solve(&nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let mut out = [0.0; DIM];
        for (i, &k) in keep.iter().enumerate() {
            out[k] = x[i];
        }
        out
    }

    #[test]
    fn approximate_invariant_under_gamma_scaling() {
        let baths = fig2(1.1);
        let a = solve_approximate(&reference(), &baths).unwrap();
        let b = solve_approximate(&reference().with_scaled_gamma(7.5).unwrap(), &baths).unwrap();
        for k in 0..DIM {
            assert!((a.populations[k] - b.populations[k]).abs() <= 1e-14 * a.populations[k]);
        }
    }

    #[test]
    fn cold_modulation_concentrates_in_lowest_levels() {
        let baths = fig2(0.01);
        let apx = solve_approximate(&reference(), &baths).unwrap();
        assert!(apx.populations[2] + apx.populations[5] > 0.9);
        let num = solve_numerical(&generator_for(&reference(), &baths).unwrap()).unwrap();
        assert!(num.populations[2] + num.populations[5] > 0.9);
    }

    #[test]
    fn clamping_rules() {
        let cleaned = clean_populations([0.5, -1e-16, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(cleaned[1], 0.0);
        assert!((cleaned.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            clean_populations([0.5, -1e-10, 0.5, 0.0, 0.0, 0.0]),
            Err(SolveError::NegativePopulation { .. })
        ));
    }
}
