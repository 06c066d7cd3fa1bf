//! Heat currents, net decay rates and dynamical amplification factors.
//!
//! Sign convention: `Q̇_μ > 0` means heat flows out of bath `μ` into the
//! system.

use thiserror::Error;

use crate::model::{
    diagonalize, eigenoperator_channels, operator_frequency, Bath, BathMap, BathSet, EigenSystem,
    Level, SystemParams,
};
use crate::precision::{
    abs, is_resolved, real, to_f64, with_working_precision, working_precision, zero, Real, MAX_PRECISION_BITS, PRECISION_BITS,
};
use crate::rates::{bose_occupation_real, generator_for, PopulationGenerator, RateError};
use crate::steadystate::{solve_approximate, solve_numerical, Method, SolveError, SteadyState};

/// Relative conservation bound `|ΣQ̇| / max|Q̇|`.
pub const CONSERVATION_TOL: f64 = 1e-10;
/// Absolute bound used when every current underflows.
pub const CONSERVATION_FLOOR: f64 = 1e-18;
/// Default temperature step for the amplification derivative.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("bath {bath} does not drive the transition {upper} -> {lower}")]
    UnknownChannel { bath: Bath, upper: Level, lower: Level },
    #[error("closed-form currents need an approximate steady state, got {found}")]
    WrongStateMethod { found: Method },
    #[error("heat currents are only produced by the numerical or approximate solver, not {0}")]
    UnsupportedMethod(Method),
    #[error("modulation current does not change resolvably across T_M = {t_m} ± h (ΔQ_M = {delta:e})")]
    VanishingModulationSensitivity { t_m: f64, delta: f64 },
    #[error("temperature step h = {h} must satisfy 0 < h < t_m = {t_m}")]
    InvalidStep { t_m: f64, h: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

impl From<crate::model::ModelError> for ObservableError {
    fn from(e: crate::model::ModelError) -> Self {
        ObservableError::Rate(RateError::Model(e))
    }
}

/// The three terminal currents of one steady state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportReport {
    pub currents: BathMap<f64>,
    /// `Q̇_L + Q̇_M + Q̇_R`, summed before rounding.
    pub conservation_residual: f64,
    pub method: Method,
    /// Mantissa bits the currents were computed with.
    pub precision_bits: usize,
    /// False when even the widest precision leaves the currents inside the
    /// rounding noise of the gross flows (equilibrium, or a frozen-out
    /// device). Such currents are zero to within that noise.
    pub resolved: bool,
}

impl TransportReport {
    fn from_real(currents: &BathMap<Real>, method: Method, precision_bits: usize, resolved: bool) -> Self {
        let sum = currents.0.iter().fold(zero(), |acc, q| acc + q);
        Self {
            currents: currents.map(to_f64),
            conservation_residual: to_f64(&sum),
            method,
            precision_bits,
            resolved,
        }
    }

    pub fn q_l(&self) -> f64 {
        self.currents[Bath::L]
    }

    pub fn q_m(&self) -> f64 {
        self.currents[Bath::M]
    }

    pub fn q_r(&self) -> f64 {
        self.currents[Bath::R]
    }

    pub fn max_abs(&self) -> f64 {
        self.currents.0.iter().fold(0.0, |m, q| m.max(q.abs()))
    }

    /// `|ΣQ̇| / max|Q̇|`, or `None` when every current is below the floor.
    pub fn relative_residual(&self) -> Option<f64> {
        let scale = self.max_abs();
        (scale > CONSERVATION_FLOOR).then(|| self.conservation_residual.abs() / scale)
    }

    pub fn is_conserving(&self) -> bool {
        match self.relative_residual() {
            Some(r) => r < CONSERVATION_TOL,
            None => self.conservation_residual.abs() < CONSERVATION_FLOOR,
        }
    }
}

fn channel_occupation(params: &SystemParams, baths: &BathSet, bath: Bath, upper: Level, lower: Level) -> Result<Real, ObservableError> {
    let eig = diagonalize(params);
    let known = eigenoperator_channels(params)?
        .into_iter()
        .any(|c| c.bath == bath && c.upper == upper && c.lower == lower);
    if !known {
        return Err(ObservableError::UnknownChannel { bath, upper, lower });
    }
    Ok(bose_occupation_real(eig.energy(upper) - eig.energy(lower), baths.get(bath))?)
}

fn net_decay_real(
    upper: Level,
    lower: Level,
    bath: Bath,
    populations: &[Real],
    params: &SystemParams,
    baths: &BathSet,
) -> Result<Real, ObservableError> {
    let n = channel_occupation(params, baths, bath, upper, lower)?;
    let gamma = real(params.gamma[bath]);
    let emit = (&n + real(1.0)) * &populations[upper.index()];
    let absorb = n * &populations[lower.index()];
    Ok(gamma * (emit - absorb))
}

/// `Γ^μ_{ij} = γ_μ[(n_μ(λ_i−λ_j)+1)ρ_ii − n_μ(λ_i−λ_j)ρ_jj]`.
pub fn net_decay_rate(
    upper: Level,
    lower: Level,
    bath: Bath,
    state: &SteadyState,
    params: &SystemParams,
    baths: &BathSet,
) -> Result<f64, ObservableError> {
    let pops = state.populations_real();
    Ok(to_f64(&net_decay_real(upper, lower, bath, &pops, params, baths)?))
}

fn trace_currents_real(state: &SteadyState, generator: &PopulationGenerator, eigensystem: &EigenSystem) -> BathMap<Real> {
    let pops = state.populations_real();
    let energies: Vec<Real> = eigensystem.eigenvalues.iter().map(|&e| real(e)).collect();
    BathMap::from_fn(|bath| {
        let flow = generator.bath_precise(bath).apply(&pops);
        energies.iter().zip(&flow).fold(zero(), |acc, (e, f)| acc + e * f)
    })
}

/// `Q̇_μ = Σ_i λ_i (W_μ ρ)_i`, the population form of `Tr(H_S L_μ[ρ])`.
pub fn heat_current_trace(bath: Bath, state: &SteadyState, generator: &PopulationGenerator, eigensystem: &EigenSystem) -> f64 {
    to_f64(&trace_currents_real(state, generator, eigensystem)[bath])
}

/// All three trace-form currents for a state.
pub fn transport_from_state(state: &SteadyState, generator: &PopulationGenerator, eigensystem: &EigenSystem) -> TransportReport {
    let currents = trace_currents_real(state, generator, eigensystem);
    let gross = gross_flow(state, generator, eigensystem);
    let bits = state.populations_real().iter().map(|p| p.precision()).max().unwrap_or(PRECISION_BITS);
    let resolved = is_resolved(&max_abs_real(&currents), &gross, bits);
    TransportReport::from_real(&currents, state.method, bits, resolved)
}

fn closed_form_real(bath: Bath, state: &SteadyState, params: &SystemParams, baths: &BathSet) -> Result<Real, ObservableError> {
    if state.method != Method::Approximate {
        return Err(ObservableError::WrongStateMethod { found: state.method });
    }
    let pops = state.populations_real();
    let lv = Level::new;
    let gamma = |upper, lower| net_decay_real(lv(upper), lv(lower), bath, &pops, params, baths);
    let omega = |l| real(operator_frequency(params, bath, l));
    let two = real(2.0);
    Ok(match bath {
        Bath::L => -(omega(1) * gamma(2, 3)?) - two * omega(2) * gamma(5, 6)?,
        Bath::M => -(two * omega(1) * gamma(3, 6)?) - omega(2) * gamma(2, 5)?,
        Bath::R => -(omega(1) * gamma(2, 6)?),
    })
}

/// Closed-form currents in terms of the net decay rates of the four
/// retained levels. Refuses anything but an approximate state.
pub fn heat_current_closed_form(bath: Bath, state: &SteadyState, params: &SystemParams, baths: &BathSet) -> Result<f64, ObservableError> {
    Ok(to_f64(&closed_form_real(bath, state, params, baths)?))
}

/// Steady state plus the currents derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEvaluation {
    pub state: SteadyState,
    pub report: TransportReport,
    pub(crate) currents: BathMap<Real>,
    /// `max|λ| · Σ_μ Σ_j ρ_j |W_μ[j,j]|`, the size of the terms the currents
    /// are differences of.
    pub(crate) gross: Real,
}

impl PointEvaluation {
    /// Whether `value`, formed from this evaluation's currents, is above
    /// their rounding noise.
    pub(crate) fn resolves(&self, value: &Real) -> bool {
        is_resolved(value, &self.gross, self.report.precision_bits)
    }
}

fn gross_flow(state: &SteadyState, generator: &PopulationGenerator, eigensystem: &EigenSystem) -> Real {
    let pops = state.populations_real();
    let e_max = real(eigensystem.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    let outflow = Bath::ALL.iter().fold(zero(), |acc, &bath| {
        let w = generator.bath_precise(bath);
        pops.iter().enumerate().fold(acc, |a, (j, p)| a + abs(w.get(j, j)) * p)
    });
    outflow * e_max
}

fn max_abs_real(currents: &BathMap<Real>) -> Real {
    currents.0.iter().map(abs).fold(zero(), |m, q| if q > m { q } else { m })
}

/// One evaluation at the current working precision.
fn evaluate_at(params: &SystemParams, baths: &BathSet, method: Method) -> Result<PointEvaluation, ObservableError> {
    let generator = generator_for(params, baths)?;
    let eig = diagonalize(params);
    let (state, currents) = match method {
        Method::Numerical => {
            let state = solve_numerical(&generator)?;
            let currents = trace_currents_real(&state, &generator, &eig);
            (state, currents)
        }
        Method::Approximate => {
            let state = solve_approximate(params, baths)?;
            let mut currents = BathMap::from_fn(|_| zero());
            for bath in Bath::ALL {
                currents[bath] = closed_form_real(bath, &state, params, baths)?;
            }
            (state, currents)
        }
        other => return Err(ObservableError::UnsupportedMethod(other)),
    };
    let gross = gross_flow(&state, &generator, &eig);
    let bits = working_precision();
    let resolved = is_resolved(&max_abs_real(&currents), &gross, bits);
    let report = TransportReport::from_real(&currents, method, bits, resolved);
    Ok(PointEvaluation { state, report, currents, gross })
}

/// Run `f` at doubling precisions from [`PRECISION_BITS`] until it reports
/// its result resolved or [`MAX_PRECISION_BITS`] is reached.
fn escalate<T>(mut f: impl FnMut() -> Result<(T, bool), ObservableError>) -> Result<(T, bool), ObservableError> {
    let mut bits = PRECISION_BITS;
    loop {
        let (value, resolved) = with_working_precision(bits, &mut f)?;
        if resolved || bits >= MAX_PRECISION_BITS {
            return Ok((value, resolved));
        }
        bits = (2 * bits).min(MAX_PRECISION_BITS);
    }
}

/// Solve and compute currents: trace form for the numerical state, closed
/// forms for the approximate one. Precision is raised until the largest
/// current stands clear of the rounding noise of the gross flows.
pub fn evaluate_point(params: &SystemParams, baths: &BathSet, method: Method) -> Result<PointEvaluation, ObservableError> {
    let (eval, _) = escalate(|| {
        let e = evaluate_at(params, baths, method)?;
        let ok = e.report.resolved;
        Ok((e, ok))
    })?;
    Ok(eval)
}

pub fn transport(params: &SystemParams, baths: &BathSet, method: Method) -> Result<TransportReport, ObservableError> {
    Ok(evaluate_point(params, baths, method)?.report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplificationResult {
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub t_m: f64,
    pub h: f64,
    /// `dQ̇_M/dT_M` from the same central difference.
    pub dq_m_dt: f64,
    /// `(4α(h/2) − α(h))/3`.
    pub alpha_l_richardson: f64,
    pub alpha_r_richardson: f64,
    pub method: Method,
}

impl AmplificationResult {
    /// Relative gap between the plain and the extrapolated `α_L`.
    pub fn richardson_discrepancy(&self) -> f64 {
        ((self.alpha_l - self.alpha_l_richardson) / self.alpha_l_richardson).abs()
    }
}

struct Quotient {
    alpha_l: Real,
    alpha_r: Real,
    delta_m: Real,
}

fn central_quotient(params: &SystemParams, baths: &BathSet, t_m: f64, h: f64, method: Method) -> Result<Quotient, ObservableError> {
    let up = baths.with(Bath::M, t_m + h)?;
    let down = baths.with(Bath::M, t_m - h)?;
    let ((hi, lo), resolved) = escalate(|| {
        let hi = evaluate_at(params, &up, method)?;
        let lo = evaluate_at(params, &down, method)?;
        let delta = &hi.currents[Bath::M] - &lo.currents[Bath::M];
        let ok = hi.resolves(&delta) && lo.resolves(&delta);
        Ok(((hi.currents, lo.currents), ok))
    })?;
    let delta = BathMap::from_fn(|b| &hi[b] - &lo[b]);
    let scale = max_abs_real(&hi).max(max_abs_real(&lo));
    if !resolved || abs(&delta[Bath::M]) <= real(1e-14) * scale {
        return Err(ObservableError::VanishingModulationSensitivity { t_m, delta: to_f64(&delta[Bath::M]) });
    }
    Ok(Quotient {
        alpha_l: &delta[Bath::L] / &delta[Bath::M],
        alpha_r: &delta[Bath::R] / &delta[Bath::M],
        delta_m: delta[Bath::M].clone(),
    })
}

/// `α_{L,R} = ∂Q̇_{L,R}/∂Q̇_M`, taken as a ratio of central differences in
/// `T_M` with numerical currents.
pub fn amplification_factors(params: &SystemParams, baths: &BathSet, t_m: f64, h: f64) -> Result<AmplificationResult, ObservableError> {
    amplification_factors_with(params, baths, t_m, h, Method::Numerical)
}

/// As [`amplification_factors`], with the current method chosen explicitly.
/// Both evaluations use the same method.
pub fn amplification_factors_with(
    params: &SystemParams,
    baths: &BathSet,
    t_m: f64,
    h: f64,
    method: Method,
) -> Result<AmplificationResult, ObservableError> {
    if !(h > 0.0 && t_m - h > 0.0 && t_m.is_finite()) {
        return Err(ObservableError::InvalidStep { t_m, h });
    }
    let (coarse, fine) = rayon::join(
        || central_quotient(params, baths, t_m, h, method),
        || central_quotient(params, baths, t_m, h / 2.0, method),
    );
    let (coarse, fine) = (coarse?, fine?);
    let richardson = |c: &Real, f: &Real| to_f64(&((real(4.0) * f - c) / real(3.0)));
    Ok(AmplificationResult {
        alpha_l: to_f64(&coarse.alpha_l),
        alpha_r: to_f64(&coarse.alpha_r),
        t_m,
        h,
        dq_m_dt: to_f64(&(&coarse.delta_m / real(2.0 * h))),
        alpha_l_richardson: richardson(&coarse.alpha_l, &fine.alpha_l),
        alpha_r_richardson: richardson(&coarse.alpha_r, &fine.alpha_r),
        method,
    })
}
