//! One-dimensional temperature sweeps, regime detectors and figure presets.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{validate_secular, Bath, BathMap, BathSet, ModelError, SystemParams};
use crate::observables::{amplification_factors_with, evaluate_point, ObservableError, PointEvaluation, DEFAULT_STEP};
use crate::precision::{abs, real, to_f64, zero, Real};
use crate::steadystate::Method;

/// Relative spacing deviation below which a grid counts as uniform.
const UNIFORM_TOL: f64 = 1e-9;
/// Segments whose modulating-current change is below this fraction of the
/// largest modulating current are skipped by [`segment_gains`].
pub const SEGMENT_NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep grid needs at least 2 points, got {0}")]
    GridTooShort(usize),
    #[error("grid point {index} = {value} is not a finite temperature >= 0")]
    InvalidGridValue { index: usize, value: f64 },
    #[error("grid is not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("amplification columns need a T_M sweep, got {0}")]
    AmplificationNeedsModulation(Bath),
    #[error("sweep has no methods selected")]
    NoMethods,
    #[error("method {0} is not available in sweeps")]
    UnsupportedMethod(Method),
    #[error("cutoff must be positive, got {0}")]
    InvalidCutoff(f64),
    #[error("|Q_R| never exceeds the cutoff {cutoff:e} on the grid")]
    NeverExceeds { cutoff: f64 },
    #[error("currents vary by more than rel_tol already between the first two grid points")]
    EmptyPlateau,
    #[error("row at t = {t} has no {method} result")]
    MissingRow { t: f64, method: Method },
    #[error("unknown figure id '{0}' (expected fig2, fig3, fig4, fig5, figB6, figB7, figB8)")]
    UnknownFigure(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AmplificationMode {
    Off,
    /// Three-point stencils over neighbouring rows on uniform grids; private
    /// central differences with [`DEFAULT_STEP`] otherwise, and for rows
    /// whose stencil difference is not resolved.
    Auto,
    /// Re-solve at `t ± h` for every row.
    PrivateStep { h: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub variable: Bath,
    pub grid: Vec<f64>,
    /// Temperatures of the two other baths; the entry for `variable` is ignored.
    pub fixed: BathSet,
    pub params: SystemParams,
    /// Subset of `{Numerical, Approximate}`.
    pub methods: Vec<Method>,
    pub amplification: AmplificationMode,
    pub parallel: bool,
}

impl SweepSpec {
    pub fn new(variable: Bath, grid: Vec<f64>, fixed: BathSet, params: SystemParams) -> Self {
        Self {
            variable,
            grid,
            fixed,
            params,
            methods: vec![Method::Numerical, Method::Approximate],
            amplification: AmplificationMode::Off,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.grid.len() < 2 {
            return Err(SweepError::GridTooShort(self.grid.len()));
        }
        for (index, &value) in self.grid.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SweepError::InvalidGridValue { index, value });
            }
            if index > 0 && value <= self.grid[index - 1] {
                return Err(SweepError::NotIncreasing { index });
            }
        }
        if self.methods.is_empty() {
            return Err(SweepError::NoMethods);
        }
        if let Some(&m) = self.methods.iter().find(|m| !matches!(m, Method::Numerical | Method::Approximate)) {
            return Err(SweepError::UnsupportedMethod(m));
        }
        if self.amplification != AmplificationMode::Off && self.variable != Bath::M {
            return Err(SweepError::AmplificationNeedsModulation(self.variable));
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        let n = self.grid.len();
        if n < 2 {
            return false;
        }
        let step = (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64;
        self.grid.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= UNIFORM_TOL * step)
    }
}

/// `(α_L, α_R)` at one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplification {
    pub alpha_l: f64,
    pub alpha_r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub baths: BathSet,
    pub numerical: Option<Result<PointEvaluation, ObservableError>>,
    pub approximate: Option<Result<PointEvaluation, ObservableError>>,
    pub amplification_numerical: Option<Result<Amplification, ObservableError>>,
    pub amplification_approximate: Option<Result<Amplification, ObservableError>>,
    pub secular_warnings: usize,
}

impl SweepRow {
    pub fn result(&self, method: Method) -> Option<&Result<PointEvaluation, ObservableError>> {
        match method {
            Method::Numerical => self.numerical.as_ref(),
            Method::Approximate => self.approximate.as_ref(),
            _ => None,
        }
    }

    /// The successful evaluation for `method`, if any.
    pub fn evaluation(&self, method: Method) -> Option<&PointEvaluation> {
        self.result(method).and_then(|r| r.as_ref().ok())
    }

    pub fn amplification(&self, method: Method) -> Option<&Result<Amplification, ObservableError>> {
        match method {
            Method::Numerical => self.amplification_numerical.as_ref(),
            Method::Approximate => self.amplification_approximate.as_ref(),
            _ => None,
        }
    }

    /// True when any requested computation in this row failed.
    pub fn is_flagged(&self) -> bool {
        let eval_failed = [&self.numerical, &self.approximate].iter().any(|r| matches!(r, Some(Err(_))));
        let amp_failed = [&self.amplification_numerical, &self.amplification_approximate]
            .iter()
            .any(|r| matches!(r, Some(Err(_))));
        eval_failed || amp_failed
    }
}

fn evaluate_row(spec: &SweepSpec, t: f64, secular_warnings: usize) -> Result<SweepRow, SweepError> {
    let baths = spec.fixed.with(spec.variable, t)?;
    let run = |m: Method| spec.methods.contains(&m).then(|| evaluate_point(&spec.params, &baths, m));
    Ok(SweepRow {
        t,
        baths,
        numerical: run(Method::Numerical),
        approximate: run(Method::Approximate),
        amplification_numerical: None,
        amplification_approximate: None,
        secular_warnings,
    })
}

/// `None` when the stencil difference of `Q̇_M` sits inside the rounding
/// noise of one of the rows it uses.
fn stencil_amplification(rows: &[SweepRow], k: usize, method: Method) -> Result<Option<Amplification>, ObservableError> {
    let n = rows.len();
    let (idx, weights): (Vec<usize>, Vec<f64>) = if n == 2 {
        (vec![0, 1], vec![-1.0, 1.0])
    } else if k == 0 {
        (vec![0, 1, 2], vec![-3.0, 4.0, -1.0])
    } else if k == n - 1 {
        (vec![n - 3, n - 2, n - 1], vec![1.0, -4.0, 3.0])
    } else {
        (vec![k - 1, k + 1], vec![-1.0, 1.0])
    };
    let mut evals = Vec::with_capacity(idx.len());
    for &i in &idx {
        match rows[i].result(method) {
            Some(Ok(e)) => evals.push(e),
            Some(Err(e)) => return Err(e.clone()),
            None => unreachable!("amplification requested for a method that was not run"),
        }
    }
    let mut derivative = BathMap::from_fn(|_| zero());
    let mut scale = zero();
    for (eval, &w) in evals.iter().zip(&weights) {
        for bath in Bath::ALL {
            derivative[bath] = &derivative[bath] + real(w) * &eval.currents[bath];
            let a = abs(&eval.currents[bath]);
            if a > scale {
                scale = a;
            }
        }
    }
    if !evals.iter().all(|e| e.resolves(&(real(4.0) * &derivative[Bath::M]))) {
        return Ok(None);
    }
    if abs(&derivative[Bath::M]) <= real(1e-14) * scale {
        return Err(ObservableError::VanishingModulationSensitivity {
            t_m: rows[k].t,
            delta: to_f64(&derivative[Bath::M]),
        });
    }
    Ok(Some(Amplification {
        alpha_l: to_f64(&(&derivative[Bath::L] / &derivative[Bath::M])),
        alpha_r: to_f64(&(&derivative[Bath::R] / &derivative[Bath::M])),
    }))
}

fn private_amplification(spec: &SweepSpec, row: &SweepRow, h: f64, method: Method) -> Result<Amplification, ObservableError> {
    let a = amplification_factors_with(&spec.params, &row.baths, row.t, h, method)?;
    Ok(Amplification { alpha_l: a.alpha_l, alpha_r: a.alpha_r })
}

/// Evaluate every grid point. Per-point failures are stored in the row;
/// only an invalid spec is an error. Parallel and serial runs give
/// identical rows.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    spec.validate()?;
    let warnings = validate_secular(&spec.params).warnings.len();
    let mut rows: Vec<SweepRow> = if spec.parallel {
        spec.grid.par_iter().map(|&t| evaluate_row(spec, t, warnings)).collect::<Result<_, _>>()?
    } else {
        spec.grid.iter().map(|&t| evaluate_row(spec, t, warnings)).collect::<Result<_, _>>()?
    };

    let private_h = match spec.amplification {
        AmplificationMode::Off => return Ok(rows),
        AmplificationMode::Auto if spec.is_uniform() => None,
        AmplificationMode::Auto => Some(DEFAULT_STEP),
        AmplificationMode::PrivateStep { h } => Some(h),
    };
    let amplify = |k: usize, method: Method| -> Option<Result<Amplification, ObservableError>> {
        if !spec.methods.contains(&method) {
            return None;
        }
        Some(match private_h {
            None => match stencil_amplification(&rows, k, method) {
                Ok(Some(a)) => Ok(a),
                Ok(None) => private_amplification(spec, &rows[k], DEFAULT_STEP, method),
                Err(e) => Err(e),
            },
            Some(h) => private_amplification(spec, &rows[k], h, method),
        })
    };
    let compute = |k: usize| (amplify(k, Method::Numerical), amplify(k, Method::Approximate));
    let amps: Vec<_> = if spec.parallel {
        (0..rows.len()).into_par_iter().map(compute).collect()
    } else {
        (0..rows.len()).map(compute).collect()
    };
    for (row, (num, apx)) in rows.iter_mut().zip(amps) {
        row.amplification_numerical = num;
        row.amplification_approximate = apx;
    }
    Ok(rows)
}

fn abs_q_r(row: &SweepRow) -> Result<f64, SweepError> {
    row.evaluation(Method::Numerical)
        .map(|e| e.report.q_r().abs())
        .ok_or(SweepError::MissingRow { t: row.t, method: Method::Numerical })
}

/// Smallest temperature at which `|Q̇_R|` (numerical) first exceeds
/// `cutoff`, linearly interpolated between the bracketing rows.
pub fn detect_switch_threshold(rows: &[SweepRow], cutoff: f64) -> Result<f64, SweepError> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(SweepError::InvalidCutoff(cutoff));
    }
    let mut previous: Option<(f64, f64)> = None;
    for row in rows {
        let q = abs_q_r(row)?;
        if q > cutoff {
            return Ok(match previous {
                None => row.t,
                Some((t0, q0)) => t0 + (cutoff - q0) / (q - q0) * (row.t - t0),
            });
        }
        previous = Some((row.t, q));
    }
    Err(SweepError::NeverExceeds { cutoff })
}

/// Index of the last row of the longest prefix on which `max − min` of the
/// series stays within `rel_tol · mean|·|`.
fn flat_prefix(values: &[f64], rel_tol: f64) -> usize {
    let (mut lo, mut hi, mut abs_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let mut last = 0;
    for (k, &v) in values.iter().enumerate() {
        lo = lo.min(v);
        hi = hi.max(v);
        abs_sum += v.abs();
        let mean = abs_sum / (k + 1) as f64;
        if hi - lo > rel_tol * mean {
            break;
        }
        last = k;
    }
    last
}

/// Closed interval of temperatures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Maximal prefix `[t_0, T*]` of the grid on which both `Q̇_L` and `Q̇_R`
/// (numerical) stay flat to `rel_tol`.
pub fn detect_stability_plateau(rows: &[SweepRow], rel_tol: f64) -> Result<Interval, SweepError> {
    let mut q_l = Vec::with_capacity(rows.len());
    let mut q_r = Vec::with_capacity(rows.len());
    for row in rows {
        let e = row
            .evaluation(Method::Numerical)
            .ok_or(SweepError::MissingRow { t: row.t, method: Method::Numerical })?;
        q_l.push(e.report.q_l());
        q_r.push(e.report.q_r());
    }
    let end = flat_prefix(&q_l, rel_tol).min(flat_prefix(&q_r, rel_tol));
    if end == 0 {
        return Err(SweepError::EmptyPlateau);
    }
    Ok(Interval { lo: rows[0].t, hi: rows[end].t })
}

/// Finite-difference gain `ΔQ̇_output / ΔQ̇_variable` on one grid segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentGain {
    pub t_lo: f64,
    pub t_hi: f64,
    pub gain: f64,
}

/// Gains of `output` with respect to the swept terminal's own current along
/// consecutive rows. Segments with a failed row, or with a modulating-current
/// change below [`SEGMENT_NOISE_FLOOR`] of its largest magnitude, are skipped.
pub fn segment_gains(rows: &[SweepRow], variable: Bath, output: Bath, method: Method) -> Vec<SegmentGain> {
    let evals: Vec<Option<&PointEvaluation>> = rows.iter().map(|r| r.evaluation(method)).collect();
    let peak = evals
        .iter()
        .flatten()
        .map(|e| abs(&e.currents[variable]))
        .fold(zero(), |m, q| if q > m { q } else { m });
    let floor = real(SEGMENT_NOISE_FLOOR) * peak;
    let mut out = Vec::new();
    for k in 1..rows.len() {
        let (Some(a), Some(b)) = (evals[k - 1], evals[k]) else { continue };
        let d_mod: Real = &b.currents[variable] - &a.currents[variable];
        if abs(&d_mod) <= floor {
            continue;
        }
        let d_out = &b.currents[output] - &a.currents[output];
        out.push(SegmentGain { t_lo: rows[k - 1].t, t_hi: rows[k].t, gain: to_f64(&(d_out / d_mod)) });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    FigB6,
    FigB7,
    FigB8,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::FigB6,
        FigureId::FigB7,
        FigureId::FigB8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::FigB6 => "figB6",
            FigureId::FigB7 => "figB7",
            FigureId::FigB8 => "figB8",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SweepError::UnknownFigure(s.to_string()))
    }
}

pub const DEFAULT_GRID_POINTS: usize = 200;

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Published parameter set, swept terminal and default grid for a figure.
pub fn figure_preset(id: FigureId) -> SweepSpec {
    let (variable, fixed, hi) = match id {
        FigureId::Fig2 | FigureId::Fig3 | FigureId::Fig4 => (Bath::M, (2.0, 0.0, 0.2), 2.0),
        FigureId::Fig5 => (Bath::R, (2.0, 1.5, 0.0), 2.0),
        FigureId::FigB6 => (Bath::L, (0.0, 4.0, 2.0), 6.0),
        FigureId::FigB7 => (Bath::R, (2.0, 4.0, 0.0), 2.0),
        FigureId::FigB8 => (Bath::L, (0.0, 1.5, 2.0), 6.0),
    };
    let fixed = BathSet::new(fixed.0, fixed.1, fixed.2).expect("preset temperatures are valid");
    let mut spec = SweepSpec::new(
        variable,
        uniform_grid(0.01, hi, DEFAULT_GRID_POINTS),
        fixed,
        SystemParams::reference(),
    );
    if id == FigureId::Fig4 {
        spec.amplification = AmplificationMode::Auto;
    }
    spec
}
