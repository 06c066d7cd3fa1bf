//! Invariant battery run by the `validate` subcommand.

use std::fmt;

use qtt_core::observables::{amplification_factors, transport, transport_from_state, ObservableError, DEFAULT_STEP};
use qtt_core::steadystate::ode_horizon;
use qtt_core::{
    assemble_paper_m, diagonalize, evolve_ode, generator_for, solve_full_liouvillian, solve_numerical,
    Bath, BathSet, Method, SystemParams,
};

use crate::config::RunConfig;

pub const ORACLE_TOL: f64 = 1e-8;
pub const GIBBS_TOL: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-6;
pub const M_MATRIX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// The check has nothing to judge at this configuration.
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn judged(name: &'static str, ok: bool, detail: String) -> Self {
        Self { name, status: if ok { Status::Pass } else { Status::Fail }, detail }
    }

    fn failed(name: &'static str, err: impl fmt::Display) -> Self {
        Self { name, status: Status::Fail, detail: err.to_string() }
    }
}

fn conservation(params: &SystemParams, baths: &BathSet, inject_fault: bool) -> Check {
    const NAME: &str = "conservation";
    let eig = diagonalize(params);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let numerical = match generator_for(params, baths) {
        Ok(w) => {
            let w = if inject_fault { w.with_injected_fault() } else { w };
            solve_numerical(&w).map(|s| transport_from_state(&s, &w, &eig)).map_err(|e| format!("num: {e}"))
        }
        Err(e) => Err(e.to_string()),
    };
    let approximate = transport(params, baths, Method::Approximate).map_err(|e| format!("apx: {e}"));
    for report in [numerical, approximate] {
        match report {
            Ok(r) => {
                ok &= r.is_conserving();
                worst = worst.max(r.relative_residual().unwrap_or(0.0));
            }
            Err(e) => return Check::failed(NAME, e),
        }
    }
    Check::judged(NAME, ok, format!("max |Q_L+Q_M+Q_R|/max|Q| = {worst:.2e}"))
}

fn gibbs(params: &SystemParams, t: f64) -> Check {
    const NAME: &str = "gibbs";
    if t <= 0.0 {
        return Check { name: NAME, status: Status::Skip, detail: "needs t_l > 0".into() };
    }
    let baths = BathSet::uniform(t).expect("t > 0");
    let state = match generator_for(params, &baths).map_err(|e| e.to_string()).and_then(|w| solve_numerical(&w).map_err(|e| e.to_string())) {
        Ok(s) => s,
        Err(e) => return Check::failed(NAME, e),
    };
    let eig = diagonalize(params);
    let weights: Vec<f64> = eig.eigenvalues.iter().map(|e| (-e / t).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut worst: f64 = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let expected = w / z;
        if expected > 1e-12 {
            worst = worst.max(((state.populations[k] - expected) / expected).abs());
        }
    }
    Check::judged(NAME, worst < GIBBS_TOL, format!("T = {t}: max relative error vs Boltzmann {worst:.2e}"))
}

fn oracle_triangle(params: &SystemParams, baths: &BathSet) -> Check {
    const NAME: &str = "oracle-triangle";
    let run = || -> Result<f64, String> {
        let w = generator_for(params, baths).map_err(|e| e.to_string())?;
        let num = solve_numerical(&w).map_err(|e| e.to_string())?;
        let horizon = ode_horizon(&w).map_err(|e| e.to_string())?;
        let ode = evolve_ode(&w, [1.0 / 6.0; 6], horizon).map_err(|e| format!("ode: {e}"))?;
        let full = solve_full_liouvillian(params, baths).map_err(|e| format!("liouvillian: {e}"))?;
        let mut worst: f64 = 0.0;
        for k in 0..6 {
            worst = worst
                .max((num.populations[k] - ode.populations[k]).abs())
                .max((num.populations[k] - full.populations[k]).abs())
                .max((ode.populations[k] - full.populations[k]).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => Check::judged(NAME, worst < ORACLE_TOL, format!("max pairwise population difference {worst:.2e}")),
        Err(e) => Check::failed(NAME, e),
    }
}

fn alpha_identity(params: &SystemParams, baths: &BathSet) -> Check {
    const NAME: &str = "alpha-identity";
    let t_m = baths.get(Bath::M);
    if t_m <= DEFAULT_STEP {
        return Check { name: NAME, status: Status::Skip, detail: format!("needs t_m > {DEFAULT_STEP}") };
    }
    match amplification_factors(params, baths, t_m, DEFAULT_STEP) {
        Ok(a) => {
            let dev = (a.alpha_l + a.alpha_r + 1.0).abs();
            Check::judged(
                NAME,
                dev < IDENTITY_TOL,
                format!("alpha_L = {:.6}, alpha_R = {:.6}, |alpha_L+alpha_R+1| = {dev:.2e}", a.alpha_l, a.alpha_r),
            )
        }
        Err(e @ ObservableError::VanishingModulationSensitivity { .. }) => {
            Check { name: NAME, status: Status::Skip, detail: e.to_string() }
        }
        Err(e) => Check::failed(NAME, e),
    }
}

fn m_matrix(params: &SystemParams, baths: &BathSet) -> Check {
    const NAME: &str = "m-matrix";
    let w = match generator_for(params, baths) {
        Ok(w) => w,
        Err(e) => return Check::failed(NAME, e),
    };
    let mut worst: f64 = 0.0;
    for bath in Bath::ALL {
        let m = assemble_paper_m(bath, baths, params);
        let scale = m.amax();
        if scale > 0.0 {
            worst = worst.max((w.bath(bath) - m).amax() / scale);
        }
    }
    Check::judged(NAME, worst < M_MATRIX_TOL, format!("max ||W_mu - M_mu||/||M_mu|| = {worst:.2e}"))
}

/// Run every check at the configured point. `inject_fault` corrupts one
/// rate in the conservation check.
pub fn run_battery(config: &RunConfig, inject_fault: bool) -> Vec<Check> {
    let (p, b) = (&config.params, &config.baths);
    vec![
        conservation(p, b, inject_fault),
        gibbs(p, b.get(Bath::L)),
        oracle_triangle(p, b),
        alpha_identity(p, b),
        m_matrix(p, b),
    ]
}

pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    checks.iter().map(|c| format!("{:width$}  {}  {}\n", c.name, c.status, c.detail)).collect()
}
