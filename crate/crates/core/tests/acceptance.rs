//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use qtt_core::model::SystemParams;
use qtt_core::observables::{amplification_factors_with, transport, transport_from_state, DEFAULT_STEP};
use qtt_core::steadystate::{evolve_ode, ode_horizon, full_liouvillian_density};
use qtt_core::sweeps::{detect_stability_plateau, figure_preset, run_sweep, segment_gains, FigureId, SweepRow};
use qtt_core::{
    assemble_paper_m, diagonalize, generator_for, solve_full_liouvillian, solve_numerical, validate_secular, Bath,
    BathMap, BathSet, Method,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Reference values computed independently in 50-digit arithmetic.
const ALPHA_L_REF: f64 = 5.749;
const ALPHA_R_REF: f64 = -6.749;
const Q_R_AT_0_2: f64 = -7.609176982110893e-12;
const Q_R_AT_2: f64 = -1.370975226646992e-9;
const PLATEAU_END_REF: f64 = 1.71;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fig2_baths(t_m: f64) -> BathSet {
    BathSet::new(2.0, t_m, 0.2).unwrap()
}

fn numerical(row: &SweepRow) -> &qtt_core::observables::PointEvaluation {
    row.evaluation(Method::Numerical).expect("numerical evaluation")
}

fn nearest(rows: &[SweepRow], t: f64) -> &SweepRow {
    rows.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())).unwrap()
}

fn c1_point_value() -> Outcome {
    let p = SystemParams::reference();
    let start = Instant::now();
    let num = amplification_factors_with(&p, &fig2_baths(2.0), 2.0, DEFAULT_STEP, Method::Numerical).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let apx = amplification_factors_with(&p, &fig2_baths(2.0), 2.0, DEFAULT_STEP, Method::Approximate).unwrap();
    let rel = |a: f64, r: f64| ((a - r) / r).abs();
    let within = |l: f64, r: f64| rel(l, ALPHA_L_REF) <= 0.05 && rel(r, ALPHA_R_REF) <= 0.05;
    let err_num = rel(num.alpha_l, ALPHA_L_REF);
    let err_apx = rel(apx.alpha_l, ALPHA_L_REF);
    let closer = if err_num <= err_apx { "numerical" } else { "approximate" };
    outcome(
        within(num.alpha_l, num.alpha_r) && within(apx.alpha_l, apx.alpha_r) && elapsed < 1.0,
        format!(
            "num alpha_L={:.6} alpha_R={:.6}; apx alpha_L={:.6} alpha_R={:.6}; closer: {closer}; {:.3}s",
            num.alpha_l, num.alpha_r, apx.alpha_l, apx.alpha_r, elapsed
        ),
    )
}

fn c2_identity(fig4: &[SweepRow], elapsed: f64) -> Outcome {
    let mut defined = 0;
    let mut worst: f64 = 0.0;
    for row in fig4 {
        if let Some(Ok(a)) = row.amplification(Method::Numerical) {
            defined += 1;
            worst = worst.max((a.alpha_l + a.alpha_r + 1.0).abs());
        }
    }
    outcome(
        defined > 0 && worst < 1e-6 && elapsed < 5.0,
        format!("{defined}/{} points defined, max |alpha_L+alpha_R+1| = {worst:.2e}; sweep {elapsed:.2}s", fig4.len()),
    )
}

fn c3_plateau(fig4: &[SweepRow]) -> Outcome {
    let (lo, hi) = (16.0, 24.0);
    let mut inside = 0;
    let mut total = 0;
    let mut failures = Vec::new();
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in fig4.iter().filter(|r| r.t >= 0.05 - 1e-12 && r.t <= 0.5 + 1e-12) {
        total += 1;
        match row.amplification(Method::Numerical) {
            Some(Ok(a)) => {
                let m = a.alpha_l.abs();
                min = min.min(a.alpha_l);
                max = max.max(a.alpha_l);
                if (lo..=hi).contains(&m) {
                    inside += 1;
                } else {
                    failures.push(format!("{:.2}:{:.2}", row.t, a.alpha_l));
                }
            }
            _ => failures.push(format!("{:.2}:undefined", row.t)),
        }
    }
    outcome(
        total > 0 && failures.is_empty(),
        format!(
            "|alpha_L| in [{lo}, {hi}] at {inside}/{total} points; alpha_L range [{min:.3}, {max:.3}]; outside: {}",
            if failures.is_empty() { "none".into() } else { failures.join(" ") }
        ),
    )
}

fn c4_conservation(all: &[(FigureId, Vec<SweepRow>)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut points = 0;
    for (id, rows) in all {
        for row in rows {
            for method in [Method::Numerical, Method::Approximate] {
                match row.result(method) {
                    Some(Ok(e)) => {
                        points += 1;
                        if let Some(r) = e.report.relative_residual() {
                            worst = worst.max(r);
                        }
                        if !e.report.is_conserving() {
                            bad.push(format!("{id}/{method}@{}", row.t));
                        }
                    }
                    Some(Err(e)) => bad.push(format!("{id}/{method}@{}: {e}", row.t)),
                    None => {}
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{points} evaluations, worst relative residual {worst:.2e}, violations: {}", bad.len()),
    )
}

fn c5_equilibrium() -> Outcome {
    let p = SystemParams::reference();
    let baths = BathSet::uniform(2.0).unwrap();
    let report = transport(&p, &baths, Method::Numerical).unwrap();
    let state = solve_numerical(&generator_for(&p, &baths).unwrap()).unwrap();
    let eig = diagonalize(&p);
    let weights: Vec<f64> = eig.eigenvalues.iter().map(|e| (-e / 2.0).exp()).collect();
    let z: f64 = weights.iter().sum();
    let gibbs_err = weights
        .iter()
        .zip(state.populations.iter())
        .map(|(w, p)| ((p - w / z) / (w / z)).abs())
        .fold(0.0, f64::max);
    let q = report.max_abs();
    outcome(q < 1e-15 && gibbs_err < 1e-10, format!("max|Q| = {q:.2e}, Gibbs relative error {gibbs_err:.2e}"))
}

fn random_valid_params(rng: &mut ChaCha8Rng) -> (SystemParams, BathSet) {
    loop {
        let e1 = rng.gen_range(2.0..6.0);
        let e2 = rng.gen_range(15.0..50.0);
        let g = rng.gen_range(0.2..0.85) * e1;
        let gamma = BathMap::from_fn(|_| rng.gen_range(0.005..0.05));
        let p = SystemParams::new(e1, e2, e1 + e2, g, gamma).unwrap();
        if !validate_secular(&p).is_valid() {
            continue;
        }
        let baths = BathSet::new(rng.gen_range(0.3..4.0), rng.gen_range(0.3..4.0), rng.gen_range(0.3..4.0)).unwrap();
        return (p, baths);
    }
}

fn c6_oracle_triangle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut worst_off): (f64, f64) = (0.0, 0.0);
    let mut failures = 0;
    for _ in 0..20 {
        let (p, baths) = random_valid_params(&mut rng);
        let w = generator_for(&p, &baths).unwrap();
        let num = solve_numerical(&w).unwrap();
        let ode = evolve_ode(&w, [1.0 / 6.0; 6], ode_horizon(&w).unwrap());
        let full = solve_full_liouvillian(&p, &baths);
        let density = full_liouvillian_density(&p, &baths).unwrap();
        worst_off = worst_off.max(density.max_off_diagonal);
        match (ode, full) {
            (Ok(ode), Ok(full)) => {
                for k in 0..6 {
                    let a = num.populations[k];
                    let b = ode.populations[k];
                    let c = full.populations[k];
                    worst = worst.max((a - b).abs()).max((a - c).abs()).max((b - c).abs());
                }
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst < 1e-8 && worst_off < 1e-10,
        format!("20 draws, max pairwise difference {worst:.2e}, max off-diagonal {worst_off:.2e}, solver failures {failures}"),
    )
}

fn c7_approximate_fidelity(fig2: &[SweepRow]) -> Outcome {
    let mut max_dev: f64 = 0.0;
    let mut order_violations = Vec::new();
    for row in fig2 {
        let num = numerical(row).state.populations;
        let apx = row.evaluation(Method::Approximate).expect("approximate").state.populations;
        for k in 0..6 {
            max_dev = max_dev.max((num[k] - apx[k]).abs());
        }
        let (r11, r22, r44) = (num[0], num[1], num[3]);
        if !(r11 < r22 && r44 < r22 && r11 <= r44 && r44 < 0.2 * r22) {
            order_violations.push(format!("{:.2}", row.t));
        }
    }
    outcome(
        max_dev < 0.02 && order_violations.is_empty(),
        format!("max |apx-num| = {max_dev:.2e}; ordering violations at {} points", order_violations.len()),
    )
}

fn c8_generator_cross_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let e1 = rng.gen_range(1.0..8.0);
        let e2 = rng.gen_range(10.0..60.0);
        let g = rng.gen_range(0.05..0.95) * e1;
        let gamma = BathMap::from_fn(|_| rng.gen_range(0.001..0.1));
        let p = SystemParams::new(e1, e2, e1 + e2, g, gamma).unwrap();
        let baths = BathSet::new(rng.gen_range(0.05..6.0), rng.gen_range(0.05..6.0), rng.gen_range(0.05..6.0)).unwrap();
        let w = generator_for(&p, &baths).unwrap();
        for bath in Bath::ALL {
            let m = assemble_paper_m(bath, &baths, &p);
            let rel = (w.bath(bath) - m).amax() / m.amax();
            worst = worst.max(rel);
        }
    }
    outcome(worst < 1e-12, format!("50 draws, max ||W-M||/||M|| = {worst:.2e}"))
}

fn c9_switch(fig3: &[SweepRow]) -> Outcome {
    let frozen = (Q_R_AT_0_2 / Q_R_AT_2).abs();
    let (low, high) = (nearest(fig3, 0.2), nearest(fig3, 2.0));
    let ratio = (numerical(low).report.q_r() / numerical(high).report.q_r()).abs();

    let p = SystemParams::reference();
    let ode_q_r = |t: f64| {
        let baths = BathSet::new(2.0, t, 0.2).unwrap();
        let w = generator_for(&p, &baths).unwrap();
        let s = evolve_ode(&w, [1.0 / 6.0; 6], ode_horizon(&w).unwrap()).unwrap();
        transport_from_state(&s, &w, &diagonalize(&p)).q_r()
    };
    let ode_ratio = (ode_q_r(low.t) / ode_q_r(high.t)).abs();
    let band = |r: f64| (r - frozen).abs() <= 0.1 * frozen;
    outcome(
        (low.t - 0.2).abs() < 1e-9 && ratio < 0.05 && band(ratio) && band(ode_ratio),
        format!("|Q_R(0.2)|/|Q_R(2)| = {ratio:.6e} (ode {ode_ratio:.6e}, reference {frozen:.6e})"),
    )
}

fn c10_stabilizer(fig5: &[SweepRow]) -> Outcome {
    match detect_stability_plateau(fig5, 0.05) {
        Ok(iv) => outcome(
            iv.hi >= 0.4 && (iv.hi - PLATEAU_END_REF).abs() <= 0.1 * PLATEAU_END_REF,
            format!("plateau [{:.3}, {:.3}], reference end {PLATEAU_END_REF}", iv.lo, iv.hi),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn max_gain(rows: &[SweepRow], variable: Bath, output: Bath) -> f64 {
    segment_gains(rows, variable, output, Method::Numerical)
        .iter()
        .map(|s| s.gain.abs())
        .fold(0.0, f64::max)
}

fn c11_alternate_terminals(b6: &[SweepRow], b7: &[SweepRow]) -> Outcome {
    // Sweeping T_L makes L the modulating terminal, so the gain is read off
    // the other terminals; sweeping T_R reads it off L.
    let b6_r = max_gain(b6, Bath::L, Bath::R);
    let b6_m = max_gain(b6, Bath::L, Bath::M);
    let b7_l = max_gain(b7, Bath::R, Bath::L);
    outcome(
        b6_r.max(b6_m) > 1.0 && b7_l > 1.0,
        format!("figB6 max |dQ_R/dQ_L| = {b6_r:.4}, |dQ_M/dQ_L| = {b6_m:.4}; figB7 max |dQ_L/dQ_R| = {b7_l:.4}"),
    )
}

fn main() -> ExitCode {
    let sweep = |id: FigureId| {
        let start = Instant::now();
        let rows = run_sweep(&figure_preset(id)).unwrap();
        (rows, start.elapsed().as_secs_f64())
    };
    let (fig4, fig4_time) = sweep(FigureId::Fig4);
    let all: Vec<(FigureId, Vec<SweepRow>)> = FigureId::ALL
        .into_iter()
        .map(|id| (id, if id == FigureId::Fig4 { fig4.clone() } else { sweep(id).0 }))
        .collect();
    let rows = |id: FigureId| &all.iter().find(|(i, _)| *i == id).unwrap().1;

    let results = [
        ("amplification point value", c1_point_value()),
        ("amplification identity", c2_identity(&fig4, fig4_time)),
        ("stable-amplification plateau", c3_plateau(&fig4)),
        ("energy conservation", c4_conservation(&all)),
        ("equilibrium", c5_equilibrium()),
        ("oracle triangle", c6_oracle_triangle()),
        ("approximate-solution fidelity", c7_approximate_fidelity(rows(FigureId::Fig2))),
        ("generator cross-check", c8_generator_cross_check()),
        ("switch phenomenology", c9_switch(rows(FigureId::Fig3))),
        ("stabilizer phenomenology", c10_stabilizer(rows(FigureId::Fig5))),
        ("alternate modulation terminals", c11_alternate_terminals(rows(FigureId::FigB6), rows(FigureId::FigB7))),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}: {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

