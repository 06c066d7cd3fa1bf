//! CSV tables, `.meta` descriptions and gnuplot scripts.

use std::fmt::Write as _;

use qtt_core::observables::PointEvaluation;
use qtt_core::sweeps::{AmplificationMode, FigureId, SweepRow, SweepSpec};
use qtt_core::model::SecularReport;
use qtt_core::{Bath, Method};

use crate::CliError;

/// 17 significant digits.
pub fn number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".into()
    }
}

/// A header row plus data rows, all fields already formatted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Layout of a sweep table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    Populations,
    Currents,
    CurrentsWithAmplification,
}

impl Schema {
    pub fn for_figure(id: FigureId) -> Self {
        match id {
            FigureId::Fig2 => Schema::Populations,
            FigureId::Fig4 => Schema::CurrentsWithAmplification,
            _ => Schema::Currents,
        }
    }

    pub fn for_spec(spec: &SweepSpec) -> Self {
        match spec.amplification {
            AmplificationMode::Off => Schema::Currents,
            _ => Schema::CurrentsWithAmplification,
        }
    }

    pub fn columns(self) -> Vec<String> {
        let mut cols = Vec::new();
        match self {
            Schema::Populations => {
                cols.push("t_m".to_string());
                for method in ["num", "apx"] {
                    cols.extend((1..=6).map(|k| format!("rho{k}{k}_{method}")));
                }
                cols.push("rho22_over_rho44_num".into());
            }
            Schema::Currents | Schema::CurrentsWithAmplification => {
                cols.push("t_var".into());
                for method in ["num", "apx"] {
                    cols.extend(["ql", "qm", "qr"].iter().map(|q| format!("{q}_{method}")));
                }
                cols.push("conservation_residual".into());
                if self == Schema::CurrentsWithAmplification {
                    cols.extend(["alpha_l_num", "alpha_r_num", "alpha_l_apx", "alpha_r_apx"].map(String::from));
                }
            }
        }
        cols
    }
}

fn evaluation(row: &SweepRow, method: Method) -> Result<&PointEvaluation, CliError> {
    match row.result(method) {
        Some(Ok(e)) => Ok(e),
        Some(Err(e)) => Err(CliError::Solver(format!("{method} at t = {}: {e}", row.t))),
        None => Err(CliError::Solver(format!("{method} was not run at t = {}", row.t))),
    }
}

/// Lay out sweep rows. Amplification factors that are undefined at a row
/// are written as `nan` and listed in the returned notes.
pub fn sweep_table(rows: &[SweepRow], schema: Schema) -> Result<(Table, Vec<String>), CliError> {
    let mut table = Table { columns: schema.columns(), rows: Vec::with_capacity(rows.len()) };
    let mut notes = Vec::new();
    for row in rows {
        let num = evaluation(row, Method::Numerical)?;
        let apx = evaluation(row, Method::Approximate)?;
        let mut fields = vec![number(row.t)];
        match schema {
            Schema::Populations => {
                fields.extend(num.state.populations.iter().map(|&x| number(x)));
                fields.extend(apx.state.populations.iter().map(|&x| number(x)));
                fields.push(number(num.state.populations[1] / num.state.populations[3]));
            }
            Schema::Currents | Schema::CurrentsWithAmplification => {
                fields.extend(Bath::ALL.iter().map(|&b| number(num.report.currents[b])));
                fields.extend(Bath::ALL.iter().map(|&b| number(apx.report.currents[b])));
                fields.push(number(num.report.conservation_residual));
                if schema == Schema::CurrentsWithAmplification {
                    let mut alphas = [f64::NAN; 4];
                    for (k, method) in [Method::Numerical, Method::Approximate].into_iter().enumerate() {
                        match row.amplification(method) {
                            Some(Ok(a)) => {
                                alphas[2 * k] = a.alpha_l;
                                alphas[2 * k + 1] = a.alpha_r;
                            }
                            Some(Err(e)) => notes.push(format!("alpha ({method}) undefined at t = {}: {e}", row.t)),
                            None => {}
                        }
                    }
                    fields.extend(alphas.iter().map(|&a| number(a)));
                }
            }
        }
        table.rows.push(fields);
    }
    Ok((table, notes))
}

/// Parameters, grid, units and columns of one run. No timestamps, so
/// reruns give identical files.
pub fn meta(label: &str, spec: &SweepSpec, schema: Schema, secular: &SecularReport) -> String {
    let p = &spec.params;
    let t = &spec.fixed;
    let mut out = String::new();
    let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
    put("figure", label.into());
    put("tool", format!("qtt {}", env!("CARGO_PKG_VERSION")));
    put("e1", p.e1.to_string());
    put("e2", p.e2.to_string());
    put("e3", p.e3.to_string());
    put("g", p.g.to_string());
    put("gamma_l", p.gamma[Bath::L].to_string());
    put("gamma_m", p.gamma[Bath::M].to_string());
    put("gamma_r", p.gamma[Bath::R].to_string());
    for bath in Bath::ALL {
        let key = format!("t_{}", bath.name().to_ascii_lowercase());
        if bath == spec.variable {
            put(&key, "swept".into());
        } else {
            put(&key, t.get(bath).to_string());
        }
    }
    put("swept", format!("t_{}", spec.variable.name().to_ascii_lowercase()));
    put("grid_from", spec.grid[0].to_string());
    put("grid_to", spec.grid[spec.grid.len() - 1].to_string());
    put("grid_points", spec.grid.len().to_string());
    put(
        "amplification",
        match spec.amplification {
            AmplificationMode::Off => "off".into(),
            AmplificationMode::Auto => "auto (grid stencil, private step 1e-3 where unresolved)".into(),
            AmplificationMode::PrivateStep { h } => format!("central difference, step {h}"),
        },
    );
    put("units_energy", "E (all energies and temperatures, k_B = 1)".into());
    put("units_current", "E^2 (hbar = 1)".into());
    put("units_population", "dimensionless".into());
    put("secular_warnings", secular.warnings.len().to_string());
    put("secular_max_ratio", secular.max_ratio.to_string());
    put("columns", schema.columns().join(","));
    out
}

/// A gnuplot script that plots `<label>.csv` into `<label>.png`.
pub fn gnuplot(label: &str, schema: Schema, variable: Bath) -> String {
    let axis = format!("T_{} / E", variable.name());
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "set datafile separator ','").unwrap();
    writeln!(w, "set terminal pngcairo size 900,600").unwrap();
    writeln!(w, "set output '{label}.png'").unwrap();
    writeln!(w, "set xlabel '{axis}'").unwrap();
    writeln!(w, "set key outside").unwrap();
    match schema {
        Schema::Populations => {
            writeln!(w, "set ylabel 'population'").unwrap();
            writeln!(w, "set logscale y").unwrap();
            let mut series = Vec::new();
            for k in 1..=6 {
                series.push(format!("'{label}.csv' using 1:{} with lines lt {k} title 'rho{k}{k} num'", k + 1));
                series.push(format!("'' using 1:{} with lines lt {k} dt 2 title 'rho{k}{k} apx'", k + 7));
            }
            writeln!(w, "plot {}", series.join(", \\\n     ")).unwrap();
        }
        Schema::Currents | Schema::CurrentsWithAmplification => {
            if schema == Schema::CurrentsWithAmplification {
                writeln!(w, "set multiplot layout 2,1").unwrap();
            }
            writeln!(w, "set ylabel 'heat current / E^2'").unwrap();
            let mut series = Vec::new();
            for (k, q) in ["Q_L", "Q_M", "Q_R"].iter().enumerate() {
                series.push(format!("'{label}.csv' using 1:{} with lines lt {} title '{q} num'", k + 2, k + 1));
                series.push(format!("'' using 1:{} with lines lt {} dt 2 title '{q} apx'", k + 5, k + 1));
            }
            writeln!(w, "plot {}", series.join(", \\\n     ")).unwrap();
            if schema == Schema::CurrentsWithAmplification {
                writeln!(w, "set ylabel 'amplification'").unwrap();
                writeln!(
                    w,
                    "plot '{label}.csv' using 1:9 with lines lt 1 title 'alpha_L num', \\\n     \
                     '' using 1:10 with lines lt 3 title 'alpha_R num', \\\n     \
                     '' using 1:11 with lines lt 1 dt 2 title 'alpha_L apx', \\\n     \
                     '' using 1:12 with lines lt 3 dt 2 title 'alpha_R apx'"
                )
                .unwrap();
                writeln!(w, "unset multiplot").unwrap();
            }
        }
    }
    out
}
