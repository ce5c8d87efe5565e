//! CSV emission and human-readable summaries.
//!
//! All numbers are written with 17 significant digits so files round-trip
//! losslessly. An optional `# generated <unix seconds>` first line is the
//! only output that varies between identical runs; everything below it is
//! byte-identical on re-runs.

use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::coefficients::{MsInversion, StructuralReport};
use crate::experiments::{ExperimentOutcome, ExperimentReport, SeriesRow};
use crate::fields::{Grid1D, SpeciesState};
use crate::linalg::SquareMatrix;
use crate::poisson::PoissonSolution;
use crate::solver::{StepRecord, Trajectory};

/// 17 significant digits round-trip f64 exactly.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_time_header(w: &mut impl Write, enabled: bool) -> io::Result<()> {
    if enabled {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(w, "# generated {secs}")?;
    }
    Ok(())
}

/// One snapshot: x, u1..un, u0, phi per cell.
pub fn write_state_csv(
    w: &mut impl Write,
    grid: &Grid1D,
    state: &SpeciesState,
    weights: &[f64],
    poisson: &PoissonSolution,
) -> io::Result<()> {
    let n = state.n();
    write!(w, "x")?;
    for i in 1..=n {
        write!(w, ",u{i}")?;
    }
    writeln!(w, ",u0,phi")?;
    let agg = state
        .aggregate(weights)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    for j in 0..grid.cells() {
        write!(w, "{}", num(grid.cell_center(j)))?;
        for u in &state.species {
            write!(w, ",{}", num(u.values[j]))?;
        }
        writeln!(w, ",{},{}", num(agg.values[j]), num(poisson.phi.values[j]))?;
    }
    Ok(())
}

/// Per-step diagnostics of a single run.
pub fn write_diagnostics_csv(
    w: &mut impl Write,
    records: &[StepRecord],
    n_species: usize,
) -> io::Result<()> {
    write!(w, "t,dt")?;
    for i in 1..=n_species {
        write!(w, ",mass_u{i}")?;
    }
    writeln!(w, ",entropy,max_abs_grad_phi,clamped_mass")?;
    for r in records {
        write!(w, "{},{}", num(r.t), num(r.dt))?;
        for m in &r.masses {
            write!(w, ",{}", num(*m))?;
        }
        writeln!(
            w,
            ",{},{},{}",
            num(r.entropy),
            num(r.max_abs_grad_phi),
            num(r.clamped_mass)
        )?;
    }
    Ok(())
}

/// Paired-run series: the decay diagnostics of an experiment.
pub fn write_series_csv(w: &mut impl Write, series: &[SeriesRow]) -> io::Result<()> {
    writeln!(w, "t,H_total,d_gajewski,d_relsym,lower_bound,hminus1")?;
    for r in series {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(r.t),
            num(r.h_total),
            num(r.d_gajewski),
            num(r.d_relsym),
            num(r.lower_bound),
            num(r.hminus1)
        )?;
    }
    Ok(())
}

pub fn write_dx_ladder_csv(w: &mut impl Write, ladder: &[(usize, f64, f64)]) -> io::Result<()> {
    writeln!(w, "cells,dt,diff")?;
    for (cells, dt, diff) in ladder {
        writeln!(w, "{cells},{},{}", num(*dt), num(*diff))?;
    }
    Ok(())
}

pub fn write_dt_ladder_csv(w: &mut impl Write, ladder: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "dt,diff")?;
    for (dt, diff) in ladder {
        writeln!(w, "{},{}", num(*dt), num(*diff))?;
    }
    Ok(())
}

fn verdict_word(v: bool) -> &'static str {
    if v {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_structural(r: &StructuralReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "structural conditions on [0, {:.6e}]{} with {} samples\n",
        r.span,
        if r.span_is_surrogate {
            " (surrogate interval, model is unbounded)"
        } else {
            ""
        },
        r.samples
    ));
    s.push_str(&format!(
        "  condition 1 (p >= 0 and p + q s >= 0): {}\n",
        verdict_word(r.cond1_ok)
    ));
    s.push_str(&format!(
        "    min p            = {:.6e} at s = {:.6e}\n",
        r.min_p, r.argmin_p
    ));
    s.push_str(&format!(
        "    min p + q s      = {:.6e} at s = {:.6e}\n",
        r.min_p_plus_qs, r.argmin_p_plus_qs
    ));
    s.push_str(&format!(
        "  condition 2 ((r + r' s)^2 / (p + q s) bounded): {}\n",
        verdict_word(r.cond2_ok)
    ));
    s.push_str(&format!(
        "    sup ratio (best M) = {:.6e} at s = {:.6e}\n",
        r.sup_ratio, r.arg_sup_ratio
    ));
    if r.r_prime_is_fd {
        s.push_str("  note: r' estimated by finite differences\n");
    }
    s
}

fn render_matrix(m: &SquareMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.n() {
        s.push_str("    [");
        for j in 0..m.n() {
            if j > 0 {
                s.push_str(", ");
            }
            s.push_str(&format!("{:+.12e}", m.get(i, j)));
        }
        s.push_str("]\n");
    }
    s
}

/// Inversion summary: the assembled matrix, its numerical inverse, the
/// closed-form inverse when one applies, and their discrepancy.
pub fn render_ms_inversion(
    a0: &SquareMatrix,
    inv: &MsInversion,
    closed_form: Option<(&SquareMatrix, f64)>,
) -> String {
    let mut s = String::new();
    s.push_str("A0:\n");
    s.push_str(&render_matrix(a0));
    s.push_str(&format!(
        "inverse (condition number {:.3e}, residual |A0 A0^-1 - I| = {:.3e}):\n",
        inv.cond, inv.residual
    ));
    s.push_str(&render_matrix(&inv.inverse));
    if let Some((cf, discrepancy)) = closed_form {
        s.push_str("closed form for equal cross coefficients:\n");
        s.push_str(&render_matrix(cf));
        s.push_str(&format!(
            "max entrywise discrepancy vs numerical inverse: {discrepancy:.3e}\n"
        ));
    }
    s
}

pub fn render_run_summary(traj: &Trajectory, n_species: usize) -> String {
    let mut s = String::new();
    let last = traj.records.last();
    s.push_str(&format!(
        "steps: {}, final t = {:.6e}\n",
        traj.steps,
        last.map(|r| r.t).unwrap_or(0.0)
    ));
    if let Some(r) = last {
        for i in 0..n_species {
            s.push_str(&format!("  mass u{} = {:.12e}\n", i + 1, r.masses[i]));
        }
        s.push_str(&format!("  entropy = {:.12e}\n", r.entropy));
        s.push_str(&format!("  max |grad phi| = {:.6e}\n", r.max_abs_grad_phi));
    }
    s.push_str(&format!(
        "clamped mass: {:.6e}{}\n",
        traj.total_clamped_mass,
        if traj.tainted { " (TAINTED)" } else { "" }
    ));
    s
}

pub fn render_experiment(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let kind = match r.kind {
        crate::experiments::ExperimentKind::Duplicate => "duplicate",
        crate::experiments::ExperimentKind::SameAggregate => "same_aggregate",
        crate::experiments::ExperimentKind::Gronwall => "gronwall",
        crate::experiments::ExperimentKind::Refinement => "refinement",
    };
    s.push_str(&format!("experiment: {kind}\n"));
    match &r.outcome {
        ExperimentOutcome::Duplicate { bitwise_identical } => {
            s.push_str(&format!(
                "  bitwise identical trajectories: {}\n",
                bitwise_identical
            ));
        }
        ExperimentOutcome::SameAggregate {
            worst_step_increase,
            max_aggregate_gap,
            final_l2_gap,
        } => {
            s.push_str(&format!(
                "  worst per-step semimetric increase (relative to d(0)): {worst_step_increase:.6e}\n"
            ));
            s.push_str(&format!(
                "  max aggregate gap over the run: {max_aggregate_gap:.6e}\n"
            ));
            s.push_str(&format!("  final L2 state distance: {final_l2_gap:.6e}\n"));
        }
        ExperimentOutcome::Gronwall {
            y0,
            y_max,
            c_hat_fit,
            c_hat_envelope,
        } => {
            s.push_str(&format!("  y(0) = {y0:.6e}, max y = {y_max:.6e}\n"));
            match c_hat_envelope {
                Some(c) => s.push_str(&format!(
                    "  smallest C with y(t) <= y(0) exp(C t): {c:.6e}\n"
                )),
                None => s.push_str("  envelope constant: undefined\n"),
            }
            match c_hat_fit {
                Some(c) => s.push_str(&format!("  least-squares log-slope: {c:.6e}\n")),
                None => s.push_str("  least-squares log-slope: undefined\n"),
            }
        }
        ExperimentOutcome::Refinement {
            dx_ladder,
            dt_ladder,
            order_dx,
            order_dt,
        } => {
            for (cells, dt, diff) in dx_ladder {
                s.push_str(&format!(
                    "  cells {cells:>6} (dt {dt:.3e}): diff to next {diff:.6e}\n"
                ));
            }
            match order_dx {
                Some(o) => s.push_str(&format!("  observed spatial order: {o:.3}\n")),
                None => s.push_str("  observed spatial order: undefined\n"),
            }
            for (dt, diff) in dt_ladder {
                s.push_str(&format!("  dt {dt:.6e}: diff to next {diff:.6e}\n"));
            }
            match order_dt {
                Some(o) => s.push_str(&format!("  observed temporal order: {o:.3}\n")),
                None => s.push_str("  observed temporal order: undefined\n"),
            }
        }
    }
    s.push_str(&format!("  max |grad phi|: {:.6e}\n", r.max_abs_grad_phi));
    if r.tainted {
        s.push_str("  TAINTED: positivity clamping exceeded its budget\n");
    }
    for note in &r.notes {
        s.push_str(&format!("  note: {note}\n"));
    }
    s.push_str(&format!("verdict: {}\n", verdict_word(r.verdict)));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::preset_skt;
    use crate::expr::ScalarFn;
    use crate::fields::Field;
    use crate::solver::{run, SchemeConfig};

    fn tiny_run() -> (Grid1D, Trajectory, Vec<f64>) {
        let grid = Grid1D::new(8, 1.0).unwrap();
        let model = preset_skt(1.0, &[1.0, 1.0], 3.0).unwrap();
        let state = SpeciesState::from_profiles(
            &grid,
            &[
                ScalarFn::parse("0.5+0.1*cos(pi*x)", "x").unwrap(),
                ScalarFn::Const(0.5),
            ],
        );
        let f = Field::constant(&grid, 1.0);
        let config = SchemeConfig {
            t_end: 1e-4,
            ..Default::default()
        };
        let traj = run(&grid, &state, &model, &f, &config).unwrap();
        (grid, traj, vec![1.0, 1.0])
    }

    #[test]
    fn csv_is_reproducible_and_parseable() {
        let (grid, traj, weights) = tiny_run();
        let snap = traj.snapshots.last().unwrap();

        let mut a = Vec::new();
        write_state_csv(&mut a, &grid, &snap.state, &weights, &snap.poisson).unwrap();
        let mut b = Vec::new();
        write_state_csv(&mut b, &grid, &snap.state, &weights, &snap.poisson).unwrap();
        assert_eq!(a, b);

        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,u1,u2,u0,phi");
        let mut rows = 0;
        for line in lines {
            let fields: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(fields.len(), 5);
            // u0 column is the weighted sum, round-tripped exactly
            assert_eq!(fields[1] + fields[2], fields[3]);
            rows += 1;
        }
        assert_eq!(rows, grid.cells());
    }

    #[test]
    fn seventeen_digit_roundtrip() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI,
            6.02e23,
            5e-324,
            -0.0,
            1.2345678901234567e-300,
        ] {
            let s = num(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn diagnostics_csv_has_expected_columns() {
        let (_, traj, _) = tiny_run();
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &traj.records, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,dt,mass_u1,mass_u2,entropy,max_abs_grad_phi,clamped_mass");
        assert_eq!(text.lines().count(), traj.records.len() + 1);
    }

    #[test]
    fn time_header_is_optional() {
        let mut with = Vec::new();
        write_time_header(&mut with, true).unwrap();
        assert!(String::from_utf8(with).unwrap().starts_with("# generated "));
        let mut without = Vec::new();
        write_time_header(&mut without, false).unwrap();
        assert!(without.is_empty());
    }

    #[test]
    fn renders_run_summary() {
        let (_, traj, _) = tiny_run();
        let s = render_run_summary(&traj, 2);
        assert!(s.contains("mass u1"));
        assert!(s.contains("clamped mass"));
        assert!(!s.contains("TAINTED"));
    }
}
