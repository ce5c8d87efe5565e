//! Command-line entry point.
//!
//! Exit codes: 0 success with all verdicts true and no taint, 1 for
//! configuration and usage problems, 2 for numerical failures or false
//! verdicts, 3 for io.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use crate::coefficients::{
    check_conditions, ms_closed_form_inverse, ms_invert_a0, MsCoefficients,
};
use crate::config::{parse_config, RunConfig};
use crate::error::Error;
use crate::experiments::{run_experiment, ExperimentKind, ExperimentOutcome};
use crate::linalg::SquareMatrix;
use crate::report;
use crate::solver::run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(
    name = "crossdiff",
    version,
    about = "Finite-volume solver and entropy diagnostics for cross-diffusion systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress the `# generated <seconds>` line in CSV output.
    #[arg(long, global = true)]
    no_header_time: bool,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system; write snapshots and diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the structural conditions of the configured model.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Sample count for the condition grid.
        #[arg(long, default_value_t = 512)]
        samples: usize,
    },
    /// Run the configured paired experiment and write its series + summary.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the friction matrix A0, invert it, and compare with the
    /// closed form available for equal cross-diffusion coefficients.
    MsInvert {
        /// Diagonal friction coefficient (species against solvent).
        #[arg(long, allow_hyphen_values = true)]
        d0: Option<f64>,
        /// Off-diagonal friction coefficient (species against species).
        #[arg(long, allow_hyphen_values = true)]
        d: Option<f64>,
        /// Concentrations, comma separated, one per species.
        #[arg(long)]
        u: String,
        /// File with a full (n+1)x(n+1) coefficient matrix, one row per
        /// line, entries separated by commas or spaces.
        #[arg(long)]
        d_matrix: Option<PathBuf>,
    },
}

pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_CONFIG
                }
            }
        }
    };
    let header_time = !cli.no_header_time;
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out, header_time, cli.verbose),
        Command::Check { config, samples } => cmd_check(&config, samples),
        Command::Experiment { config, out } => {
            cmd_experiment(&config, out, header_time, cli.verbose)
        }
        Command::MsInvert { d0, d, u, d_matrix } => cmd_ms_invert(d0, d, &u, d_matrix),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, i32> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_IO);
        }
    };
    match parse_config(&text) {
        Ok(cfg) => Ok(cfg),
        Err(issues) => {
            eprintln!(
                "error: {} problem{} in {}:",
                issues.len(),
                if issues.len() == 1 { "" } else { "s" },
                path.display()
            );
            for issue in issues {
                eprintln!("  {issue}");
            }
            Err(EXIT_CONFIG)
        }
    }
}

fn exit_for(e: &Error) -> i32 {
    e.exit_code()
}

fn write_file(
    dir: &Path,
    name: &str,
    header_time: bool,
    body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<(), i32> {
    let mut buf = Vec::new();
    let io_fail = |e: std::io::Error, what: &str| {
        eprintln!("error: cannot write {what}: {e}");
        EXIT_IO
    };
    report::write_time_header(&mut buf, header_time).map_err(|e| io_fail(e, name))?;
    body(&mut buf).map_err(|e| io_fail(e, name))?;
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| io_fail(e, &path.display().to_string()))?;
    Ok(())
}

fn prepare_outdir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, i32> {
    let dir = flag
        .or_else(|| cfg.outdir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return Err(EXIT_IO);
    }
    Ok(dir)
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>, header_time: bool, verbose: bool) -> i32 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let dir = match prepare_outdir(&cfg, out) {
        Ok(d) => d,
        Err(code) => return code,
    };
    let header_time = header_time && cfg.header_time;

    let state = crate::fields::SpeciesState::from_profiles(&cfg.grid, &cfg.initial);
    let f = crate::fields::Field::from_profile(&cfg.grid, &cfg.background);
    let traj = match run(&cfg.grid, &state, &cfg.model, &f, &cfg.scheme) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };

    let n = cfg.initial.len();
    if let Err(code) = write_file(&dir, "diagnostics.csv", header_time, |w| {
        report::write_diagnostics_csv(w, &traj.records, n)
    }) {
        return code;
    }
    for (idx, snap) in traj.snapshots.iter().enumerate() {
        let name = format!("state_{idx:06}.csv");
        if let Err(code) = write_file(&dir, &name, header_time, |w| {
            report::write_state_csv(w, &cfg.grid, &snap.state, cfg.model.weights(), &snap.poisson)
        }) {
            return code;
        }
        if verbose {
            println!("wrote {} (t = {:.6e})", dir.join(&name).display(), snap.t);
        }
    }

    print!("{}", report::render_run_summary(&traj, n));
    if traj.tainted {
        eprintln!("error: run is tainted by positivity clamping");
        return EXIT_NUMERICAL;
    }
    EXIT_OK
}

fn cmd_check(config_path: &Path, samples: usize) -> i32 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rep = match check_conditions(&cfg.model, samples) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    print!("{}", report::render_structural(&rep));
    if rep.cond1_ok && rep.cond2_ok {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn cmd_experiment(
    config_path: &Path,
    out: Option<PathBuf>,
    header_time: bool,
    verbose: bool,
) -> i32 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(spec) = cfg.experiment_spec() else {
        eprintln!("error: {} has no [experiment] section", config_path.display());
        return EXIT_CONFIG;
    };
    let dir = match prepare_outdir(&cfg, out) {
        Ok(d) => d,
        Err(code) => return code,
    };
    let header_time = header_time && cfg.header_time;

    let rep = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };

    if rep.kind == ExperimentKind::Refinement {
        if let ExperimentOutcome::Refinement {
            dx_ladder,
            dt_ladder,
            ..
        } = &rep.outcome
        {
            if let Err(code) = write_file(&dir, "refinement_dx.csv", header_time, |w| {
                report::write_dx_ladder_csv(w, dx_ladder)
            }) {
                return code;
            }
            if let Err(code) = write_file(&dir, "refinement_dt.csv", header_time, |w| {
                report::write_dt_ladder_csv(w, dt_ladder)
            }) {
                return code;
            }
        }
    } else {
        if let Err(code) = write_file(&dir, "series.csv", header_time, |w| {
            report::write_series_csv(w, &rep.series)
        }) {
            return code;
        }
    }
    let summary = report::render_experiment(&rep);
    if let Err(code) = write_file(&dir, "summary.txt", header_time, |w| {
        w.write_all(summary.as_bytes())
    }) {
        return code;
    }
    print!("{summary}");
    if verbose {
        println!("wrote outputs to {}", dir.display());
    }
    if rep.verdict {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: '{}'", p.trim()))
        })
        .collect()
}

fn read_matrix(path: &Path) -> Result<SquareMatrix, i32> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_IO);
        }
    };
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>())
            .collect();
        match row {
            Ok(r) => rows.push(r),
            Err(_) => {
                eprintln!("error: {}: bad matrix row: {line}", path.display());
                return Err(EXIT_CONFIG);
            }
        }
    }
    match SquareMatrix::from_rows(&rows) {
        Ok(m) => Ok(m),
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(EXIT_CONFIG)
        }
    }
}

fn cmd_ms_invert(d0: Option<f64>, d: Option<f64>, u: &str, d_matrix: Option<PathBuf>) -> i32 {
    let u = match parse_f64_list(u) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: --u: {e}");
            return EXIT_CONFIG;
        }
    };
    let n = u.len();

    let (ms, closed) = match (d_matrix, d0, d) {
        (Some(path), None, None) => {
            let m = match read_matrix(&path) {
                Ok(m) => m,
                Err(code) => return code,
            };
            if m.n() != n + 1 {
                eprintln!(
                    "error: matrix is {}x{} but {n} concentrations need {}x{}",
                    m.n(),
                    m.n(),
                    n + 1,
                    n + 1
                );
                return EXIT_CONFIG;
            }
            match MsCoefficients::new(m) {
                Ok(ms) => (ms, None),
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_for(&e);
                }
            }
        }
        (None, Some(d0), Some(d)) => match MsCoefficients::equal_coefficients(d0, d, n) {
            Ok(ms) => (ms, Some((d0, d))),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_for(&e);
            }
        },
        _ => {
            eprintln!("error: give either --d0 and --d, or --d-matrix");
            return EXIT_CONFIG;
        }
    };

    let a0 = match ms.build_a0(&u) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let inv = match ms_invert_a0(&a0) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let closed_form = closed.map(|(d0, d)| ms_closed_form_inverse(d0, d, &u));
    let rendered = match &closed_form {
        Some(cf) => {
            let disc = cf.max_abs_diff(&inv.inverse);
            report::render_ms_inversion(&a0, &inv, Some((cf, disc)))
        }
        None => report::render_ms_inversion(&a0, &inv, None),
    };
    print!("{rendered}");
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ms_invert_equal_coefficients_matches_closed_form() {
        let code = main_entry(["crossdiff", "ms-invert", "--d0", "2", "--d", "1", "--u", "0.2,0.3"]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn ms_invert_requires_a_source() {
        let code = main_entry(["crossdiff", "ms-invert", "--u", "0.2,0.3"]);
        assert_eq!(code, EXIT_CONFIG);
        let code = main_entry(["crossdiff", "ms-invert", "--d0", "2", "--u", "0.2"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn bad_flags_exit_with_config_code() {
        assert_eq!(main_entry(["crossdiff", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(main_entry(["crossdiff"]), EXIT_CONFIG);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(main_entry(["crossdiff", "--help"]), EXIT_OK);
    }
}
