//! Exercises the installed binary end to end: exit codes per failure
//! category, error reporting, and byte-stable CSV output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossdiff"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const RUN_CONFIG: &str = r#"
[model]
preset = maxwell_stefan
D0 = 2.0
D = 1.0
n = 2

[grid]
cells = 32

[scheme]
t_end = 1e-4
auto_cfl = true
output_every = 2

[initial]
u1 = "0.3 + 0.05*cos(pi*x)"
u2 = 0.3
f = 0.6
"#;

#[test]
fn run_output_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.ini", RUN_CONFIG);
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");

    for out in [&out1, &out2] {
        let res = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .arg("--no-header-time")
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0), "stderr: {}", stderr(&res));
    }

    let names: Vec<String> = fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.contains(&"diagnostics.csv".to_string()));
    assert!(names.contains(&"state_000000.csv".to_string()));
    assert!(names.len() > 2, "expected intermediate snapshots: {names:?}");
    for name in &names {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }

    let diag = fs::read_to_string(out1.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,dt,mass_u1,mass_u2,entropy,max_abs_grad_phi,clamped_mass\n"));
    let state = fs::read_to_string(out1.join("state_000000.csv")).unwrap();
    assert!(state.starts_with("x,u1,u2,u0,phi\n"));
}

#[test]
fn time_header_is_on_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.ini", RUN_CONFIG);
    let out = tmp.path().join("out");
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "stderr: {}", stderr(&res));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(
        diag.starts_with("# generated "),
        "missing time header: {}",
        diag.lines().next().unwrap_or("")
    );
}

#[test]
fn config_problems_are_reported_together_with_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.ini",
        r#"
[model]
preset = maxwell_stefan
D0 = banana
D = 1.0
n = 2

[grid]
cells = 32

[scheme]
dt = 1e-5

[initial]
u1 = 0.3
u2 = 0.3
f = 0.6

[output]
turbo = yes
"#,
    );
    let res = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("3 problems in"), "stderr: {err}");
    for needle in ["model.D0", "scheme.t_end", "output.turbo"] {
        assert!(err.contains(needle), "stderr misses {needle}: {err}");
    }
}

#[test]
fn missing_config_file_exits_three() {
    let res = bin()
        .args(["run", "--config", "/nonexistent/run.ini"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("cannot read"));
}

#[test]
fn unwritable_output_dir_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.ini", RUN_CONFIG);
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("cannot create"));
}

#[test]
fn out_of_range_aggregate_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    // volume filling caps the aggregate at 1; 0.7 + 0.7 exceeds it
    let cfg = write_config(
        tmp.path(),
        "range.ini",
        r#"
[model]
preset = ion_transport
D = 1.0
z = 1.0
n = 2

[grid]
cells = 32

[scheme]
t_end = 1e-4
auto_cfl = true

[initial]
u1 = 0.7
u2 = 0.7
f = 1.4
"#,
    );
    let out = tmp.path().join("out");
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2), "stderr: {}", stderr(&res));
    assert!(stderr(&res).contains("outside"));
}

#[test]
fn check_fails_with_exit_two_on_negative_diffusivity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "broken.ini",
        r#"
[model]
preset = custom
a = 1.0, 1.0
p = -1
q = 0
r = 0
L = 1.0

[grid]
cells = 32

[scheme]
t_end = 0.0
auto_cfl = true

[initial]
u1 = 0.3
u2 = 0.3
f = 0.6
"#,
    );
    let res = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(2), "stderr: {}", stderr(&res));
    assert!(stdout(&res).contains("FAIL"));
}

#[test]
fn duplicate_experiment_exits_zero_and_writes_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "dup.ini",
        r#"
[model]
preset = skt
a0 = 1.0
a = 1.0, 1.0
L = 4.0

[grid]
cells = 32

[scheme]
t_end = 1e-4
auto_cfl = true

[initial]
u1 = "0.5 + 0.1*cos(pi*x)"
u2 = 0.5
f = 1.0

[experiment]
kind = duplicate
"#,
    );
    let out = tmp.path().join("out");
    let res = bin()
        .args(["experiment", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--no-header-time")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "stderr: {}", stderr(&res));
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.starts_with("t,H_total,d_gajewski,d_relsym,lower_bound,hminus1\n"));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict: PASS"), "summary: {summary}");
    assert!(stdout(&res).contains("verdict: PASS"));
}

#[test]
fn gronwall_mass_mismatch_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gronwall.ini",
        r#"
[model]
preset = ion_transport
D = 1.0
z = 1.0
n = 2

[grid]
cells = 32

[scheme]
t_end = 1e-4
auto_cfl = true

[initial]
u1 = 0.3
u2 = 0.3
f = 0.6

[initial2]
u1 = 0.4
u2 = 0.3

[experiment]
kind = gronwall
"#,
    );
    let res = bin()
        .args(["experiment", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1), "stderr: {}", stderr(&res));
    let err = stderr(&res);
    assert!(
        err.contains("initial2") && err.contains("compatibility condition"),
        "stderr: {err}"
    );
}

#[test]
fn experiment_without_section_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "plain.ini", RUN_CONFIG);
    let res = bin()
        .args(["experiment", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("no [experiment] section"));
}
