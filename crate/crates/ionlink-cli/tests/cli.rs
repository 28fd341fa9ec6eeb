//! End-to-end checks of the command-line surface and file formats.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ionlink"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn zero_events_gives_a_header_only_timetag_file() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("empty.csv");
    run_ok(&[
        "simulate",
        "--wavelength",
        "493",
        "--seed",
        "3",
        "--events",
        "0",
        "--out",
        tags.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&tags).unwrap();
    assert_eq!(
        content.trim(),
        "attempt_index,detector,photon_time_ns,setting_kind,setting_value,ion_outcome,wavelength"
    );
}

#[test]
fn identical_seeds_give_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        run_ok(&[
            "simulate",
            "--wavelength",
            "780",
            "--seed",
            "11",
            "--events",
            "50",
            "--out",
            path.to_str().unwrap(),
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.csv");
    run_ok(&[
        "simulate",
        "--wavelength",
        "780",
        "--seed",
        "12",
        "--events",
        "50",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn scan_outputs_carry_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let fringe = dir.path().join("fringe.csv");
    run_ok(&[
        "scan-hwp",
        "--wavelength",
        "493",
        "--seed",
        "5",
        "--out",
        fringe.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&fringe).unwrap();
    let header = content.lines().next().unwrap();
    assert_eq!(header, "hwp_deg,p1_given_H,p1_given_V,n_events,stderr");
    assert_eq!(content.lines().count(), 20); // header + 19 angles

    let phases = dir.path().join("phase.csv");
    run_ok(&[
        "scan-phase",
        "--wavelength",
        "493",
        "--seed",
        "5",
        "--out",
        phases.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&phases).unwrap();
    assert!(content.starts_with("phase_rad,"));

    let curve = dir.path().join("curve.csv");
    run_ok(&["convert-curve", "--out", curve.to_str().unwrap()]);
    let content = std::fs::read_to_string(&curve).unwrap();
    assert!(content.starts_with("pump,eta_V,eta_H"));
    // Peak efficiencies appear at normalized pump 1.
    let peak_row = content
        .lines()
        .find(|l| l.starts_with("1.000000,"))
        .expect("pump=1 sample");
    assert!(peak_row.contains("0.379000") && peak_row.contains("0.345000"));

    let profile = dir.path().join("profile.csv");
    run_ok(&["emission-profile", "--out", profile.to_str().unwrap()]);
    let content = std::fs::read_to_string(&profile).unwrap();
    assert!(content
        .starts_with("time_ns,intensity_good,intensity_swap,cumulative_good,cumulative_swap"));
}

#[test]
fn config_file_overrides_feed_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "wavelength = 493\nseed = 9\nevents_per_point = 20\n# lossless toy link\nfiber_coupling = 1.0\nlink_transmission = 1.0\ndet_eff_493 = 1.0\nemission_prob = 1.0\n",
    )
    .unwrap();
    let out = run_ok(&["simulate", "--config", conf.to_str().unwrap()]);
    assert!(out.contains("(1 in 1)"), "expected unit click odds:\n{out}");
}

#[test]
fn analyze_rejects_malformed_input_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,a,timetag,file\n").unwrap();
    let out = bin()
        .args(["analyze", "fidelity"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());

    let missing = Path::new("/nonexistent/tags.csv");
    let out = bin().args(["analyze", "rate"]).arg(missing).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn budget_csv_matches_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("budget.csv");
    run_ok(&["budget", "--wavelength", "780", "--out", csv.to_str().unwrap()]);
    let content = std::fs::read_to_string(&csv).unwrap();
    assert!(content.contains("Signal-to-Noise Ratio,6.00,6.00"));
    assert!(content.contains("Sum of Infidelities,11.00,15.50"));
}

#[test]
fn validate_passes_on_defaults() {
    let out = run_ok(&["validate", "--seed", "2"]);
    assert!(out.contains("all validation checks passed"), "{out}");
    assert!(!out.contains("[FAIL]"), "{out}");
}
