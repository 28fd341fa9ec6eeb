//! File formats: the time-tag CSV and the per-command CSV outputs.
//!
//! The time-tag schema is one header line plus one row per detection:
//!
//! ```text
//! attempt_index,detector,photon_time_ns,setting_kind,setting_value,ion_outcome,wavelength
//! ```
//!
//! `detector` is `APD-1` (PBS transmitted, H-type) or `APD-2` (reflected,
//! V-type); `setting_kind` is `hwp_deg` or `phase_rad`. Formatting is fixed
//! so identical runs produce byte-identical files.

use anyhow::{bail, Context, Result};
use ionlink_core::analysis::{BudgetReport, Counts};
use ionlink_core::atomic::EmissionProfile;
use ionlink_core::harness::{CorrelationResult, Detector, MeasurementSetting, TimeTagRecord};
use ionlink_core::Wavelength;
use std::fmt::Write as _;
use std::path::Path;

pub const TIMETAG_HEADER: &str =
    "attempt_index,detector,photon_time_ns,setting_kind,setting_value,ion_outcome,wavelength";

pub fn timetags_to_csv(records: &[TimeTagRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TIMETAG_HEADER);
    out.push('\n');
    for r in records {
        let detector = match r.detector {
            Detector::Apd1 => "APD-1",
            Detector::Apd2 => "APD-2",
        };
        writeln!(
            out,
            "{},{},{:.4},{},{:.9},{},{}",
            r.attempt_index,
            detector,
            r.photon_time_ns,
            r.setting.kind(),
            r.setting.value(),
            r.ion_outcome,
            r.wavelength
        )
        .expect("string write");
    }
    out
}

pub fn parse_timetags(text: &str) -> Result<Vec<TimeTagRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == TIMETAG_HEADER => {}
        other => bail!("bad or missing time-tag header: {other:?}"),
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            bail!("line {}: expected 7 fields, got {}", lineno + 2, fields.len());
        }
        let setting = match fields[3] {
            "hwp_deg" => MeasurementSetting::UnrotatedHwp(fields[4].parse()?),
            "phase_rad" => MeasurementSetting::RotatedPhase(fields[4].parse()?),
            other => bail!("line {}: unknown setting kind {other:?}", lineno + 2),
        };
        out.push(TimeTagRecord {
            attempt_index: fields[0]
                .parse()
                .with_context(|| format!("line {}: attempt_index", lineno + 2))?,
            detector: match fields[1] {
                "APD-1" => Detector::Apd1,
                "APD-2" => Detector::Apd2,
                other => bail!("line {}: unknown detector {other:?}", lineno + 2),
            },
            photon_time_ns: fields[2].parse()?,
            setting,
            ion_outcome: match fields[5] {
                "0" => 0,
                "1" => 1,
                other => bail!("line {}: ion outcome {other:?}", lineno + 2),
            },
            wavelength: match fields[6] {
                "493" => Wavelength::Nm493,
                "780" => Wavelength::Nm780,
                other => bail!("line {}: wavelength {other:?}", lineno + 2),
            },
        });
    }
    Ok(out)
}

/// Group records into per-setting counts, preserving first-seen order.
pub fn counts_by_setting(records: &[TimeTagRecord]) -> Vec<CorrelationResult> {
    let mut out: Vec<CorrelationResult> = Vec::new();
    for r in records {
        let slot = out.iter_mut().find(|c| c.setting == r.setting);
        let result = match slot {
            Some(c) => c,
            None => {
                out.push(CorrelationResult {
                    setting: r.setting,
                    counts: Counts::default(),
                });
                out.last_mut().unwrap()
            }
        };
        let gamma = usize::from(r.detector == Detector::Apd2);
        result.counts.add(gamma, r.ion_outcome as usize);
    }
    out
}

pub fn fringe_to_csv(results: &[CorrelationResult]) -> String {
    let kind = results
        .first()
        .map(|r| r.setting.kind())
        .unwrap_or("hwp_deg");
    let mut out = format!("{kind},p1_given_H,p1_given_V,n_events,stderr\n");
    for r in results {
        let ((p1h, eh), (p1v, ev)) = r.conditionals();
        writeln!(
            out,
            "{:.9},{:.6},{:.6},{},{:.6}",
            r.setting.value(),
            p1h,
            p1v,
            r.events(),
            eh.max(ev)
        )
        .expect("string write");
    }
    out
}

pub fn profile_to_csv(profile: &EmissionProfile) -> String {
    let mut out =
        String::from("time_ns,intensity_good,intensity_swap,cumulative_good,cumulative_swap\n");
    for i in 0..profile.times_ns.len() {
        writeln!(
            out,
            "{:.4},{:.9e},{:.9e},{:.9},{:.9}",
            profile.times_ns[i],
            profile.intensity_good[i],
            profile.intensity_swap[i],
            profile.cumulative_good[i],
            profile.cumulative_swap[i]
        )
        .expect("string write");
    }
    out
}

pub fn curve_to_csv(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("pump,eta_V,eta_H\n");
    for (pump, ev, eh) in points {
        writeln!(out, "{pump:.6},{ev:.6},{eh:.6}").expect("string write");
    }
    out
}

pub fn budget_to_csv(report: &BudgetReport) -> String {
    let mut out = String::from("error_source,infidelity_lo_percent,infidelity_hi_percent\n");
    for row in &report.rows {
        writeln!(out, "{},{:.2},{:.2}", row.label, row.lo_percent, row.hi_percent)
            .expect("string write");
    }
    writeln!(
        out,
        "Sum of Infidelities,{:.2},{:.2}",
        report.sum_lo_percent, report.sum_hi_percent
    )
    .expect("string write");
    out
}

pub fn write_out(path: Option<&Path>, content: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
