//! Joins the check artifacts of an output directory into one summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::artifacts::Artifacts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Rollup {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub check: String,
    pub file: String,
    pub verdict: Rollup,
    /// Worst margin for check reports; `None` for safety reports and when
    /// no sample was drawn.
    pub worst_margin: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub rollup: Rollup,
    pub failed: Vec<String>,
    pub inconclusive: Vec<String>,
    pub checks: Vec<Entry>,
    pub disclaimers: Vec<String>,
    /// Files that looked like reports but could not be read.
    pub skipped: Vec<String>,
}

fn verdict_of(s: &str) -> Rollup {
    match s {
        "pass" => Rollup::Pass,
        "fail" => Rollup::Fail,
        _ => Rollup::Inconclusive,
    }
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| a.iter().filter_map(|s| s.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

/// Reads one JSON artifact as a check or safety report.
fn entry(file: &str, v: &Value) -> Option<(Entry, Vec<String>)> {
    if let (Some(check), Some(verdict)) = (v["check"].as_str(), v["verdict"].as_str()) {
        return Some((
            Entry {
                check: check.to_string(),
                file: file.to_string(),
                verdict: verdict_of(verdict),
                worst_margin: v["worst_margin"].as_f64(),
                notes: strings(&v["notes"]),
            },
            vec![],
        ));
    }
    let kind = v["verdict"]["kind"].as_str()?;
    let mode = v["mode"].as_str()?;
    let verdict = match kind {
        "no_violation_found" => Rollup::Pass,
        "violation" => Rollup::Fail,
        _ => Rollup::Inconclusive,
    };
    Some((
        Entry {
            check: format!("safety ({mode})"),
            file: file.to_string(),
            verdict,
            worst_margin: None,
            notes: vec![],
        },
        strings(&v["disclaimers"]),
    ))
}

pub fn summarize(dir: &Path) -> Result<Summary> {
    let checks = dir.join("checks");
    let mut files: Vec<String> = Vec::new();
    if checks.is_dir() {
        for e in std::fs::read_dir(&checks).with_context(|| format!("cannot list {}", checks.display()))? {
            let e = e?;
            let name = e.file_name().to_string_lossy().to_string();
            if e.path().is_file() && name.ends_with(".json") {
                files.push(format!("checks/{name}"));
            }
        }
    }
    files.sort();
    let mut entries = Vec::new();
    let mut disclaimers: Vec<String> = Vec::new();
    let mut skipped = Vec::new();
    for f in files {
        let parsed = std::fs::read_to_string(dir.join(&f))
            .ok()
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .and_then(|v| entry(&f, &v));
        match parsed {
            Some((e, d)) => {
                entries.push(e);
                for s in d {
                    if !disclaimers.contains(&s) {
                        disclaimers.push(s);
                    }
                }
            }
            None => skipped.push(f),
        }
    }
    let pick = |r: Rollup| -> Vec<String> { entries.iter().filter(|e| e.verdict == r).map(|e| e.check.clone()).collect() };
    let failed = pick(Rollup::Fail);
    let mut inconclusive = pick(Rollup::Inconclusive);
    if entries.is_empty() {
        inconclusive.push("no check reports found".to_string());
    }
    let rollup = if !failed.is_empty() {
        Rollup::Fail
    } else if !inconclusive.is_empty() {
        Rollup::Inconclusive
    } else {
        Rollup::Pass
    };
    Ok(Summary {
        rollup,
        failed,
        inconclusive,
        checks: entries,
        disclaimers,
        skipped,
    })
}

fn label(r: Rollup) -> &'static str {
    match r {
        Rollup::Pass => "PASS",
        Rollup::Fail => "FAIL",
        Rollup::Inconclusive => "INCONCLUSIVE",
    }
}

pub fn render(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rollup: {}", label(s.rollup));
    if !s.failed.is_empty() {
        let _ = writeln!(out, "failed: {}", s.failed.join(", "));
    }
    if !s.inconclusive.is_empty() {
        let _ = writeln!(out, "inconclusive: {}", s.inconclusive.join(", "));
    }
    let _ = writeln!(out);
    for e in &s.checks {
        let margin = e.worst_margin.map_or("-".to_string(), |m| format!("{m:e}"));
        let _ = writeln!(out, "{:<12} {:<24} worst margin {margin}  ({})", label(e.verdict), e.check, e.file);
        for n in &e.notes {
            let _ = writeln!(out, "             {n}");
        }
    }
    if !s.disclaimers.is_empty() {
        let _ = writeln!(out, "\ndisclaimers:");
        for d in &s.disclaimers {
            let _ = writeln!(out, "  - {d}");
        }
    }
    if !s.skipped.is_empty() {
        let _ = writeln!(out, "\nunreadable: {}", s.skipped.join(", "));
    }
    out
}

pub fn emit(dir: &Path, out: &mut Artifacts) -> Result<Summary> {
    let s = summarize(dir)?;
    out.write("summary.txt", render(&s).as_bytes())?;
    out.write_json("summary.json", &s)?;
    Ok(s)
}
