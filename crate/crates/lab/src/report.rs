//! Consolidated summary over a directory of runs.
//!
//! `summary.json` field names are stable: `run_count`, `failed_count`,
//! `warning_count`, `warnings`, and per run `name`, `kind`, `status`,
//! `exit_code`, `error`, `headline`, `plots`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::run::{RunManifest, Status, MANIFEST};
use crate::{LabError, Result};

pub const SUMMARY: &str = "summary.json";
pub const INDEX: &str = "index.html";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub kind: String,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub headline: BTreeMap<String, Value>,
    /// Plot paths relative to the report directory.
    pub plots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_count: usize,
    pub failed_count: usize,
    pub warning_count: usize,
    pub warnings: Vec<String>,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    /// 0 when every run succeeded, 3 when at least one failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed_count > 0 {
            3
        } else {
            0
        }
    }
}

fn summarize(name: &str, m: RunManifest) -> RunSummary {
    let prefix = if name == "." { String::new() } else { format!("{name}/") };
    RunSummary {
        name: name.into(),
        kind: m.kind,
        status: m.status,
        exit_code: m.exit_code,
        error: m.error,
        headline: m.headline,
        plots: m.plots.iter().map(|p| format!("{prefix}{p}")).collect(),
    }
}

/// Collect every run below `dir` (the directory itself or its immediate
/// subdirectories) and write `summary.json` and `index.html` into `dir`.
pub fn emit_report(dir: &Path) -> Result<Summary> {
    if !dir.is_dir() {
        return Err(LabError::config(format!("{} is not a directory", dir.display())));
    }
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    let mut load = |name: &str, path: &Path, runs: &mut Vec<RunSummary>| match RunManifest::read(path) {
        Ok(m) => runs.push(summarize(name, m)),
        Err(e) => warnings.push(format!("{name}: unreadable manifest ({e})")),
    };
    if dir.join(MANIFEST).is_file() {
        load(".", dir, &mut runs);
    }
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(LabError::io(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    entries.sort_by_key(|e| e.file_name());
    let mut skipped = Vec::new();
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        if e.path().join(MANIFEST).is_file() {
            load(&name, &e.path(), &mut runs);
        } else {
            skipped.push(format!("{name}: no {MANIFEST}, skipped"));
        }
    }
    warnings.extend(skipped);
    if runs.is_empty() {
        warnings.push(format!("no runs found in {}", dir.display()));
    }
    let summary = Summary {
        run_count: runs.len(),
        failed_count: runs.iter().filter(|r| r.status == Status::Failed).count(),
        warning_count: warnings.len(),
        warnings,
        runs,
    };
    let p = dir.join(SUMMARY);
    std::fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n").map_err(LabError::io(&p))?;
    let p = dir.join(INDEX);
    std::fs::write(&p, index_html(&summary)).map_err(LabError::io(&p))?;
    Ok(summary)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn index_html(s: &Summary) -> String {
    let mut h = String::from("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>symlab report</title></head><body>\n");
    let _ = writeln!(
        h,
        "<h1>symlab report</h1>\n<p>{} runs, {} failed, {} warnings</p>",
        s.run_count, s.failed_count, s.warning_count
    );
    if !s.warnings.is_empty() {
        h.push_str("<ul>\n");
        for w in &s.warnings {
            let _ = writeln!(h, "<li>{}</li>", escape(w));
        }
        h.push_str("</ul>\n");
    }
    for r in &s.runs {
        let status = match r.status {
            Status::Ok => "ok",
            Status::Failed => "FAILED",
        };
        let _ = writeln!(h, "<h2>{} ({}): {status}</h2>", escape(&r.name), escape(&r.kind));
        if let Some(e) = &r.error {
            let _ = writeln!(h, "<p>{}</p>", escape(e));
        }
        h.push_str("<table>\n");
        for (k, v) in &r.headline {
            let _ = writeln!(h, "<tr><td>{}</td><td>{}</td></tr>", escape(k), escape(&v.to_string()));
        }
        h.push_str("</table>\n");
        for p in &r.plots {
            let _ = writeln!(h, "<img src=\"{}\" alt=\"{}\">", escape(p), escape(p));
        }
    }
    h.push_str("</body></html>\n");
    h
}
