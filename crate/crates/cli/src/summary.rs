//! Price-summary JSON and the comparison table built from a directory of
//! summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SUMMARY_KIND: &str = "price-summary";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let std = if xs.len() > 1 { lsmc_pde::stats::sample_std(xs) } else { 0.0 };
        Self { mean: lsmc_pde::stats::mean(xs), std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub direct: f64,
    pub low: Option<f64>,
    pub low_std_error: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSummary {
    pub kind: String,
    pub label: String,
    pub method: String,
    pub seed: u64,
    pub threads: usize,
    pub n_trials: usize,
    pub trials: Vec<TrialRecord>,
    pub direct: Stat,
    pub low: Option<Stat>,
    pub reference: Option<Reference>,
    /// Minimum wall time of the first trial over the timing repeats.
    pub runtime_seconds: f64,
    pub timing_repeats: usize,
    /// Wall time of the whole command.
    pub wall_seconds: f64,
    pub config: BTreeMap<String, String>,
}

impl PriceSummary {
    pub fn headline(&self) -> String {
        let mut s = format!(
            "{} [{}]: direct {:.4} ± {:.4}",
            self.label, self.method, self.direct.mean, self.direct.std
        );
        if let Some(low) = self.low {
            let _ = write!(s, ", low {:.4} ± {:.4}", low.mean, low.std);
        }
        if let Some(r) = &self.reference {
            let _ = write!(s, ", {} {:.4}", r.name, r.value);
        }
        let _ = write!(s, " ({} trials, {:.2} s per run)", self.n_trials, self.runtime_seconds);
        s
    }
}

/// Load every price summary in `dir`, sorted by file name. Other JSON
/// artifacts (level tests) are skipped; unparseable JSON is an error.
pub fn load_summaries(dir: &Path) -> Result<Vec<PriceSummary>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Report(format!("cannot read `{}`: {e}", dir.display())))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Report(format!("cannot read `{}`: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Report(format!("`{}` is not valid JSON: {e}", path.display())))?;
        if value.get("kind").and_then(|k| k.as_str()) != Some(SUMMARY_KIND) {
            continue;
        }
        let summary: PriceSummary = serde_json::from_value(value)
            .map_err(|e| CliError::Report(format!("`{}` is not a valid price summary: {e}", path.display())))?;
        out.push(summary);
    }
    if out.is_empty() {
        return Err(CliError::Report(format!("no price summaries found in `{}`", dir.display())));
    }
    Ok(out)
}

fn cell(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.4}"))
}

/// Side-by-side table: one row per summary.
pub fn render_table(rows: &[PriceSummary]) -> String {
    let header = ["run", "algorithm", "trials", "direct", "std", "low", "std", "runtime [s]"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.method.clone(),
                r.n_trials.to_string(),
                format!("{:.4}", r.direct.mean),
                format!("{:.4}", r.direct.std),
                cell(r.low.map(|l| l.mean)),
                cell(r.low.map(|l| l.std)),
                format!("{:.2}", r.runtime_seconds),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if k == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|_| "").collect()).replace(' ', "-"));
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
