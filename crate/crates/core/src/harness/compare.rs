use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalResult;

use super::runner::RunSummary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub converged_step: u64,
    pub test: EvalResult,
}

/// Change of one run against the baseline, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub label: String,
    /// `(baseline − run) / baseline`; positive means fewer steps.
    pub step_reduction_pct: f64,
    /// `(run − baseline) / baseline` per cutoff.
    pub recall_pct: BTreeMap<usize, f64>,
    pub ndcg_pct: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_fingerprint: String,
    pub baseline: String,
    pub rows: Vec<CompareRow>,
    pub improvements: Vec<Improvement>,
}

/// Relative change in percent. Zero over zero counts as no change.
fn pct(delta: f64, base: f64) -> f64 {
    if base == 0.0 && delta == 0.0 {
        0.0
    } else {
        100.0 * delta / base
    }
}

fn per_k(base: &BTreeMap<usize, f64>, run: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    base.iter()
        .filter_map(|(k, &b)| run.get(k).map(|&r| (*k, pct(r - b, b))))
        .collect()
}

/// Compares every record against the first one.
pub fn compare(records: &[RunSummary]) -> Result<ComparisonReport> {
    if records.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least 2 records".into()));
    }
    let base = &records[0];
    if let Some(other) = records.iter().find(|r| r.dataset_fingerprint != base.dataset_fingerprint) {
        return Err(Error::FingerprintMismatch(
            base.dataset_fingerprint.clone(),
            other.dataset_fingerprint.clone(),
        ));
    }
    let rows: Vec<CompareRow> = records
        .iter()
        .map(|r| CompareRow {
            label: r.optimizer.clone(),
            converged_step: r.converged_step,
            test: r.test.clone(),
        })
        .collect();
    let improvements = records[1..]
        .iter()
        .map(|r| Improvement {
            label: r.optimizer.clone(),
            step_reduction_pct: pct(
                base.converged_step as f64 - r.converged_step as f64,
                base.converged_step as f64,
            ),
            recall_pct: per_k(&base.test.recall, &r.test.recall),
            ndcg_pct: per_k(&base.test.ndcg, &r.test.ndcg),
        })
        .collect();
    Ok(ComparisonReport {
        dataset_fingerprint: base.dataset_fingerprint.clone(),
        baseline: base.optimizer.clone(),
        rows,
        improvements,
    })
}

/// Plain-text table: one line per run, then one improvement line per run.
pub fn render_table(report: &ComparisonReport) -> String {
    let ks: Vec<usize> = report
        .rows
        .first()
        .map(|r| r.test.recall.keys().copied().collect())
        .unwrap_or_default();
    let mut out = format!("{:<12}{:>8}", "", "Step");
    for k in &ks {
        let _ = write!(out, "{:>10}", format!("R@{k}"));
    }
    for k in &ks {
        let _ = write!(out, "{:>10}", format!("N@{k}"));
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{:<12}{:>8}", r.label, r.converged_step);
        for k in &ks {
            let _ = write!(out, "{:>10.4}", r.test.recall_at(*k));
        }
        for k in &ks {
            let _ = write!(out, "{:>10.4}", r.test.ndcg_at(*k));
        }
        out.push('\n');
    }
    for imp in &report.improvements {
        let _ = write!(out, "{:<12}{:>7.1}%", format!("Improv. {}", imp.label), -imp.step_reduction_pct);
        for k in &ks {
            let _ = write!(out, "{:>9.1}%", imp.recall_pct.get(k).copied().unwrap_or(f64::NAN));
        }
        for k in &ks {
            let _ = write!(out, "{:>9.1}%", imp.ndcg_pct.get(k).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}
