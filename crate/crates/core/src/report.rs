//! Developer-facing campaign report and its renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{CampaignState, Overhead};
use crate::model::{
    experiment_budget, transition_label, BindingStatus, MethodRef, PerturbationPoint,
    PointCategory, Transition,
};

pub const REPORT_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "origin,achieved,count";

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("inconsistent campaign state:\n  {}", .0.join("\n  "))]
    Integrity(Vec<String>),
    #[error("baseline time must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("times must be non-negative")]
    NegativeTime,
    #[error("unsupported report_version {0}")]
    Version(u32),
    #[error("malformed report: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Structured,
    CsvMatrix,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Format::Human),
            "structured" | "json" => Ok(Format::Structured),
            "csv" => Ok(Format::CsvMatrix),
            other => Err(format!("unknown format `{other}` (human, structured, csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub fragile: u64,
    pub sensitive: u64,
    pub immunized: u64,
    pub unreached: u64,
}

impl CategoryCounts {
    pub fn total(&self) -> u64 {
        self.fragile + self.sensitive + self.immunized + self.unreached
    }

    pub fn get(&self, c: PointCategory) -> u64 {
        match c {
            PointCategory::Fragile => self.fragile,
            PointCategory::Sensitive => self.sensitive,
            PointCategory::Immunized => self.immunized,
            PointCategory::Unreached => self.unreached,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub cell: Transition,
    pub origin: PointCategory,
    pub achieved: PointCategory,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingRow {
    pub handler: MethodRef,
    pub achieved: PointCategory,
    pub status: BindingStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointRow {
    pub point: PerturbationPoint,
    pub category: PointCategory,
    pub best_achieved: PointCategory,
    pub default_handler: Option<MethodRef>,
    pub candidates: u64,
    pub failure_oblivious: Vec<BindingRow>,
    /// A binding at this point left the target corrupted.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub min: u64,
    pub median: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub point: PerturbationPoint,
    /// `None` for the classification runs, otherwise the assessed wrapper.
    pub handler: Option<MethodRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub reached_points: u64,
    pub candidates: u64,
    pub formula: u64,
    /// Workload executions including the baseline and discovery reruns.
    pub actual: u64,
    pub discovery_reruns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadSummary {
    pub runs: usize,
    pub baseline_ms: f64,
    pub instrumented_ms: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub counts: CategoryCounts,
    pub matrix: Vec<MatrixCell>,
    pub rows: Vec<PointRow>,
    pub candidate_stats: CandidateStats,
    pub anomalies: Vec<Anomaly>,
    pub budget: Budget,
    pub overhead: Option<OverheadSummary>,
    pub warnings: Vec<String>,
}

/// Percentage slowdown of `instrumented_ms` relative to `baseline_ms`.
pub fn overhead_compare(baseline_ms: f64, instrumented_ms: f64) -> Result<f64, ReportError> {
    if baseline_ms < 0.0 || instrumented_ms < 0.0 {
        return Err(ReportError::NegativeTime);
    }
    if baseline_ms == 0.0 {
        return Err(ReportError::ZeroBaseline(baseline_ms));
    }
    Ok((instrumented_ms - baseline_ms) / baseline_ms * 100.0)
}

/// Min, median and max of per-point candidate counts. Even-length medians
/// take the lower middle element.
pub fn candidate_stats(counts: &[u64]) -> CandidateStats {
    if counts.is_empty() {
        return CandidateStats::default();
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    CandidateStats {
        min: sorted[0],
        median: sorted[(sorted.len() - 1) / 2],
        max: sorted[sorted.len() - 1],
    }
}

fn check(state: &CampaignState) -> Vec<String> {
    let mut problems = Vec::new();
    if !state.classification.is_partition_of(&state.points) {
        problems.push("classification is not a partition of the detected points".into());
    }
    for b in &state.candidates {
        match state.original_category(&b.point) {
            Some(c) if c.rank().is_some() => {}
            other => problems.push(format!(
                "candidate {} -> {} belongs to a point classified {:?}",
                b.point, b.handler, other
            )),
        }
    }
    for v in &state.validated {
        let b = &v.binding;
        if !state.candidates.contains(b) {
            problems.push(format!(
                "validated {} -> {} is not a candidate",
                b.point, b.handler
            ));
        }
        match state.assessments.get(b) {
            Some(a) if a.achieved == Some(v.achieved) && a.status == Some(v.status) => {}
            _ => problems.push(format!(
                "validated {} -> {} disagrees with its assessment",
                b.point, b.handler
            )),
        }
        if let Some(o) = state.original_category(&b.point) {
            if v.achieved.rank() < o.rank() {
                problems.push(format!(
                    "{} -> {} downgrades {} to {}",
                    b.point, b.handler, o, v.achieved
                ));
            }
        }
        if v.status == BindingStatus::NoEffect {
            problems.push(format!(
                "{} -> {} has no effect but is validated",
                b.point, b.handler
            ));
        }
    }
    problems
}

pub fn build_report(
    state: &CampaignState,
    overhead: Option<&Overhead>,
) -> Result<Report, ReportError> {
    let mut problems = check(state);

    let mut counts = CategoryCounts::default();
    let mut cells: BTreeMap<Transition, u64> = Transition::ALL.iter().map(|t| (*t, 0)).collect();
    let candidate_counts = state.candidate_counts();
    let mut rows = Vec::with_capacity(state.points.len());
    for p in &state.points {
        let Some(category) = state.original_category(p) else {
            continue;
        };
        match category {
            PointCategory::Fragile => counts.fragile += 1,
            PointCategory::Sensitive => counts.sensitive += 1,
            PointCategory::Immunized => counts.immunized += 1,
            PointCategory::Unreached => counts.unreached += 1,
        }
        let best = state.best_achieved(p).unwrap_or(category);
        if category != PointCategory::Unreached {
            match transition_label(category, best) {
                Ok(t) => *cells.entry(t).or_default() += 1,
                Err(e) => problems.push(format!("{p}: {e}")),
            }
        }
        let failure_oblivious = state
            .validated
            .iter()
            .filter(|v| &v.binding.point == p)
            .map(|v| BindingRow {
                handler: v.binding.handler.clone(),
                achieved: v.achieved,
                status: v.status,
            })
            .collect();
        rows.push(PointRow {
            point: p.clone(),
            category,
            best_achieved: best,
            default_handler: state.default_handlers.get(p).cloned().flatten(),
            candidates: candidate_counts.get(p).copied().unwrap_or(0) as u64,
            failure_oblivious,
            flagged: state.flagged.contains(p),
        });
    }
    if !problems.is_empty() {
        return Err(ReportError::Integrity(problems));
    }
    rows.sort_by(|a, b| {
        (
            a.category.sort_key(),
            &a.point.method,
            a.point.location,
            &a.point.exception,
        )
            .cmp(&(
                b.category.sort_key(),
                &b.point.method,
                b.point.location,
                &b.point.exception,
            ))
    });

    let per_point: Vec<u64> = rows.iter().map(|r| r.candidates).collect();
    let mut anomalies: Vec<Anomaly> = state
        .anomalies
        .iter()
        .map(|p| Anomaly {
            point: p.clone(),
            handler: None,
        })
        .collect();
    anomalies.extend(
        state
            .assessments
            .iter()
            .filter(|(_, a)| a.anomaly)
            .map(|(b, _)| Anomaly {
                point: b.point.clone(),
                handler: Some(b.handler.clone()),
            }),
    );

    let reached = counts.fragile + counts.sensitive + counts.immunized;
    let n_candidates = state.candidates.len() as u64;
    let overhead = match overhead {
        Some(o) => Some(OverheadSummary {
            runs: o.runs,
            baseline_ms: o.baseline_ms,
            instrumented_ms: o.instrumented_ms,
            percent: overhead_compare(o.baseline_ms, o.instrumented_ms)?,
        }),
        None => None,
    };

    Ok(Report {
        report_version: REPORT_VERSION,
        counts,
        matrix: Transition::ALL
            .iter()
            .map(|t| {
                let (origin, achieved) = t.endpoints();
                MatrixCell {
                    cell: *t,
                    origin,
                    achieved,
                    count: cells[t],
                }
            })
            .collect(),
        rows,
        candidate_stats: candidate_stats(&per_point),
        anomalies,
        budget: Budget {
            reached_points: reached,
            candidates: n_candidates,
            formula: experiment_budget(reached, n_candidates),
            actual: state.experiments,
            discovery_reruns: state.discovery_reruns,
        },
        overhead,
        warnings: state.warnings.clone(),
    })
}

impl Report {
    pub fn matrix_cell(&self, t: Transition) -> u64 {
        self.matrix
            .iter()
            .find(|c| c.cell == t)
            .map_or(0, |c| c.count)
    }

    pub fn validated_count(&self) -> usize {
        self.rows.iter().map(|r| r.failure_oblivious.len()).sum()
    }
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Human => render_human(report),
        Format::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
        Format::CsvMatrix => render_csv(report),
    }
}

pub fn parse_structured(text: &str) -> Result<Report, ReportError> {
    let report: Report =
        serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    if report.report_version != REPORT_VERSION {
        return Err(ReportError::Version(report.report_version));
    }
    Ok(report)
}

fn render_csv(report: &Report) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &report.matrix {
        let _ = writeln!(
            out,
            "{},{},{}",
            c.origin.as_str(),
            c.achieved.as_str(),
            c.count
        );
    }
    out
}

fn improvement(original: PointCategory, row: &BindingRow) -> String {
    match row.status {
        BindingStatus::AlternativeResilient => "alternative resilient method".into(),
        _ => format!("{} - {}", original.as_str(), row.achieved.as_str()),
    }
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            let _ = write!(s, "{c:<w$}");
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn render_human(report: &Report) -> String {
    let c = &report.counts;
    let mut out = String::new();
    let _ = writeln!(out, "Perturbation points: {}", c.total());
    let _ = writeln!(
        out,
        "  fragile {}, sensitive {}, immunized {}, unreached {}\n",
        c.fragile, c.sensitive, c.immunized, c.unreached
    );

    out += "Transitions\n";
    let cells: Vec<Vec<String>> = report
        .matrix
        .iter()
        .map(|m| {
            vec![
                m.cell.letter().to_string(),
                m.origin.as_str().into(),
                m.achieved.as_str().into(),
                m.count.to_string(),
            ]
        })
        .collect();
    out += &table(&["Cell", "Origin", "Achieved", "Count"], &cells);
    out.push('\n');

    out += "Failure-oblivious methods\n";
    let mut fo = Vec::new();
    for r in &report.rows {
        for b in &r.failure_oblivious {
            fo.push(vec![
                format!("{}@{}", r.point.method, r.point.location),
                r.point.exception.clone(),
                r.default_handler
                    .as_ref()
                    .map_or("-".into(), |h| h.to_string()),
                b.handler.to_string(),
                improvement(r.category, b),
            ]);
        }
    }
    out += &table(
        &[
            "Perturbation Point",
            "Exception Type",
            "Default Handling Method",
            "Failure-oblivious Method",
            "Improvement",
        ],
        &fo,
    );
    out.push('\n');

    out += "Points\n";
    let pts: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{}@{}", r.point.method, r.point.location),
                r.point.exception.clone(),
                r.category.as_str().into(),
                r.best_achieved.as_str().into(),
                r.candidates.to_string(),
                if r.flagged {
                    "flagged".into()
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    out += &table(
        &[
            "Perturbation Point",
            "Exception Type",
            "Category",
            "Best",
            "Candidates",
            "Note",
        ],
        &pts,
    );
    out.push('\n');

    let s = &report.candidate_stats;
    let _ = writeln!(
        out,
        "Candidates per point: min {}, median {}, max {}",
        s.min, s.median, s.max
    );
    let b = &report.budget;
    let _ = writeln!(
        out,
        "Executions: {} (bound 2*({} + {}) = {}, plus baseline and {} discovery reruns)",
        b.actual, b.reached_points, b.candidates, b.formula, b.discovery_reruns
    );
    if let Some(o) = &report.overhead {
        let _ = writeln!(
            out,
            "Overhead: {:.3} ms -> {:.3} ms over {} runs ({:+.1}%)",
            o.baseline_ms, o.instrumented_ms, o.runs, o.percent
        );
    }
    if !report.anomalies.is_empty() {
        out += "\nAnomalies (failed once, passed under continuous injection)\n";
        for a in &report.anomalies {
            match &a.handler {
                Some(h) => {
                    let _ = writeln!(out, "  {} with wrapper in {}", a.point, h);
                }
                None => {
                    let _ = writeln!(out, "  {}", a.point);
                }
            }
        }
    }
    if !report.warnings.is_empty() {
        out += "\nWarnings\n";
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}
