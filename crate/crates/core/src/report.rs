//! Rendering of [`MetricReport`]s as JSON, long-format CSV or Markdown tables.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{AbsentCell, MetricReport, Section};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidInput(format!(
                "unknown report format {other:?} (expected csv, markdown or json)"
            ))),
        }
    }
}

pub fn render_report(report: &MetricReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => Ok(render_markdown(report).into_bytes()),
    }
}

/// Two decimals, ties to even on the exact binary value.
pub fn format_percent(value: f64) -> String {
    let s = format!("{value:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// `0.001` → `0.1%`.
pub fn format_target(target: f64) -> String {
    format!("{:.1}%", 100.0 * target)
}

const CSV_HEADER: [&str; 8] = [
    "section",
    "algorithm",
    "dataset",
    "fr_system",
    "training",
    "scenario",
    "metric",
    "value",
];

fn render_csv(report: &MetricReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for c in &report.vulnerability {
        let scenario = c.scenario.label();
        let rows = [
            ("prodavg_mmpmr_percent", c.percent),
            ("delta", c.calibration.delta),
            ("achieved_fmr", c.calibration.achieved_fmr),
        ];
        for (metric, value) in rows {
            w.write_record([
                "vulnerability",
                &c.algorithm,
                &c.dataset,
                &c.fr_system,
                "",
                &scenario,
                metric,
                &value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    for c in &report.detectability {
        let scenario = c.scenario.label();
        let mut rows = vec![("eer_percent".to_string(), c.eer_percent)];
        for (p, pct) in c.macer_at_bpcer.iter().zip(&c.macer_percent) {
            rows.push((format!("macer_percent@bpcer={}", p.target), *pct));
        }
        for (metric, value) in rows {
            w.write_record([
                "detectability",
                &c.algorithm,
                "",
                "",
                c.training.as_str(),
                &scenario,
                &metric,
                &value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

/// Table cells of one algorithm block; `None` marks an absent cell.
type Block = Vec<Vec<Option<f64>>>;

/// Formats a block, bolding each column's maximum. Columns whose present
/// values are all equal carry no highlight.
fn push_block(out: &mut String, algorithm: &str, scenarios: &[String], block: &Block) {
    let columns = block.first().map_or(0, |r| r.len());
    let extremes: Vec<Option<(f64, f64)>> = (0..columns)
        .map(|c| {
            block.iter().filter_map(|r| r[c]).fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
            })
        })
        .collect();
    for (i, (scenario, row)) in scenarios.iter().zip(block).enumerate() {
        let name = if i == 0 { algorithm } else { "" };
        let _ = write!(out, "| {name} | {scenario} |");
        for (c, cell) in row.iter().enumerate() {
            match (cell, extremes[c]) {
                (Some(v), Some((lo, hi))) if *v == hi && lo < hi => {
                    let _ = write!(out, " **{}** |", format_percent(*v));
                }
                (Some(v), _) => {
                    let _ = write!(out, " {} |", format_percent(*v));
                }
                (None, _) => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }
}

fn push_header(out: &mut String, columns: &[String]) {
    out.push_str("| Morph | Scenario |");
    for c in columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|---|");
    for _ in columns {
        out.push_str("---:|");
    }
    out.push('\n');
}

fn has_section(report: &MetricReport, section: Section) -> bool {
    report.absent.iter().any(|a| a.section == section)
}

fn vulnerability_table(report: &MetricReport, out: &mut String) {
    let axes = &report.axes;
    let mut columns = Vec::new();
    for d in &axes.datasets {
        for f in &axes.fr_systems {
            columns.push(format!("{d} {f}"));
        }
    }
    push_header(out, &columns);
    if report.vulnerability.is_empty() && !has_section(report, Section::Vulnerability) {
        return;
    }
    let scenarios: Vec<String> = axes.vulnerability_scenarios.iter().map(|s| s.label()).collect();
    for algorithm in &axes.morph_algorithms {
        let block: Block = axes
            .vulnerability_scenarios
            .iter()
            .map(|&s| {
                let mut row = Vec::new();
                for d in &axes.datasets {
                    for f in &axes.fr_systems {
                        row.push(
                            report
                                .vulnerability
                                .iter()
                                .find(|c| {
                                    &c.algorithm == algorithm && &c.dataset == d && &c.fr_system == f && c.scenario == s
                                })
                                .map(|c| c.percent),
                        );
                    }
                }
                row
            })
            .collect();
        push_block(out, algorithm, &scenarios, &block);
    }
}

fn detectability_table(report: &MetricReport, out: &mut String) {
    let axes = &report.axes;
    let mut columns = Vec::new();
    for t in &axes.training_compositions {
        columns.push(format!("{} EER", t.title()));
        for target in &report.bpcer_targets {
            columns.push(format!("{} MACER@{}", t.title(), format_target(*target)));
        }
    }
    push_header(out, &columns);
    if report.detectability.is_empty() && !has_section(report, Section::Detectability) {
        return;
    }
    let scenarios: Vec<String> = axes.detectability_scenarios.iter().map(|s| s.label()).collect();
    for algorithm in &axes.morph_algorithms {
        let block: Block = axes
            .detectability_scenarios
            .iter()
            .map(|&s| {
                let mut row = Vec::new();
                for &t in &axes.training_compositions {
                    let cell = report
                        .detectability
                        .iter()
                        .find(|c| &c.algorithm == algorithm && c.training == t && c.scenario == s);
                    row.push(cell.map(|c| c.eer_percent));
                    for i in 0..report.bpcer_targets.len() {
                        row.push(cell.map(|c| c.macer_percent[i]));
                    }
                }
                row
            })
            .collect();
        push_block(out, algorithm, &scenarios, &block);
    }
}

fn describe_absent(a: &AbsentCell) -> String {
    let mut key = vec![a.algorithm.clone()];
    key.extend(a.dataset.clone());
    key.extend(a.fr_system.clone());
    key.extend(a.training.map(|t| t.as_str().to_string()));
    key.push(a.scenario.label());
    let section = match a.section {
        Section::Vulnerability => "vulnerability",
        Section::Detectability => "detectability",
    };
    format!("- {section} {}: {}\n", key.join(" / "), a.reason)
}

fn render_markdown(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report\n\nToolkit version {}.\n", report.toolkit_version);
    let _ = writeln!(
        out,
        "## Vulnerability\n\nProdAvg-MMPMR (%) at FMR {}.\n",
        format_target(report.target_fmr)
    );
    vulnerability_table(report, &mut out);
    out.push_str("\n## Detectability\n\nEER and MACER at BPCER (%).\n\n");
    detectability_table(report, &mut out);
    if !report.absent.is_empty() {
        out.push_str("\n## Absent cells\n\n");
        for a in &report.absent {
            out.push_str(&describe_absent(a));
        }
    }
    out
}
