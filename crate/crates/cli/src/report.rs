//! Report serialization: JSON, CSV, and a markdown table mirroring the
//! belief/goal per-type column order.

use tom_core::domain::QType;

use crate::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

const COLUMN_ORDER: [QType; 7] = [
    QType::B11,
    QType::B12,
    QType::B13,
    QType::G21,
    QType::G22,
    QType::G23,
    QType::G24,
];

/// Deterministic serialization of a report. Re-emitting the same report
/// yields identical bytes.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(report).expect("reports always serialize");
            text.push('\n');
            text
        }
        ReportFormat::Csv => {
            let mut header = vec![
                "solver".to_owned(),
                "condition".to_owned(),
                "n".to_owned(),
            ];
            let mut row = vec![
                report.solver_id.clone(),
                report.condition.label().to_owned(),
                report.n.to_string(),
            ];
            for qtype in &COLUMN_ORDER[..3] {
                header.push(qtype.label().to_owned());
                row.push(cell(report.accuracy(*qtype)));
            }
            header.push("belief_all".to_owned());
            row.push(cell(report.belief_all.accuracy));
            for qtype in &COLUMN_ORDER[3..] {
                header.push(qtype.label().to_owned());
                row.push(cell(report.accuracy(*qtype)));
            }
            header.push("goal_all".to_owned());
            row.push(cell(report.goal_all.accuracy));
            header.push("all".to_owned());
            row.push(cell(report.overall.accuracy));
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Method | Condition | 1.1 | 1.2 | 1.3 | All | 2.1 | 2.2 | 2.3 | 2.4 | All | All |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
            out.push_str(&format!(
                "| {} | {} |",
                report.solver_id,
                report.condition.label()
            ));
            for qtype in &COLUMN_ORDER[..3] {
                out.push_str(&format!(" {} |", pct(report.accuracy(*qtype))));
            }
            out.push_str(&format!(" {} |", pct(report.belief_all.accuracy)));
            for qtype in &COLUMN_ORDER[3..] {
                out.push_str(&format!(" {} |", pct(report.accuracy(*qtype))));
            }
            out.push_str(&format!(" {} |", pct(report.goal_all.accuracy)));
            out.push_str(&format!(" {} |\n", pct(report.overall.accuracy)));
            out
        }
    }
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

fn pct(value: Option<f64>) -> String {
    value
        .map(|v| format!("{:.1}", v * 100.0))
        .unwrap_or_else(|| "-".to_owned())
}
