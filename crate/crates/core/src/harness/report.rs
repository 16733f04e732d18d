use super::experiment::Summary;
use crate::{Error, Result};

/// Column order of the comparison table.
pub const REPORT_HEADER: &str =
    "condition,safety,success_rate,mean_max_violation,p95_max_violation";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub safety: String,
    pub success_rate: f64,
    pub mean_max_violation: f64,
    pub p95_max_violation: f64,
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Long-format CSV, one row per summary, in input order.
pub fn compare_report(summaries: &[Summary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::contract("report needs at least one summary"));
    }
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            escape(&s.condition),
            s.safety,
            s.success_rate,
            s.mean_max_violation,
            s.p95_max_violation
        ));
    }
    Ok(out)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Parses the output of [`compare_report`].
pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Config("report header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f = split_csv_line(line);
            if f.len() != 5 {
                return Err(Error::Config(format!("malformed report row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("{s:?}: {e}")))
            };
            Ok(ReportRow {
                condition: f[0].clone(),
                safety: f[1].clone(),
                success_rate: num(&f[2])?,
                mean_max_violation: num(&f[3])?,
                p95_max_violation: num(&f[4])?,
            })
        })
        .collect()
}
