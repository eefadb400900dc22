//! Human summaries of certificate runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use crate::formats::CertificateRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct NameSummary {
    pub name: String,
    pub total: usize,
    pub failed: usize,
    pub inapplicable: usize,
    pub min_slack: f64,
    pub worst: Option<CertificateRecord>,
}

/// Aggregate records by certificate name.
pub fn summarize(records: &[CertificateRecord]) -> Vec<NameSummary> {
    let mut by_name: BTreeMap<&str, NameSummary> = BTreeMap::new();
    for r in records {
        let entry = by_name.entry(&r.name).or_insert_with(|| NameSummary {
            name: r.name.clone(),
            total: 0,
            failed: 0,
            inapplicable: 0,
            min_slack: f64::INFINITY,
            worst: None,
        });
        entry.total += 1;
        if !r.applicable {
            entry.inapplicable += 1;
            continue;
        }
        if !r.pass {
            entry.failed += 1;
        }
        if r.slack < entry.min_slack {
            entry.min_slack = r.slack;
            entry.worst = Some(r.clone());
        }
    }
    let mut rows: Vec<NameSummary> = by_name.into_values().collect();
    // failing rows first, then by name
    rows.sort_by(|a, b| (b.failed > 0).cmp(&(a.failed > 0)).then(a.name.cmp(&b.name)));
    rows
}

/// Render the summary table.
pub fn render(records: &[CertificateRecord]) -> String {
    let rows = summarize(records);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>6} {:>6} {:>14}  worst instance",
        "certificate", "runs", "fail", "n/a", "min slack"
    );
    for row in &rows {
        let worst = row
            .worst
            .as_ref()
            .map(|w| {
                format!(
                    "seed={} d={} depth={} b={} r={} [{}]",
                    w.seed, w.dim, w.depth, w.branching, w.complexity, w.tag
                )
            })
            .unwrap_or_else(|| "-".into());
        let min_slack = if row.min_slack.is_finite() {
            format!("{:.3e}", row.min_slack)
        } else {
            "-".into()
        };
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>6} {:>6} {:>14}  {}",
            row.name, row.total, row.failed, row.inapplicable, min_slack, worst
        );
    }
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    let total: usize = rows.iter().map(|r| r.total).sum();
    let _ = writeln!(out, "{total} certificates, {failed} failed");
    out
}

/// Emit raw per-certificate slack values as CSV for external plotting.
pub fn write_slack_csv(records: &[CertificateRecord], path: &Path) -> Result<()> {
    let mut out = String::from("name,slack\n");
    for r in records.iter().filter(|r| r.applicable) {
        out.push_str(&format!("{},{}\n", r.name, r.slack));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Minimal glob for certificate-name filters: `*` matches any run, `?` any
/// single character.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    fn rec(p: &[u8], t: &[u8]) -> bool {
        match (p.first(), t.first()) {
            (None, None) => true,
            (Some(b'*'), _) => rec(&p[1..], t) || (!t.is_empty() && rec(p, &t[1..])),
            (Some(b'?'), Some(_)) => rec(&p[1..], &t[1..]),
            (Some(a), Some(b)) if a == b => rec(&p[1..], &t[1..]),
            _ => false,
        }
    }
    rec(pattern.as_bytes(), text.as_bytes())
}
