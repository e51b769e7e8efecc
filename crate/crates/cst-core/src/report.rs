//! Stable CSV serialization of discrimination reports.
//!
//! Layout: one header row, one row per complainant with columns
//! `complainant_id,p_c,p_t,delta_p,ci_low,ci_high,discriminated,significant,flags`,
//! followed by a single `#`-prefixed summary footer line. Floats are written
//! at full precision (shortest round-trip form); CF rows leave the interval
//! columns empty. A failed complainant renders its recorded error inside the
//! flags column as `error:<message>`.

use std::io::Write;

use crate::data::format_full;
use crate::detection::{ComplainantResult, DiscriminationReport};
use crate::error::Result;

fn render_row(row: &ComplainantResult) -> Vec<String> {
    let (ci_low, ci_high) = match &row.ci {
        Some(ci) => (format_full(ci.lower), format_full(ci.upper)),
        None => (String::new(), String::new()),
    };
    let mut flags = row.flags.render();
    if let Some(err) = &row.error {
        if !flags.is_empty() {
            flags.push(';');
        }
        flags.push_str("error:");
        flags.push_str(err);
    }
    vec![
        row.index.to_string(),
        format_full(row.p_c),
        format_full(row.p_t),
        format_full(row.delta_p),
        ci_low,
        ci_high,
        row.discriminated.to_string(),
        row.significant.to_string(),
        flags,
    ]
}

/// Summary footer: `# summary,...` key=value pairs.
pub fn summary_line(report: &DiscriminationReport) -> String {
    let s = &report.summary;
    format!(
        "# summary,method={},k={},include_centers={},complainants={},discriminated={},significant={},pct={}",
        s.method,
        s.k,
        s.include_centers,
        s.complainants,
        s.discriminated,
        s.significant,
        format_full(s.pct_discriminated)
    )
}

/// The one-line `count (percent%)` form used in run output.
pub fn count_percent(report: &DiscriminationReport) -> String {
    format!(
        "{} ({:.1}%)",
        report.summary.discriminated, report.summary.pct_discriminated
    )
}

pub fn write_report_csv<W: Write>(report: &DiscriminationReport, mut writer: W) -> Result<()> {
    {
        let mut csv = csv::Writer::from_writer(&mut writer);
        csv.write_record([
            "complainant_id",
            "p_c",
            "p_t",
            "delta_p",
            "ci_low",
            "ci_high",
            "discriminated",
            "significant",
            "flags",
        ])?;
        for row in &report.rows {
            csv.write_record(render_row(row))?;
        }
        csv.flush()?;
    }
    writeln!(writer, "{}", summary_line(report))?;
    Ok(())
}

/// Render the full report (rows + footer) to a string.
pub fn report_csv_string(report: &DiscriminationReport) -> String {
    let mut buf = Vec::new();
    write_report_csv(report, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{AuditMethod, RowFlags, RunSummary, WaldCi};

    #[test]
    fn csv_layout_and_footer() {
        let report = DiscriminationReport {
            rows: vec![ComplainantResult {
                index: 12,
                p_c: 1.0,
                p_t: 0.25,
                delta_p: 0.75,
                ci: Some(WaldCi { lower: 0.5, upper: 1.0, clamped: false }),
                discriminated: true,
                significant: true,
                control_size: 4,
                test_size: 4,
                flags: RowFlags { short_control: true, ..Default::default() },
                error: None,
            }],
            summary: RunSummary {
                method: AuditMethod::Cst,
                k: 4,
                include_centers: false,
                complainants: 1,
                discriminated: 1,
                significant: 1,
                pct_discriminated: 100.0,
            },
        };
        let text = report_csv_string(&report);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "complainant_id,p_c,p_t,delta_p,ci_low,ci_high,discriminated,significant,flags"
        );
        assert_eq!(lines.next().unwrap(), "12,1,0.25,0.75,0.5,1,true,true,short-ctr");
        assert!(lines.next().unwrap().starts_with("# summary,method=cst,k=4"));
        assert_eq!(count_percent(&report), "1 (100.0%)");
    }
}
