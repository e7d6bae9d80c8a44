//! Input parsing and text rendering for the offline subcommands.

use anyhow::{bail, Context};
use std::fmt::Write;
use std::io::Read;
use twin_core::analysis::{AnalysisReport, SusResponse};
use twin_core::session::{OperationRecord, SequenceDocument};

/// Records from a saved sequence document or a bare record list.
pub fn parse_log(text: &str) -> anyhow::Result<Vec<OperationRecord>> {
    if let Ok(doc) = SequenceDocument::from_json(text) {
        return Ok(doc.records);
    }
    serde_json::from_str(text).context("expected a sequence document or a list of operation records")
}

/// One respondent per row, items 1 to 10 in order. A first row that is not
/// numeric is taken as a header.
pub fn parse_sus_csv(input: impl Read) -> anyhow::Result<Vec<SusResponse>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("row {}", i + 1))?;
        let parsed: Result<Vec<u8>, _> = rec.iter().map(str::parse::<u8>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => bail!("row {}: {e}", i + 1),
        };
        let Ok(arr) = <[u8; 10]>::try_from(values.as_slice()) else {
            bail!("row {}: expected 10 answers, got {}", i + 1, values.len());
        };
        out.push(SusResponse(arr));
    }
    Ok(out)
}

fn secs(v: Option<f64>) -> String {
    v.map(|s| format!("{s:.1} s")).unwrap_or_else(|| "-".into())
}

pub fn render_analysis(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Robot phase times");
    for row in r.robot.rows() {
        let _ = writeln!(s, "  {:<32} {:>10}", row.label, secs(row.seconds));
    }
    let _ = writeln!(s, "  {:<32} {:>10}", "Total", secs(Some(r.robot.total_s())));
    if let Some(c) = &r.comparison {
        let _ = writeln!(s, "\nManual vs robot");
        for row in &c.rows {
            let ratio = row.ratio.map(|x| format!("x{x:.2}")).unwrap_or_else(|| "-".into());
            let flag = if row.robot_slower { "  robot slower" } else { "" };
            let _ = writeln!(
                s,
                "  {:<32} {:>10} {:>10} {:>8}{flag}",
                row.label,
                secs(row.manual_s),
                secs(row.robot_s),
                ratio
            );
        }
        let _ = writeln!(s, "  {:<32} {:>10} {:>10}", "Total", secs(Some(c.manual_total_s)), secs(Some(c.robot_total_s)));
    }
    if let Some(t) = &r.manual_total {
        if !t.consistent {
            let _ = writeln!(
                s,
                "  note: manual rows sum to {:.0} s, the printed total is {:.0} s",
                t.row_sum, t.printed
            );
        }
    }
    let _ = writeln!(s, "\nInvestment");
    let _ = writeln!(s, "  items total     {:>12.0} EUR", r.items_total_eur);
    let _ = writeln!(s, "  investment cost {:>12.0} EUR", r.investment_cost_eur);
    if !r.investment_matches_items {
        let _ = writeln!(s, "  note: the investment cost is not the item sum");
    }
    let _ = writeln!(s, "  ROI             {:>12.2} %", r.roi * 100.0);
    s
}
