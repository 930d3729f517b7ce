use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::RoundRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,accuracy,loss,nnz,sparsity,mbit_up,mbit_down";

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("valid float literal");
    format!("{rounded}")
}

pub fn records_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.round,
            format_sig9(r.accuracy),
            format_sig9(r.loss),
            r.nnz,
            format_sig9(r.sparsity),
            format_sig9(r.mbit_up),
            format_sig9(r.mbit_down)
        );
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::format(
                "records.header",
                format!("expected `{CSV_HEADER}`, found {other:?}"),
            ))
        }
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::format(
                    format!("records.line{}", n + 2),
                    format!("{} fields, expected 7", fields.len()),
                ));
            }
            let bad = |name: &str| Error::format(format!("records.{name}"), format!("line {}", n + 2));
            let f = |i: usize, name: &str| fields[i].parse::<f64>().map_err(|_| bad(name));
            Ok(RoundRecord {
                round: fields[0].parse().map_err(|_| bad("round"))?,
                accuracy: f(1, "accuracy")?,
                loss: f(2, "loss")?,
                nnz: fields[3].parse().map_err(|_| bad("nnz"))?,
                sparsity: f(4, "sparsity")?,
                mbit_up: f(5, "mbit_up")?,
                mbit_down: f(6, "mbit_down")?,
            })
        })
        .collect()
}

pub fn write_records(records: &[RoundRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_csv(records)).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct JsonMirror<'a, M: Serialize> {
    manifest: &'a M,
    records: &'a [RoundRecord],
}

/// JSON copy of the records with the run manifest embedded.
pub fn write_records_json<M: Serialize>(
    records: &[RoundRecord],
    manifest: &M,
    path: &Path,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&JsonMirror { manifest, records })
        .map_err(|e| Error::format("records.json", e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
