//! Append-only episode trace: intervals of constant unserved load, event
//! records, decisions, and per-gap rewards. The interval rows are the
//! ground truth for the ENS replay audit.

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "# stormcrew trace v1";

#[derive(Debug, Clone)]
pub enum TraceRow {
    Header {
        seed: u64,
        feeder: String,
        horizon_h: f64,
    },
    /// Constant unserved power on [t0, t1).
    Interval {
        t0: f64,
        t1: f64,
        unserved_kw: f64,
    },
    Event {
        t: f64,
        what: String,
    },
    Decision {
        t: f64,
        entries: Vec<String>,
    },
    Gap {
        t0: f64,
        t1: f64,
        reward: f64,
    },
    End {
        t: f64,
        ens_mwh: f64,
    },
}

pub fn render_trace(rows: &[TraceRow]) -> String {
    let mut out = String::new();
    for row in rows {
        match row {
            TraceRow::Header {
                seed,
                feeder,
                horizon_h,
            } => {
                out.push_str(TRACE_HEADER);
                out.push('\n');
                out.push_str(&format!("META seed={seed} feeder={feeder} horizon={horizon_h}\n"));
            }
            TraceRow::Interval {
                t0,
                t1,
                unserved_kw,
            } => out.push_str(&format!("INT {t0} {t1} {unserved_kw}\n")),
            TraceRow::Event { t, what } => out.push_str(&format!("EVT {t} {what}\n")),
            TraceRow::Decision { t, entries } => {
                out.push_str(&format!("DEC {t} {}\n", entries.join(",")))
            }
            TraceRow::Gap { t0, t1, reward } => {
                out.push_str(&format!("GAP {t0} {t1} {reward}\n"))
            }
            TraceRow::End { t, ens_mwh } => out.push_str(&format!("END {t} {ens_mwh}\n")),
        }
    }
    out
}

/// Independent replay integration: sums unserved_kw * dt over the INT rows
/// and returns (integrated ENS in MWh, reported ENS from the END row).
pub fn parse_trace_ens(text: &str) -> Result<(f64, f64)> {
    let mut integral_kwh = 0.0;
    let mut reported = None;
    for (i, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("INT") => {
                let t0: f64 = parse_tok(toks.next(), i)?;
                let t1: f64 = parse_tok(toks.next(), i)?;
                let kw: f64 = parse_tok(toks.next(), i)?;
                if t1 < t0 {
                    return Err(Error::Validation(format!(
                        "trace line {}: interval runs backwards",
                        i + 1
                    )));
                }
                integral_kwh += kw * (t1 - t0);
            }
            Some("END") => {
                let _t: f64 = parse_tok(toks.next(), i)?;
                reported = Some(parse_tok(toks.next(), i)?);
            }
            _ => {}
        }
    }
    let reported = reported
        .ok_or_else(|| Error::Validation("trace has no END row (episode unfinished)".into()))?;
    Ok((integral_kwh / 1000.0, reported))
}

fn parse_tok(tok: Option<&str>, line: usize) -> Result<f64> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
        Error::Validation(format!("trace line {}: malformed numeric field", line + 1))
    })
}
