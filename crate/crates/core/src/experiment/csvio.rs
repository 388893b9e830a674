//! CSV files written by the harness.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::market::TradeEvent;
use crate::metrics::{AggregateStats, RunRecord, RunRow, STATS_HEADER};

pub const RUN_HEADER: &str = "t,p_ext,ask,bid,event,d,loss,reward";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Floats use Rust's shortest round-trip formatting, so parsing the text
/// back gives the same bits.
pub fn record_to_csv(record: &RunRecord) -> String {
    let mut s = String::with_capacity(48 * (record.len() + 1));
    s.push_str(RUN_HEADER);
    s.push('\n');
    for r in &record.rows {
        s.push_str(&format!(
            "{},{},{:?},{:?},{},{},{:?},{:?}\n",
            r.t,
            r.p_ext,
            r.ask,
            r.bid,
            r.event.name(),
            r.event.direction(),
            r.loss,
            r.reward
        ));
    }
    s
}

pub fn record_from_csv(text: &str) -> Result<RunRecord, CsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CsvError::Malformed { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != RUN_HEADER {
        return Err(CsvError::Malformed { line: 1, msg: format!("expected header {RUN_HEADER}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| CsvError::Malformed { line, msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64, CsvError> {
            field(k).parse().map_err(|_| bad(format!("bad number {:?}", field(k))))
        };
        let event = TradeEvent::from_name(field(4)).ok_or_else(|| bad(format!("bad event {:?}", field(4))))?;
        let d: i8 = field(5).parse().map_err(|_| bad(format!("bad direction {:?}", field(5))))?;
        if d != event.direction() {
            return Err(bad(format!("direction {d} does not match event {}", event.name())));
        }
        rows.push(RunRow {
            t: field(0).parse().map_err(|_| bad(format!("bad slot {:?}", field(0))))?,
            p_ext: field(1).parse().map_err(|_| bad(format!("bad price {:?}", field(1))))?,
            ask: num(2)?,
            bid: num(3)?,
            event,
            loss: num(6)?,
            reward: num(7)?,
        });
    }
    Ok(RunRecord { rows })
}

pub fn stats_to_csv(stats: &[AggregateStats]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for row in stats {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

pub fn write_record(record: &RunRecord, path: &Path) -> Result<(), CsvError> {
    Ok(fs::write(path, record_to_csv(record))?)
}

pub fn write_stats(stats: &[AggregateStats], path: &Path) -> Result<(), CsvError> {
    Ok(fs::write(path, stats_to_csv(stats))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: u64, event: TradeEvent) -> RunRow {
        RunRow { t, p_ext: 1000 + t as i64, ask: 1000.1 + 1.0 / 3.0, bid: 999.5, event, loss: -0.1, reward: -1e-17 }
    }

    #[test]
    fn empty_record_is_header_only() {
        assert_eq!(record_to_csv(&RunRecord::default()), format!("{RUN_HEADER}\n"));
    }

    #[test]
    fn three_rows_four_lines() {
        let r = RunRecord { rows: vec![row(0, TradeEvent::Buy), row(1, TradeEvent::Pass), row(2, TradeEvent::NoTrader)] };
        let text = record_to_csv(&r);
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
        assert_eq!(record_from_csv(&text).unwrap(), r);
    }

    #[test]
    fn rejects_bad_rows() {
        let text = format!("{RUN_HEADER}\n0,1000,1.0,1.0,buy,-1,0.0,0.0\n");
        assert!(matches!(record_from_csv(&text), Err(CsvError::Malformed { line: 2, .. })));
        assert!(record_from_csv("t,p\n").is_err());
    }
}
