//! Number formatting and the per-epoch JSON-lines metric stream.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::train::{EpochRecord, TrainReport};

/// Formats a float with 17 significant digits, which round-trips every `f64`.
/// Positional notation is used for moderate exponents, scientific otherwise.
/// Non-finite values become `null` so the output stays valid JSON.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    if x == 0.0 {
        return "0.0".to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..=16).contains(&exp) {
        return sci;
    }
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(&digits);
    } else {
        let split = (exp + 1) as usize;
        out.push_str(&digits[..split]);
        out.push('.');
        let frac = &digits[split..];
        out.push_str(if frac.is_empty() { "0" } else { frac });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub test_acc: f64,
    pub stopped_epoch: usize,
    pub seed: u64,
}

pub fn epoch_line(r: &EpochRecord) -> String {
    format!(
        "{{\"epoch\":{},\"train_loss\":{},\"val_loss\":{},\"val_acc\":{},\"wall_ms\":{}}}",
        r.epoch,
        fmt_f64(r.train_loss),
        fmt_f64(r.val_loss),
        fmt_f64(r.val_accuracy),
        fmt_f64(r.wall_ms)
    )
}

pub fn summary_line(report: &TrainReport, seed: u64) -> String {
    format!(
        "{{\"test_acc\":{},\"stopped_epoch\":{},\"seed\":{}}}",
        fmt_f64(report.test_accuracy),
        report.stopped_epoch,
        seed
    )
}

/// Writes one JSON object per epoch followed by the run summary.
/// With `include_timing == false` the `wall_ms` field is written as 0 so that
/// repeated runs produce byte-identical streams.
pub fn write_stream<W: Write>(
    out: &mut W,
    report: &TrainReport,
    seed: u64,
    include_timing: bool,
) -> std::io::Result<()> {
    for r in &report.records {
        let mut r = r.clone();
        if !include_timing {
            r.wall_ms = 0.0;
        }
        writeln!(out, "{}", epoch_line(&r))?;
    }
    writeln!(out, "{}", summary_line(report, seed))
}
