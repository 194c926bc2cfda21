//! CSV output: per-run traces, sweep summaries, constants and bound checks.
//!
//! Floats are written rounded to 9 significant digits in their shortest
//! form, so reading a file back and writing it again gives the same bytes.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::bounds::{BoundReport, Constants};
use crate::engine::Trace;
use crate::error::Result;

pub const TRACE_HEADER: [&str; 7] = [
    "t", "cost", "avg_cost", "backlog", "policy", "epsilon", "seed",
];

/// Formats `x` rounded to 9 significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// One parsed trace line.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub cost: f64,
    pub avg_cost: f64,
    pub backlog: f64,
    pub policy: String,
    pub epsilon: f64,
    pub seed: u64,
}

pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let (policy, eps, seed) = (
        trace.policy.as_str(),
        fmt_num(trace.epsilon),
        trace.seed.to_string(),
    );
    for r in &trace.rows {
        w.write_record([
            r.t.to_string().as_str(),
            &fmt_num(r.cost),
            &fmt_num(r.avg_cost),
            &fmt_num(r.backlog),
            policy,
            &eps,
            &seed,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

/// Writes parsed trace rows back out in the canonical format.
pub fn write_trace_rows<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string().as_str(),
            &fmt_num(r.cost),
            &fmt_num(r.avg_cost),
            &fmt_num(r.backlog),
            &r.policy,
            &fmt_num(r.epsilon),
            &r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One run of a sweep.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub preset: String,
    pub policy: String,
    pub epsilon: f64,
    pub seed: u64,
    pub n_vms: usize,
    pub arrival_mean: f64,
    pub price_variance: f64,
    pub horizon: usize,
    /// Running average at the last slot.
    pub avg_cost: f64,
    pub steady_cost: f64,
    pub steady_backlog: f64,
    /// Mean processing rate per VM over the steady window.
    pub processing: f64,
    /// Mean routing rate per link over the steady window.
    pub routing: f64,
    pub window_violations: usize,
    pub trace_file: String,
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "preset",
    "policy",
    "epsilon",
    "seed",
    "n_vms",
    "arrival_mean",
    "price_variance",
    "horizon",
    "avg_cost",
    "steady_cost",
    "steady_backlog",
    "processing",
    "routing",
    "window_violations",
    "trace_file",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.preset.as_str(),
            &r.policy,
            &fmt_num(r.epsilon),
            &r.seed.to_string(),
            &r.n_vms.to_string(),
            &fmt_num(r.arrival_mean),
            &fmt_num(r.price_variance),
            &r.horizon.to_string(),
            &fmt_num(r.avg_cost),
            &fmt_num(r.steady_cost),
            &fmt_num(r.steady_backlog),
            &fmt_num(r.processing),
            &fmt_num(r.routing),
            &r.window_violations.to_string(),
            &r.trace_file,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}

/// `quantity,value` rows for `B`, its two parts, both omegas and `C`.
pub fn write_constants_csv<W: Write>(c: &Constants, out: W) -> Result<()> {
    let (b1, b2) = crate::bounds::constant_b_parts(&c.extremes);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "value"])?;
    for (name, v) in [
        ("B", c.b),
        ("B1", b1),
        ("B2", b2),
        ("omega_Q", c.omega_big),
        ("omega_q", c.omega_small),
        ("C", c.c),
    ] {
        w.write_record([name, &fmt_num(v)])?;
    }
    w.flush()?;
    Ok(())
}

pub const BOUND_HEADER: [&str; 6] = [
    "check",
    "bound",
    "slots",
    "violations",
    "max_ratio",
    "min_slack",
];

pub fn write_bound_reports<W: Write>(reports: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUND_HEADER)?;
    for r in reports {
        let min_slack = r.slack.iter().copied().fold(f64::INFINITY, f64::min);
        let min_slack = if r.slack.is_empty() {
            r.bound
        } else {
            min_slack
        };
        w.write_record([
            r.name,
            &fmt_num(r.bound),
            &r.slack.len().to_string(),
            &r.violations.to_string(),
            &fmt_num(r.max_ratio),
            &fmt_num(min_slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}
