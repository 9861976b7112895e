//! Posterior summaries and convergence diagnostics for monitored nodes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{Dag, NodeId};

#[derive(Debug, Clone, Error)]
pub enum DiagnosticsError {
    #[error("`{0}` is not a monitored node")]
    UnknownMonitor(String),
    #[error("`{name}` has {got} draws; {needed} are needed")]
    TooFewDraws { name: String, needed: usize, got: usize },
    #[error("the Brooks-Gelman-Rubin diagnostic needs at least two chains")]
    NeedTwoChains,
    #[error("`{0}`: chains hold different numbers of draws")]
    UnequalChains(String),
}

/// One monitored value produced by a lead worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRecord {
    pub chain: u32,
    pub iteration: u64,
    pub node: NodeId,
    pub value: f64,
}

/// Monitored draws keyed by node name, one series per chain.
#[derive(Debug, Clone)]
pub struct MonitorBuffer {
    start: u64,
    chains: usize,
    series: BTreeMap<String, Vec<Vec<f64>>>,
}

impl MonitorBuffer {
    /// `start` is the 1-based iteration number of the first retained draw.
    pub fn new(chains: usize, start: u64) -> MonitorBuffer {
        MonitorBuffer { start, chains, series: BTreeMap::new() }
    }

    pub fn push(&mut self, name: &str, chain: usize, value: f64) {
        let entry =
            self.series.entry(name.to_string()).or_insert_with(|| vec![Vec::new(); self.chains]);
        entry[chain].push(value);
    }

    /// Groups engine records by node name. Records must arrive in iteration
    /// order within each chain, which the engine guarantees.
    pub fn from_records(
        dag: &Dag,
        records: &[MonitorRecord],
        chains: usize,
        start: u64,
    ) -> MonitorBuffer {
        let mut buf = MonitorBuffer::new(chains, start);
        for r in records {
            buf.push(dag.name(r.node), r.chain as usize, r.value);
        }
        buf
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.series.get(name).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// All draws of one node with chains concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.series.get(name).map(|chains| chains.iter().flatten().copied().collect())
    }

    /// CSV export: `name,chain,iteration,value` with deterministic ordering.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,chain,iteration,value\n");
        for (name, chains) in &self.series {
            for (chain, draws) in chains.iter().enumerate() {
                for (k, v) in draws.iter().enumerate() {
                    let iter = self.start + k as u64;
                    let _ = writeln!(out, "{name},{chain},{iter},{v:?}");
                }
            }
        }
        out
    }
}

/// Summary line for one node, matching the columns of the stats table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub mc_error: f64,
    pub val2_5: f64,
    pub val97_5: f64,
    pub start: u64,
    pub sample: usize,
    pub ess: f64,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean_of(xs);
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (R type 7) of already sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Monte Carlo standard error of the pooled mean by the batch-means method:
/// each chain is cut into up to 50 equal batches (a remainder at the end of
/// a chain is dropped) and the batch means are pooled.
fn mc_error(chains: &[Vec<f64>]) -> f64 {
    let mut batch_means = Vec::new();
    for draws in chains {
        if draws.is_empty() {
            continue;
        }
        let b = draws.len().min(50);
        let size = draws.len() / b;
        for batch in 0..b {
            let slice = &draws[batch * size..(batch + 1) * size];
            batch_means.push(mean_of(slice));
        }
    }
    if batch_means.len() < 2 {
        return 0.0;
    }
    sample_sd(&batch_means) / (batch_means.len() as f64).sqrt()
}

/// Effective sample size of one chain by Geyer's initial positive sequence:
/// the integrated autocorrelation time sums consecutive autocorrelation
/// pairs until the first non-positive pair. The result is clamped to
/// (0, n]; a constant series counts as fully independent.
pub fn ess(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean_of(draws);
    let c0: f64 = draws.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..n - k {
            s += (draws[t] - m) * (draws[t + k] - m);
        }
        s / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    if tau <= 0.0 {
        return n as f64;
    }
    (n as f64 / tau).min(n as f64)
}

/// Pooled summary of one monitored node across all chains.
pub fn summary(buf: &MonitorBuffer, name: &str) -> Result<SummaryRecord, DiagnosticsError> {
    let chains = buf
        .series(name)
        .ok_or_else(|| DiagnosticsError::UnknownMonitor(name.to_string()))?;
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    if pooled.len() < 2 {
        return Err(DiagnosticsError::TooFewDraws {
            name: name.to_string(),
            needed: 2,
            got: pooled.len(),
        });
    }
    let mut sorted = pooled.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("monitored draws are finite"));
    let ess_total: f64 = chains.iter().filter(|c| !c.is_empty()).map(|c| ess(c)).sum();
    Ok(SummaryRecord {
        name: name.to_string(),
        mean: mean_of(&pooled),
        median: quantile_sorted(&sorted, 0.5),
        sd: sample_sd(&pooled),
        mc_error: mc_error(chains),
        val2_5: quantile_sorted(&sorted, 0.025),
        val97_5: quantile_sorted(&sorted, 0.975),
        start: buf.start(),
        sample: pooled.len(),
        ess: ess_total,
    })
}

/// Summaries for every monitored node, in name order.
pub fn summarise_all(buf: &MonitorBuffer) -> Result<Vec<SummaryRecord>, DiagnosticsError> {
    buf.names().map(|n| summary(buf, n)).collect::<Result<Vec<_>, _>>()
}

/// Brooks-Gelman-Rubin potential scale reduction factor. Needs two or more
/// chains of equal length. Values near 1 indicate the chains agree.
pub fn bgr(buf: &MonitorBuffer, name: &str) -> Result<f64, DiagnosticsError> {
    let chains = buf
        .series(name)
        .ok_or_else(|| DiagnosticsError::UnknownMonitor(name.to_string()))?;
    let m = chains.len();
    if m < 2 {
        return Err(DiagnosticsError::NeedTwoChains);
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticsError::UnequalChains(name.to_string()));
    }
    if n < 2 {
        return Err(DiagnosticsError::TooFewDraws { name: name.to_string(), needed: 2, got: n });
    }
    let means: Vec<f64> = chains.iter().map(|c| mean_of(c)).collect();
    let w = chains.iter().map(|c| sample_sd(c).powi(2)).sum::<f64>() / m as f64;
    let grand = mean_of(&means);
    let b_over_n =
        means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1) as f64;
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let n = n as f64;
    Ok(((n - 1.0) / n + b_over_n / w).sqrt())
}

/// Four significant figures, fixed notation.
fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (3 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Renders summaries as the familiar stats table:
///
/// ```text
///         mean  median  sd  MC_error  val2.5pc  val97.5pc  start  sample  ESS
/// name    ...
/// ```
pub fn format_summary_table(records: &[SummaryRecord]) -> String {
    let headers = ["mean", "median", "sd", "MC_error", "val2.5pc", "val97.5pc", "start", "sample", "ESS"];
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(records.len());
    for r in records {
        cells.push(vec![
            sig4(r.mean),
            sig4(r.median),
            sig4(r.sd),
            sig4(r.mc_error),
            sig4(r.val2_5),
            sig4(r.val97_5),
            r.start.to_string(),
            r.sample.to_string(),
            format!("{:.0}", r.ess),
        ]);
    }
    let name_width = records.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (c, text) in row.iter().enumerate() {
            widths[c] = widths[c].max(text.len());
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:name_width$}", "");
    for (c, h) in headers.iter().enumerate() {
        let _ = write!(out, "  {:>width$}", h, width = widths[c]);
    }
    out.push('\n');
    for (r, rec) in records.iter().enumerate() {
        let _ = write!(out, "{:<name_width$}", rec.name);
        for (c, text) in cells[r].iter().enumerate() {
            let _ = write!(out, "  {:>width$}", text, width = widths[c]);
        }
        out.push('\n');
    }
    out
}
