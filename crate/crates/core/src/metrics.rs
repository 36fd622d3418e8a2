//! Chunk-grained QoE metrics and batch aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::plant::{ChunkRecord, EpisodeLog};
use crate::{Error, Result};

/// `sign` with `sign(0) = 0`.
pub fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `H(s) = 1` for `s >= 0`, else 0.
pub fn heaviside(s: f64) -> u8 {
    u8::from(s >= 0.0)
}

pub fn avg_quality(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::NotEnoughChunks { metric: "avg_quality", needed: 1, got: 0 });
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Returns the switch count normalized by `M - 1` and the raw count.
pub fn quality_variation(rates: &[f64]) -> Result<(f64, usize)> {
    if rates.len() < 2 {
        return Err(Error::NotEnoughChunks { metric: "quality_variation", needed: 2, got: rates.len() });
    }
    let count = rates
        .windows(2)
        .map(|w| sign(w[1] - w[0]).unsigned_abs() as usize)
        .sum::<usize>();
    Ok((count as f64 / (rates.len() - 1) as f64, count))
}

/// Chunks with `x(t_k) <= delta`, skipping those before `count_from`.
pub fn rebuffering_time(chunks: &[ChunkRecord], delta: f64, count_from: f64) -> usize {
    chunks
        .iter()
        .filter(|c| c.t >= count_from)
        .map(|c| heaviside(delta - c.x) as usize)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoEReport {
    pub scenario: Option<u8>,
    pub replan: bool,
    pub seed: u64,
    pub avg_quality: f64,
    pub switch_count: usize,
    pub variation_norm: f64,
    pub rebuffer_count: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl QoEReport {
    /// Startup chunks (`t_k < delta_startup`) are excluded from the
    /// rebuffering count unless `count_startup` is set.
    pub fn from_log(log: &EpisodeLog, count_startup: bool) -> Result<Self> {
        let rates: Vec<f64> = log.chunks.iter().map(|c| c.r).collect();
        let (variation_norm, switch_count) = quality_variation(&rates)?;
        let count_from = if count_startup { f64::NEG_INFINITY } else { log.delta_startup };
        Ok(Self {
            scenario: log.scenario_id,
            replan: log.replan_enabled,
            seed: log.seed,
            avg_quality: avg_quality(&rates)?,
            switch_count,
            variation_norm,
            rebuffer_count: rebuffering_time(&log.chunks, log.chunk_duration, count_from),
            m: rates.len(),
        })
    }
}

#[derive(Serialize)]
struct QoECsvRow {
    scenario: Option<u8>,
    replan: bool,
    seed: u64,
    avg_quality: f64,
    switch_count: usize,
    variation_norm: f64,
    rebuffer_count: usize,
}

pub fn write_qoe_csv<W: Write>(reports: &[QoEReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if reports.is_empty() {
        out.write_record(["scenario", "replan", "seed", "avg_quality", "switch_count", "variation_norm", "rebuffer_count"])?;
    }
    for r in reports {
        out.serialize(QoECsvRow {
            scenario: r.scenario,
            replan: r.replan,
            seed: r.seed,
            avg_quality: r.avg_quality,
            switch_count: r.switch_count,
            variation_norm: r.variation_norm,
            rebuffer_count: r.rebuffer_count,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_qoe_json<W: Write>(reports: &[QoEReport], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, reports)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Per-cell means over a batch, one cell per scenario and replanning arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: Option<u8>,
    pub replan: bool,
    pub episodes: usize,
    pub avg_quality: f64,
    /// Mean raw switch count.
    pub quality_variation: f64,
    pub variation_norm: f64,
    pub rebuffering_time: f64,
}

pub fn batch_report(reports: &[QoEReport]) -> Result<Vec<TableRow>> {
    if reports.is_empty() {
        return Err(Error::NotEnoughChunks { metric: "batch_report", needed: 1, got: 0 });
    }
    let mut cells: BTreeMap<(Option<u8>, bool), Vec<&QoEReport>> = BTreeMap::new();
    for r in reports {
        cells.entry((r.scenario, r.replan)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((scenario, replan), cell)| {
            let m = cell[0].m;
            if let Some(odd) = cell.iter().find(|r| r.m != m) {
                return Err(Error::MixedCell(format!(
                    "scenario {scenario:?}, replan {replan}: seed {} has {} chunks, seed {} has {m}",
                    odd.seed, odd.m, cell[0].seed
                )));
            }
            let n = cell.len() as f64;
            let mean = |f: &dyn Fn(&QoEReport) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            Ok(TableRow {
                scenario,
                replan,
                episodes: cell.len(),
                avg_quality: mean(&|r| r.avg_quality),
                quality_variation: mean(&|r| r.switch_count as f64),
                variation_norm: mean(&|r| r.variation_norm),
                rebuffering_time: mean(&|r| r.rebuffer_count as f64),
            })
        })
        .collect()
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-width text rendering of the table.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} {:<7} {:>8} {:>12} {:>18} {:>17}",
        "scenario", "replan", "episodes", "avg_quality", "quality_variation", "rebuffering_time"
    );
    for r in rows {
        let scen = r.scenario.map_or_else(|| "trace".to_string(), |id| id.to_string());
        let _ = writeln!(
            s,
            "{:<9} {:<7} {:>8} {:>12.4} {:>18.2} {:>17.2}",
            scen,
            if r.replan { "on" } else { "off" },
            r.episodes,
            r.avg_quality,
            r.quality_variation,
            r.rebuffering_time
        );
    }
    s
}
