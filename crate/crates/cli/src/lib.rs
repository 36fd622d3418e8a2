//! Command-line front end: flag parsing, batch execution and report files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use abrlab::config::{parse_seeds, Emit};
use abrlab::metrics::{batch_report, format_table, write_qoe_csv, write_qoe_json, write_table_csv};
use abrlab::plant::{run_episode, run_scenario, ChannelTrace, EpisodeLog};
use abrlab::{QoEReport, RunConfig, TableRow};
use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use rayon::prelude::*;

/// Marker left in the output directory until every file has been written.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmitArg {
    Log,
    Qoe,
    Table,
    Plotdata,
}

impl From<EmitArg> for Emit {
    fn from(e: EmitArg) -> Self {
        match e {
            EmitArg::Log => Emit::Log,
            EmitArg::Qoe => Emit::Qoe,
            EmitArg::Table => Emit::Table,
            EmitArg::Plotdata => Emit::Plotdata,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "abrlab", version, about = "Run buffer-control ABR scenarios and write QoE reports")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Channel scenario.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: Option<u8>,
    #[arg(long, overrides_with = "no_replan")]
    pub replan: bool,
    #[arg(long, overrides_with = "replan")]
    pub no_replan: bool,
    /// Seeds as `a..b` (inclusive), a comma list, or both: `1..10,42`.
    #[arg(long, value_name = "LIST")]
    pub seeds: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Output kinds, repeatable or comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub emit: Vec<EmitArg>,
    /// Capacity trace CSV (`t,c_true,c_meas`) used instead of a scenario.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Count startup chunks in the rebuffering metric.
    #[arg(long)]
    pub count_startup_rebuffers: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,

    #[arg(long, help_heading = "Trajectory")]
    pub t0: Option<f64>,
    #[arg(long, help_heading = "Trajectory")]
    pub tf: Option<f64>,
    #[arg(long, help_heading = "Trajectory")]
    pub x0: Option<f64>,
    #[arg(long, help_heading = "Trajectory")]
    pub xf: Option<f64>,

    /// Bitrate ladder, comma separated, strictly increasing.
    #[arg(long, value_delimiter = ',', help_heading = "Controller")]
    pub ladder: Option<Vec<f64>>,
    #[arg(long, help_heading = "Controller")]
    pub alpha: Option<f64>,
    #[arg(long, help_heading = "Controller")]
    pub kp: Option<f64>,
    /// Estimator window length, s.
    #[arg(long, help_heading = "Controller")]
    pub tau: Option<f64>,
    #[arg(long, help_heading = "Controller")]
    pub decision_interval: Option<f64>,

    #[arg(long, help_heading = "Plant")]
    pub duration: Option<f64>,
    #[arg(long, help_heading = "Plant")]
    pub delta_startup: Option<f64>,
    #[arg(long, help_heading = "Plant")]
    pub chunk_duration: Option<f64>,
    #[arg(long, help_heading = "Plant")]
    pub te: Option<f64>,
    /// Half-width of the additive noise on the measured buffer, s.
    #[arg(long, help_heading = "Plant")]
    pub buffer_noise: Option<f64>,

    #[arg(long, help_heading = "Replanning")]
    pub replan_lower: Option<f64>,
    #[arg(long, help_heading = "Replanning")]
    pub replan_upper: Option<f64>,

    /// Scenario 1 constant capacity.
    #[arg(long, help_heading = "Channel")]
    pub c0: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s2_segment_length: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s2_level_min: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s2_level_max: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s2_noise: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s2_force_below: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s3_segment_length: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s3_level_min: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s3_level_max: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s3_noise: Option<f64>,
    #[arg(long, help_heading = "Channel")]
    pub s3_force_below: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl Cli {
    /// Loads the config file, applies the flags on top and validates the result.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut c.scenario, self.scenario);
        if self.replan {
            c.replan = true;
        } else if self.no_replan {
            c.replan = false;
        }
        if let Some(s) = &self.seeds {
            c.seeds = parse_seeds(s)?;
        }
        set(&mut c.out, self.out.clone());
        if !self.emit.is_empty() {
            let mut emit: Vec<Emit> = self.emit.iter().map(|&e| e.into()).collect();
            emit.sort();
            emit.dedup();
            c.emit = emit;
        }
        set_opt(&mut c.trace, self.trace.clone());
        c.count_startup_rebuffers |= self.count_startup_rebuffers;

        let t = &mut c.trajectory;
        set(&mut t.t0, self.t0);
        set(&mut t.tf, self.tf);
        set(&mut t.x0, self.x0);
        set(&mut t.xf, self.xf);

        set(&mut c.ladder.rates, self.ladder.clone());
        let k = &mut c.controller;
        set(&mut k.alpha, self.alpha);
        set(&mut k.kp, self.kp);
        set(&mut k.tau, self.tau);
        set(&mut k.decision_interval, self.decision_interval);

        let p = &mut c.plant;
        set(&mut p.duration, self.duration);
        set(&mut p.delta_startup, self.delta_startup);
        set(&mut p.chunk_duration, self.chunk_duration);
        set(&mut p.te, self.te);
        set(&mut p.buffer_noise, self.buffer_noise);

        set_opt(&mut c.replan_bounds.lower, self.replan_lower);
        set_opt(&mut c.replan_bounds.upper, self.replan_upper);

        let ch = &mut c.channel;
        set_opt(&mut ch.c0, self.c0);
        set_opt(&mut ch.scenario2.segment_length, self.s2_segment_length);
        set_opt(&mut ch.scenario2.level_min, self.s2_level_min);
        set_opt(&mut ch.scenario2.level_max, self.s2_level_max);
        set_opt(&mut ch.scenario2.noise, self.s2_noise);
        set_opt(&mut ch.scenario2.force_below, self.s2_force_below);
        set_opt(&mut ch.scenario3.segment_length, self.s3_segment_length);
        set_opt(&mut ch.scenario3.level_min, self.s3_level_min);
        set_opt(&mut ch.scenario3.level_max, self.s3_level_max);
        set_opt(&mut ch.scenario3.noise, self.s3_noise);
        set_opt(&mut ch.scenario3.force_below, self.s3_force_below);

        c.validate()?;
        Ok(c)
    }
}

/// Everything a run produced, before anything touches the disk.
#[derive(Debug)]
pub struct Outcome {
    pub logs: Vec<EpisodeLog>,
    pub reports: Vec<QoEReport>,
    pub table: Vec<TableRow>,
}

/// Runs every seed of `cfg` (in parallel) and collects results in seed order.
pub fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let episode = cfg.episode_config()?;
    let trace = match &cfg.trace {
        Some(path) => {
            let t = ChannelTrace::load(path)?;
            t.check_covers(&episode.plant)?;
            Some(t)
        }
        None => None,
    };
    let scen = cfg.scenario_params();
    let logs: Vec<EpisodeLog> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match &trace {
            Some(t) => run_episode(&episode, &ChannelTrace { seed, ..t.clone() }),
            None => run_scenario(&episode, &scen, cfg.scenario, seed),
        })
        .collect::<abrlab::Result<_>>()
        .context("episode failed")?;
    let reports = logs
        .iter()
        .map(|l| QoEReport::from_log(l, cfg.count_startup_rebuffers))
        .collect::<abrlab::Result<Vec<_>>>()?;
    let table = batch_report(&reports)?;
    Ok(Outcome { logs, reports, table })
}

/// File stem shared by the per-episode outputs.
pub fn episode_stem(log: &EpisodeLog) -> String {
    let scen = log.scenario_id.map_or_else(|| "trace".to_string(), |id| format!("s{id}"));
    let arm = if log.replan_enabled { "replan" } else { "noreplan" };
    format!("{scen}_{arm}_seed{}", log.seed)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

fn plot_files(dir: &Path, log: &EpisodeLog) -> Result<()> {
    let stem = episode_stem(log);

    let path = dir.join(format!("{stem}_capacity.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["t", "c_true", "c_est"])?;
    for s in &log.steps {
        let est = s.c_est.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([s.t.to_string(), s.c_true.to_string(), est])?;
    }
    w.flush()?;

    let path = dir.join(format!("{stem}_buffer.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["t", "x", "ref", "delta"])?;
    for s in &log.steps {
        w.write_record([s.t.to_string(), s.x.to_string(), s.reference.to_string(), log.chunk_duration.to_string()])?;
    }
    w.flush()?;

    let path = dir.join(format!("{stem}_bitrate.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["t", "R", "r_ff"])?;
    for s in &log.steps {
        w.write_record([s.t.to_string(), s.r.to_string(), s.r_feedforward.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the requested outputs under `cfg.out`. The directory carries an
/// [`INCOMPLETE_MARKER`] file until the last write succeeds.
pub fn write_outputs(cfg: &RunConfig, outcome: &Outcome) -> Result<()> {
    let out = &cfg.out;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"run did not finish writing its outputs\n")?;

    if cfg.emit.contains(&Emit::Log) {
        let dir = out.join("episodes");
        fs::create_dir_all(&dir)?;
        for log in &outcome.logs {
            let path = dir.join(format!("{}.csv", episode_stem(log)));
            let mut w = create(&path)?;
            log.write_csv(&mut w)?;
            finish(w, &path)?;
        }
    }
    if cfg.emit.contains(&Emit::Qoe) {
        let path = out.join("qoe.csv");
        let mut w = create(&path)?;
        write_qoe_csv(&outcome.reports, &mut w)?;
        finish(w, &path)?;
        let path = out.join("qoe.json");
        let mut w = create(&path)?;
        write_qoe_json(&outcome.reports, &mut w)?;
        finish(w, &path)?;
    }
    if cfg.emit.contains(&Emit::Table) {
        let path = out.join("table.csv");
        let mut w = create(&path)?;
        write_table_csv(&outcome.table, &mut w)?;
        finish(w, &path)?;
    }
    if cfg.emit.contains(&Emit::Plotdata) {
        let dir = out.join("plot");
        fs::create_dir_all(&dir)?;
        for log in &outcome.logs {
            plot_files(&dir, log)?;
        }
    }
    fs::remove_file(&marker)?;
    Ok(())
}

/// Parses, runs and writes; returns the text table for stdout, or the
/// resolved TOML with `--print-config`.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = cli.resolve()?;
    if cli.print_config {
        return Ok(cfg.to_toml_string()?);
    }
    let outcome = simulate(&cfg)?;
    write_outputs(&cfg, &outcome)?;
    Ok(format_table(&outcome.table))
}
