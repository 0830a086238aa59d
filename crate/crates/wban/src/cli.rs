use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use wban_core::channel::generate_synthetic;
use wban_core::engine::{
    assemble_channels, run, source_traces, ChannelSource, RunResult, Scheme, SweepResult,
};
use wban_core::metrics::{
    lcr_curve, outage_curve, threshold_at_outage, threshold_grid, CurveKind, MetricsCurve,
    SinrSeries,
};

use crate::config::{self, Loaded};
use crate::error::{Error, Result};
use crate::io::{self, RunLabel};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(
    name = "wban",
    version,
    about = "Coexisting body area network relaying simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its series, curves and summary.
    Simulate(RunArgs),
    /// Run every victim/interferer combination with repetitions.
    Sweep(RunArgs),
    /// Write synthetic trace CSVs, from `[[trace]]` entries or the experiment's links.
    GenTraces(RunArgs),
    /// Write the block-rate channel set an experiment runs on, overlays included.
    OverlayTraces(RunArgs),
    /// Outage and level-crossing curves for a stand-alone SINR series.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Suppress the human-readable report on stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the master seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Series CSV with `t_ms,sinr_db` rows.
    #[arg(long)]
    pub series: PathBuf,
    /// Threshold grid and LCR reference taken from this config's `[metrics]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Threshold grid as `lo:hi:step` in dB; overrides the config.
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

/// Runs a parsed command, returning the report for stdout.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::GenTraces(a) => gen_traces(&a),
        Command::OverlayTraces(a) => overlay_traces(&a),
        Command::Metrics(a) => metrics(&a),
    }
}

fn load(a: &RunArgs) -> Result<Loaded> {
    let mut l = config::load(&a.config)?;
    l.override_seed(a.seed);
    Ok(l)
}

fn scheme_file(dir: &Path, kind: CurveKind, scheme: Scheme) -> PathBuf {
    dir.join(format!("{}_{}.csv", kind.as_str(), scheme.as_str()))
}

fn subjects(ids: &[wban_core::SubjectId]) -> String {
    if ids.is_empty() {
        return "none".into();
    }
    ids.iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.2} dB"))
}

fn run_report(r: &RunResult) -> String {
    let mut out = String::new();
    for scheme in Scheme::ALL {
        let s = r.summary(scheme);
        let _ = writeln!(
            out,
            "{:<7} thr@1% {:>10}  thr@10% {:>10}  lcr@ref {:.3} Hz",
            scheme.as_str(),
            fmt_opt(s.threshold_at_1pct_db),
            fmt_opt(s.threshold_at_10pct_db),
            s.lcr_at_reference_hz
        );
    }
    let _ = writeln!(out, "gain at 10% outage: {}", fmt_opt(r.gain_at_10pct_db));
    let u = &r.usage;
    let _ = writeln!(
        out,
        "relay choices: {} / {} of {} packets, relay path won {}",
        u.chosen[0], u.chosen[1], u.packets, u.relayed_won
    );
    out
}

pub fn simulate(a: &RunArgs) -> Result<String> {
    let cfg = load(a)?.experiment()?;
    let result = run(&cfg)?;
    let out = &a.common.out;
    let victim = cfg.victim.subject().to_string();
    let interferers = subjects(
        &cfg.interferers
            .iter()
            .map(|i| i.wban.subject())
            .collect::<Vec<_>>(),
    );

    let label = RunLabel {
        combination: 0,
        victim: &victim,
        interferer: &interferers,
        rep: 0,
    };
    io::write_text(
        &out.join("summary.csv"),
        &format!(
            "{}\n{}",
            io::SUMMARY_HEADER,
            io::summary_rows(label, &result)
        ),
    )?;
    for scheme in Scheme::ALL {
        let c = result.curves(scheme);
        for curve in [&c.outage, &c.lcr] {
            io::write_text(
                &scheme_file(&out.join("curves"), curve.kind, scheme),
                &io::format_curve(curve, scheme.as_str(), &victim),
            )?;
        }
        for s in &result.sensors {
            let path = out.join("series").join(format!(
                "{}_{}.csv",
                s.sensor.location.code(),
                scheme.as_str()
            ));
            io::write_text(&path, &io::format_series(s.scheme(scheme)))?;
        }
    }
    let report = format!(
        "victim {victim}, interferers {interferers}, {} epochs from block {}, seed {}\n{}",
        cfg.epochs,
        cfg.start_index,
        cfg.seed,
        run_report(&result)
    );
    io::write_text(&out.join("summary.txt"), &report)?;
    Ok(report)
}

/// Elementwise mean of the repetitions' curves.
fn mean_curve(curves: &[&MetricsCurve]) -> MetricsCurve {
    let first = curves[0];
    let n = curves.len() as f64;
    let values = (0..first.values.len())
        .map(|i| curves.iter().map(|c| c.values[i]).sum::<f64>() / n)
        .collect();
    MetricsCurve {
        kind: first.kind,
        thresholds: first.thresholds.clone(),
        values,
    }
}

fn write_sweep(out: &Path, result: &SweepResult) -> Result<String> {
    let mut summary = format!("{}\n", io::SUMMARY_HEADER);
    let mut agg = format!("{}\n", io::AGGREGATE_HEADER);
    let mut report = String::new();
    for c in &result.combinations {
        let victim = c.victim.to_string();
        let intf = subjects(&c.interferers);
        for (rep, r) in c.runs.iter().enumerate() {
            summary += &io::summary_rows(
                RunLabel {
                    combination: c.id,
                    victim: &victim,
                    interferer: &intf,
                    rep,
                },
                r,
            );
        }
        agg += &io::aggregate_rows(c, &victim, &intf);
        for scheme in Scheme::ALL {
            let curves: Vec<_> = c.runs.iter().map(|r| r.curves(scheme)).collect();
            let outage = mean_curve(&curves.iter().map(|x| &x.outage).collect::<Vec<_>>());
            let lcr = mean_curve(&curves.iter().map(|x| &x.lcr).collect::<Vec<_>>());
            for curve in [outage, lcr] {
                let path = out.join("curves").join(format!(
                    "c{}_{}_{}.csv",
                    c.id,
                    curve.kind.as_str(),
                    scheme.as_str()
                ));
                io::write_text(&path, &io::format_curve(&curve, scheme.as_str(), &victim))?;
            }
        }
        let _ = writeln!(
            report,
            "combination {:>3}: victim {} vs {:<5} gain@10% {:>7.3} ± {:.3} dB over {} runs",
            c.id,
            victim,
            intf,
            c.gain_at_10pct_db.mean,
            c.gain_at_10pct_db.std,
            c.gain_at_10pct_db.count
        );
    }
    io::write_text(&out.join("summary.csv"), &summary)?;
    io::write_text(&out.join("aggregate.csv"), &agg)?;
    io::write_text(&out.join("summary.txt"), &report)?;
    Ok(report)
}

pub fn sweep(a: &RunArgs) -> Result<String> {
    let plan = load(a)?.sweep_plan()?;
    let result = parallel::sweep(&plan, a.threads)?;
    write_sweep(&a.common.out, &result)
}

pub fn gen_traces(a: &RunArgs) -> Result<String> {
    let loaded = load(a)?;
    let traces = if loaded.file.trace.is_empty() {
        let cfg = loaded.experiment()?;
        if !matches!(cfg.channels, ChannelSource::Synthetic(_)) {
            return Err(Error::config(
                "channels",
                "gen-traces needs source = \"synthetic\" or `[[trace]]` entries",
            ));
        }
        source_traces(&cfg)?
    } else {
        let mut v = Vec::new();
        for (link, params) in loaded.trace_list()? {
            v.push(generate_synthetic(&params, link)?);
        }
        v
    };
    for t in &traces {
        io::write_trace(&a.common.out.join(io::trace_file_name(&t.link())), t)?;
    }
    Ok(format!(
        "wrote {} traces to {}\n",
        traces.len(),
        a.common.out.display()
    ))
}

pub fn overlay_traces(a: &RunArgs) -> Result<String> {
    let cfg = load(a)?.experiment()?;
    let set = assemble_channels(&cfg)?;
    for t in set.iter() {
        io::write_trace(&a.common.out.join(io::trace_file_name(&t.link())), t)?;
    }
    Ok(format!(
        "wrote {} channels at {} ms to {}\n",
        set.len(),
        cfg.epoch_period_ms,
        a.common.out.display()
    ))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::config("thresholds", format!("expected `lo:hi:step`, got `{s}`"));
    let parts = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    match parts[..] {
        [lo, hi, step] if lo.is_finite() && hi.is_finite() && hi >= lo && step > 0.0 => {
            Ok(threshold_grid(lo, hi, step))
        }
        _ => Err(bad()),
    }
}

pub fn metrics(a: &MetricsArgs) -> Result<String> {
    let section = match &a.config {
        Some(p) => config::load(p)?.file.metrics,
        None => config::MetricsSection::default(),
    };
    let thresholds = match &a.thresholds {
        Some(s) => parse_grid(s)?,
        None => section.thresholds()?,
    };
    let series: SinrSeries = io::read_series(&a.series)?;
    let runtime = |e: wban_core::metrics::MetricsError| Error::Engine(e.into());
    let outage = outage_curve(&series, &thresholds).map_err(runtime)?;
    let lcr = lcr_curve(&series, &thresholds).map_err(runtime)?;
    let out = &a.common.out;
    io::write_text(
        &out.join("outage.csv"),
        &io::format_curve(&outage, "none", "none"),
    )?;
    io::write_text(
        &out.join("lcr.csv"),
        &io::format_curve(&lcr, "none", "none"),
    )?;
    let at = |p| fmt_opt(threshold_at_outage(&outage, p).ok());
    Ok(format!(
        "{} samples; thr@1% {}, thr@10% {}, lcr@{} dB {:.4} Hz\n",
        series.len(),
        at(0.01),
        at(0.10),
        section.lcr_reference_db,
        wban_core::metrics::level_crossing_rate(&series, section.lcr_reference_db)
            .map_err(runtime)?
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag() {
        assert_eq!(
            parse_grid("0:2:0.5").unwrap(),
            vec![0.0, 0.5, 1.0, 1.5, 2.0]
        );
        assert!(parse_grid("0:2").is_err());
        assert!(parse_grid("2:0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn mean_of_curves() {
        let a = MetricsCurve {
            kind: CurveKind::Lcr,
            thresholds: vec![0.0, 1.0],
            values: vec![1.0, 2.0],
        };
        let b = MetricsCurve {
            kind: CurveKind::Lcr,
            thresholds: vec![0.0, 1.0],
            values: vec![3.0, 4.0],
        };
        assert_eq!(mean_curve(&[&a, &b]).values, vec![2.0, 3.0]);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
