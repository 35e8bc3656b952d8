//! Command line surface for the `specpc` binary: `detect`, `simulate` and
//! `evaluate`. Flags override values from `--config`, which override
//! built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::changepoint::{detect, ChangePointReport, DetectConfig};
use crate::error::{Error, Result};
use crate::io::{format_number, parse_key_values, read_series_csv, table_csv, write_atomic, write_series_csv};
use crate::sim::{parse_band, run_experiment, scenario, ExperimentConfig, ExperimentResult, ScenarioName};
use crate::spca::ComponentSource;

pub const OUTPUT_DIR_ENV: &str = "SPECPC_OUTPUT_DIR";
pub const DEFAULT_SAMPLING_RATE: f64 = 100.0;

#[derive(Debug, Parser)]
#[command(name = "specpc", version, about = "Spectral principal component change-point detection")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect change points in a CSV series.
    Detect(DetectArgs),
    /// Write a simulated scenario and its true change points.
    Simulate(SimulateArgs),
    /// Run replicated experiments and tabulate detection metrics.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct MethodArgs {
    /// Summary component to segment, 1-based.
    #[arg(long)]
    pub component: Option<usize>,
    /// Block length in samples.
    #[arg(long = "block-length", short = 'B')]
    pub block_length: Option<usize>,
    /// Daniell smoothing span (odd).
    #[arg(long)]
    pub span: Option<usize>,
    /// Filter radius in lags.
    #[arg(long, short = 'R')]
    pub radius: Option<usize>,
    /// Number of components to extract.
    #[arg(long, short = 'q')]
    pub components: Option<usize>,
    /// Restrict the CUSUM sum to a band, `LOW,HIGH` in Hz or a band name.
    #[arg(long)]
    pub band: Option<String>,
    /// Use this threshold instead of the default.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Estimate spectral filters per block.
    #[arg(long = "per-block")]
    pub per_block: bool,
    /// `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SPECPC_OUTPUT_DIR, then `.`).
    #[arg(long = "output-dir", short = 'o')]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    pub input: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long = "sampling-rate")]
    pub sampling_rate: Option<f64>,
    /// `spectral` or `contemporaneous`.
    #[arg(long)]
    pub source: Option<ComponentSource>,
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long = "channels-changed")]
    pub channels_changed: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "output-dir", short = 'o')]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long = "channels-changed")]
    pub channels_changed: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One or more of `spectral`, `contemporaneous`; each gives one row.
    #[arg(long, value_delimiter = ',')]
    pub source: Vec<ComponentSource>,
    /// Match window in blocks.
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub method: MethodArgs,
}

fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    match path {
        Some(p) => parse_key_values(&fs::read_to_string(p)?),
        None => Ok(BTreeMap::new()),
    }
}

fn parse_setting<T: FromStr>(settings: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    settings
        .get(key)
        .map(|v| v.parse().map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}"))))
        .transpose()
}

fn output_dir(flag: Option<&Path>, settings: &BTreeMap<String, String>) -> Result<PathBuf> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| settings.get("output_dir").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

impl MethodArgs {
    fn overlay(&self, cfg: &mut DetectConfig) -> Result<()> {
        if let Some(v) = self.component {
            cfg.component = v;
        }
        if let Some(v) = self.block_length {
            cfg.block_length = v;
        }
        if let Some(v) = self.span {
            cfg.span = v;
        }
        if let Some(v) = self.radius {
            cfg.radius = v;
        }
        if let Some(v) = self.components {
            cfg.components = v;
        }
        if let Some(v) = &self.band {
            cfg.band_hz = Some(parse_band(v)?);
        }
        if self.threshold.is_some() {
            cfg.threshold_override = self.threshold;
        }
        cfg.per_block_filters |= self.per_block;
        Ok(())
    }
}

fn detect_config(args: &DetectArgs, settings: &BTreeMap<String, String>) -> Result<(DetectConfig, f64)> {
    let mut exp = ExperimentConfig::default();
    exp.apply_settings(settings)?;
    let mut cfg = exp.detect;
    if let Some(t) = parse_setting::<f64>(settings, "threshold")? {
        cfg.threshold_override = Some(t);
    }
    if let Some(v) = parse_setting::<bool>(settings, "per_block")? {
        cfg.per_block_filters = v;
    }
    args.method.overlay(&mut cfg)?;
    if let Some(s) = args.source {
        cfg.source = s;
    }
    let fs_hz = args.sampling_rate.or(parse_setting(settings, "sampling_rate")?).unwrap_or(DEFAULT_SAMPLING_RATE);
    Ok((cfg, fs_hz))
}

fn cusum_table(report: &ChangePointReport) -> Result<Vec<u8>> {
    let header: Vec<String> = [
        "segment_start",
        "segment_end",
        "split_block",
        "split_time",
        "aggregate",
        "max_bin_statistic",
        "threshold",
        "accepted",
    ]
    .map(String::from)
    .to_vec();
    let b = report.config.block_length;
    let rows = report.traces.iter().flat_map(|tr| {
        let chosen = tr.accepted.then(|| tr.splits[tr.argmax().0]);
        tr.splits.iter().zip(&tr.aggregate).zip(&tr.per_frequency).map(move |((&k, &a), row)| {
            let peak = tr.included_bins.iter().map(|&j| row[j]).fold(0.0, f64::max);
            vec![
                tr.segment.0.to_string(),
                tr.segment.1.to_string(),
                k.to_string(),
                (k * b).to_string(),
                format_number(a),
                format_number(peak),
                format_number(tr.threshold),
                u8::from(chosen == Some(k)).to_string(),
            ]
        })
    });
    table_csv(&header, rows)
}

fn time_frequency_table(report: &ChangePointReport) -> Result<Vec<u8>> {
    let spectra = &report.block_spectra;
    let mut header = vec!["block".to_string(), "start_sample".to_string()];
    header.extend(spectra.freqs_hz().into_iter().map(format_number));
    let b = spectra.block_length();
    let rows = (0..spectra.num_blocks()).map(|k| {
        let mut r = vec![k.to_string(), (k * b).to_string()];
        r.extend(spectra.values().row(k).iter().map(|&v| format_number(v)));
        r
    });
    table_csv(&header, rows)
}

fn summary_line(report: &ChangePointReport) -> String {
    let times: Vec<String> = report.change_times.iter().map(usize::to_string).collect();
    let secs: Vec<String> = report.change_seconds.iter().map(|&s| format_number(s)).collect();
    let ev: Vec<String> = report.explained_variance.iter().map(|&v| format_number(v)).collect();
    format!(
        "change points (samples): [{}]\nchange points (seconds): [{}]\ncomponent: {} {}\nthreshold: {}\nexplained variance: [{}]\n",
        times.join(", "),
        secs.join(", "),
        report.source,
        report.component,
        format_number(report.threshold),
        ev.join(", ")
    )
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| Error::Io(e.into()))?;
    s.push(b'\n');
    Ok(s)
}

pub fn cmd_detect(args: &DetectArgs, json: bool, out: &mut dyn Write) -> Result<ChangePointReport> {
    let settings = load_config(args.method.config.as_deref())?;
    let (cfg, fs_hz) = detect_config(args, &settings)?;
    let series = read_series_csv(&args.input, fs_hz)?;
    if cfg.block_length == 0 {
        return Err(Error::InvalidParameter("block length must be positive".into()));
    }
    if series.len() < 2 * cfg.block_length {
        return Err(Error::Data {
            row: series.len(),
            message: format!("series has {} rows, need at least 2B = {}", series.len(), 2 * cfg.block_length),
        });
    }
    let report = detect(&series, &cfg)?;
    let dir = output_dir(args.method.output_dir.as_deref(), &settings)?;
    let json_report = json_bytes(&report)?;
    write_atomic(&dir.join("report.json"), &json_report)?;
    write_atomic(&dir.join("report.txt"), summary_line(&report).as_bytes())?;
    write_atomic(&dir.join("cusum.csv"), &cusum_table(&report)?)?;
    write_atomic(&dir.join("time_frequency.csv"), &time_frequency_table(&report)?)?;
    if json {
        out.write_all(&json_report)?;
    } else {
        out.write_all(summary_line(&report).as_bytes())?;
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    scenario: String,
    channels_changed: usize,
    seed: u64,
    samples: usize,
    channels: usize,
    truth: Vec<usize>,
    series_path: PathBuf,
    truth_path: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs, json: bool, out: &mut dyn Write) -> Result<(PathBuf, PathBuf)> {
    let settings = load_config(args.config.as_deref())?;
    let name: ScenarioName = match (&args.scenario, settings.get("scenario")) {
        (Some(s), _) | (None, Some(s)) => s.parse()?,
        (None, None) => return Err(Error::InvalidParameter("--scenario is required".into())),
    };
    let cc = args.channels_changed.or(parse_setting(&settings, "channels_changed")?).unwrap_or(64);
    let seed = args.seed.or(parse_setting(&settings, "seed")?).unwrap_or(1);
    let sc = scenario(name, cc, seed)?;
    let dir = output_dir(args.output_dir.as_deref(), &settings)?;
    let stem =
        if name.uses_channels_changed() { format!("{name}_cc{cc}_seed{seed}") } else { format!("{name}_seed{seed}") };
    let series_path = dir.join(format!("{stem}.csv"));
    let truth_path = dir.join(format!("{stem}.truth.csv"));
    write_series_csv(&series_path, &sc.series)?;
    let truth_rows = sc.truth.iter().map(|t| vec![t.to_string()]);
    write_atomic(&truth_path, &table_csv(&["change_point".to_string()], truth_rows)?)?;
    let summary = SimulateSummary {
        scenario: name.to_string(),
        channels_changed: cc,
        seed,
        samples: sc.series.len(),
        channels: sc.series.channels(),
        truth: sc.truth,
        series_path: series_path.clone(),
        truth_path: truth_path.clone(),
    };
    if json {
        out.write_all(&json_bytes(&summary)?)?;
    } else {
        writeln!(out, "{}\n{}", series_path.display(), truth_path.display())?;
    }
    Ok((series_path, truth_path))
}

pub fn metrics_header() -> Vec<String> {
    [
        "scenario",
        "method",
        "component",
        "channels_changed",
        "seed",
        "replicates",
        "detection_rate",
        "detection_proportion",
        "mad",
        "window_blocks",
    ]
    .map(String::from)
    .to_vec()
}

pub fn metrics_row(r: &ExperimentResult) -> Vec<String> {
    let m = &r.metrics;
    vec![
        r.scenario.to_string(),
        r.source.to_string(),
        r.component.to_string(),
        r.channels_changed.to_string(),
        r.seed.to_string(),
        m.replicates.to_string(),
        format_number(m.detection_rate),
        format_number(m.detection_proportion),
        m.mad.map(format_number).unwrap_or_default(),
        m.window_blocks.to_string(),
    ]
}

pub fn cmd_evaluate(args: &EvaluateArgs, json: bool, out: &mut dyn Write) -> Result<Vec<ExperimentResult>> {
    let settings = load_config(args.method.config.as_deref())?;
    let mut base = ExperimentConfig::default();
    base.apply_settings(&settings)?;
    if let Some(t) = parse_setting::<f64>(&settings, "threshold")? {
        base.detect.threshold_override = Some(t);
    }
    if let Some(s) = &args.scenario {
        base.scenario = s.parse()?;
    }
    if let Some(v) = args.channels_changed {
        base.channels_changed = v;
    }
    if let Some(v) = args.replicates {
        base.replicates = v;
    }
    if let Some(v) = args.seed {
        base.seed = v;
    }
    if args.window.is_some() {
        base.window_blocks = args.window;
    }
    args.method.overlay(&mut base.detect)?;
    if base.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be at least 1".into()));
    }
    let sources = if args.source.is_empty() { vec![base.detect.source] } else { args.source.clone() };

    let mut results = Vec::new();
    for s in sources {
        let mut cfg = base.clone();
        cfg.detect.source = s;
        results.push(run_experiment(&cfg)?);
    }

    let dir = output_dir(args.method.output_dir.as_deref(), &settings)?;
    let metrics = table_csv(&metrics_header(), results.iter().map(metrics_row))?;
    write_atomic(&dir.join("metrics.csv"), &metrics)?;
    let hist_rows = results.iter().flat_map(|r| {
        r.metrics.histogram.iter().map(move |(t, n)| vec![r.source.to_string(), t.to_string(), n.to_string()])
    });
    let hist_header = ["method", "change_time", "count"].map(String::from).to_vec();
    write_atomic(&dir.join("histogram.csv"), &table_csv(&hist_header, hist_rows)?)?;
    if json {
        out.write_all(&json_bytes(&results)?)?;
    } else {
        out.write_all(&metrics)?;
    }
    Ok(results)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a, cli.json, out).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(a, cli.json, out).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(a, cli.json, out).map(|_| ()),
    }
}

/// Parses arguments, runs, reports errors on stderr and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("specpc").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        fs::write(&cfg_path, "B = 50\nspan = 3\ncomponent = 2\nband = alpha\n").unwrap();
        let cli = parse(&["detect", "x.csv", "-B", "200", "--config", cfg_path.to_str().unwrap()]);
        let Command::Detect(a) = &cli.command else { panic!() };
        let settings = load_config(a.method.config.as_deref()).unwrap();
        let (cfg, fs_hz) = detect_config(a, &settings).unwrap();
        assert_eq!((cfg.block_length, cfg.span, cfg.component), (200, 3, 2));
        assert_eq!(cfg.band_hz, Some((8.0, 12.0)));
        assert_eq!(fs_hz, 100.0);
    }

    #[test]
    fn zero_replicates_is_usage_error() {
        let cli = parse(&["evaluate", "--scenario", "I", "--replicates", "0"]);
        let Command::Evaluate(a) = &cli.command else { panic!() };
        let err = cmd_evaluate(a, false, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_scenario_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&["simulate", "--scenario", "IV", "-o", dir.path().to_str().unwrap()]);
        let Command::Simulate(a) = &cli.command else { panic!() };
        let err = cmd_simulate(a, false, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::UnknownScenario(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn source_list_parses() {
        let cli = parse(&["evaluate", "--source", "spectral,contemporaneous"]);
        let Command::Evaluate(a) = &cli.command else { panic!() };
        assert_eq!(a.source, vec![ComponentSource::Spectral, ComponentSource::Contemporaneous]);
    }
}
