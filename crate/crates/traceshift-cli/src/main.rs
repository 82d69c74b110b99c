//! Command-line front end for the trace-timing detection pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error (missing or malformed
//! inputs, not enough data), 4 internal error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use traceshift::detect::{
    DEFAULT_N_TRAIN, DEFAULT_Q, DEFAULT_REPEATS, DEFAULT_THETA, DEFAULT_WINDOW,
};
use traceshift::{
    compute_deltas, eval_offline, eval_online, generate_dataset, load_manifest,
    quantile_shift_report, read_batch, train, write_delta_csv, Batch, DatasetScenario,
    DetectorConfig, DetectorModel, Error, Label, MetricSet, MissingPairPolicy, OfflineEvalOptions,
    Scenario, Strategy, Verdict,
};

#[derive(Parser)]
#[command(
    name = "traceshift",
    version,
    about = "Detects timing shifts in kernel-function trace batches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DetectorArgs {
    /// Delta pairing strategy: "function" or "sequence"
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Number of quantiles per pair
    #[arg(long, default_value_t = DEFAULT_Q)]
    q: usize,
    /// Detection threshold on the per-pair p-value
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Missing-pair policy: "skip" or "alert"
    #[arg(long, default_value = "skip", value_parser = parse_policy)]
    policy: MissingPairPolicy,
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            strategy: self.strategy,
            q: self.q,
            theta: self.theta,
            missing_pair_policy: self.policy,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-pair delta times for one batch file
    Deltas {
        /// Batch file (JSON lines)
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format: "csv" or "json"
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Train a detector on normal-labeled batches
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict to one scenario
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Where to write the model JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one batch against a trained model
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Offline protocol: repeated training-set sampling over one scenario
    EvalOffline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Normal batches sampled for training per repeat
        #[arg(long = "n-train", default_value_t = DEFAULT_N_TRAIN)]
        n_train: usize,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Online protocol: sliding-window retraining over the manifest order
    EvalOnline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Sliding window size
        #[arg(long, short = 'w', default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-step p-value trace as CSV
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a synthetic dataset plus manifest
    Synth {
        /// Scenario configuration JSON; a built-in five-scenario layout is
        /// used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-pair quantile shifts of rootkit batches against normal ones
    ShiftReport {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long, default_value_t = DEFAULT_Q)]
        q: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<MissingPairPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::DimensionMismatch(_) => 4,
        _ => 3,
    }
}

/// Serializes a value with a trailing newline and either writes it to `out`
/// or prints it to stdout.
fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario_batches(manifest: &Path, scenario: Option<&str>) -> Result<Vec<Batch>, Error> {
    let mut batches = load_manifest(manifest)?;
    if let Some(wanted) = scenario {
        let wanted = Scenario::parse(wanted);
        batches.retain(|b| b.scenario == wanted);
        if batches.is_empty() {
            return Err(Error::NotEnoughData(format!(
                "manifest has no batches for scenario {:?}",
                wanted.as_str()
            )));
        }
    }
    batches
        .iter()
        .filter(|b| !b.is_usable())
        .for_each(|b| log::warn!("batch {:?} is unusable and will be skipped", b.batch_id));
    Ok(batches)
}

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(v) => format!("{:.3}", v),
        None => "undefined".into(),
    }
}

fn print_metrics(prefix: &str, m: &MetricSet) {
    println!(
        "{prefix} tp={} fp={} fn={} tn={} | tpr={} tnr={} prec={} acc={} f1={}",
        m.tp,
        m.fp,
        m.fn_,
        m.tn,
        fmt_rate(m.tpr),
        fmt_rate(m.tnr),
        fmt_rate(m.precision),
        fmt_rate(m.accuracy),
        fmt_rate(m.f1),
    );
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Deltas {
            input,
            strategy,
            out,
            format,
        } => {
            let batch = read_batch(&input)?;
            if !batch.is_usable() {
                log::warn!(
                    "batch {:?} has {} event(s); emitting empty delta series",
                    batch.batch_id,
                    batch.events.len()
                );
            }
            let series = compute_deltas(&batch, strategy);
            match format.as_str() {
                "csv" => {
                    let mut buf = Vec::new();
                    write_delta_csv(&series, &mut buf).map_err(|e| Error::Io {
                        path: out.clone().unwrap_or_else(|| "stdout".into()),
                        source: e,
                    })?;
                    match &out {
                        Some(path) => fs::write(path, buf).map_err(|e| Error::Io {
                            path: path.clone(),
                            source: e,
                        })?,
                        None => std::io::stdout().write_all(&buf).map_err(|e| Error::Io {
                            path: "stdout".into(),
                            source: e,
                        })?,
                    }
                }
                "json" => emit_json(&series, out.as_deref())?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown format {other:?} (expected \"csv\" or \"json\")"
                    )))
                }
            }
            if out.is_some() {
                println!(
                    "wrote {} deltas across {} pairs ({} unmatched enters, {} unmatched returns)",
                    series.total_deltas(),
                    series.deltas.len(),
                    series.diagnostics.unmatched_enters,
                    series.diagnostics.unmatched_returns,
                );
            }
            Ok(())
        }

        Command::Train {
            manifest,
            scenario,
            detector,
            out,
        } => {
            let batches = load_scenario_batches(&manifest, scenario.as_deref())?;
            let model = train(&batches, &detector.config())?;
            model.save(&out)?;
            println!(
                "trained {} pair models from {} batches (strategy {}, q={}, theta={:e})",
                model.pair_models.len(),
                batches.len(),
                model.strategy,
                model.q,
                model.theta,
            );
            for (pair, pm) in &model.pair_models {
                println!("  {pair}: n={} ridge={:.3e}", pm.n(), pm.ridge_used());
            }
            Ok(())
        }

        Command::Detect { model, input, out } => {
            let model = DetectorModel::load(&model)?;
            let batch = read_batch(&input)?;
            let report = model.detect(&batch)?;
            let verdict = match report.verdict {
                Verdict::Anomalous => "ANOMALOUS",
                Verdict::Normal => "normal",
            };
            emit_json(&report, out.as_deref())?;
            if out.is_some() {
                println!(
                    "batch {:?}: {verdict} (min p-value {})",
                    report.batch_id,
                    report
                        .min_pvalue
                        .map(|p| format!("{p:e}"))
                        .unwrap_or_else(|| "n/a".into()),
                );
                for pair in &report.triggering_pairs {
                    println!("  triggered by {pair}");
                }
            }
            Ok(())
        }

        Command::EvalOffline {
            manifest,
            scenario,
            detector,
            n_train,
            repeats,
            seed,
            out,
        } => {
            let batches = load_scenario_batches(&manifest, scenario.as_deref())?;
            // offline evaluation is defined per scenario; a baseline trained
            // under one system condition is not comparable across conditions
            let mut scenarios: Vec<&str> = batches.iter().map(|b| b.scenario.as_str()).collect();
            scenarios.sort_unstable();
            scenarios.dedup();
            if scenarios.len() > 1 {
                return Err(Error::InvalidArgument(format!(
                    "manifest spans scenarios {scenarios:?}; pick one with --scenario"
                )));
            }
            let options = OfflineEvalOptions {
                n_train,
                repeats,
                seed,
            };
            let report = eval_offline(&batches, &detector.config(), &options)?;
            emit_json(&report, out.as_deref())?;
            if out.is_some() {
                print_metrics("aggregated:", &report.aggregated);
                println!("median F1 over repeats: {}", fmt_rate(report.median_f1));
            }
            Ok(())
        }

        Command::EvalOnline {
            manifest,
            scenario,
            detector,
            window,
            out,
            trace,
        } => {
            let batches = load_scenario_batches(&manifest, scenario.as_deref())?;
            let report = eval_online(&batches, &detector.config(), window)?;
            if let Some(trace_path) = &trace {
                let mut buf = Vec::new();
                traceshift::detect::write_pvalue_trace_csv(&report, &mut buf).map_err(|e| {
                    Error::Io {
                        path: trace_path.clone(),
                        source: e,
                    }
                })?;
                fs::write(trace_path, buf).map_err(|e| Error::Io {
                    path: trace_path.clone(),
                    source: e,
                })?;
            }
            emit_json(&report, out.as_deref())?;
            if out.is_some() {
                print_metrics(&format!("online (w={window}):"), &report.metrics);
            }
            Ok(())
        }

        Command::Synth { config, out, seed } => {
            let scenarios: Vec<DatasetScenario> = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    serde_json::from_str(&text)?
                }
                None => traceshift::default_dataset_config(),
            };
            let manifest = generate_dataset(&scenarios, &out, seed)?;
            let normals = manifest
                .entries
                .iter()
                .filter(|e| e.label == Label::Normal)
                .count();
            println!(
                "wrote {} batches ({} normal, {} rootkit) and manifest to {}",
                manifest.entries.len(),
                normals,
                manifest.entries.len() - normals,
                out.display(),
            );
            Ok(())
        }

        Command::ShiftReport {
            manifest,
            scenario,
            strategy,
            q,
            out,
        } => {
            let batches = load_scenario_batches(&manifest, scenario.as_deref())?;
            let (normal, rootkit): (Vec<_>, Vec<_>) = batches
                .iter()
                .filter(|b| b.is_usable())
                .partition(|b| b.label == Label::Normal);
            let normal_series: Vec<_> =
                normal.iter().map(|b| compute_deltas(b, strategy)).collect();
            let rootkit_series: Vec<_> = rootkit
                .iter()
                .map(|b| compute_deltas(b, strategy))
                .collect();
            let report = quantile_shift_report(&normal_series, &rootkit_series, q)?;
            emit_json(&report, out.as_deref())?;
            if out.is_some() {
                println!("quantile shifts (median over rootkit batches, middle quantile):");
                for (pair, shifts) in &report.pairs {
                    let mid = &shifts[shifts.len() / 2];
                    let mut sorted = mid.clone();
                    sorted.sort_by(f64::total_cmp);
                    let median = sorted[sorted.len() / 2];
                    println!("  {pair}: {median:.0} ns");
                }
            }
            Ok(())
        }
    }
}
