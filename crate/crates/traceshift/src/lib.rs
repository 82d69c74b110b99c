//! Detection of rootkit-induced timing shifts in kernel-function trace data.
//!
//! Rootkits hide files by wrapping kernel functions such as those inside the
//! getdents system call; the wrapper code takes time, so the wrapped
//! function's execution gets measurably slower. This crate turns batches of
//! probe timestamp events into delta-time distributions, summarizes each
//! distribution by a vector of sample quantiles, models normal behavior by
//! the mean and covariance of those vectors, and flags batches whose
//! Mahalanobis distance yields a chi-squared p-value below a threshold.
//!
//! The pipeline, end to end:
//!
//! ```
//! use traceshift::{
//!     default_scenario_spec, detect::{train, DetectorConfig, Verdict},
//!     generate_batch, DelaySpec, Label, ShiftSpec, ShiftTarget, Strategy,
//! };
//!
//! let spec = default_scenario_spec();
//! let normal: Vec<_> = (0..10)
//!     .map(|i| generate_batch(&spec, None, Label::Normal, i).unwrap())
//!     .collect();
//!
//! let model = train(&normal, &DetectorConfig::new(Strategy::Function)).unwrap();
//!
//! let shift = ShiftSpec {
//!     target: ShiftTarget::Function("filldir64".into()),
//!     delay: DelaySpec::constant(20_000.0),
//!     extra_event: false,
//! };
//! let compromised = generate_batch(&spec, Some(&shift), Label::Rootkit, 99).unwrap();
//! let report = model.detect(&compromised).unwrap();
//! assert_eq!(report.verdict, Verdict::Anomalous);
//! ```
//!
//! See the guide under `book/` for the concepts behind each stage.

pub mod chi2;
pub mod delta;
pub mod detect;
mod error;
pub mod model;
pub mod quantile;
pub mod synth;
pub mod trace;

#[cfg(doctest)]
mod book;

pub use chi2::{chi2_cdf, chi2_sf};
pub use delta::{
    compute_deltas, compute_function_deltas, compute_sequence_deltas, quantile_shift_report,
    write_delta_csv, DeltaDiagnostics, DeltaSeries, ProbePair, ShiftReport, Strategy,
};
pub use detect::{
    compute_metrics, eval_offline, eval_online, train, train_unlabeled, DetectionReport,
    DetectorConfig, DetectorModel, MetricSet, MissingPairPolicy, OfflineEvalOptions,
    OfflineEvalReport, OnlineEvalReport, PairOutcome, Verdict,
};
pub use error::{Error, Result};
pub use model::{pair_pvalue, PairModel};
pub use quantile::{quantile_levels, sample_quantiles, QuantileVector};
pub use synth::{
    default_dataset_config, default_scenario_spec, default_template, generate_batch,
    generate_dataset, CallStep, CallTemplate, CountRange, DatasetScenario, DelaySpec, NoiseSpec,
    PidModel, ScenarioSpec, ShiftSpec, ShiftTarget,
};
pub use trace::{
    event_counts, ingest_batch, load_manifest, read_batch, Batch, DatasetManifest, Direction,
    Label, ManifestEntry, ProbeEvent, ProbeId, Scenario,
};
