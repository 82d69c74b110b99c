//! Delta-time computation: turns absolute probe timestamps into per-pair
//! interval distributions.
//!
//! Events are first split into groups by process identifier and each group is
//! sorted by timestamp (ties broken by arrival order); deltas never cross pid
//! boundaries, because interleaved processes would otherwise pair unrelated
//! probes. Two pairing strategies are supported:
//!
//! * **function grouping** pairs each return event with the most recent
//!   unconsumed enter event of the same function in the same pid, measuring
//!   the function's execution time;
//! * **sequence grouping** pairs chronologically adjacent events within a
//!   pid, measuring the gap between successive probes regardless of function.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quantile::sample_quantiles;
use crate::trace::{Batch, Direction, ProbeEvent, ProbeId};

/// Delta-pairing strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Function,
    Sequence,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Function => "function",
            Strategy::Sequence => "sequence",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "function" => Ok(Strategy::Function),
            "sequence" => Ok(Strategy::Sequence),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?} (expected \"function\" or \"sequence\")"
            ))),
        }
    }
}

/// An ordered pair of probes, rendered canonically as `p1:p2`,
/// e.g. `filldir64-return:filldir64-enter`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbePair {
    pub first: ProbeId,
    pub second: ProbeId,
}

impl ProbePair {
    pub fn new(first: ProbeId, second: ProbeId) -> Self {
        ProbePair { first, second }
    }

    /// The enter/return pair of a single function, the key shape produced by
    /// function grouping.
    pub fn function(name: &str) -> Self {
        ProbePair::new(ProbeId::enter(name), ProbeId::ret(name))
    }
}

impl fmt::Display for ProbePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.first, self.second)
    }
}

impl FromStr for ProbePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("invalid probe pair {s:?} (expected \"p1:p2\")"))
        })?;
        Ok(ProbePair::new(a.parse()?, b.parse()?))
    }
}

impl Serialize for ProbePair {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProbePair {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Events that could not be paired under function grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaDiagnostics {
    /// Enter events left on a stack at the end of a pid group; the batch
    /// boundary truncated the call.
    pub unmatched_enters: u64,
    /// Return events with no preceding unconsumed enter of the same function.
    pub unmatched_returns: u64,
}

/// Per-pair delta times derived from one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSeries {
    pub strategy: Strategy,
    pub batch_id: String,
    /// Nanosecond deltas per pair; all values are non-negative because
    /// timestamps within a pid are processed in sorted order.
    pub deltas: BTreeMap<ProbePair, Vec<i64>>,
    pub diagnostics: DeltaDiagnostics,
}

impl DeltaSeries {
    fn new(strategy: Strategy, batch_id: &str) -> Self {
        DeltaSeries {
            strategy,
            batch_id: batch_id.to_string(),
            deltas: BTreeMap::new(),
            diagnostics: DeltaDiagnostics::default(),
        }
    }

    pub fn total_deltas(&self) -> usize {
        self.deltas.values().map(Vec::len).sum()
    }
}

/// Computes the delta series for a batch under the given strategy.
pub fn compute_deltas(batch: &Batch, strategy: Strategy) -> DeltaSeries {
    match strategy {
        Strategy::Function => compute_function_deltas(batch),
        Strategy::Sequence => compute_sequence_deltas(batch),
    }
}

/// Splits events by pid and sorts each group by timestamp, breaking ties by
/// arrival order so the sort is total.
fn sorted_pid_groups(batch: &Batch) -> BTreeMap<u32, Vec<&ProbeEvent>> {
    let mut groups: BTreeMap<u32, Vec<&ProbeEvent>> = BTreeMap::new();
    for event in &batch.events {
        groups.entry(event.pid).or_default().push(event);
    }
    for group in groups.values_mut() {
        group.sort_by_key(|e| (e.timestamp_ns, e.arrival_index));
    }
    groups
}

/// Function grouping: per pid, each return event consumes the most recent
/// unconsumed enter of the same function (LIFO, which also handles nested and
/// re-entrant calls) and emits the execution time under the key
/// `<f>-enter:<f>-return`. Unmatched events emit nothing and are counted in
/// the diagnostics.
pub fn compute_function_deltas(batch: &Batch) -> DeltaSeries {
    let mut series = DeltaSeries::new(Strategy::Function, &batch.batch_id);
    for group in sorted_pid_groups(batch).values() {
        let mut stacks: HashMap<&str, Vec<u64>> = HashMap::new();
        for event in group {
            match event.direction {
                Direction::Enter => {
                    stacks
                        .entry(event.probe_name.as_str())
                        .or_default()
                        .push(event.timestamp_ns);
                }
                Direction::Return => {
                    match stacks.get_mut(event.probe_name.as_str()).and_then(Vec::pop) {
                        Some(enter_ts) => {
                            let pair = ProbePair::function(&event.probe_name);
                            // sorted group order makes the difference non-negative
                            let delta = (event.timestamp_ns - enter_ts) as i64;
                            series.deltas.entry(pair).or_default().push(delta);
                        }
                        None => series.diagnostics.unmatched_returns += 1,
                    }
                }
            }
        }
        series.diagnostics.unmatched_enters += stacks.values().map(|s| s.len() as u64).sum::<u64>();
    }
    series
}

/// Sequence grouping: per pid, every chronologically adjacent event pair
/// emits the gap between them under the key `<first probe>:<second probe>`.
/// A pid with k events yields exactly k−1 deltas.
pub fn compute_sequence_deltas(batch: &Batch) -> DeltaSeries {
    let mut series = DeltaSeries::new(Strategy::Sequence, &batch.batch_id);
    for group in sorted_pid_groups(batch).values() {
        for pair in group.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let key = ProbePair::new(a.probe_id(), b.probe_id());
            let delta = (b.timestamp_ns - a.timestamp_ns) as i64;
            series.deltas.entry(key).or_default().push(delta);
        }
    }
    series
}

/// Writes a delta series as CSV with columns `pair,delta_ns`.
pub fn write_delta_csv<W: Write>(series: &DeltaSeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "pair,delta_ns")?;
    for (pair, deltas) in &series.deltas {
        for delta in deltas {
            writeln!(out, "{pair},{delta}")?;
        }
    }
    Ok(())
}

/// Per-pair, per-quantile shift distributions between two batch classes.
///
/// For each pair, `shifts[k]` holds one value per rootkit batch: that batch's
/// k-th quantile minus the mean of the normal batches' k-th quantiles. The
/// layout feeds box-plot style summaries directly.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub q: usize,
    pub levels: Vec<f64>,
    pub pairs: BTreeMap<ProbePair, Vec<Vec<f64>>>,
}

/// Compares the quantiles of rootkit delta distributions against normal ones,
/// pair by pair. Pairs need at least `q` samples in a batch to contribute;
/// pairs present in only one class are dropped.
pub fn quantile_shift_report(
    normal: &[DeltaSeries],
    rootkit: &[DeltaSeries],
    q: usize,
) -> Result<ShiftReport> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be at least 1".into()));
    }
    if normal.is_empty() || rootkit.is_empty() {
        return Err(Error::NotEnoughData(
            "quantile shift report needs at least one series per class".into(),
        ));
    }

    // pair -> per-batch quantile vectors, one entry per batch with enough samples
    let collect = |series: &[DeltaSeries]| -> BTreeMap<ProbePair, Vec<Vec<f64>>> {
        let mut out: BTreeMap<ProbePair, Vec<Vec<f64>>> = BTreeMap::new();
        for s in series {
            for (pair, deltas) in &s.deltas {
                if let Ok(quantiles) = sample_quantiles(deltas, q) {
                    out.entry(pair.clone()).or_default().push(quantiles);
                }
            }
        }
        out
    };
    let normal_q = collect(normal);
    let rootkit_q = collect(rootkit);

    let mut pairs = BTreeMap::new();
    for (pair, rk_vectors) in &rootkit_q {
        let Some(n_vectors) = normal_q.get(pair) else {
            continue;
        };
        let n = n_vectors.len() as f64;
        let mut mean_normal = vec![0.0; q];
        for v in n_vectors {
            for (m, x) in mean_normal.iter_mut().zip(v) {
                *m += x / n;
            }
        }
        let mut shifts = vec![Vec::with_capacity(rk_vectors.len()); q];
        for v in rk_vectors {
            for k in 0..q {
                shifts[k].push(v[k] - mean_normal[k]);
            }
        }
        pairs.insert(pair.clone(), shifts);
    }

    if pairs.is_empty() {
        log::warn!("quantile shift report: no pair is present in both classes");
    }
    Ok(ShiftReport {
        q,
        levels: crate::quantile::quantile_levels(q),
        pairs,
    })
}
