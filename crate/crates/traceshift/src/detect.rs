//! Batch-level detection and the offline/online evaluation protocols.
//!
//! A detector holds one [`PairModel`] per probe pair seen often enough in
//! training. Scoring a batch computes one p-value per modeled pair and
//! applies the minimum rule: the batch is anomalous as soon as any pair's
//! p-value falls below the threshold theta, and normal only if all p-values
//! stay above it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delta::{compute_deltas, ProbePair, Strategy};
use crate::error::{Error, Result};
use crate::model::PairModel;
use crate::quantile::QuantileVector;
use crate::trace::{Batch, Label};

/// Default quantile count.
pub const DEFAULT_Q: usize = 9;
/// Default detection threshold theta.
pub const DEFAULT_THETA: f64 = 1e-10;
/// Default number of training batches for offline evaluation.
pub const DEFAULT_N_TRAIN: usize = 50;
/// Default number of offline sampling repeats.
pub const DEFAULT_REPEATS: usize = 100;
/// Default sliding-window size for online evaluation.
pub const DEFAULT_WINDOW: usize = 50;

/// What to do when a modeled pair is absent from a test batch.
///
/// `Skip` treats the pair as uninformative (the workload simply did not
/// exercise that function); `Alert` treats absence itself as anomalous,
/// since a rootkit could also suppress functions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPairPolicy {
    #[default]
    Skip,
    Alert,
}

impl fmt::Display for MissingPairPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingPairPolicy::Skip => "skip",
            MissingPairPolicy::Alert => "alert",
        })
    }
}

impl FromStr for MissingPairPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(MissingPairPolicy::Skip),
            "alert" => Ok(MissingPairPolicy::Alert),
            other => Err(Error::InvalidArgument(format!(
                "unknown missing-pair policy {other:?} (expected \"skip\" or \"alert\")"
            ))),
        }
    }
}

/// Detector parameters; the defaults are the reference protocol values
/// (function grouping aside, see the module constants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub strategy: Strategy,
    pub q: usize,
    pub theta: f64,
    pub missing_pair_policy: MissingPairPolicy,
}

impl DetectorConfig {
    pub fn new(strategy: Strategy) -> Self {
        DetectorConfig {
            strategy,
            q: DEFAULT_Q,
            theta: DEFAULT_THETA,
            missing_pair_policy: MissingPairPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidArgument("q must be at least 1".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie strictly between 0 and 1, got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::new(Strategy::Function)
    }
}

/// A batch reduced to its per-pair quantile vectors under a fixed strategy
/// and q. Featurizing once lets training, detection, and the evaluation
/// loops share identical inputs.
#[derive(Debug, Clone)]
pub(crate) struct FeaturizedBatch {
    pub batch_id: String,
    pub label: Label,
    pub vectors: BTreeMap<ProbePair, QuantileVector>,
}

pub(crate) fn featurize(batch: &Batch, strategy: Strategy, q: usize) -> FeaturizedBatch {
    let series = compute_deltas(batch, strategy);
    let mut vectors = BTreeMap::new();
    for (pair, deltas) in &series.deltas {
        // pairs without q samples in this batch are simply absent
        if let Ok(v) = QuantileVector::from_deltas(deltas, q, pair.clone(), &batch.batch_id) {
            vectors.insert(pair.clone(), v);
        }
    }
    FeaturizedBatch {
        batch_id: batch.batch_id.clone(),
        label: batch.label,
        vectors,
    }
}

/// Fits one model per pair appearing in at least two featurized batches.
fn fit_pair_models(featurized: &[&FeaturizedBatch]) -> Result<BTreeMap<ProbePair, PairModel>> {
    let mut by_pair: BTreeMap<ProbePair, Vec<QuantileVector>> = BTreeMap::new();
    for fb in featurized {
        for (pair, v) in &fb.vectors {
            by_pair.entry(pair.clone()).or_default().push(v.clone());
        }
    }
    let mut models = BTreeMap::new();
    for (pair, vectors) in by_pair {
        if vectors.len() >= 2 {
            models.insert(pair.clone(), PairModel::fit(&vectors)?);
        }
    }
    if models.is_empty() {
        return Err(Error::NotEnoughData(
            "no probe pair appears in at least two training batches".into(),
        ));
    }
    Ok(models)
}

/// A trained detector: per-pair models plus the decision parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorModel {
    pub strategy: Strategy,
    pub q: usize,
    pub theta: f64,
    pub missing_pair_policy: MissingPairPolicy,
    pub pair_models: BTreeMap<ProbePair, PairModel>,
}

impl DetectorModel {
    pub fn config(&self) -> DetectorConfig {
        DetectorConfig {
            strategy: self.strategy,
            q: self.q,
            theta: self.theta,
            missing_pair_policy: self.missing_pair_policy,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DetectorModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: DetectorModel = serde_json::from_str(&text)?;
        model.config().validate()?;
        for (pair, pm) in &model.pair_models {
            if pm.q() != model.q {
                return Err(Error::DimensionMismatch(format!(
                    "pair {pair} has q={} but the model declares q={}",
                    pm.q(),
                    model.q
                )));
            }
        }
        Ok(model)
    }

    /// Scores a batch: one p-value per modeled pair, minimum rule.
    pub fn detect(&self, batch: &Batch) -> Result<DetectionReport> {
        if !batch.is_usable() {
            return Err(Error::UnusableBatch(batch.batch_id.clone()));
        }
        let featurized = featurize(batch, self.strategy, self.q);
        Ok(self.detect_featurized(&featurized))
    }

    fn detect_featurized(&self, featurized: &FeaturizedBatch) -> DetectionReport {
        let mut per_pair = BTreeMap::new();
        let mut min_pvalue: Option<f64> = None;
        let mut triggering = Vec::new();
        for (pair, model) in &self.pair_models {
            match featurized.vectors.get(pair) {
                Some(v) => {
                    // q matches by construction, precision is PD: cannot fail
                    let p = model.pvalue(v).expect("featurized vector matches model");
                    min_pvalue = Some(min_pvalue.map_or(p, |m: f64| m.min(p)));
                    if p < self.theta {
                        triggering.push(pair.clone());
                    }
                    per_pair.insert(pair.clone(), PairOutcome::Pvalue(p));
                }
                None => {
                    if self.missing_pair_policy == MissingPairPolicy::Alert {
                        triggering.push(pair.clone());
                    }
                    per_pair.insert(pair.clone(), PairOutcome::Skipped);
                }
            }
        }
        let verdict = if triggering.is_empty() {
            Verdict::Normal
        } else {
            Verdict::Anomalous
        };
        DetectionReport {
            batch_id: featurized.batch_id.clone(),
            verdict,
            min_pvalue,
            triggering_pairs: triggering,
            per_pair,
        }
    }
}

/// Trains a detector on normal batches only; any rootkit-labeled batch is an
/// error, since contaminating the baseline defeats semi-supervised detection.
/// Unusable batches are skipped with a warning.
pub fn train(batches: &[Batch], config: &DetectorConfig) -> Result<DetectorModel> {
    for batch in batches {
        if batch.label != Label::Normal {
            return Err(Error::MixedTrainingLabels(batch.batch_id.clone()));
        }
    }
    train_unlabeled(batches, config)
}

/// Trains without the label assertion; used by online evaluation, where the
/// sliding window inevitably straddles class switches.
pub fn train_unlabeled(batches: &[Batch], config: &DetectorConfig) -> Result<DetectorModel> {
    config.validate()?;
    let usable: Vec<&Batch> = batches
        .iter()
        .filter(|b| {
            if !b.is_usable() {
                log::warn!("skipping unusable batch {:?} in training", b.batch_id);
            }
            b.is_usable()
        })
        .collect();
    if usable.len() < 2 {
        return Err(Error::NotEnoughData(format!(
            "training needs at least 2 usable batches, got {}",
            usable.len()
        )));
    }
    let featurized: Vec<FeaturizedBatch> = usable
        .iter()
        .map(|b| featurize(b, config.strategy, config.q))
        .collect();
    let refs: Vec<&FeaturizedBatch> = featurized.iter().collect();
    Ok(DetectorModel {
        strategy: config.strategy,
        q: config.q,
        theta: config.theta,
        missing_pair_policy: config.missing_pair_policy,
        pair_models: fit_pair_models(&refs)?,
    })
}

/// Outcome for one pair when scoring a batch: a p-value, or skipped because
/// the test batch lacked enough samples for that pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOutcome {
    Pvalue(f64),
    Skipped,
}

impl Serialize for PairOutcome {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PairOutcome::Pvalue(p) => serializer.serialize_f64(*p),
            PairOutcome::Skipped => serializer.serialize_str("skipped"),
        }
    }
}

impl<'de> Deserialize<'de> for PairOutcome {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => Ok(PairOutcome::Pvalue(p)),
            Raw::Text(s) if s == "skipped" => Ok(PairOutcome::Skipped),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a p-value or \"skipped\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomalous,
}

/// Per-pair p-values plus the combined verdict for one batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub batch_id: String,
    pub verdict: Verdict,
    /// Smallest computed p-value, absent when every pair was skipped.
    pub min_pvalue: Option<f64>,
    /// Pairs whose p-value fell below theta (plus, under the alert policy,
    /// modeled pairs missing from the batch).
    pub triggering_pairs: Vec<ProbePair>,
    pub per_pair: BTreeMap<ProbePair, PairOutcome>,
}

/// Confusion counts and the derived rates. Rates with a zero denominator are
/// `None` rather than 0 so aggregate tables are not silently distorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

/// Applies the standard formulas to raw confusion counts.
pub fn compute_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> MetricSet {
    let ratio = |num: u64, den: u64| {
        if den > 0 {
            Some(num as f64 / den as f64)
        } else {
            None
        }
    };
    let tpr = ratio(tp, tp + fn_);
    let tnr = ratio(tn, tn + fp);
    let precision = ratio(tp, tp + fp);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
    let f1 = match (precision, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet {
        tp,
        fp,
        fn_,
        tn,
        tpr,
        tnr,
        precision,
        accuracy,
        f1,
    }
}

/// Offline evaluation parameters; the defaults are 50 training batches and
/// 100 sampling repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineEvalOptions {
    pub n_train: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for OfflineEvalOptions {
    fn default() -> Self {
        OfflineEvalOptions {
            n_train: DEFAULT_N_TRAIN,
            repeats: DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

/// Offline evaluation output: metrics over counts aggregated across repeats,
/// the per-repeat breakdown, and the median per-repeat F1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineEvalReport {
    pub aggregated: MetricSet,
    pub median_f1: Option<f64>,
    pub per_repeat: Vec<MetricSet>,
}

/// Offline protocol: repeatedly samples `n_train` normal batches (uniformly,
/// without replacement, seeded), trains on them, and classifies every
/// remaining batch of the same scenario. Counts are aggregated across repeats
/// before rates are computed; per-repeat F1 scores are also kept so their
/// median can be reported.
///
/// The caller is expected to pass the batches of a single scenario: a model
/// of one scenario is not assumed to transfer to another.
pub fn eval_offline(
    batches: &[Batch],
    config: &DetectorConfig,
    options: &OfflineEvalOptions,
) -> Result<OfflineEvalReport> {
    config.validate()?;
    if options.n_train < 2 {
        return Err(Error::InvalidArgument("n_train must be at least 2".into()));
    }
    let featurized: Vec<FeaturizedBatch> = batches
        .iter()
        .filter(|b| {
            if !b.is_usable() {
                log::warn!("skipping unusable batch {:?} in evaluation", b.batch_id);
            }
            b.is_usable()
        })
        .map(|b| featurize(b, config.strategy, config.q))
        .collect();

    let normal_idx: Vec<usize> = (0..featurized.len())
        .filter(|&i| featurized[i].label == Label::Normal)
        .collect();
    let rootkit_count = featurized.len() - normal_idx.len();
    if normal_idx.len() < options.n_train {
        return Err(Error::NotEnoughData(format!(
            "{} normal batches available, {} needed for training",
            normal_idx.len(),
            options.n_train
        )));
    }
    if normal_idx.len() == options.n_train {
        return Err(Error::NotEnoughData(
            "no normal batches left over for testing".into(),
        ));
    }
    if rootkit_count == 0 {
        return Err(Error::NotEnoughData(
            "offline evaluation needs rootkit-labeled test batches".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut per_repeat = Vec::with_capacity(options.repeats);
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);

    for _ in 0..options.repeats {
        let chosen = rand::seq::index::sample(&mut rng, normal_idx.len(), options.n_train);
        let mut in_training = vec![false; featurized.len()];
        for pos in chosen.iter() {
            in_training[normal_idx[pos]] = true;
        }
        let training: Vec<&FeaturizedBatch> = featurized
            .iter()
            .enumerate()
            .filter(|(i, _)| in_training[*i])
            .map(|(_, fb)| fb)
            .collect();
        let model = DetectorModel {
            strategy: config.strategy,
            q: config.q,
            theta: config.theta,
            missing_pair_policy: config.missing_pair_policy,
            pair_models: fit_pair_models(&training)?,
        };

        let (mut rtp, mut rfp, mut rfn, mut rtn) = (0u64, 0u64, 0u64, 0u64);
        for (i, fb) in featurized.iter().enumerate() {
            if in_training[i] {
                continue;
            }
            let anomalous = model.detect_featurized(fb).verdict == Verdict::Anomalous;
            match (fb.label, anomalous) {
                (Label::Rootkit, true) => rtp += 1,
                (Label::Rootkit, false) => rfn += 1,
                (Label::Normal, true) => rfp += 1,
                (Label::Normal, false) => rtn += 1,
            }
        }
        per_repeat.push(compute_metrics(rtp, rfp, rfn, rtn));
        tp += rtp;
        fp += rfp;
        fn_ += rfn;
        tn += rtn;
    }

    let mut f1s: Vec<f64> = per_repeat.iter().filter_map(|m| m.f1).collect();
    f1s.sort_by(f64::total_cmp);
    let median_f1 = if f1s.is_empty() {
        None
    } else if f1s.len() % 2 == 1 {
        Some(f1s[f1s.len() / 2])
    } else {
        Some((f1s[f1s.len() / 2 - 1] + f1s[f1s.len() / 2]) / 2.0)
    };

    Ok(OfflineEvalReport {
        aggregated: compute_metrics(tp, fp, fn_, tn),
        median_f1,
        per_repeat,
    })
}

/// How a step contributed to the online confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnlineCount {
    /// First batch after a class switch; expected to be flagged.
    Positive,
    /// Preceded by a full window of same-class batches.
    Negative,
    /// Mixed window or unclassifiable; not counted.
    Excluded,
}

/// One classified step of the sliding-window run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineStep {
    /// Index of the classified batch in the chronological stream.
    pub index: usize,
    pub batch_id: String,
    pub label: Label,
    pub verdict: Option<Verdict>,
    pub min_pvalue: Option<f64>,
    pub counted: OnlineCount,
    pub per_pair: BTreeMap<ProbePair, PairOutcome>,
}

/// Online evaluation output: metrics plus the full per-step p-value trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineEvalReport {
    pub window: usize,
    pub metrics: MetricSet,
    pub steps: Vec<OnlineStep>,
}

/// Online protocol: slides a window of size `w` over the chronologically
/// ordered batches, retrains on each window regardless of labels, and
/// classifies the batch just after it.
///
/// Counting rules: the first batch after a class switch is a positive
/// (detected -> TP, missed -> FN); a batch preceded by at least `w`
/// same-class batches is a negative (detected -> FP, else -> TN); everything
/// else falls in the mixed-window region and is excluded.
pub fn eval_online(
    batches: &[Batch],
    config: &DetectorConfig,
    window: usize,
) -> Result<OnlineEvalReport> {
    config.validate()?;
    if window < 2 {
        return Err(Error::InvalidArgument("window must be at least 2".into()));
    }
    let usable: Vec<&Batch> = batches
        .iter()
        .filter(|b| {
            if !b.is_usable() {
                log::warn!("skipping unusable batch {:?} in online stream", b.batch_id);
            }
            b.is_usable()
        })
        .collect();
    if usable.len() < window + 1 {
        return Err(Error::NotEnoughData(format!(
            "online evaluation needs at least {} batches, got {}",
            window + 1,
            usable.len()
        )));
    }
    let featurized: Vec<FeaturizedBatch> = usable
        .iter()
        .map(|b| featurize(b, config.strategy, config.q))
        .collect();

    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    let mut steps = Vec::with_capacity(featurized.len() - window);

    for t in window..featurized.len() {
        let train_slice: Vec<&FeaturizedBatch> = featurized[t - window..t].iter().collect();
        let current = &featurized[t];

        let report = match fit_pair_models(&train_slice) {
            Ok(pair_models) => {
                let model = DetectorModel {
                    strategy: config.strategy,
                    q: config.q,
                    theta: config.theta,
                    missing_pair_policy: config.missing_pair_policy,
                    pair_models,
                };
                Some(model.detect_featurized(current))
            }
            Err(e) => {
                log::warn!(
                    "window ending before batch {:?} fits no pair model ({e}); step skipped",
                    current.batch_id
                );
                None
            }
        };

        let is_switch = current.label != featurized[t - 1].label;
        let full_same_window = featurized[t - window..t]
            .iter()
            .all(|fb| fb.label == current.label);
        let counted = match (&report, is_switch, full_same_window) {
            (None, _, _) => OnlineCount::Excluded,
            (Some(_), true, _) => OnlineCount::Positive,
            (Some(_), false, true) => OnlineCount::Negative,
            _ => OnlineCount::Excluded,
        };
        if let Some(report) = &report {
            let anomalous = report.verdict == Verdict::Anomalous;
            match counted {
                OnlineCount::Positive if anomalous => tp += 1,
                OnlineCount::Positive => fn_ += 1,
                OnlineCount::Negative if anomalous => fp += 1,
                OnlineCount::Negative => tn += 1,
                OnlineCount::Excluded => {}
            }
        }
        steps.push(OnlineStep {
            index: t,
            batch_id: current.batch_id.clone(),
            label: current.label,
            verdict: report.as_ref().map(|r| r.verdict),
            min_pvalue: report.as_ref().and_then(|r| r.min_pvalue),
            counted,
            per_pair: report.map(|r| r.per_pair).unwrap_or_default(),
        });
    }

    Ok(OnlineEvalReport {
        window,
        metrics: compute_metrics(tp, fp, fn_, tn),
        steps,
    })
}

/// Writes the per-step, per-pair p-values of an online run as CSV with
/// columns `step,batch_id,label,counted,pair,pvalue` (skipped pairs render an
/// empty p-value).
pub fn write_pvalue_trace_csv<W: Write>(
    report: &OnlineEvalReport,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "step,batch_id,label,counted,pair,pvalue")?;
    for step in &report.steps {
        let counted = match step.counted {
            OnlineCount::Positive => "positive",
            OnlineCount::Negative => "negative",
            OnlineCount::Excluded => "excluded",
        };
        for (pair, outcome) in &step.per_pair {
            match outcome {
                PairOutcome::Pvalue(p) => writeln!(
                    out,
                    "{},{},{},{},{},{:e}",
                    step.index, step.batch_id, step.label, counted, pair, p
                )?,
                PairOutcome::Skipped => writeln!(
                    out,
                    "{},{},{},{},{},",
                    step.index, step.batch_id, step.label, counted, pair
                )?,
            }
        }
    }
    Ok(())
}
