//! Seeded synthetic batch generation.
//!
//! Produces probe-event batches shaped like a traced directory-listing
//! workload: a configurable call template (an outer function wrapping a
//! repeated inner loop, modeled on the getdents call stack) executed many
//! times per batch across a few interleaved processes, with lognormal gap
//! jitter and occasional heavy-tailed outliers. A shift spec injects an
//! additive delay at a chosen point, standing in for the extra code a rootkit
//! wrapper executes.
//!
//! The generator exists for oracle tests and desk-scale experiments; it makes
//! no fidelity claims about real kernel timing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{
    Batch, DatasetManifest, Direction, Label, ManifestEntry, ProbeEvent, ProbeId, Scenario,
};

/// One step of the call template: a probe firing after a gap drawn around
/// `gap_ns` (the gap separates this event from the previous one in the same
/// process).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallStep {
    pub probe: String,
    pub direction: Direction,
    pub gap_ns: f64,
}

impl CallStep {
    pub fn new(probe: &str, direction: Direction, gap_ns: f64) -> Self {
        CallStep {
            probe: probe.into(),
            direction,
            gap_ns,
        }
    }

    fn probe_id(&self) -> ProbeId {
        ProbeId::new(self.probe.clone(), self.direction)
    }
}

/// The event sequence of one simulated call: `prelude`, then `body` repeated
/// per the inner loop count, then `epilogue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallTemplate {
    pub prelude: Vec<CallStep>,
    pub body: Vec<CallStep>,
    pub epilogue: Vec<CallStep>,
}

/// Inclusive integer range, drawn uniformly; `min == max` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub fn fixed(n: u32) -> Self {
        CountRange { min: n, max: n }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

/// Multiplicative jitter applied to every gap: lognormal with the given
/// sigma, plus a heavy-tail outlier with probability `outlier_prob` that
/// multiplies the gap by `outlier_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub outlier_prob: f64,
    pub outlier_factor: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: 0.25,
            outlier_prob: 0.01,
            outlier_factor: 10.0,
        }
    }
}

/// How many simulated processes run the workload and how far apart their
/// timelines start; closer starts mean heavier interleaving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidModel {
    pub processes: u32,
    pub start_spread_ns: f64,
}

impl Default for PidModel {
    fn default() -> Self {
        PidModel {
            processes: 3,
            start_spread_ns: 5_000.0,
        }
    }
}

/// Full description of one collection scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: Scenario,
    pub call_template: CallTemplate,
    /// Simulated command invocations per batch.
    pub repeats_per_batch: u32,
    /// Inner-loop iterations per call, drawn once per batch (models the file
    /// count seen by every listing in that batch).
    pub inner_loop_count: CountRange,
    pub noise: NoiseSpec,
    pub pid_model: PidModel,
    /// Global multiplicative slowdown, the system-load knob.
    pub slowdown: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats_per_batch == 0 {
            return Err(Error::InvalidArgument(
                "repeats_per_batch must be at least 1".into(),
            ));
        }
        if self.inner_loop_count.min > self.inner_loop_count.max {
            return Err(Error::InvalidArgument(format!(
                "inner loop range {}..{} is empty",
                self.inner_loop_count.min, self.inner_loop_count.max
            )));
        }
        if self.pid_model.processes == 0 {
            return Err(Error::InvalidArgument(
                "pid model needs at least 1 process".into(),
            ));
        }
        if self.slowdown.is_nan() || self.slowdown <= 0.0 {
            return Err(Error::InvalidArgument("slowdown must be positive".into()));
        }
        if self.noise.sigma.is_nan()
            || self.noise.sigma < 0.0
            || !(0.0..=1.0).contains(&self.noise.outlier_prob)
            || self.noise.outlier_factor.is_nan()
            || self.noise.outlier_factor < 1.0
        {
            return Err(Error::InvalidArgument("invalid noise spec".into()));
        }
        let all_steps = self
            .call_template
            .prelude
            .iter()
            .chain(&self.call_template.body)
            .chain(&self.call_template.epilogue);
        for step in all_steps {
            if step.gap_ns.is_nan() || step.gap_ns <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "gap for {} must have strictly positive support",
                    step.probe_id()
                )));
            }
            if step.probe.is_empty() {
                return Err(Error::InvalidArgument(
                    "empty probe name in template".into(),
                ));
            }
        }
        // balance must hold for any loop count: the repeated body on its own,
        // and prelude plus epilogue together
        check_balance(self.call_template.body.iter(), "body")?;
        check_balance(
            self.call_template
                .prelude
                .iter()
                .chain(&self.call_template.epilogue),
            "prelude+epilogue",
        )?;
        Ok(())
    }
}

fn check_balance<'a, I: Iterator<Item = &'a CallStep>>(steps: I, what: &str) -> Result<()> {
    let mut balance: std::collections::BTreeMap<&str, i64> = Default::default();
    for step in steps {
        let sign = match step.direction {
            Direction::Enter => 1,
            Direction::Return => -1,
        };
        *balance.entry(step.probe.as_str()).or_default() += sign;
    }
    if let Some((probe, _)) = balance.iter().find(|(_, &v)| v != 0) {
        return Err(Error::InvalidArgument(format!(
            "call template {what} has unbalanced enter/return events for probe {probe:?}"
        )));
    }
    Ok(())
}

/// Where the injected delay lands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftTarget {
    /// Inflate the gap just before this function's return event, modeling
    /// extra code executed inside the function body.
    Function(String),
    /// Inflate the gap of the `to` event whenever it immediately follows the
    /// `from` event in the same process.
    Gap { from: ProbeId, to: ProbeId },
}

/// Additive delay distribution: a truncated normal, `std_ns = 0` makes it
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub mean_ns: f64,
    pub std_ns: f64,
}

impl DelaySpec {
    pub fn constant(mean_ns: f64) -> Self {
        DelaySpec {
            mean_ns,
            std_ns: 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.std_ns == 0.0 {
            self.mean_ns
        } else {
            Normal::new(self.mean_ns, self.std_ns)
                .expect("validated delay spec")
                .sample(rng)
                .max(0.0)
        }
    }
}

/// Rootkit stand-in: the targeted gap is inflated by draws from `delay`, and
/// optionally each targeted function invocation also fires duplicate
/// enter/return probes, the way a wrapper calling the original function does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub target: ShiftTarget,
    pub delay: DelaySpec,
    #[serde(default)]
    pub extra_event: bool,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |v: f64| v.is_nan() || v < 0.0;
        if bad(self.delay.mean_ns) || bad(self.delay.std_ns) {
            return Err(Error::InvalidArgument(
                "shift delay must be non-negative".into(),
            ));
        }
        if let ShiftTarget::Function(name) = &self.target {
            if name.is_empty() {
                return Err(Error::InvalidArgument("empty shift target".into()));
            }
        }
        Ok(())
    }
}

// Keeps shift draws on their own stream so that, for the same seed, the base
// gaps of shifted and unshifted batches are draw-for-draw identical.
const SHIFT_STREAM_SALT: u64 = 0x7368_6966_745f_7374;

struct GapSampler {
    lognormal: Option<LogNormal<f64>>,
    noise: NoiseSpec,
    slowdown: f64,
}

impl GapSampler {
    fn new(spec: &ScenarioSpec) -> Self {
        GapSampler {
            lognormal: if spec.noise.sigma > 0.0 {
                Some(LogNormal::new(0.0, spec.noise.sigma).expect("validated sigma"))
            } else {
                None
            },
            noise: spec.noise,
            slowdown: spec.slowdown,
        }
    }

    fn sample(&self, base_ns: f64, rng: &mut ChaCha8Rng) -> u64 {
        let mut gap = base_ns * self.slowdown;
        if let Some(dist) = &self.lognormal {
            gap *= dist.sample(rng);
        }
        if self.noise.outlier_prob > 0.0 && rng.random::<f64>() < self.noise.outlier_prob {
            gap *= self.noise.outlier_factor;
        }
        (gap.round() as u64).max(1)
    }
}

/// Generates one batch, deterministically for a given `(spec, shift, seed)`.
///
/// A shift may only be attached to rootkit-labeled batches; a rootkit label
/// without a shift is allowed (null experiments need it).
pub fn generate_batch(
    spec: &ScenarioSpec,
    shift: Option<&ShiftSpec>,
    label: Label,
    seed: u64,
) -> Result<Batch> {
    spec.validate()?;
    if let Some(shift) = shift {
        shift.validate()?;
        if label == Label::Normal {
            return Err(Error::InvalidArgument(
                "a shift spec requires the rootkit label".into(),
            ));
        }
    }

    let mut base_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shift_rng = ChaCha8Rng::seed_from_u64(seed ^ SHIFT_STREAM_SALT);
    let sampler = GapSampler::new(spec);
    let loop_count = spec.inner_loop_count.sample(&mut base_rng);

    // (timestamp, per-process sequence) keeps the merge sort total even on ties
    let mut events: Vec<(u64, u64, u32, ProbeId)> = Vec::new();
    let processes = spec.pid_model.processes;
    let mut seq = 0u64;
    for k in 0..processes {
        let pid = 1000 + k;
        let mut t: u64 = 1 + if spec.pid_model.start_spread_ns > 0.0 {
            base_rng
                .random_range(0.0..spec.pid_model.start_spread_ns)
                .round() as u64
        } else {
            0
        };
        // round-robin share of the invocations
        let invocations = (spec.repeats_per_batch / processes)
            + u32::from(k < spec.repeats_per_batch % processes);
        for _ in 0..invocations {
            let mut prev: Option<ProbeId> = None;
            let steps = spec
                .call_template
                .prelude
                .iter()
                .chain(std::iter::repeat_n(&spec.call_template.body, loop_count as usize).flatten())
                .chain(&spec.call_template.epilogue);
            for step in steps {
                let mut gap = sampler.sample(step.gap_ns, &mut base_rng);
                let id = step.probe_id();
                if let Some(shift) = shift {
                    let hits = match &shift.target {
                        ShiftTarget::Function(f) => {
                            step.probe == *f && step.direction == Direction::Return
                        }
                        ShiftTarget::Gap { from, to } => prev.as_ref() == Some(from) && id == *to,
                    };
                    if hits {
                        gap += shift.delay.sample(&mut shift_rng).round() as u64;
                    }
                }
                t += gap;
                events.push((t, seq, pid, id.clone()));
                seq += 1;

                // wrapper stand-in: the targeted function's probes fire twice
                if let Some(shift) = shift {
                    if shift.extra_event {
                        if let ShiftTarget::Function(f) = &shift.target {
                            if step.probe == *f {
                                let extra = sampler.sample(step.gap_ns * 0.1, &mut shift_rng);
                                t += extra;
                                events.push((t, seq, pid, id.clone()));
                                seq += 1;
                            }
                        }
                    }
                }
                prev = Some(id);
            }
        }
    }

    events.sort_by_key(|e| (e.0, e.1));
    let mut batch = Batch::new(
        format!("{}-{}-{:08x}", spec.name, label, seed),
        label,
        spec.name.clone(),
    );
    batch.events = events
        .into_iter()
        .enumerate()
        .map(|(i, (t, _, pid, id))| ProbeEvent {
            probe_name: id.name,
            direction: id.direction,
            pid,
            tgid: pid,
            timestamp_ns: t,
            arrival_index: i as u64,
        })
        .collect();
    Ok(batch)
}

/// One scenario's slice of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScenario {
    pub spec: ScenarioSpec,
    pub normal_count: u32,
    pub rootkit_count: u32,
    pub shift: Option<ShiftSpec>,
}

/// Generates batch files plus a manifest under `out_dir`.
///
/// Order is chronological in the collection sense: per scenario all normal
/// batches come first, then all rootkit batches, scenarios back to back. The
/// manifest lists files in exactly that order.
pub fn generate_dataset(
    scenarios: &[DatasetScenario],
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = DatasetManifest::default();
    for scenario in scenarios {
        let plan = [
            (Label::Normal, scenario.normal_count, None),
            (
                Label::Rootkit,
                scenario.rootkit_count,
                scenario.shift.as_ref(),
            ),
        ];
        for (label, count, shift) in plan {
            for i in 0..count {
                let batch_seed = seed_rng.random::<u64>();
                let mut batch = generate_batch(&scenario.spec, shift, label, batch_seed)?;
                batch.batch_id = format!("{}-{}-{:03}", scenario.spec.name, label, i);
                let file_name = format!("{}.jsonl", batch.batch_id);
                batch.write_jsonl(&out_dir.join(&file_name))?;
                manifest.entries.push(ManifestEntry {
                    batch_id: batch.batch_id,
                    path: file_name,
                    label,
                    scenario: scenario.spec.name.clone(),
                });
            }
        }
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// A getdents-flavored call template: an outer directory iteration wrapping a
/// repeated fill/verify loop and an access-time update.
pub fn default_template() -> CallTemplate {
    CallTemplate {
        prelude: vec![CallStep::new("iterate_dir", Direction::Enter, 2_000.0)],
        body: vec![
            CallStep::new("filldir64", Direction::Enter, 800.0),
            CallStep::new("verify_dirent_name", Direction::Enter, 300.0),
            CallStep::new("verify_dirent_name", Direction::Return, 500.0),
            CallStep::new("filldir64", Direction::Return, 600.0),
        ],
        epilogue: vec![
            CallStep::new("touch_atime", Direction::Enter, 700.0),
            CallStep::new("touch_atime", Direction::Return, 1_500.0),
            CallStep::new("iterate_dir", Direction::Return, 400.0),
        ],
    }
}

/// The default-scenario spec: two directory entries per listing, one hundred
/// listings per batch.
pub fn default_scenario_spec() -> ScenarioSpec {
    ScenarioSpec {
        name: Scenario::Default,
        call_template: default_template(),
        repeats_per_batch: 100,
        inner_loop_count: CountRange::fixed(2),
        noise: NoiseSpec::default(),
        pid_model: PidModel::default(),
        slowdown: 1.0,
    }
}

/// The built-in five-scenario dataset layout: 150 normal plus 100 rootkit
/// batches per scenario, collection-ordered, with the rootkit delay injected
/// into the filldir64 body.
pub fn default_dataset_config() -> Vec<DatasetScenario> {
    let shift = ShiftSpec {
        target: ShiftTarget::Function("filldir64".into()),
        delay: DelaySpec {
            mean_ns: 2_500.0,
            std_ns: 100.0,
        },
        extra_event: true,
    };

    let default = default_scenario_spec();

    let mut file_count = default_scenario_spec();
    file_count.name = Scenario::FileCount;
    file_count.inner_loop_count = CountRange { min: 10, max: 100 };

    let mut filename_length = default_scenario_spec();
    filename_length.name = Scenario::FilenameLength;
    for step in &mut filename_length.call_template.body {
        if step.probe == "verify_dirent_name" {
            step.gap_ns *= 1.2;
        }
    }

    let mut ls_basic = default_scenario_spec();
    ls_basic.name = Scenario::LsBasic;
    for steps in [
        &mut ls_basic.call_template.prelude,
        &mut ls_basic.call_template.body,
        &mut ls_basic.call_template.epilogue,
    ] {
        for step in steps {
            step.gap_ns *= 0.85;
        }
    }

    let mut system_load = default_scenario_spec();
    system_load.name = Scenario::SystemLoad;
    system_load.slowdown = 1.8;
    system_load.noise.sigma = 0.5;

    [default, file_count, system_load, ls_basic, filename_length]
        .into_iter()
        .map(|spec| DatasetScenario {
            spec,
            normal_count: 150,
            rootkit_count: 100,
            shift: Some(shift.clone()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta::{compute_function_deltas, ProbePair};
    use crate::trace::event_counts;

    fn small_spec() -> ScenarioSpec {
        let mut spec = default_scenario_spec();
        spec.repeats_per_batch = 20;
        spec
    }

    #[test]
    fn event_count_follows_template_arithmetic() {
        let mut spec = small_spec();
        spec.noise.outlier_prob = 0.0;
        spec.inner_loop_count = CountRange::fixed(2);
        let batch = generate_batch(&spec, None, Label::Normal, 1).unwrap();
        // per invocation: 1 prelude + 2*4 body + 3 epilogue = 12 events
        assert_eq!(batch.events.len(), 20 * 12);
    }

    #[test]
    fn same_seed_same_batch() {
        let spec = small_spec();
        let a = generate_batch(&spec, None, Label::Normal, 99).unwrap();
        let b = generate_batch(&spec, None, Label::Normal, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_batch(&spec, None, Label::Normal, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn per_pid_timestamps_strictly_increase() {
        let spec = small_spec();
        let batch = generate_batch(&spec, None, Label::Normal, 5).unwrap();
        let mut last: std::collections::HashMap<u32, u64> = Default::default();
        for e in &batch.events {
            if let Some(&prev) = last.get(&e.pid) {
                assert!(e.timestamp_ns > prev, "pid {} not monotone", e.pid);
            }
            last.insert(e.pid, e.timestamp_ns);
        }
        assert!(last.len() > 1, "expected several pids");
    }

    #[test]
    fn enter_return_balance_per_probe() {
        let spec = small_spec();
        for (label, shift) in [
            (Label::Normal, None),
            (
                Label::Rootkit,
                Some(ShiftSpec {
                    target: ShiftTarget::Function("filldir64".into()),
                    delay: DelaySpec::constant(5_000.0),
                    extra_event: true,
                }),
            ),
        ] {
            let batch = generate_batch(&spec, shift.as_ref(), label, 7).unwrap();
            let counts = event_counts(&batch);
            for (id, count) in &counts {
                let twin = ProbeId::new(
                    id.name.clone(),
                    match id.direction {
                        Direction::Enter => Direction::Return,
                        Direction::Return => Direction::Enter,
                    },
                );
                assert_eq!(counts.get(&twin), Some(count), "unbalanced {id}");
            }
        }
    }

    #[test]
    fn shift_needs_rootkit_label() {
        let spec = small_spec();
        let shift = ShiftSpec {
            target: ShiftTarget::Function("filldir64".into()),
            delay: DelaySpec::constant(1_000.0),
            extra_event: false,
        };
        assert!(matches!(
            generate_batch(&spec, Some(&shift), Label::Normal, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(generate_batch(&spec, Some(&shift), Label::Rootkit, 1).is_ok());
        // rootkit without shift is fine (null experiments)
        assert!(generate_batch(&spec, None, Label::Rootkit, 1).is_ok());
    }

    #[test]
    fn function_shift_moves_the_target_median() {
        let mut spec = small_spec();
        spec.repeats_per_batch = 100;
        spec.noise.outlier_prob = 0.0;
        let delay = 5_000.0;
        let shift = ShiftSpec {
            target: ShiftTarget::Function("filldir64".into()),
            delay: DelaySpec::constant(delay),
            extra_event: false,
        };
        let normal = generate_batch(&spec, None, Label::Normal, 42).unwrap();
        let shifted = generate_batch(&spec, Some(&shift), Label::Rootkit, 42).unwrap();

        let median = |batch: &Batch| -> f64 {
            let series = compute_function_deltas(batch);
            let mut deltas = series.deltas[&ProbePair::function("filldir64")].clone();
            deltas.sort_unstable();
            deltas[deltas.len() / 2] as f64
        };
        let rise = median(&shifted) - median(&normal);
        assert!(
            (rise - delay).abs() < 0.15 * delay,
            "median rose by {rise}, expected about {delay}"
        );
    }

    #[test]
    fn unbalanced_template_is_rejected() {
        let mut spec = small_spec();
        spec.call_template.body.pop();
        assert!(matches!(
            generate_batch(&spec, None, Label::Normal, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_gap_is_rejected() {
        let mut spec = small_spec();
        spec.call_template.prelude[0].gap_ns = 0.0;
        assert!(generate_batch(&spec, None, Label::Normal, 1).is_err());
    }

    #[test]
    fn dataset_layout_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut scenarios = vec![DatasetScenario {
            spec: small_spec(),
            normal_count: 3,
            rootkit_count: 2,
            shift: Some(ShiftSpec {
                target: ShiftTarget::Function("filldir64".into()),
                delay: DelaySpec::constant(4_000.0),
                extra_event: false,
            }),
        }];
        scenarios.push(DatasetScenario {
            spec: {
                let mut s = small_spec();
                s.name = Scenario::Custom("lab".into());
                s
            },
            normal_count: 1,
            rootkit_count: 0,
            shift: None,
        });

        let manifest = generate_dataset(&scenarios, dir.path(), 11).unwrap();
        assert_eq!(manifest.entries.len(), 6);
        let labels: Vec<Label> = manifest.entries.iter().map(|e| e.label).collect();
        assert_eq!(
            labels,
            vec![
                Label::Normal,
                Label::Normal,
                Label::Normal,
                Label::Rootkit,
                Label::Rootkit,
                Label::Normal
            ]
        );

        let batches = crate::trace::load_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(batches.len(), 6);
        for (batch, entry) in batches.iter().zip(&manifest.entries) {
            assert_eq!(batch.batch_id, entry.batch_id);
            assert!(batch.is_usable());
        }
    }

    #[test]
    fn default_config_matches_reference_layout() {
        let config = default_dataset_config();
        assert_eq!(config.len(), 5);
        for scenario in &config {
            assert_eq!(scenario.normal_count, 150);
            assert_eq!(scenario.rootkit_count, 100);
            assert!(scenario.shift.is_some());
            scenario.spec.validate().unwrap();
        }
        let names: Vec<&str> = config.iter().map(|s| s.spec.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "default",
                "file-count",
                "system-load",
                "ls-basic",
                "filename-length"
            ]
        );
    }
}
