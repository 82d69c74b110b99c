//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with:
//!
//! ```text
//! cargo test -p traceshift-cli --test acceptance -- --nocapture
//! ```
//!
//! Criterion 7 (published-dataset reproduction) is ignored by default; it
//! needs the external dataset converted to the canonical format, see its
//! doc comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traceshift::detect::OnlineCount;
use traceshift::{
    chi2_sf, compute_function_deltas, compute_sequence_deltas, default_scenario_spec, eval_offline,
    eval_online, generate_batch, Batch, DelaySpec, DetectorConfig, Direction, Label,
    MissingPairPolicy, OfflineEvalOptions, PairModel, ProbeEvent, ProbePair, QuantileVector,
    Scenario, ShiftSpec, ShiftTarget, Strategy, Verdict,
};

/// Prints the verdict line for a criterion and panics on failure.
fn verdict(id: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("acceptance {id}: PASS ({detail})"),
        Err(detail) => {
            println!("acceptance {id}: FAIL ({detail})");
            panic!("acceptance {id} failed: {detail}");
        }
    }
}

// ---------------------------------------------------------------------------
// 1. chi-squared oracle equivalence

/// Exact gamma(q/2) for integer q via the half-integer recurrence; shares no
/// code with the implementation's Lanczos path.
fn gamma_half_integer(q: usize) -> f64 {
    if q.is_multiple_of(2) {
        // gamma(k) = (k-1)!
        (1..q / 2).map(|i| i as f64).product()
    } else {
        // gamma(m + 1/2) = sqrt(pi) * prod_{i=1..m} (i - 1/2)
        let m = q / 2;
        (1..=m).map(|i| i as f64 - 0.5).product::<f64>() * std::f64::consts::PI.sqrt()
    }
}

fn chi2_density(x: f64, q: usize) -> f64 {
    let a = q as f64 / 2.0;
    x.powf(a - 1.0) * (-x / 2.0).exp() / (2f64.powf(a) * gamma_half_integer(q))
}

fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = (a + b) / 2.0;
        let left = simpson(f, a, (a + m) / 2.0, m);
        let right = simpson(f, m, (m + b) / 2.0, b);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let m = (a + b) / 2.0;
    recurse(&f, a, b, simpson(&f, a, m, b), tol, 40)
}

/// Integrates the chi-squared density over `[a, b]`. For one degree of
/// freedom the substitution x = u^2 removes the singularity at zero.
fn oracle_cdf_segment(a: f64, b: f64, q: usize) -> f64 {
    if q == 1 {
        let g = |u: f64| 2.0 * u * chi2_density(u * u, q);
        adaptive_simpson(g, a.sqrt(), b.sqrt(), 1e-13)
    } else {
        adaptive_simpson(|x| chi2_density(x, q), a, b, 1e-13)
    }
}

#[test]
fn criterion_1_chi2_matches_numerical_integration() {
    let start = Instant::now();
    let result = (|| {
        let points_per_q = 63; // 16 * 63 = 1008 grid points
        let mut worst: f64 = 0.0;
        for q in 1..=16 {
            let mut cdf = 0.0;
            let mut prev = 0.0;
            for j in 0..points_per_q {
                let d2 = j as f64 * 100.0 / (points_per_q - 1) as f64;
                if d2 > prev {
                    cdf += oracle_cdf_segment(prev, d2, q);
                    prev = d2;
                }
                let oracle_sf = 1.0 - cdf;
                let got = chi2_sf(d2, q).map_err(|e| e.to_string())?;
                let err = (got - oracle_sf).abs();
                worst = worst.max(err);
                if err > 1e-8 {
                    return Err(format!("q={q}, d2={d2}: |{got} - {oracle_sf}| = {err:e}"));
                }
            }
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() > 5.0 {
            return Err(format!("took {elapsed:?}, budget is 5 s"));
        }
        Ok(format!("max abs err {worst:.2e}, {elapsed:?}"))
    })();
    verdict("1 (chi2 oracle equivalence)", result);
}

// ---------------------------------------------------------------------------
// 2. Mahalanobis oracle equivalence

/// Gaussian elimination with partial pivoting; independent of the library's
/// Cholesky inversion.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            if row != col {
                let factor = r[col] / p;
                for (k, pv) in pivot_row.iter().enumerate().skip(col) {
                    r[k] -= factor * pv;
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

#[test]
fn criterion_2_mahalanobis_matches_linear_solve() {
    let start = Instant::now();
    let result = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_701);
        let mut worst: f64 = 0.0;
        for trial in 0..1000 {
            let q = rng.random_range(2..=9);
            let a: Vec<Vec<f64>> = (0..q)
                .map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            // sigma = A A' + (q/2) I, comfortably positive definite
            let mut sigma = vec![vec![0.0; q]; q];
            for i in 0..q {
                for j in 0..q {
                    sigma[i][j] = (0..q).map(|k| a[i][k] * a[j][k]).sum::<f64>();
                }
                sigma[i][i] += q as f64 * 0.5;
            }
            let mean: Vec<f64> = (0..q).map(|_| rng.random_range(-10.0..10.0)).collect();
            let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
            let pair = ProbePair::function("f");
            let model = PairModel::from_moments(pair.clone(), 10, mean.clone(), &flat, 0.0)
                .map_err(|e| e.to_string())?;

            let x: Vec<f64> = (0..q).map(|_| rng.random_range(-20.0..20.0)).collect();
            let diff: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let y = solve_dense(&sigma, &diff);
            let oracle: f64 = diff.iter().zip(&y).map(|(d, y)| d * y).sum();

            let vector = QuantileVector {
                pair,
                batch_id: "t".into(),
                q,
                values: x,
            };
            let got = model.mahalanobis_sq(&vector).map_err(|e| e.to_string())?;
            let rel = (got - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            if rel > 1e-9 {
                return Err(format!("trial {trial} (q={q}): rel err {rel:e}"));
            }
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() > 5.0 {
            return Err(format!("took {elapsed:?}, budget is 5 s"));
        }
        Ok(format!(
            "1000 matrices, max rel err {worst:.2e}, {elapsed:?}"
        ))
    })();
    verdict("2 (mahalanobis oracle equivalence)", result);
}

// ---------------------------------------------------------------------------
// 3. delta-engine laws

fn random_batch(rng: &mut ChaCha8Rng, id: usize) -> Batch {
    let probes = ["alpha", "beta", "gamma"];
    let n_pids = rng.random_range(1..=5);
    let mut events = Vec::new();
    for pid in 0..n_pids {
        let n_events = rng.random_range(0..=60);
        let mut t: u64 = rng.random_range(1..1000);
        for _ in 0..n_events {
            // increments of zero force timestamp ties
            t += rng.random_range(0..=3);
            events.push(ProbeEvent {
                probe_name: probes[rng.random_range(0..probes.len())].into(),
                direction: if rng.random_bool(0.5) {
                    Direction::Enter
                } else {
                    Direction::Return
                },
                pid: 100 + pid,
                tgid: 100 + pid,
                timestamp_ns: t.max(1),
                arrival_index: 0,
            });
        }
    }
    // interleave pids in file order, then number the arrivals
    for i in (1..events.len()).rev() {
        let j = rng.random_range(0..=i);
        events.swap(i, j);
    }
    for (i, e) in events.iter_mut().enumerate() {
        e.arrival_index = i as u64;
    }
    let mut batch = Batch::new(format!("rand-{id}"), Label::Normal, Scenario::Default);
    batch.events = events;
    batch
}

/// In-test matcher that records, per pid, the positions of each matched
/// enter/return pair in the sorted event order.
fn match_positions(batch: &Batch) -> BTreeMap<u32, Vec<(usize, usize, i64)>> {
    let mut by_pid: BTreeMap<u32, Vec<&ProbeEvent>> = BTreeMap::new();
    for e in &batch.events {
        by_pid.entry(e.pid).or_default().push(e);
    }
    let mut out = BTreeMap::new();
    for (pid, mut group) in by_pid {
        group.sort_by_key(|e| (e.timestamp_ns, e.arrival_index));
        let mut stacks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut matched = Vec::new();
        for (pos, e) in group.iter().enumerate() {
            match e.direction {
                Direction::Enter => stacks.entry(e.probe_name.as_str()).or_default().push(pos),
                Direction::Return => {
                    if let Some(enter_pos) =
                        stacks.get_mut(e.probe_name.as_str()).and_then(Vec::pop)
                    {
                        let delta =
                            group[pos].timestamp_ns as i64 - group[enter_pos].timestamp_ns as i64;
                        matched.push((enter_pos, pos, delta));
                    }
                }
            }
        }
        out.insert(pid, matched);
    }
    out
}

#[test]
fn criterion_3_delta_engine_laws() {
    let result = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for i in 0..500 {
            let batch = random_batch(&mut rng, i);

            // (a) sequence count law
            let seq = compute_sequence_deltas(&batch);
            let mut per_pid_counts: BTreeMap<u32, usize> = BTreeMap::new();
            for e in &batch.events {
                *per_pid_counts.entry(e.pid).or_default() += 1;
            }
            let expected: usize = per_pid_counts.values().map(|&k| k.saturating_sub(1)).sum();
            if seq.total_deltas() != expected {
                return Err(format!(
                    "batch {i}: {} sequence deltas, count law says {expected}",
                    seq.total_deltas()
                ));
            }

            // (b) every function delta telescopes over the spanned sequence deltas
            let fun = compute_function_deltas(&batch);
            let positions = match_positions(&batch);
            let mut oracle_deltas: Vec<i64> = Vec::new();
            for (pid, matched) in &positions {
                let mut group: Vec<&ProbeEvent> =
                    batch.events.iter().filter(|e| e.pid == *pid).collect();
                group.sort_by_key(|e| (e.timestamp_ns, e.arrival_index));
                let adjacent: Vec<i64> = group
                    .windows(2)
                    .map(|w| w[1].timestamp_ns as i64 - w[0].timestamp_ns as i64)
                    .collect();
                for &(enter_pos, return_pos, delta) in matched {
                    let telescoped: i64 = adjacent[enter_pos..return_pos].iter().sum();
                    if telescoped != delta {
                        return Err(format!(
                            "batch {i} pid {pid}: function delta {delta} != spanned sum {telescoped}"
                        ));
                    }
                    oracle_deltas.push(delta);
                }
            }
            let mut lib_deltas: Vec<i64> = fun.deltas.values().flatten().copied().collect();
            lib_deltas.sort_unstable();
            oracle_deltas.sort_unstable();
            if lib_deltas != oracle_deltas {
                return Err(format!("batch {i}: function delta multiset mismatch"));
            }

            // (c) time-translation invariance, bit exact
            let mut translated = batch.clone();
            for e in &mut translated.events {
                e.timestamp_ns += 1_000_000;
            }
            if compute_sequence_deltas(&translated).deltas != seq.deltas
                || compute_function_deltas(&translated).deltas != fun.deltas
            {
                return Err(format!("batch {i}: translation changed the deltas"));
            }

            // all emitted deltas non-negative
            if seq
                .deltas
                .values()
                .chain(fun.deltas.values())
                .flatten()
                .any(|&d| d < 0)
            {
                return Err(format!("batch {i}: negative delta emitted"));
            }
        }
        Ok("500 random batches, count + telescoping + translation laws hold".into())
    })();
    verdict("3 (delta-engine laws)", result);
}

// ---------------------------------------------------------------------------
// 4-5. synthetic offline evaluation

/// Pooled standard deviation of the filldir64 execution time under the given
/// spec, measured from pilot batches.
fn measure_target_sigma(spec: &traceshift::ScenarioSpec, seed_base: u64) -> f64 {
    let pair = ProbePair::function("filldir64");
    let mut samples: Vec<f64> = Vec::new();
    for i in 0..20 {
        let batch = generate_batch(spec, None, Label::Normal, seed_base + i).unwrap();
        let series = compute_function_deltas(&batch);
        samples.extend(series.deltas[&pair].iter().map(|&d| d as f64));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn paper_default_config() -> DetectorConfig {
    DetectorConfig {
        strategy: Strategy::Function,
        q: 9,
        theta: 1e-10,
        missing_pair_policy: MissingPairPolicy::Skip,
    }
}

fn synthetic_scenario(shift: Option<&ShiftSpec>, seed_base: u64) -> Vec<Batch> {
    let spec = default_scenario_spec();
    let mut batches = Vec::with_capacity(250);
    for i in 0..150 {
        batches.push(generate_batch(&spec, None, Label::Normal, seed_base + i).unwrap());
    }
    for i in 0..100 {
        batches.push(generate_batch(&spec, shift, Label::Rootkit, seed_base + 1000 + i).unwrap());
    }
    batches
}

#[test]
fn criterion_4_offline_detects_three_sigma_shift() {
    let start = Instant::now();
    let result = (|| {
        let spec = default_scenario_spec();
        let sigma = measure_target_sigma(&spec, 9_000_000);
        let shift = ShiftSpec {
            target: ShiftTarget::Function("filldir64".into()),
            delay: DelaySpec::constant(3.0 * sigma),
            extra_event: false,
        };
        let batches = synthetic_scenario(Some(&shift), 100_000);
        let report = eval_offline(
            &batches,
            &paper_default_config(),
            &OfflineEvalOptions {
                n_train: 50,
                repeats: 100,
                seed: 4,
            },
        )
        .map_err(|e| e.to_string())?;

        let median_f1 = report.median_f1.ok_or("median F1 undefined")?;
        let tnr = report.aggregated.tnr.ok_or("TNR undefined")?;
        if median_f1 < 0.95 {
            return Err(format!("median F1 {median_f1:.4} < 0.95"));
        }
        if tnr < 0.95 {
            return Err(format!("TNR {tnr:.4} < 0.95"));
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() > 120.0 {
            return Err(format!("took {elapsed:?}, budget is 120 s"));
        }
        Ok(format!(
            "3*sigma = {:.0} ns, median F1 {median_f1:.4}, TNR {tnr:.4}, {elapsed:?}",
            3.0 * sigma
        ))
    })();
    verdict("4 (synthetic offline detection)", result);
}

#[test]
fn criterion_5_null_experiment_stays_quiet() {
    let result = (|| {
        let batches = synthetic_scenario(None, 500_000);
        let report = eval_offline(
            &batches,
            &paper_default_config(),
            &OfflineEvalOptions {
                n_train: 50,
                repeats: 100,
                seed: 4,
            },
        )
        .map_err(|e| e.to_string())?;
        let m = &report.aggregated;
        let flagged = (m.tp + m.fp) as f64 / (m.tp + m.fp + m.fn_ + m.tn) as f64;
        if flagged > 0.05 {
            return Err(format!(
                "{:.2}% of identically distributed batches flagged",
                flagged * 100.0
            ));
        }
        Ok(format!("{:.3}% flagged at theta=1e-10", flagged * 100.0))
    })();
    verdict("5 (synthetic null test)", result);
}

// ---------------------------------------------------------------------------
// 6. synthetic online evaluation

#[test]
fn criterion_6_online_catches_the_switch() {
    let result = (|| {
        let spec = default_scenario_spec();
        let sigma = measure_target_sigma(&spec, 9_500_000);
        let shift = ShiftSpec {
            target: ShiftTarget::Function("filldir64".into()),
            delay: DelaySpec::constant(3.0 * sigma),
            extra_event: false,
        };
        let mut batches = Vec::with_capacity(200);
        for i in 0..100 {
            batches.push(generate_batch(&spec, None, Label::Normal, 700_000 + i).unwrap());
        }
        for i in 0..100 {
            batches.push(generate_batch(&spec, Some(&shift), Label::Rootkit, 800_000 + i).unwrap());
        }

        let report =
            eval_online(&batches, &paper_default_config(), 50).map_err(|e| e.to_string())?;
        let switch = report
            .steps
            .iter()
            .find(|s| s.index == 100)
            .ok_or("switch step missing")?;
        if switch.counted != OnlineCount::Positive {
            return Err("first shifted batch not counted as a positive".into());
        }
        if switch.verdict != Some(Verdict::Anomalous) {
            return Err("first shifted batch not detected".into());
        }
        let m = &report.metrics;
        if m.fn_ > 0 {
            return Err(format!("missed {} switch positives", m.fn_));
        }
        let negatives = m.fp + m.tn;
        let fp_rate = m.fp as f64 / negatives as f64;
        if fp_rate > 0.05 {
            return Err(format!(
                "false positive rate {:.2}% among {negatives} negatives",
                fp_rate * 100.0
            ));
        }
        Ok(format!(
            "switch detected, TPR 100%, FP rate {:.2}% over {negatives} negatives",
            fp_rate * 100.0
        ))
    })();
    verdict("6 (synthetic online detection)", result);
}

// ---------------------------------------------------------------------------
// 7. published-dataset reproduction (optional, non-blocking)

/// Reproduction against the published measurements. The dataset's on-disk
/// schema is not the canonical one; converting it needs a format adapter
/// written after inspecting the download, so this criterion stays ignored
/// until `TRACESHIFT_DATASET_MANIFEST` points at a converted manifest.
#[test]
#[ignore = "needs the published dataset converted to the canonical manifest format"]
fn criterion_7_published_dataset_reproduction() {
    let result = (|| {
        let manifest = std::env::var("TRACESHIFT_DATASET_MANIFEST")
            .map_err(|_| "set TRACESHIFT_DATASET_MANIFEST to a converted manifest".to_string())?;
        let batches = traceshift::load_manifest(Path::new(&manifest)).map_err(|e| e.to_string())?;
        let default_only: Vec<Batch> = batches
            .iter()
            .filter(|b| b.scenario == Scenario::Default)
            .cloned()
            .collect();

        let offline = |strategy: Strategy| {
            let mut config = paper_default_config();
            config.strategy = strategy;
            eval_offline(
                &default_only,
                &config,
                &OfflineEvalOptions {
                    n_train: 50,
                    repeats: 100,
                    seed: 0,
                },
            )
        };
        let fun = offline(Strategy::Function).map_err(|e| e.to_string())?;
        let seq = offline(Strategy::Sequence).map_err(|e| e.to_string())?;
        let fun_f1 = fun.median_f1.unwrap_or(0.0);
        let seq_f1 = seq.median_f1.unwrap_or(0.0);
        if fun_f1 < 0.90 {
            return Err(format!("function-grouping median F1 {fun_f1:.4} < 0.90"));
        }
        if seq_f1 < 0.80 {
            return Err(format!("sequence-grouping median F1 {seq_f1:.4} < 0.80"));
        }

        let online_fun =
            eval_online(&batches, &paper_default_config(), 50).map_err(|e| e.to_string())?;
        let tpr = online_fun.metrics.tpr.unwrap_or(0.0);
        let tnr = online_fun.metrics.tnr.unwrap_or(0.0);
        if tpr < 1.0 {
            return Err(format!("online TPR {tpr:.4} < 1.0"));
        }
        if (tnr - 0.97).abs() > 0.05 {
            return Err(format!("online TNR {tnr:.4} outside 0.97 +/- 0.05"));
        }
        Ok(format!(
            "offline F1 {fun_f1:.3}/{seq_f1:.3}, online TPR {tpr:.2} TNR {tnr:.3}"
        ))
    })();
    verdict("7 (published dataset, optional)", result);
}

// ---------------------------------------------------------------------------
// 8. CLI determinism

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_traceshift"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning the binary: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "command {:?} failed with {:?}: {}",
            args,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        out.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

#[test]
fn criterion_8_cli_is_deterministic_under_seed() {
    let result = (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config_path = dir.path().join("scenarios.json");
        let scenarios = vec![traceshift::DatasetScenario {
            spec: {
                let mut spec = default_scenario_spec();
                spec.repeats_per_batch = 30;
                spec
            },
            normal_count: 14,
            rootkit_count: 6,
            shift: Some(ShiftSpec {
                target: ShiftTarget::Function("filldir64".into()),
                delay: DelaySpec::constant(20_000.0),
                extra_event: false,
            }),
        }];
        std::fs::write(
            &config_path,
            serde_json::to_string_pretty(&scenarios).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;

        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let config_arg = config_path.to_str().unwrap();
        for out in [&out_a, &out_b] {
            run_cli(&[
                "synth",
                "--config",
                config_arg,
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "42",
            ])?;
        }
        let a = read_dir_bytes(&out_a)?;
        let b = read_dir_bytes(&out_b)?;
        if a != b {
            return Err("synth output differs between identically seeded runs".into());
        }

        let manifest = out_a.join("manifest.json");
        let metrics_a = dir.path().join("metrics-a.json");
        let metrics_b = dir.path().join("metrics-b.json");
        for metrics in [&metrics_a, &metrics_b] {
            run_cli(&[
                "eval-offline",
                "--manifest",
                manifest.to_str().unwrap(),
                "--strategy",
                "function",
                "--q",
                "5",
                "--n-train",
                "8",
                "--repeats",
                "5",
                "--seed",
                "9",
                "--out",
                metrics.to_str().unwrap(),
            ])?;
        }
        let bytes_a = std::fs::read(&metrics_a).map_err(|e| e.to_string())?;
        let bytes_b = std::fs::read(&metrics_b).map_err(|e| e.to_string())?;
        if bytes_a != bytes_b {
            return Err("eval-offline metrics differ between identically seeded runs".into());
        }
        Ok(format!(
            "synth ({} files) and eval-offline artifacts byte-identical",
            a.len()
        ))
    })();
    verdict("8 (CLI determinism)", result);
}
