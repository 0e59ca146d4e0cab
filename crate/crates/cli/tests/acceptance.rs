//! Acceptance suite: one `[PASS]` / `[FAIL]` line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use cebag_collect::{run_batch, BatchOptions, Collector, EndpointConfig, VqaTask};
use cebag_core::evaluate::{compare_detectors, EvalConfig, EvalReport};
use cebag_core::io::{read_corpus, write_corpus};
use cebag_core::metrics::{aug, roc_auc, stability_spread, LabeledScore};
use cebag_core::oracle::{brute_force_auc, run_pmi_trials, PmiTrials};
use cebag_core::scoring::score_sample;
use cebag_core::synth::{generate_corpus, SyntheticSpec};
use cebag_core::SamplePair;
use cebag_mock_endpoint::{MockConfig, MockEndpoint};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, &'static str, Option<Duration>, fn() -> Check);
type Transform = (&'static str, fn(f64) -> f64);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Distance in representable doubles between two finite values.
fn ulps(a: f64, b: f64) -> u64 {
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

fn random_pair(rng: &mut ChaCha8Rng, id: String, max_len: usize) -> SamplePair {
    let n = rng.random_range(1..=max_len);
    let mm: Vec<f64> = (0..n).map(|_| rng.random_range(-12.0..=0.0)).collect();
    let text: Vec<f64> = (0..n).map(|_| rng.random_range(-12.0..=0.0)).collect();
    SamplePair::from_logprobs(id, mm, text).expect("valid by construction")
}

fn report<'a>(reports: &'a [EvalReport], name: &str) -> &'a EvalReport {
    reports.iter().find(|r| r.detector_name == name).expect("detector present")
}

fn ac1_formula_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0;
    for i in 0..1000 {
        let max_len = if i % 10 == 0 { 1 } else { 64 };
        let pair = random_pair(&mut rng, format!("p{i}"), max_len);
        let s = score_sample(&pair);
        let l = pair.len() as f64;
        let e = s.gain.abs() / l;
        let d = ulps(s.evidence, e).max(ulps(s.cebag, s.sigma * (1.0 + e)));
        worst = worst.max(d);
        ensure(d <= 1, || format!("sample {i}: {d} ulp off"))?;
        if pair.len() == 1 {
            ensure(s.sigma == 0.0, || format!("sample {i}: length-1 sigma {}", s.sigma))?;
        }
    }
    Ok(format!("1000 pairs, worst {worst} ulp, length-1 sigma exactly 0"))
}

fn ac2_pmi_identity() -> Check {
    let cfg = PmiTrials {
        max_size: 16,
        trials: 100,
        seed: 4,
        pmi_offset: 0.0,
    };
    let s = run_pmi_trials(&cfg).map_err(|e| e.to_string())?;
    ensure(s.passed(), || format!("max |gain - pmi| = {:e}", s.max_abs_diff))?;
    let control = run_pmi_trials(&PmiTrials { pmi_offset: 1e-9, ..cfg }).map_err(|e| e.to_string())?;
    ensure(!control.passed(), || "negative control was not detected".to_owned())?;
    Ok(format!(
        "{} tables, {} cells, max |gain - pmi| = {:e}",
        s.trials, s.cells_checked, s.max_abs_diff
    ))
}

fn ac3_auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for c in 0..50 {
        let n = rng.random_range(2..=200);
        let tie_heavy = c % 2 == 1;
        let items: Vec<LabeledScore> = (0..n)
            .map(|i| {
                let score = if tie_heavy {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random_range(-1.0..1.0)
                };
                let label = match i {
                    0 => true,
                    1 => false,
                    _ => rng.random_bool(0.4),
                };
                LabeledScore::new(format!("s{i:03}"), score, label)
            })
            .collect();
        let fast = roc_auc(&items).map_err(|e| e.to_string())?;
        let slow = brute_force_auc(&items).map_err(|e| e.to_string())?;
        worst = worst.max((fast - slow).abs());
        ensure((fast - slow).abs() <= 1e-12, || format!("corpus {c}: {fast} vs {slow}"))?;
    }
    Ok(format!("50 corpora (25 tie-heavy), max |rank - pairwise| = {worst:e}"))
}

fn ac4_metric_anchors() -> Check {
    let make = |rows: &[(f64, bool)]| -> Vec<LabeledScore> {
        rows.iter()
            .enumerate()
            .map(|(i, &(s, l))| LabeledScore::new(format!("{i}"), s, l))
            .collect()
    };
    let perfect = roc_auc(&make(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)])).map_err(|e| e.to_string())?;
    ensure(perfect == 1.0, || format!("perfect separation gave {perfect}"))?;
    let tied = roc_auc(&make(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)])).map_err(|e| e.to_string())?;
    ensure(tied == 0.5, || format!("all-tied gave {tied}"))?;
    let clean = aug(&make(&[(0.3, false), (0.2, false), (0.9, false)])).map_err(|e| e.to_string())?;
    ensure(clean == 1.0, || format!("all-clean AUG {clean}"))?;
    let hand = aug(&make(&[(2.0, true), (1.0, false)])).map_err(|e| e.to_string())?;
    ensure(hand == 0.75, || format!("N=2 hand case AUG {hand}"))?;
    Ok("AUC 1.0 / 0.5, AUG 1.0 / 0.75 exactly".to_owned())
}

fn ac5_ablation_structure() -> Check {
    let corpus = generate_corpus(&SyntheticSpec::separable()).map_err(|e| e.to_string())?;
    let r = compare_detectors(&corpus, &BTreeMap::new(), &EvalConfig::default()).map_err(|e| e.to_string())?;
    let auc = |name: &str| report(&r, name).auc;
    ensure(auc("cebag") > auc("avgprob"), || "cebag <= avgprob".into())?;
    ensure(auc("sigma_only") > auc("evidence_only"), || "sigma_only <= evidence_only".into())?;
    ensure(auc("cebag_lambda") >= auc("sigma_only"), || "cebag_lambda < sigma_only".into())?;
    let frozen = [
        ("cebag", 0.9987),
        ("avgprob", 0.5773),
        ("sigma_only", 1.0),
        ("evidence_only", 0.0),
        ("cebag_lambda", 1.0),
    ];
    for (name, value) in frozen {
        ensure((auc(name) - value).abs() <= 0.005, || {
            format!("{name} AUC {} drifted from frozen {value}", auc(name))
        })?;
    }
    Ok(format!(
        "AUC cebag {:.4} > avgprob {:.4}; sigma {:.4} > evidence {:.4}; lambda {:.4} >= sigma",
        auc("cebag"),
        auc("avgprob"),
        auc("sigma_only"),
        auc("evidence_only"),
        auc("cebag_lambda")
    ))
}

fn ac6_stability() -> Check {
    let spec = SyntheticSpec {
        green_coupling: 0.9,
        ..SyntheticSpec::separable()
    };
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
    let r = compare_detectors(&corpus, &BTreeMap::new(), &EvalConfig::default()).map_err(|e| e.to_string())?;
    let cebag = report(&r, "cebag");
    ensure(cebag.stability.len() == 5, || "expected 5 thresholds".into())?;
    let spread = stability_spread(&cebag.stability).ok_or("a threshold was single-class")?;
    ensure(spread <= 0.05, || format!("spread {:.1} AUC points", spread * 100.0))?;
    Ok(format!("cebag AUC spread over 0.4..0.8 = {:.1} points", spread * 100.0))
}

fn ac7_request_contract() -> Check {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
        let image_bytes = b"\x89PNG\r\n\x1a\nacceptance-image-payload".to_vec();
        let image = dir.path().join("scan.png");
        std::fs::write(&image, &image_bytes).map_err(|e| e.to_string())?;
        let tasks: Vec<VqaTask> = (0..6)
            .map(|i| VqaTask {
                sample_id: format!("t{i}"),
                question: format!("What is abnormal in view {i}?"),
                image_ref: image.to_string_lossy().into_owned(),
                green_score: Some(1.0),
            })
            .collect();
        let endpoint = MockEndpoint::start(MockConfig::default()).await;
        let bystander = MockEndpoint::start(MockConfig::default()).await;
        let mut cfg = EndpointConfig::new(endpoint.base_url(), "mock-vlm");
        cfg.max_in_flight = 2;
        let collector = Arc::new(Collector::new(cfg).map_err(|e| e.to_string())?);
        let out = dir.path().join("corpus.jsonl");
        let summary = run_batch(collector, tasks.clone(), &out, BatchOptions::default(), |_| {})
            .await
            .map_err(|e| e.to_string())?;
        ensure(summary.succeeded == tasks.len(), || format!("{} failures", summary.failures.len()))?;

        let requests = endpoint.task_requests();
        ensure(requests.len() == 3 * tasks.len(), || {
            format!("{} task requests for {} tasks", requests.len(), tasks.len())
        })?;
        ensure(bystander.request_count() == 0, || "traffic reached a second service".into())?;
        let encoded = STANDARD.encode(&image_bytes);
        let mut text_only = 0;
        for r in &requests {
            let body = String::from_utf8_lossy(&r.body);
            let has_payload = body.contains(&encoded);
            match r.stage.as_deref() {
                Some("score_text") => {
                    text_only += 1;
                    ensure(!has_payload && !r.mentions_image(), || "text-only request carries the image".into())?;
                }
                Some("generate" | "score_mm") => {
                    ensure(has_payload, || "image-conditioned request lacks the image".into())?;
                }
                other => return Err(format!("unexpected stage {other:?}")),
            }
        }
        ensure(text_only == tasks.len(), || "missing text-only passes".into())?;
        Ok(format!(
            "{} tasks -> {} requests (3 each, plus 1 capability probe); text-only bodies image-free; 0 to other services",
            tasks.len(),
            requests.len()
        ))
    })
}

fn run_cebag(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cebag"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("cebag {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn ac8_determinism() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    run_cebag(&["synth", "--preset", "label-noise", "--out", "c.jsonl"], d)?;
    let read = |name: &str| std::fs::read(d.join(name)).map_err(|e| e.to_string());
    let mut runs = Vec::new();
    for i in 0..2 {
        let scores = format!("s{i}.jsonl");
        let report = format!("r{i}.json");
        let csv = format!("r{i}.csv");
        run_cebag(&["score", "c.jsonl", "--out", &scores], d)?;
        let stdout = run_cebag(&["eval", "c.jsonl", "--report", &report, "--csv", &csv], d)?;
        let from_scores = run_cebag(&["eval", &scores, "--labels", "c.jsonl"], d)?;
        runs.push((read(&scores)?, read(&report)?, read(&csv)?, stdout, from_scores));
    }
    ensure(runs[0] == runs[1], || "outputs differ between runs".into())?;
    Ok(format!(
        "score ({} B) and eval (report {} B, csv {} B, stdout) byte-identical across runs",
        runs[0].0.len(),
        runs[0].1.len(),
        runs[0].2.len()
    ))
}

fn ac9_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for i in 0..500 {
        let pair = random_pair(&mut rng, format!("p{i}"), 48);
        let c: f64 = rng.random_range(-5.0..=0.0);
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let shifted = SamplePair::from_logprobs(
            "p",
            shift(pair.multimodal().logprobs()),
            shift(pair.text_only().logprobs()),
        )
        .map_err(|e| e.to_string())?;
        let (a, b) = (score_sample(&pair), score_sample(&shifted));
        for (what, x, y) in [("sigma", a.sigma, b.sigma), ("gain", a.gain, b.gain), ("cebag", a.cebag, b.cebag)] {
            ensure((x - y).abs() <= 1e-12, || format!("pair {i}: {what} moved by {:e} under shift", (x - y).abs()))?;
        }
        let mut order: Vec<usize> = (0..pair.len()).collect();
        order.shuffle(&mut rng);
        let permute = |v: &[f64]| order.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let permuted = SamplePair::from_logprobs(
            pair.sample_id(),
            permute(pair.multimodal().logprobs()),
            permute(pair.text_only().logprobs()),
        )
        .map_err(|e| e.to_string())?;
        ensure(score_sample(&permuted) == score_sample(&pair), || format!("pair {i}: permutation changed scores"))?;
    }
    let transforms: [Transform; 3] = [
        ("3x+1", |x| 3.0 * x + 1.0),
        ("exp(x/7)", |x| (x / 7.0).exp()),
        ("atan", f64::atan),
    ];
    for c in 0..40 {
        let n = rng.random_range(2..=150);
        let items: Vec<LabeledScore> = (0..n)
            .map(|i| {
                let score = rng.random_range(-640..=640) as f64 / 64.0;
                LabeledScore::new(format!("s{i:03}"), score, i == 0 || (i != 1 && rng.random_bool(0.5)))
            })
            .collect();
        for (name, f) in transforms {
            let moved: Vec<LabeledScore> = items
                .iter()
                .map(|x| LabeledScore::new(x.sample_id.clone(), f(x.score), x.label))
                .collect();
            ensure(roc_auc(&moved) == roc_auc(&items), || format!("corpus {c}: AUC changed under {name}"))?;
            ensure(aug(&moved) == aug(&items), || format!("corpus {c}: AUG changed under {name}"))?;
        }
    }
    Ok("500 pairs shift <= 1e-12 and permutation bit-identical; 40 corpora x 3 monotone maps unchanged".to_owned())
}

fn ac10_round_trip() -> Check {
    let spec = SyntheticSpec {
        n_grounded: 531,
        n_hallucinated: 530,
        ..SyntheticSpec::label_noise()
    };
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut bytes = Vec::new();
    write_corpus(&corpus, &mut bytes).map_err(|e| e.to_string())?;
    let back = read_corpus(&bytes[..]).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_corpus(&back, &mut again).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(back.len() == 1061, || format!("{} records read back", back.len()))?;
    ensure(back == corpus, || "read(write(x)) != x".into())?;
    ensure(again == bytes, || "second write differs".into())?;
    Ok(format!("1061 records, {} KiB, write+read+write {:?}", bytes.len() / 1024, elapsed))
}

fn main() {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    println!(
        "acceptance ({profile} build, parallel: {})",
        cebag_core::is_parallel()
    );
    let checks: [Criterion; 10] = [
        ("AC1", "formula fidelity", Some(Duration::from_secs(1)), ac1_formula_fidelity),
        ("AC2", "PMI identity", Some(Duration::from_secs(5)), ac2_pmi_identity),
        ("AC3", "AUC oracle equivalence", Some(Duration::from_secs(5)), ac3_auc_oracle),
        ("AC4", "trivial metric anchors", None, ac4_metric_anchors),
        ("AC5", "ablation structure", None, ac5_ablation_structure),
        ("AC6", "threshold stability", None, ac6_stability),
        ("AC7", "three requests per task", None, ac7_request_contract),
        ("AC8", "determinism", None, ac8_determinism),
        ("AC9", "invariance", None, ac9_invariance),
        ("AC10", "round-trip", Some(Duration::from_secs(2)), ac10_round_trip),
    ];
    let mut failed = 0;
    for (id, title, limit, check) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:?}, limit {limit:?}")),
            (r, _) => r,
        };
        let budget = limit.map(|l| format!(" / limit {l:?}")).unwrap_or_default();
        match result {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({elapsed:.2?}{budget})"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {why} ({elapsed:.2?}{budget})");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
