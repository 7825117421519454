//! Acceptance gate. Runs every criterion in sequence (timings are taken on
//! an otherwise idle process) and prints one PASS/FAIL line per criterion.
//!
//! ```text
//! cargo test --release --test acceptance
//! ```

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};
use std::{fs, io};

use dnp_core::eval::{auroc, average_precision, fpr_at_tpr};
use dnp_core::knn::{knn_scores, DistanceMetric, KnnConfig};
use dnp_core::pipeline::{
    cmd_build_ref, cmd_eval, cmd_score, generate_synthetic, BuildRefOptions, Mode, PipelineConfig,
    SynthSpec, TEST_DIR, TRAIN_DIR,
};
use dnp_core::sampler::{sample_gcs, sample_pcgcs, CandidatePool, SamplingMethod, SamplingSpec};
use dnp_core::scorer::{combine_scores, fit_normalization, ParametricKind};
use dnp_core::tensor_store::{FeatureMap, ReferenceSet, ScoreMap};
use rand::Rng;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn knn_exactness() -> Outcome {
    let (m, n, c) = (1_000, 10_000, 64);
    let mut rng = rng(1);
    let queries = uniform(&mut rng, m * c, -1.0, 1.0);
    let refs_data = uniform(&mut rng, n * c, -1.0, 1.0);
    let refs = ReferenceSet::from_rows(refs_data.clone(), c).map_err(|e| e.to_string())?;
    let features = FeatureMap::new(20, 50, c, queries.clone()).map_err(|e| e.to_string())?;

    let mut timed = Duration::ZERO;
    let mut worst = 0.0f64;
    for metric in DistanceMetric::ALL {
        let sorted: Vec<Vec<f64>> = queries
            .chunks_exact(c)
            .map(|q| sorted_distances(metric, q, &refs_data, c))
            .collect();
        for k in [1, 3, 10] {
            let cfg = KnnConfig::new(k, metric).sequential();
            let start = Instant::now();
            let scores = single_threaded(|| knn_scores(&features, &refs, &cfg))
                .map_err(|e| e.to_string())?;
            timed += start.elapsed();
            for (i, (&got, d)) in scores.as_slice().iter().zip(&sorted).enumerate() {
                let want = d[..k].iter().sum::<f64>() / k as f64;
                let rel = (got as f64 - want).abs() / want.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                ensure(rel <= 1e-5, || {
                    format!("{metric} k={k} query {i}: {got} vs {want} (rel {rel:.2e})")
                })?;
            }
        }
    }
    ensure(timed < Duration::from_secs(10), || {
        format!("{timed:.2?} single-threaded, limit 10 s")
    })?;
    Ok(format!(
        "max rel err {worst:.1e}, 9 runs in {timed:.2?} single-threaded"
    ))
}

fn monotone_in_k() -> Outcome {
    let mut rng = rng(2);
    let mut checks = 0usize;
    for instance in 0..100 {
        let c = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=40);
        let m = rng.gen_range(1..=12);
        // every other instance has integer data and many tied distances
        let (refs_data, queries) = if instance % 2 == 0 {
            (
                small_ints(&mut rng, n * c, 3),
                small_ints(&mut rng, m * c, 3),
            )
        } else {
            (
                uniform(&mut rng, n * c, -5.0, 5.0),
                uniform(&mut rng, m * c, -5.0, 5.0),
            )
        };
        let refs = ReferenceSet::from_rows(refs_data, c).unwrap();
        let features = FeatureMap::new(1, m, c, queries.clone()).unwrap();
        for metric in DistanceMetric::ALL {
            let cosine_ok = metric != DistanceMetric::Cosine
                || (queries.chunks(c).all(|q| q.iter().any(|&v| v != 0.0))
                    && refs
                        .features()
                        .chunks(c)
                        .all(|r| r.iter().any(|&v| v != 0.0)));
            if !cosine_ok {
                continue;
            }
            let mut prev = vec![f32::NEG_INFINITY; m];
            for k in 1..=n {
                let scores = knn_scores(&features, &refs, &KnnConfig::new(k, metric))
                    .map_err(|e| e.to_string())?;
                for (q, (&s, p)) in scores.as_slice().iter().zip(prev.iter_mut()).enumerate() {
                    ensure(s >= *p, || {
                        format!("instance {instance} {metric} query {q}: k={k} gives {s} < {p}")
                    })?;
                    *p = s;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} comparisons, 0 violations"))
}

fn coreset_guarantee() -> Outcome {
    let mut rng = rng(3);
    let mut cases = 0;
    for pool_id in 0..200 {
        let p = rng.gen_range(1..=12);
        let points = uniform(&mut rng, p * 2, -10.0, 10.0);
        let pool = CandidatePool::from_rows(points.clone(), 2, None).unwrap();
        for budget in 1..=p {
            let spec = SamplingSpec::new(SamplingMethod::Gcs, budget, rng.gen());
            let refs = sample_gcs(&pool, &spec).map_err(|e| e.to_string())?;
            let selected: Vec<Vec<f32>> = (0..refs.count()).map(|i| refs.row(i).to_vec()).collect();
            let greedy = coverage_radius_oracle(&points, 2, &selected);
            let optimal = optimal_k_center_radius(&points, 2, budget);
            ensure(greedy <= 2.0 * optimal, || {
                format!("pool {pool_id} budget {budget}: greedy {greedy} > 2 x optimal {optimal}")
            })?;
            cases += 1;
        }
    }

    for pool_id in 0..100 {
        let classes = rng.gen_range(1..=6);
        let p = rng.gen_range(1..=300);
        let labels: Vec<i32> = (0..p).map(|_| rng.gen_range(0..classes) as i32).collect();
        let pool =
            CandidatePool::from_rows(uniform(&mut rng, p * 3, -1.0, 1.0), 3, Some(labels.clone()))
                .unwrap();
        let budget = rng.gen_range(1..=p + 10);
        let spec = SamplingSpec::new(SamplingMethod::PcGcs, budget, rng.gen());
        let refs = sample_pcgcs(&pool, &spec, classes).map_err(|e| e.to_string())?;
        let sizes: Vec<usize> = (0..classes)
            .map(|c| labels.iter().filter(|&&l| l == c as i32).count())
            .collect();
        let mut got = vec![0usize; classes];
        for &l in refs.class_labels().unwrap() {
            got[l as usize] += 1;
        }
        ensure(refs.count() == budget.min(p), || {
            format!(
                "labeled pool {pool_id}: {} rows for budget {budget} of {p}",
                refs.count()
            )
        })?;
        ensure(got == allocation_oracle(&sizes, budget), || {
            format!("labeled pool {pool_id}: per-class counts {got:?} for sizes {sizes:?}, budget {budget}")
        })?;
    }
    Ok(format!(
        "{cases} (pool, budget) cases within 2x; 100 labeled pools conserve budget"
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = rng(4);
    let mut largest = 0;
    for instance in 0..500 {
        // log-uniform size up to 10^4, with the largest sizes forced in
        let n = if instance < 5 {
            10_000
        } else {
            10f64.powf(rng.gen_range(0.5..4.0)) as usize
        }
        .max(2);
        largest = largest.max(n);
        let levels = match instance % 4 {
            0 => 0, // continuous
            1 => 3,
            2 => 50,
            _ => 1, // one value everywhere
        };
        let prevalence: f64 = rng.gen_range(0.01..0.9);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(prevalence)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let v: f64 = rng.gen_range(0.0..1.0) + if l { 0.3 } else { 0.0 };
                if levels == 0 {
                    v
                } else {
                    (v * levels as f64).floor() / levels as f64
                }
            })
            .collect();
        let ap = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        let fpr = fpr_at_tpr(&scores, &labels, 0.95).map_err(|e| e.to_string())?;
        let roc = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        let (ap_o, fpr_o, roc_o) = (
            ap_oracle(&scores, &labels),
            fpr95_oracle(&scores, &labels),
            auroc_oracle(&scores, &labels),
        );
        ensure((ap - ap_o).abs() <= 1e-9, || {
            format!("instance {instance} (n={n}): AP {ap} vs oracle {ap_o}")
        })?;
        ensure(fpr == fpr_o, || {
            format!("instance {instance} (n={n}): FPR95 {fpr} vs oracle {fpr_o}")
        })?;
        ensure(roc == roc_o, || {
            format!("instance {instance} (n={n}): AUROC {roc} vs oracle {roc_o}")
        })?;
    }
    Ok(format!("500 instances up to n={largest}, tied and untied"))
}

/// Dyadic values `i / 1024` with small `|i|`: sums, differences and
/// power-of-two scalings of them are exact in f32.
fn dyadic(rng: &mut rand_chacha::ChaCha8Rng, len: usize, lo: i32, hi: i32) -> Vec<f32> {
    (0..len)
        .map(|_| rng.gen_range(lo..=hi) as f32 / 1024.0)
        .collect()
}

fn normalization_invariance() -> Outcome {
    let mut rng = rng(5);
    let (h, w) = (6, 7);
    for trial in 0..100 {
        let train_knn = dyadic(&mut rng, 200, 0, 4096);
        let train_param = dyadic(&mut rng, 200, -4096, 4096);
        let test_knn = dyadic(&mut rng, h * w, 0, 8192);
        let test_param = dyadic(&mut rng, h * w, -8192, 8192);
        let combined = |tk: &[f32], tp: &[f32], k: &[f32], p: &[f32]| -> Result<Vec<u32>, String> {
            let stats = fit_normalization([tk], [tp]).map_err(|e| e.to_string())?;
            let knn = ScoreMap::new(h, w, k.to_vec()).map_err(|e| e.to_string())?;
            let param = ScoreMap::new(h, w, p.to_vec()).map_err(|e| e.to_string())?;
            let out = combine_scores(&knn, &param, &stats).map_err(|e| e.to_string())?;
            Ok(out.as_slice().iter().map(|v| v.to_bits()).collect())
        };
        let base = combined(&train_knn, &train_param, &test_knn, &test_param)?;

        let a = 2f32.powi(rng.gen_range(-6..=6));
        let scale = |v: &[f32]| v.iter().map(|x| x * a).collect::<Vec<_>>();
        let scaled = combined(
            &scale(&train_knn),
            &train_param,
            &scale(&test_knn),
            &test_param,
        )?;
        ensure(scaled == base, || {
            format!("trial {trial}: kNN scaling by {a} changed the output")
        })?;

        let b = rng.gen_range(-4096..=4096) as f32 / 1024.0;
        let affine = |v: &[f32]| v.iter().map(|x| x * a + b).collect::<Vec<_>>();
        let shifted = combined(
            &train_knn,
            &affine(&train_param),
            &test_knn,
            &affine(&test_param),
        )?;
        ensure(shifted == base, || {
            format!("trial {trial}: parametric map x -> {a} x + {b} changed the output")
        })?;
    }
    Ok("100 kNN rescalings and 100 parametric affine maps, all bit-identical".into())
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let run = || -> dnp_core::Result<dnp_core::eval::EvalReport> {
        generate_synthetic(&root.join("data"), &SynthSpec::default())?;
        let opts = BuildRefOptions {
            train_root: root.join("data").join(TRAIN_DIR),
            sampling: SamplingSpec::new(SamplingMethod::PcGcs, 1_000, 0),
            metric: DistanceMetric::L2,
            max_per_image: None,
        };
        cmd_build_ref(&opts, &root.join("refs"))?;
        let cfg = PipelineConfig {
            dataset_root: root.join("data").join(TEST_DIR),
            reference_path: Some(root.join("refs")),
            stats_path: None,
            knn: KnnConfig::new(3, DistanceMetric::L2),
            sampling: opts.sampling,
            parametric_kind: ParametricKind::default(),
            mode: Mode::Dnp,
        };
        let summary = cmd_score(&cfg, &[], &root.join("scores"), false)?;
        assert!(summary.failures.is_empty());
        cmd_eval(&root.join("scores"), &root.join("data").join(TEST_DIR))
    };
    let report = run().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let summary = format!(
        "AP {:.4}, FPR95 {:.4} in {elapsed:.2?}",
        report.ap, report.fpr95
    );
    ensure(
        report.ap >= 0.99 && report.fpr95 <= 0.01 && elapsed < Duration::from_secs(30),
        || summary.clone(),
    )?;
    Ok(summary)
}

fn throughput() -> Outcome {
    let (h, w, c, n) = (45, 80, 768, 100_000);
    let mut rng = rng(7);
    let refs = ReferenceSet::from_rows(uniform(&mut rng, n * c, -1.0, 1.0), c)
        .map_err(|e| e.to_string())?;
    let features = FeatureMap::new(h, w, c, uniform(&mut rng, h * w * c, -1.0, 1.0))
        .map_err(|e| e.to_string())?;
    let cfg = KnnConfig::new(3, DistanceMetric::L2);
    let start = Instant::now();
    knn_scores(&features, &refs, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let threads = rayon::current_num_threads();
    let summary = format!("{elapsed:.2?} with {threads} worker thread(s)");
    ensure(elapsed < Duration::from_secs(5), || summary.clone())?;
    Ok(summary)
}

fn read_tree(dir: &Path) -> io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((name, fs::read(&path)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dnp");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    generate_synthetic(&data, &SynthSpec::default()).map_err(|e| e.to_string())?;
    let (train, test) = (data.join(TRAIN_DIR), data.join(TEST_DIR));

    let mut runs = Vec::new();
    for (run, threads) in [1, 1, 2, 4].into_iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        let p = |name: &str| out.join(name).to_string_lossy().into_owned();
        let steps: Vec<Vec<String>> = vec![
            vec![
                "build-ref".into(),
                "--train".into(),
                train.display().to_string(),
                "--out".into(),
                p("refs"),
                "--n".into(),
                "600".into(),
                "--seed".into(),
                "11".into(),
            ],
            vec![
                "fit-norm".into(),
                "--train".into(),
                train.display().to_string(),
                "--reference".into(),
                p("refs"),
                "--out".into(),
                p("stats.json"),
            ],
            vec![
                "score".into(),
                "--data".into(),
                test.display().to_string(),
                "--reference".into(),
                p("refs"),
                "--stats".into(),
                p("stats.json"),
                "--mode".into(),
                "cdnp".into(),
                "--out".into(),
                p("scores"),
                "--png".into(),
            ],
            vec![
                "eval".into(),
                "--scores".into(),
                p("scores"),
                "--masks".into(),
                test.display().to_string(),
                "--out".into(),
                p("report.json"),
            ],
        ];
        for args in steps {
            let status = Command::new(bin)
                .args(&args)
                .env("DNP_THREADS", threads.to_string())
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), || {
                format!(
                    "{} failed: {}",
                    args[0],
                    String::from_utf8_lossy(&status.stderr)
                )
            })?;
        }
        runs.push((threads, read_tree(&out).map_err(|e| e.to_string())?));
    }
    let (_, first) = &runs[0];
    for (threads, files) in &runs[1..] {
        ensure(files == first, || {
            format!("artifacts differ between 1 and {threads} threads")
        })?;
    }
    Ok(format!(
        "{} artifacts byte-identical over 4 runs with 1, 1, 2, 4 threads",
        first.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 kNN exactness", knn_exactness),
        ("2 monotone in k", monotone_in_k),
        ("3 coreset guarantee", coreset_guarantee),
        ("4 metric oracles", metric_oracles),
        ("5 normalization invariance", normalization_invariance),
        ("6 synthetic end-to-end", synthetic_end_to_end),
        ("7 throughput", throughput),
        ("8 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
