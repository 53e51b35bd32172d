//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use agropath::augment::{apply_affine, augment_batch, sample_params, AugmentConfig, AugmentParams};
use agropath::classifier::{
    build_classifier, cross_validate, evaluate_classifier, predict, stratified_kfold, train_classifier,
    ClassifierConfig, ClassifierPreset, LabeledImage,
};
use agropath::imaging::{equalize_intensity, gray_world_balance, gray_world_scales, ImagePlanar};
use agropath::io::ingest::ingest;
use agropath::io::model_file::{self, ModelFileError, SavedModel};
use agropath::metrics::{average_ranks, plcc, rmse, srocc, Averaging};
use agropath::nn::{DecayMode, PatienceMetric};
use agropath::quality::{
    build_iqa_model, calibrate_threshold, default_iqa_config, gate, score_quality, train_iqa, IqaPreset,
    QualitySample,
};
use agropath::registry::{LabelRegistry, PLANT_VILLAGE};
use agropath::synth::{blur_dataset, leaf_dataset, leaf_registry};
use agropath::Error;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcheck::{variants, worst_error, CONFIGS, TOLERANCE};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst_overall: f64 = 0.0;
    for v in variants() {
        let worst = worst_error(&v);
        ensure(worst < TOLERANCE, || format!("{}: max relative error {worst:.3e}", v.name))?;
        worst_overall = worst_overall.max(worst);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} variants x {CONFIGS} configs, worst {worst_overall:.2e}, {:.1}s",
        variants().len(),
        elapsed.as_secs_f64()
    ))
}

fn oracle_rmse(x: &[f64], y: &[f64]) -> f64 {
    let mut ss = 0.0;
    for i in 0..x.len() {
        ss += (x[i] - y[i]).powi(2);
    }
    (ss / x.len() as f64).sqrt()
}

/// Mean product of z-scores with population standard deviations.
fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let sd = |v: &[f64], m: f64| (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
    let (sx, sy) = (sd(x, mx), sd(y, my));
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| (a - mx) / sx * (b - my) / sy).sum::<f64>() / n)
}

/// Rank = 1 + (number strictly below) + (ties excluding self) / 2.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut ties, mut degenerate) = (0.0f64, 0, 0);
    for pair in 0..1000 {
        let n = rng.gen_range(2..60);
        let tie_heavy = pair % 2 == 1;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if tie_heavy { rng.gen_range(0..4) as f64 * 0.25 } else { rng.gen_range(-1.0..1.0) })
                .collect()
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        if tie_heavy {
            ties += 1;
        }
        let r = rmse(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((r - oracle_rmse(&x, &y)).abs());

        let (rx, ry) = (brute_ranks(&x), brute_ranks(&y));
        ensure(average_ranks(&x) == rx && average_ranks(&y) == ry, || format!("pair {pair}: ranks differ"))?;
        match (oracle_pearson(&x, &y), plcc(&x, &y)) {
            (Some(o), Ok(p)) => worst = worst.max((o - p).abs()),
            (None, Err(Error::Degenerate(_))) => degenerate += 1,
            (o, p) => return Err(format!("pair {pair}: plcc {p:?} vs oracle {o:?}")),
        }
        match (oracle_pearson(&rx, &ry), srocc(&x, &y)) {
            (Some(o), Ok(s)) => {
                worst = worst.max((o - s).abs());
                let via_ranks = plcc(&average_ranks(&x), &average_ranks(&y)).map_err(|e| e.to_string())?;
                ensure(s.to_bits() == via_ranks.to_bits(), || format!("pair {pair}: srocc != plcc(ranks)"))?;
            }
            (None, Err(Error::Degenerate(_))) => {}
            (o, s) => return Err(format!("pair {pair}: srocc {s:?} vs oracle {o:?}")),
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!(
        "1000 pairs ({ties} tie-heavy, {degenerate} zero-variance), max deviation {worst:.1e}"
    ))
}

fn recipe_constants() -> Outcome {
    let iqa = default_iqa_config();
    let s = &iqa.schedule;
    ensure(s.initial_lr == 1e-2, || format!("iqa lr {}", s.initial_lr))?;
    ensure(s.decay_factor == 0.5 && s.decay_period_epochs == 15, || "iqa decay".into())?;
    ensure(s.mode == DecayMode::Repeated, || "iqa decay mode".into())?;
    ensure(iqa.max_epochs == 100 && iqa.batch_size == 32, || "iqa limits".into())?;
    ensure(
        iqa.patience == 10 && iqa.patience_metric == PatienceMetric::ValidationLoss,
        || "iqa patience".into(),
    )?;
    for (preset, batch) in [(ClassifierPreset::Mobile, 32), (ClassifierPreset::Large, 16)] {
        let c = ClassifierConfig::for_preset(preset);
        let s = &c.train.schedule;
        let name = preset.as_str();
        ensure(s.initial_lr == 3e-3, || format!("{name} lr {}", s.initial_lr))?;
        ensure(s.decay_factor == 0.5 && s.decay_period_epochs == 20, || format!("{name} decay"))?;
        ensure(c.train.batch_size == batch, || format!("{name} batch {}", c.train.batch_size))?;
        ensure(
            c.train.patience == 3 && c.train.patience_metric == PatienceMetric::ValidationAccuracy,
            || format!("{name} patience"),
        )?;
        ensure(c.holdout_fraction == 0.2, || format!("{name} holdout"))?;
    }
    Ok("iqa (1e-2, 0.5/15, 100, 32, 10) and classifier (3e-3, 0.5/20, 32|16, 3, 0.2) match".into())
}

fn desk_classifier() -> Outcome {
    single_thread(|| {
        let seed = 1;
        let data = leaf_dataset(100, 64, seed).map_err(|e| e.to_string())?;
        ensure(data.len() == 400, || format!("{} images", data.len()))?;
        let registry = leaf_registry();
        let config = ClassifierConfig::for_preset(ClassifierPreset::Mobile);

        let start = Instant::now();
        let model = build_classifier(ClassifierPreset::Mobile, registry.clone(), 64, seed).map_err(|e| e.to_string())?;
        let trained = train_classifier(model, &data, &config.clone().with_seed(seed)).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let holdout: Vec<LabeledImage> = trained.log.holdout_indices.iter().map(|&i| data[i].clone()).collect();
        let (_, report) = evaluate_classifier(&trained.model, &holdout, Averaging::Macro).map_err(|e| e.to_string())?;
        let epochs = trained.history.len();
        let single = format!(
            "holdout {:.4} after {epochs} epochs in {:.0}s",
            report.accuracy,
            elapsed.as_secs_f64()
        );
        ensure(report.accuracy >= 0.95, || single.clone())?;
        ensure(epochs <= 60 && elapsed < Duration::from_secs(600), || single.clone())?;

        let cv = cross_validate(ClassifierPreset::Mobile, &registry, &data, 64, 10, &config, seed)
            .map_err(|e| e.to_string())?;
        let summary = format!(
            "{single}; 10-fold mean {:.4} sd {:.4}",
            cv.mean.accuracy, cv.stddev.accuracy
        );
        ensure(cv.mean.accuracy >= 0.95 && cv.stddev.accuracy <= 0.05, || summary.clone())?;
        Ok(summary)
    })
}

fn desk_iqa() -> Outcome {
    single_thread(|| {
        let data = blur_dataset(60, 64, 3).map_err(|e| e.to_string())?;
        ensure(data.len() == 300, || format!("{} images", data.len()))?;
        // Whole source textures go to validation so no scene appears in both splits.
        let (mut train, mut val): (Vec<QualitySample>, Vec<QualitySample>) = (Vec::new(), Vec::new());
        for (i, s) in data.into_iter().enumerate() {
            if (i / 5) % 5 == 0 {
                val.push(s);
            } else {
                train.push(s);
            }
        }
        let model = build_iqa_model(IqaPreset::Tiny, 64, 2).map_err(|e| e.to_string())?;
        let trained = train_iqa(model, &train, &val, &default_iqa_config()).map_err(|e| e.to_string())?;
        let pred: Vec<f64> = val
            .iter()
            .map(|s| score_quality(&trained.model, &s.image).map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let target: Vec<f64> = val.iter().map(|s| f64::from(s.mos.unwrap())).collect();
        let s = srocc(&pred, &target).map_err(|e| e.to_string())?;
        let r = rmse(&pred, &target).map_err(|e| e.to_string())?;
        let summary = format!(
            "{} train / {} val, SROCC {s:.4}, RMSE {r:.4}, {} epochs",
            train.len(),
            val.len(),
            trained.history.len()
        );
        ensure(s >= 0.8 && r <= 0.2, || summary.clone())?;
        Ok(summary)
    })
}

fn gate_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(227);
    let scores: Vec<f32> = (0..227).map(|_| rng.gen()).collect();
    let threshold = calibrate_threshold(&scores, 41.0 / 227.0).map_err(|e| e.to_string())?;
    let passed = scores.iter().filter(|&&s| gate(s, threshold).passed).count();
    ensure(passed == 186, || format!("passed {passed}, rejected {}", 227 - passed))?;
    Ok(format!("threshold {threshold:.4}: 41 rejected, 186 passed"))
}

fn texture(size: usize, seed: u64) -> ImagePlanar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = [0, 1, 2].map(|_| (0..size * size).map(|_| rng.gen_range(0.05..0.95)).collect());
    ImagePlanar::new(size, size, planes).unwrap()
}

/// Per-channel offsets give a color cast for gray-world to remove.
fn tinted(size: usize, seed: u64) -> ImagePlanar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = [0.05f32, 0.15, 0.25].map(|lo| (0..size * size).map(|_| rng.gen_range(lo..lo + 0.4)).collect());
    ImagePlanar::new(size, size, planes).unwrap()
}

fn augmentation_contract() -> Outcome {
    let config = AugmentConfig::default();
    for seed in 0..10_000u64 {
        let p = sample_params(&config, seed);
        ensure(config.admits(&p), || format!("seed {seed}: {p:?} outside the intervals"))?;
    }
    let img = texture(23, 5);
    ensure(apply_affine(&img, &AugmentParams::IDENTITY) == img, || "identity altered pixels".into())?;
    let flip = AugmentParams {
        flip_h: true,
        ..AugmentParams::IDENTITY
    };
    let twice = apply_affine(&apply_affine(&img, &flip), &flip);
    ensure(twice.to_le_bytes() == img.to_le_bytes(), || "double flip is not an involution".into())?;
    let identity_batch = augment_batch(std::slice::from_ref(&img), &AugmentConfig::identity(), 3, 1)
        .map_err(|e| e.to_string())?;
    ensure(identity_batch[0].image == img, || "identity config altered pixels".into())?;

    let items: Vec<ImagePlanar> = (0..12).map(|i| texture(16, i)).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| augment_batch(&items, &config, 99, 3))
            .unwrap()
    };
    let one = run(1);
    ensure(one.len() == 48, || format!("{} samples", one.len()))?;
    for threads in [2, 4] {
        ensure(run(threads) == one, || format!("{threads} threads differ from 1"))?;
    }
    Ok("10000 draws in range, identity and double flip exact, 1/2/4 threads identical".into())
}

fn preprocessing_contracts() -> Outcome {
    let mut worst_mean: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..50 {
        let img = tinted(20, 100 + seed);
        let scales = gray_world_scales(&img).map_err(|e| e.to_string())?;
        let max_in = img.planes().iter().flatten().fold(0.0f32, |m, &v| m.max(v)) as f64;
        ensure(scales.iter().all(|s| s * max_in < 1.0), || format!("seed {seed}: balance would clamp"))?;
        let post = gray_world_balance(&img).map_err(|e| e.to_string())?.channel_means();
        let spread = post.iter().cloned().fold(f64::MIN, f64::max) - post.iter().cloned().fold(f64::MAX, f64::min);
        worst_mean = worst_mean.max(spread);

        let eq = equalize_intensity(&img);
        for i in 0..img.width() * img.height() {
            let (x, y) = (i % img.width(), i / img.width());
            let (a, b) = (img.pixel(x, y), eq.pixel(x, y));
            if b.iter().any(|&v| v >= 1.0) {
                continue;
            }
            for (c, d) in [(0, 1), (1, 2), (0, 2)] {
                let (ra, rb) = (a[c] / a[d], b[c] / b[d]);
                worst_ratio = worst_ratio.max(((ra - rb) / ra).abs() as f64);
            }
        }
    }
    ensure(worst_mean <= 1e-6, || format!("gray-world channel mean spread {worst_mean:.2e}"))?;
    ensure(worst_ratio <= 1e-3, || format!("channel ratio drift {worst_ratio:.2e}"))?;

    let flat = ImagePlanar::filled(8, 8, [0.3, 0.6, 0.2]);
    let eq = equalize_intensity(&flat);
    ensure(eq == flat, || "constant image changed by equalization".into())?;
    let balanced = gray_world_balance(&eq).map_err(|e| e.to_string())?;
    ensure(
        balanced.planes().iter().flatten().all(|v| v.is_finite()),
        || "non-finite output on constant image".into(),
    )?;
    let black = ImagePlanar::filled(8, 8, [0.0; 3]);
    ensure(
        matches!(gray_world_balance(&equalize_intensity(&black)), Err(Error::Degenerate(_))),
        || "black image not reported as degenerate".into(),
    )?;
    Ok(format!(
        "mean spread {worst_mean:.1e}, ratio drift {worst_ratio:.1e}, constant and black images handled"
    ))
}

fn write_ppm_1x1(path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, b"P6\n1 1\n255\n\x40\x80\x20")
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = build_classifier(ClassifierPreset::Mobile, leaf_registry(), 64, 4).map_err(|e| e.to_string())?;
    let path = dir.path().join("clf.agrp");
    model_file::save(&path, &SavedModel::Classifier(model.clone())).map_err(|e| e.to_string())?;
    let loaded = model_file::load_classifier(&path).map_err(|e| e.to_string())?;
    let images: Vec<ImagePlanar> = (0..4).map(|i| texture(64, 300 + i)).collect();
    for img in &images {
        let (a, b) = (predict(&model, img), predict(&loaded, img));
        let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
        let bits = |p: &[f32]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.probabilities) == bits(&b.probabilities), || "reloaded predictions differ".into())?;
    }

    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let corrupt = |at: usize, xor: u8| {
        let mut b = bytes.clone();
        b[at] ^= xor;
        model_file::decode(&b)
    };
    ensure(matches!(corrupt(0, 0xFF), Err(ModelFileError::BadMagic)), || "magic".into())?;
    ensure(
        matches!(corrupt(4, 0x01), Err(ModelFileError::UnsupportedVersion(_))),
        || "version".into(),
    )?;
    ensure(
        matches!(corrupt(bytes.len() - 12, 0x10), Err(ModelFileError::ChecksumMismatch { .. })),
        || "checksum".into(),
    )?;

    let root = dir.path().join("plantvillage");
    let registry = LabelRegistry::plant_village();
    let mut files = 0u64;
    for ((_, _, count), class) in PLANT_VILLAGE.iter().zip(registry.classes()) {
        let class_dir = root.join(class);
        std::fs::create_dir_all(&class_dir).map_err(|e| e.to_string())?;
        for i in 0..*count {
            write_ppm_1x1(&class_dir.join(format!("{i:05}.ppm"))).map_err(|e| e.to_string())?;
        }
        files += count;
    }
    let outcome = ingest(&root, &registry).map_err(|e| e.to_string())?;
    ensure(outcome.manifest.rows.len() as u64 == files, || "row count".into())?;
    let warned = outcome
        .warnings
        .iter()
        .any(|w| w.contains("53973") && w.contains("54306"));
    ensure(warned, || format!("warnings: {:?}", outcome.warnings))?;
    Ok(format!(
        "round trip bit-identical, 3 distinct corruption errors, {files} ingested rows warn against 54306"
    ))
}

fn fold_properties() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 300,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (prop::sample::select(vec![2usize, 5, 10]), prop::collection::vec(0usize..6, 10..200), any::<u64>());
    runner
        .run(&strategy, |(k, labels, seed)| {
            let plan = stratified_kfold(&labels, k, seed).unwrap();
            prop_assert_eq!(plan.k(), k);
            let mut seen = vec![0usize; labels.len()];
            for fold in &plan.folds {
                for &i in fold {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for class in 0..6 {
                let per_fold: Vec<usize> = plan
                    .folds
                    .iter()
                    .map(|f| f.iter().filter(|&&i| labels[i] == class).count())
                    .collect();
                let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
                prop_assert!(hi - lo <= 1, "class {} spread {:?}", class, per_fold);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("300 random label multisets, k in {2, 5, 10}: exact partition, per-class spread <= 1".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("metric oracle equivalence", metric_oracle),
        ("recipe constants", recipe_constants),
        ("desk-scale classifier", desk_classifier),
        ("desk-scale IQA", desk_iqa),
        ("gate arithmetic", gate_arithmetic),
        ("augmentation contract", augmentation_contract),
        ("preprocessing contracts", preprocessing_contracts),
        ("serialization", serialization),
        ("fold-plan properties", fold_properties),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let id = n + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
