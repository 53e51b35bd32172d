use agropath::classifier::{
    build_classifier, classifier_layers, evaluate_classifier, train_classifier, ClassifierConfig, ClassifierPreset,
    LabeledImage,
};
use agropath::metrics::Averaging;
use agropath::nn::{argmax, LayerSpec};
use agropath::quality::{build_iqa_model, default_iqa_config, iqa_layers, train_iqa, IqaPreset, QualitySample};
use agropath::synth::{leaf_dataset, leaf_registry};

fn conv(i: usize, o: usize, k: usize) -> usize {
    i * o * k * k + o
}

fn bn(c: usize) -> usize {
    2 * c
}

fn mbconv(i: usize, o: usize) -> usize {
    let mid = 2 * i;
    let r = (mid / 4).max(1);
    conv(i, mid, 1) + bn(mid) + mid * 9 + mid + bn(mid) + (mid * r + r + r * mid + mid) + conv(mid, o, 1) + bn(o)
}

fn backbone(stem: usize, blocks: &[usize], head: usize) -> usize {
    let mut total = conv(3, stem, 3) + bn(stem);
    let mut ch = stem;
    for &b in blocks {
        total += mbconv(ch, b);
        ch = b;
    }
    total + conv(ch, head, 1) + bn(head)
}

#[test]
fn parameter_counts_match_closed_form() {
    let mobile = build_classifier(ClassifierPreset::Mobile, leaf_registry(), 64, 0).unwrap();
    assert_eq!(mobile.network.param_count(), 10_080);
    assert_eq!(mobile.network.param_count(), backbone(16, &[24, 32], 64) + 64 * 4 + 4);
    let large = build_classifier(ClassifierPreset::Large, leaf_registry(), 64, 0).unwrap();
    assert_eq!(large.network.param_count(), backbone(16, &[32, 32, 48, 48], 96) + 96 * 4 + 4);
    assert!(large.network.param_count() > mobile.network.param_count());
    let tiny = build_iqa_model(IqaPreset::Tiny, 64, 0).unwrap();
    assert_eq!(tiny.network.param_count(), backbone(8, &[16, 24], 48) + 48 * 16 + 16 + 16 + 1);
}

#[test]
fn pooling_heads_differ_by_task() {
    for preset in [ClassifierPreset::Mobile, ClassifierPreset::Large] {
        let layers = classifier_layers(preset, 38);
        let n = layers.len();
        assert_eq!(layers[n - 3], LayerSpec::GlobalMaxPool);
        assert!(matches!(layers[n - 2], LayerSpec::Dense { out_dim: 38, .. }));
        assert_eq!(layers[n - 1], LayerSpec::Softmax);
        assert!(!layers.contains(&LayerSpec::GlobalAvgPool));
    }
    for (preset, hidden) in [(IqaPreset::Tiny, 16), (IqaPreset::Small, 32)] {
        let layers = iqa_layers(preset);
        assert!(layers.contains(&LayerSpec::GlobalAvgPool));
        assert!(!layers.contains(&LayerSpec::GlobalMaxPool));
        assert_eq!(layers.last(), Some(&LayerSpec::Dense { in_dim: hidden, out_dim: 1 }));
    }
}

#[test]
fn argmax_prefers_lowest_index_on_ties() {
    assert_eq!(argmax(&[0.1f32, 0.4, 0.4, 0.1]), 1);
    assert_eq!(argmax(&[0.25f32; 4]), 0);
}

#[test]
fn holdout_is_never_augmented_and_best_epoch_is_kept() {
    let data = leaf_dataset(8, 64, 11).unwrap();
    let mut config = ClassifierConfig::for_preset(ClassifierPreset::Mobile).with_seed(5);
    config.train.max_epochs = 4;
    config.train.patience = 4;
    let model = build_classifier(ClassifierPreset::Mobile, leaf_registry(), 64, 1).unwrap();
    let run = train_classifier(model, &data, &config).unwrap();

    let log = &run.log;
    assert!(log.holdout_indices.iter().all(|i| !log.train_indices.contains(i)));
    assert_eq!(log.train_indices.len() + log.holdout_indices.len(), data.len());
    assert_eq!(log.augmented.len(), log.train_indices.len() * config.expansion);
    assert!(log.augmented.iter().all(|(src, p)| log.train_indices.contains(src) && config.augment.admits(p)));
    for class in 0..4 {
        let held = log.holdout_indices.iter().filter(|&&i| data[i].label == class).count();
        assert_eq!(held, 2, "class {class}");
    }

    let best = &run.history[run.best_epoch - 1];
    assert!(best.improved);
    let best_acc = best.val_accuracy.unwrap();
    assert!(run.history.iter().all(|r| r.val_accuracy.unwrap() <= best_acc));
    let holdout: Vec<LabeledImage> = log.holdout_indices.iter().map(|&i| data[i].clone()).collect();
    let (_, report) = evaluate_classifier(&run.model, &holdout, Averaging::default()).unwrap();
    assert!((report.accuracy - best_acc).abs() < 1e-12, "{} vs {best_acc}", report.accuracy);
}

#[test]
fn constant_scores_are_flagged() {
    let samples: Vec<QualitySample> = leaf_dataset(2, 64, 3)
        .unwrap()
        .into_iter()
        .map(|s| QualitySample {
            image: s.image,
            mos: Some(0.5),
        })
        .collect();
    let mut config = default_iqa_config();
    config.max_epochs = 1;
    config.patience = 1;
    let model = build_iqa_model(IqaPreset::Tiny, 64, 0).unwrap();
    let run = train_iqa(model, &samples[..6], &samples[6..], &config).unwrap();
    assert!(run.warnings.iter().any(|w| w.contains("quality cannot be learned")), "{:?}", run.warnings);
    assert!(run.warnings.iter().any(|w| w.contains("batch size 32 reduced")), "{:?}", run.warnings);
}
