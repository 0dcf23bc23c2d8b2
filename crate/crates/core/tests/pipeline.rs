use std::path::Path;

use synthprint::eval::{build_report, fuse_scores};
use synthprint::fingerprint::{amplitude_spectrum, estimate_fingerprint};
use synthprint::launder::launder_manifest;
use synthprint::residual::DenoiserConfig;
use synthprint::specdetector::{manifest_features, train, TrainConfig};
use synthprint::{
    AccuracyMode, DatasetManifest, FingerprintF32, Image, ImageF32, Label, LaunderParams, ManifestEntry,
    Scores, SpectrumScale,
};

fn write_corpus(dir: &Path, n: usize) -> DatasetManifest {
    let mut entries = Vec::new();
    for i in 0..n {
        let synthetic = i % 2 == 1;
        let img = Image::from_fn(48, 40 + i % 3, 3, |y, x, c| {
            let h = (y * 131 + x * 71 + c * 17 + i * 7919) % 97;
            let grid = if synthetic && (x % 4 == 0 || y % 4 == 0) { 0.2 } else { 0.0 };
            0.3 + 0.4 * h as f64 / 97.0 + grid
        })
        .unwrap();
        let path = format!("sub/img{i}.png");
        std::fs::create_dir_all(dir.join("sub")).unwrap();
        img.save_png(&dir.join(&path)).unwrap();
        let label = if synthetic { Label::synthetic("g1").unwrap() } else { Label::real() };
        entries.push(ManifestEntry { path, label });
    }
    let m = DatasetManifest::new(dir, entries).unwrap();
    m.save(&dir.join("manifest.csv")).unwrap();
    DatasetManifest::load(&dir.join("manifest.csv")).unwrap()
}

#[test]
fn f32_and_f64_fingerprints_agree() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_corpus(dir.path(), 10);
    let f64_est = estimate_fingerprint::<f64>(&m, &DenoiserConfig::Gaussian { sigma: 1.0 }, 32).unwrap();
    let f32_est: FingerprintF32 = estimate_fingerprint(&m, &DenoiserConfig::Gaussian { sigma: 1.0 }, 32).unwrap();
    let a = f64_est.estimate().unwrap();
    let b = f32_est.estimate().unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - *y as f64).abs() < 1e-5);
    }
    let sa = amplitude_spectrum(&f64_est, SpectrumScale::Log1p).unwrap();
    let sb = amplitude_spectrum(&f32_est, SpectrumScale::Log1p).unwrap();
    assert_eq!((sa.height(), sa.width()), (sb.height(), sb.width()));
}

#[test]
fn f32_image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageF32::from_fn(5, 7, 3, |y, x, c| ((y * 7 + x) * 3 + c) as f32 / 105.0).unwrap();
    let path = dir.path().join("a.png");
    img.save_png(&path).unwrap();
    let back = ImageF32::load(&path).unwrap();
    assert_eq!(back.to_u8(), img.to_u8());
}

#[test]
fn train_score_fuse_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_corpus(dir.path(), 12);
    let features = manifest_features::<f64>(&m, 32, 8).unwrap();
    let labels: Vec<Label> = m.entries().iter().map(|e| e.label.clone()).collect();
    let model = train(&features, &labels, &TrainConfig::default()).unwrap();
    let model_path = dir.path().join("model.txt");
    model.save(&model_path).unwrap();
    let model = synthprint::Model::load(&model_path).unwrap();

    let records: Vec<(String, f64)> = m
        .entries()
        .iter()
        .map(|e| (e.path.clone(), model.score(&Image::load(&m.resolve(e)).unwrap(), 32).unwrap()))
        .collect();
    let scores = Scores::new("spec", records).unwrap();
    let path = dir.path().join("spec.csv");
    scores.save(&path).unwrap();
    let loaded = Scores::load(&path).unwrap();
    assert_eq!(loaded.records(), scores.records());

    let fused = fuse_scores(&[loaded.clone(), loaded]).unwrap();
    assert_eq!(fused.detector_name, "spec+spec");
    let report = build_report(&m, &fused, 0.5, AccuracyMode::Balanced).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].n_fake, 6);
    assert!(report.rows[0].auc_pct > 90.0, "{report:?}");
}

#[test]
fn laundered_manifest_keeps_labels_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_corpus(dir.path(), 6);
    let out = dir.path().join("out");
    let p = LaunderParams { target_side: 24, ..LaunderParams::default() };
    let outcome = launder_manifest::<f32>(&m, &p, &out).unwrap();
    assert!(outcome.failures.is_empty());
    let labels: Vec<_> = outcome.manifest.entries().iter().map(|e| e.label.clone()).collect();
    let original: Vec<_> = m.entries().iter().map(|e| e.label.clone()).collect();
    assert_eq!(labels, original);
    for (e, r) in outcome.manifest.entries().iter().zip(&outcome.records) {
        assert_eq!(e.path, r.output_path);
        let img = Image::load(&outcome.manifest.resolve(e)).unwrap();
        assert_eq!(img.shape(), (24, 24, 3));
    }
}
