use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use synthprint::eval::{self, build_report, platt_apply, platt_fit_per_generator, platt_fit_pooled};
use synthprint::fingerprint::{amplitude_spectrum, estimate_fingerprint};
use synthprint::launder::{launder_manifest, write_records_csv};
use synthprint::specdetector::{manifest_features, train, TrainConfig};
use synthprint::spectrum::{detect_peaks, render_spectrum, write_peaks_csv};
use synthprint::{
    selftest, AccuracyMode, Calibration, DatasetManifest, Denoiser, Image, LaunderParams, Model,
    Scores, SpectrumScale,
};

use crate::args::*;
use crate::{EXIT_ERROR, EXIT_PARTIAL};

pub fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Quiet => log::LevelFilter::Off,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("cannot load manifest {}", path.display()))
}

fn load_scores(path: &Path) -> Result<Scores> {
    Scores::load(path).with_context(|| format!("cannot load scores {}", path.display()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    init_threads(cli.global.threads)?;
    let seed = cli.global.seed;
    match cli.command {
        Command::Fingerprint(a) => fingerprint(a, seed),
        Command::Launder(a) => launder(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Score(a) => score(a, seed),
        Command::Eval(a) => eval_cmd(a, seed),
        Command::Fuse(a) => fuse(a, seed),
        Command::Calibrate(a) => calibrate(a, seed),
        Command::Selftest => Ok(selftest_cmd()),
    }
}

fn fingerprint(a: FingerprintArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let manifest = match &a.generator {
        Some(g) => {
            let entries: Vec<_> = manifest
                .entries()
                .iter()
                .filter(|e| e.label.is_synthetic() && e.label.generator() == g)
                .cloned()
                .collect();
            if entries.is_empty() {
                bail!("manifest has no images of generator {g:?}");
            }
            DatasetManifest::new(manifest.root(), entries)?
        }
        None => manifest,
    };
    let denoiser: Denoiser = match a.denoiser {
        DenoiserKind::Gaussian => Denoiser::Gaussian { sigma: a.sigma },
        DenoiserKind::Wavelet => Denoiser::WaveletSoft {
            threshold: a.wavelet_threshold,
        },
        DenoiserKind::External => Denoiser::External {
            dir: a.external_dir.clone().context("--external-dir is required")?,
        },
    };
    let scale = match a.scale {
        ScaleArg::Linear => SpectrumScale::Linear,
        ScaleArg::Log1p => SpectrumScale::Log1p,
    };
    info!("averaging residuals of {} images", manifest.len());
    let estimate = estimate_fingerprint(&manifest, &denoiser, a.crop)?;
    let spectrum = amplitude_spectrum(&estimate, scale)?;
    let peaks = detect_peaks(&spectrum, a.prominence, a.neighborhood)?;
    if let Some(p) = &a.out_spectrum {
        render_spectrum(&spectrum, p)?;
    }
    if let Some(p) = &a.out_peaks {
        write_peaks_csv(&peaks, p)?;
    }
    let peak_list: Vec<_> = peaks
        .iter()
        .map(|p| json!({"u": p.u, "v": p.v, "magnitude": p.magnitude, "prominence": p.prominence}))
        .collect();
    print_json(&json!({
        "seed": seed,
        "images": estimate.count(),
        "crop": a.crop,
        "peaks": peak_list,
    }));
    Ok(0)
}

fn launder(a: LaunderArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let params = LaunderParams {
        target_side: a.target_side,
        qf_min: a.qf_min,
        qf_max: a.qf_max,
        min_crop_frac: a.min_crop_frac,
        global_seed: seed,
    };
    let outcome = launder_manifest::<f64>(&manifest, &params, &a.out_dir)?;
    let manifest_out = a.out_dir.join("manifest.csv");
    outcome.manifest.save(&manifest_out)?;
    if let Some(p) = &a.records_csv {
        write_records_csv(&outcome.records, p)?;
    }
    for (path, e) in &outcome.failures {
        warn!("{path}: {e}");
    }
    print_json(&json!({
        "seed": seed,
        "laundered": outcome.records.len(),
        "failed": outcome.failures.len(),
        "manifest": manifest_out,
    }));
    Ok(if outcome.failures.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let features = manifest_features::<f64>(&manifest, a.crop, a.bins)?;
    let labels: Vec<_> = manifest.entries().iter().map(|e| e.label.clone()).collect();
    let config = TrainConfig {
        l2_lambda: a.l2,
        iterations: a.iters,
        learning_rate: a.lr,
    };
    let model = train(&features, &labels, &config)?;
    model.save(&a.out_model)?;
    print_json(&json!({
        "seed": seed,
        "images": labels.len(),
        "bins": model.bins(),
        "final_loss": model.meta.final_loss,
        "model": a.out_model,
    }));
    Ok(0)
}

fn score(a: ScoreArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let model = Model::load(&a.model)?;
    let results: Vec<_> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            Image::load(&manifest.resolve(e))
                .and_then(|img| model.score(&img, a.crop))
                .map_err(|err| (e.path.clone(), err))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    for (e, r) in manifest.entries().iter().zip(results) {
        match r {
            Ok(s) => records.push((e.path.clone(), s)),
            Err((path, err)) => {
                warn!("{path}: {err}");
                failed += 1;
            }
        }
    }
    let name = a
        .out_scores
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spec".into());
    Scores::new(name, records)?.save(&a.out_scores)?;
    print_json(&json!({
        "seed": seed,
        "scored": manifest.len() - failed,
        "failed": failed,
        "scores": a.out_scores,
    }));
    Ok(if failed == 0 { 0 } else { EXIT_PARTIAL })
}

fn eval_cmd(a: EvalArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let scores = load_scores(&a.scores)?;
    let mode = match a.accuracy {
        AccuracyArg::Balanced => AccuracyMode::Balanced,
        AccuracyArg::Raw => AccuracyMode::Raw,
    };
    let mut report = build_report(&manifest, &scores, a.threshold, mode)?;
    report.seed = Some(seed);
    let text = match a.out {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Json => report.to_json() + "\n",
    };
    match &a.out_file {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn fuse(a: FuseArgs, seed: u64) -> Result<u8> {
    let sets = a
        .scores
        .iter()
        .map(|p| load_scores(p))
        .collect::<Result<Vec<_>>>()?;
    let fused = eval::fuse_scores(&sets)?;
    fused.save(&a.out)?;
    print_json(&json!({
        "seed": seed,
        "detector": fused.detector_name,
        "images": fused.len(),
        "scores": a.out,
    }));
    Ok(0)
}

fn per_generator_path(base: &Path, generator: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into());
    base.with_file_name(format!("{stem}.{generator}.csv"))
}

fn calibrate(a: CalibrateArgs, seed: u64) -> Result<u8> {
    let manifest = load_manifest(&a.manifest)?;
    let scores = load_scores(&a.scores)?;
    let target = a.apply_to.as_deref().map(load_scores).transpose()?;
    let fits: BTreeMap<String, Calibration> = match a.mode {
        CalibrationMode::Pooled => {
            let fit = platt_fit_pooled(&manifest, &scores)?;
            if !fit.converged {
                warn!("calibration did not converge after {} iterations", fit.iterations);
            }
            let params = fit.params;
            let doc = json!({"a": params.a, "b": params.b, "seed": seed});
            write_json(&a.out_params, &doc)?;
            if let (Some(t), Some(out)) = (&target, &a.out_scores) {
                platt_apply(&params, t).save(out)?;
            }
            return Ok(0);
        }
        CalibrationMode::PerGenerator => platt_fit_per_generator(&manifest, &scores)?
            .into_iter()
            .map(|(g, fit)| {
                if !fit.converged {
                    warn!("calibration for {g} did not converge");
                }
                (g, fit.params)
            })
            .collect(),
    };
    let generators: serde_json::Map<_, _> = fits
        .iter()
        .map(|(g, p)| (g.clone(), json!({"a": p.a, "b": p.b})))
        .collect();
    write_json(&a.out_params, &json!({"generators": generators, "seed": seed}))?;
    if let (Some(t), Some(out)) = (&target, &a.out_scores) {
        for (g, p) in &fits {
            platt_apply(p, t).save(&per_generator_path(out, g))?;
        }
    }
    Ok(0)
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn selftest_cmd() -> u8 {
    let checks = selftest::run();
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!c.passed);
        println!("{status} {}: {}", c.name, c.detail);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        0
    } else {
        EXIT_ERROR
    }
}
