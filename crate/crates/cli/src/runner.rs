//! Command implementations: dataset synthesis and ingestion, single-fold
//! and leave-one-subject-out training, checkpoint evaluation, topography
//! export and the gradient check suite.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};

use ictal_core::dataset::io::{
    load_dataset, load_manifest, write_manifest, write_recording_bin, write_recording_csv,
    ManifestEntry,
};
use ictal_core::dataset::synth::{generate_synthetic, SynthSpec};
use ictal_core::dataset::{
    build_loo_splits, class_balance_report, verify_no_leakage, window_signal, EegWindow, Fold,
    Recording,
};
use ictal_core::gradcheck::{end_to_end_check, primitive_suite, SuiteResult, SUITE_TOLERANCE};
use ictal_core::metrics::{
    confusion_and_rates, format_fold_report, mean_attention, roc_auc, MetricsError,
};
use ictal_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use ictal_core::model::{predict_window, ModelParameters};
use ictal_core::trainer::fit_with;

use crate::config::RunConfig;

/// Worker-count environment variable for `loo`.
pub const WORKERS_ENV: &str = "ICTAL_WORKERS";

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

// ── synth ───────────────────────────────────────────────────────────────

pub struct SynthParams {
    pub out: PathBuf,
    pub subjects: u32,
    pub seconds: f64,
    pub seed: u64,
    pub csv: bool,
    pub block_seconds: f64,
    pub noise_level: f64,
    pub dc_offset: f64,
    pub seizure_channels: usize,
    pub window_len: usize,
}

pub fn synth(params: &SynthParams) -> Result<()> {
    if params.seizure_channels > ictal_core::montage::CHANNEL_COUNT {
        bail!(
            "--seizure-channels must be at most {}",
            ictal_core::montage::CHANNEL_COUNT
        );
    }
    ensure_dir(&params.out)?;
    let spec = SynthSpec {
        subjects: params.subjects,
        seconds_per_subject: params.seconds,
        seizure_channels: (0..params.seizure_channels).collect(),
        block_seconds: params.block_seconds,
        noise_level: params.noise_level,
        dc_offset: params.dc_offset,
        seed: params.seed,
        ..SynthSpec::default()
    };
    let recordings = generate_synthetic(&spec);
    let mut entries = Vec::new();
    let mut windows = Vec::new();
    for rec in &recordings {
        let file = if params.csv {
            format!("s{}.csv", rec.subject)
        } else {
            format!("s{}.rec", rec.subject)
        };
        let path = params.out.join(&file);
        if params.csv {
            write_recording_csv(rec, &path)?;
        } else {
            write_recording_bin(rec, &path)?;
        }
        entries.push(ManifestEntry {
            subject: rec.subject,
            path: PathBuf::from(file),
            rate: rec.rate,
        });
        windows.extend(window_signal(rec, params.window_len, 0.5)?);
    }
    write_manifest(&entries, &params.out.join("manifest.txt"))?;
    write_text(
        &params.out.join("balance.csv"),
        &class_balance_report(&windows),
    )?;
    println!(
        "wrote {} recordings, manifest.txt and balance.csv to {}",
        recordings.len(),
        params.out.display()
    );
    Ok(())
}

// ── ingest ──────────────────────────────────────────────────────────────

pub fn ingest(manifest: &Path, out: &Path, scale: f64) -> Result<()> {
    ensure_dir(out)?;
    let entries = load_manifest(manifest)?;
    let recordings = load_dataset(manifest, scale)?;
    let mut new_entries = Vec::new();
    for (entry, rec) in entries.iter().zip(&recordings) {
        let file = format!("s{}.rec", entry.subject);
        write_recording_bin(rec, &out.join(&file))?;
        new_entries.push(ManifestEntry {
            subject: entry.subject,
            path: PathBuf::from(file),
            rate: rec.rate,
        });
    }
    write_manifest(&new_entries, &out.join("manifest.txt"))?;
    println!(
        "converted {} recordings into {}",
        new_entries.len(),
        out.display()
    );
    Ok(())
}

// ── shared fold machinery ───────────────────────────────────────────────

/// Windows per subject, respecting the configured scale, overlap and
/// eligibility threshold. `window_len` comes from the run config for
/// training and from the checkpoint architecture for scoring.
fn load_windows(
    manifest: &Path,
    run: &RunConfig,
    window_len: usize,
) -> Result<BTreeMap<u32, Vec<EegWindow>>> {
    let recordings = load_dataset(manifest, run.scale)?;
    let eligible: Vec<&Recording> = recordings
        .iter()
        .filter(|r| {
            run.min_seizure_seconds <= 0.0 || r.seizure_seconds() > run.min_seizure_seconds
        })
        .collect();
    if eligible.len() < recordings.len() {
        println!(
            "eligibility threshold {}s keeps {} of {} subjects",
            run.min_seizure_seconds,
            eligible.len(),
            recordings.len()
        );
    }
    let mut by_subject: BTreeMap<u32, Vec<EegWindow>> = BTreeMap::new();
    for rec in eligible {
        by_subject
            .entry(rec.subject)
            .or_default()
            .extend(window_signal(rec, window_len, run.overlap)?);
    }
    Ok(by_subject)
}

struct FoldOutcome {
    subject: u32,
    accuracy: Option<f64>,
}

/// Train one fold, evaluate on the held-out subject, write all artifacts.
fn run_fold(
    by_subject: &BTreeMap<u32, Vec<EegWindow>>,
    fold: &Fold,
    run: &RunConfig,
    dir: &Path,
) -> Result<FoldOutcome> {
    ensure_dir(dir)?;
    let mut train_windows = Vec::new();
    for subject in &fold.train_subjects {
        train_windows.extend(by_subject[subject].iter().cloned());
    }
    verify_no_leakage(fold, &train_windows)?;
    write_text(
        &dir.join("balance.csv"),
        &class_balance_report(&train_windows),
    )?;

    let model_config = run.model_config(fold.num_classes());
    let cadence = run.checkpoint_every;
    let dir_owned = dir.to_path_buf();
    let (params, log) = fit_with(
        &train_windows,
        &fold.class_map(),
        model_config,
        &run.train,
        |epoch, params, _| {
            if cadence > 0 && epoch % cadence == 0 {
                let path = dir_owned.join(format!("checkpoint_epoch_{epoch}.ckpt"));
                save_checkpoint(params, &path).map_err(|e| e.to_string())?;
            }
            Ok(())
        },
    )?;
    write_text(&dir.join("trainlog.jsonl"), &log.to_jsonl())?;
    write_text(&dir.join("timings.csv"), &log.timings_text())?;
    save_checkpoint(&params, &dir.join("checkpoint.ckpt"))?;

    let accuracy = evaluate_subject(&params, &by_subject[&fold.test_subject], fold.test_subject, dir)?;
    Ok(FoldOutcome {
        subject: fold.test_subject,
        accuracy,
    })
}

/// Score one subject's windows against a trained model; writes metrics.txt,
/// topography.csv and topography.svg into `dir`. Returns the accuracy.
fn evaluate_subject(
    params: &ModelParameters,
    windows: &[EegWindow],
    subject: u32,
    dir: &Path,
) -> Result<Option<f64>> {
    let mut labels = Vec::with_capacity(windows.len());
    let mut scores = Vec::with_capacity(windows.len());
    let mut predictions = Vec::with_capacity(windows.len());
    let mut attentions = Vec::with_capacity(windows.len());
    for w in windows {
        let (p, att) = predict_window(params, &w.values)?;
        labels.push(w.label);
        scores.push(p);
        predictions.push(u8::from(p >= 0.5));
        attentions.push(att);
    }
    let (cm, rates) = confusion_and_rates(&labels, &predictions)?;
    let (roc, auc) = match roc_auc(&labels, &scores) {
        Ok((roc, auc)) => (roc, Some(auc)),
        Err(MetricsError::SingleClass) => (Vec::new(), None),
        Err(other) => return Err(other.into()),
    };
    write_text(
        &dir.join("metrics.txt"),
        &format_fold_report(subject, &cm, &rates, auc, &roc),
    )?;

    let topo = mean_attention(&attentions)?;
    write_text(&dir.join("topography.csv"), &topo.table())?;
    write_text(&dir.join("topography.svg"), &topo.to_svg())?;
    Ok(rates.accuracy)
}

// ── train (single fold) ─────────────────────────────────────────────────

pub fn train_single(manifest: &Path, out: &Path, fold_subject: u32, run: &RunConfig) -> Result<()> {
    let by_subject = load_windows(manifest, run, run.model.window_len.unwrap_or(250))?;
    let subjects: Vec<u32> = by_subject.keys().copied().collect();
    let plan = build_loo_splits(&subjects)?;
    let fold = plan
        .folds
        .iter()
        .find(|f| f.test_subject == fold_subject)
        .ok_or_else(|| anyhow!("subject {fold_subject} is not in the dataset"))?;
    let dir = out.join(format!("fold_{fold_subject}"));
    let outcome = run_fold(&by_subject, fold, run, &dir)?;
    match outcome.accuracy {
        Some(acc) => println!("fold {fold_subject}: accuracy {acc:.4} ({})", dir.display()),
        None => println!("fold {fold_subject}: no test windows scored"),
    }
    Ok(())
}

// ── loo (all folds + aggregate) ─────────────────────────────────────────

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

pub fn loo(manifest: &Path, out: &Path, run: &RunConfig) -> Result<()> {
    let by_subject = load_windows(manifest, run, run.model.window_len.unwrap_or(250))?;
    let subjects: Vec<u32> = by_subject.keys().copied().collect();
    let plan = build_loo_splits(&subjects)?;
    ensure_dir(out)?;

    let queue: Mutex<Vec<&Fold>> = Mutex::new(plan.folds.iter().collect());
    let outcomes: Mutex<Vec<FoldOutcome>> = Mutex::new(Vec::new());
    let workers = worker_count().min(plan.folds.len());
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(|| -> Result<()> {
                loop {
                    let fold = match queue.lock().unwrap().pop() {
                        Some(f) => f,
                        None => return Ok(()),
                    };
                    let dir = out.join(format!("fold_{}", fold.test_subject));
                    let outcome = run_fold(&by_subject, fold, run, &dir)?;
                    println!(
                        "fold {}: accuracy {}",
                        outcome.subject,
                        outcome
                            .accuracy
                            .map(|a| format!("{a:.4}"))
                            .unwrap_or_else(|| "undefined".into())
                    );
                    outcomes.lock().unwrap().push(outcome);
                }
            }));
        }
        for handle in handles {
            handle
                .join()
                .map_err(|_| anyhow!("fold worker panicked"))??;
        }
        Ok(())
    })?;

    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by_key(|o| o.subject);
    let mut aggregate = String::from("subject,accuracy\n");
    let mut sum = 0.0;
    let mut counted = 0usize;
    for o in &outcomes {
        match o.accuracy {
            Some(acc) => {
                aggregate.push_str(&format!("{},{}\n", o.subject, acc));
                sum += acc;
                counted += 1;
            }
            None => aggregate.push_str(&format!("{},undefined\n", o.subject)),
        }
    }
    if counted > 0 {
        aggregate.push_str(&format!("average,{}\n", sum / counted as f64));
    }
    write_text(&out.join("aggregate.csv"), &aggregate)?;
    println!("aggregate written to {}", out.join("aggregate.csv").display());
    Ok(())
}

// ── eval and attention-map ──────────────────────────────────────────────

pub fn eval(checkpoint: &Path, manifest: &Path, subject: u32, out: &Path, run: &RunConfig) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    // The checkpoint's architecture dictates the window length.
    let by_subject = load_windows(manifest, run, params.config.window_len)?;
    let windows = by_subject
        .get(&subject)
        .ok_or_else(|| anyhow!("subject {subject} is not in the dataset"))?;
    ensure_dir(out)?;
    let accuracy = evaluate_subject(&params, windows, subject, out)?;
    match accuracy {
        Some(acc) => println!("subject {subject}: accuracy {acc:.4}"),
        None => println!("subject {subject}: no windows scored"),
    }
    Ok(())
}

pub fn attention_map(
    checkpoint: &Path,
    manifest: &Path,
    subject: u32,
    out: &Path,
    run: &RunConfig,
) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    let by_subject = load_windows(manifest, run, params.config.window_len)?;
    let windows = by_subject
        .get(&subject)
        .ok_or_else(|| anyhow!("subject {subject} is not in the dataset"))?;
    ensure_dir(out)?;
    let mut attentions = Vec::with_capacity(windows.len());
    for w in windows {
        let (_, att) = predict_window(&params, &w.values)?;
        attentions.push(att);
    }
    let topo = mean_attention(&attentions)?;
    write_text(&out.join("topography.csv"), &topo.table())?;
    write_text(&out.join("topography.svg"), &topo.to_svg())?;
    println!(
        "subject {subject}: strongest channel {}, weakest {}",
        topo.argmax_channel(),
        topo.argmin_channel()
    );
    Ok(())
}

// ── gradcheck ───────────────────────────────────────────────────────────

pub fn gradcheck(points: usize, seed: u64) -> Result<()> {
    let mut results: Vec<SuiteResult> = primitive_suite(points, seed)?;
    results.push(end_to_end_check(points.min(20), seed)?);
    let mut all_ok = true;
    for r in &results {
        println!(
            "{:<24} {:>4} points  max rel err {:>12.3e}  {}",
            r.name,
            r.points,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAIL" }
        );
        all_ok &= r.passed();
    }
    if !all_ok {
        bail!("at least one primitive exceeded the {SUITE_TOLERANCE:e} tolerance");
    }
    println!("all gradients verified below {SUITE_TOLERANCE:e}");
    Ok(())
}
