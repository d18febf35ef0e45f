//! Acceptance suite. One test per criterion, each printing a `[PASS]` line
//! (run with `-- --nocapture` to see them). Every oracle here is an
//! independent nested-loop or pairwise recomputation, sharing no code with
//! the kernels it checks.
//!
//! Clinical-scale accuracy figures are deliberately not gated: they depend
//! on the restricted corpus and long GPU runs. These tests pin what is
//! checkable at desk scale: gradients, kernel-vs-oracle equivalence, shape
//! contracts, scaled-down learning behavior, dataset arithmetic,
//! determinism and attention direction.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ictal_core::dataset::synth::{generate_synthetic, SynthSpec};
use ictal_core::dataset::{build_loo_splits, verify_no_leakage, window_signal, DataError, EegWindow};
use ictal_core::gradcheck::{end_to_end_check, primitive_suite, SUITE_TOLERANCE};
use ictal_core::graph::Graph;
use ictal_core::metrics::roc_auc;
use ictal_core::model::{
    attention_weights, decode, encode, predict_window, seizure_predict,
    ModelConfig, ModelParameters,
};
use ictal_core::nn::{
    bce_loss, ce_loss, conv2d_same, dense_affine, mse_loss, Activation, Conv2dSame, ConvSpec,
    ConvTranspose2d, MaxPool2dSame, Mode,
};
use ictal_core::tensor::Tensor;
use ictal_core::trainer::{fit, TrainConfig};

fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

// ── Criterion 1: gradient suite ─────────────────────────────────────────

#[test]
fn gradient_suite() {
    let started = Instant::now();
    let mut results = primitive_suite(20, 0xACCE97).expect("primitive suite runs");
    results.push(end_to_end_check(20, 0xACCE97).expect("end-to-end check runs"));
    for r in &results {
        assert!(
            r.passed(),
            "{} exceeded tolerance: {:.3e} >= {:e}",
            r.name,
            r.max_rel_err,
            SUITE_TOLERANCE
        );
        assert!(r.points >= 20, "{} checked only {} points", r.name, r.points);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient suite took {elapsed:?}, budget is 60 s"
    );
    let worst = results
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0f64, f64::max);
    println!(
        "[PASS] gradient suite: {} checks, >=20 points each, worst rel err {:.3e} < 1e-4, {:.1?}",
        results.len(),
        worst,
        elapsed
    );
}

// ── Criterion 2: oracle equivalence ─────────────────────────────────────

fn conv_loop_oracle(
    x: &[f64],
    (h, w, cin): (usize, usize, usize),
    wt: &[f64],
    (kh, kw, cout): (usize, usize, usize),
    (sh, sw): (usize, usize),
    bias: &[f64],
) -> Vec<f64> {
    let ho = h.div_ceil(sh);
    let wo = w.div_ceil(sw);
    let pad_h = ((ho - 1) * sh + kh).saturating_sub(h) / 2;
    let pad_w = ((wo - 1) * sw + kw).saturating_sub(w) / 2;
    let mut out = vec![0.0; ho * wo * cout];
    for oy in 0..ho {
        for ox in 0..wo {
            for co in 0..cout {
                let mut acc = bias[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * sh + ky) as isize - pad_h as isize;
                        let ix = (ox * sw + kx) as isize - pad_w as isize;
                        if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += x[(iy as usize * w + ix as usize) * cin + ci]
                                * wt[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(oy * wo + ox) * cout + co] = acc;
            }
        }
    }
    out
}

fn maxpool_loop_oracle(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    (wh, ww): (usize, usize),
    (sh, sw): (usize, usize),
) -> Vec<f64> {
    let ho = h.div_ceil(sh);
    let wo = w.div_ceil(sw);
    let pad_h = ((ho - 1) * sh + wh).saturating_sub(h) / 2;
    let pad_w = ((wo - 1) * sw + ww).saturating_sub(w) / 2;
    let mut out = vec![f64::NEG_INFINITY; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..wh {
                    for kx in 0..ww {
                        let iy = (oy * sh + ky) as isize - pad_h as isize;
                        let ix = (ox * sw + kx) as isize - pad_w as isize;
                        if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                            continue;
                        }
                        best = best.max(x[(iy as usize * w + ix as usize) * c + ch]);
                    }
                }
                out[(oy * wo + ox) * c + ch] = best;
            }
        }
    }
    out
}

fn pairwise_auc_oracle(labels: &[u8], scores: &[f64]) -> f64 {
    let mut pairs = 0.0;
    let mut won = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                won += 1.0;
            } else if scores[i] == scores[j] {
                won += 0.5;
            }
        }
    }
    won / pairs
}

#[test]
fn oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    // conv2d_same vs nested loops, 100 instances.
    for _ in 0..100 {
        let (h, w, cin, cout) = (
            rng.gen_range(2..8),
            rng.gen_range(2..8),
            rng.gen_range(1..3),
            rng.gen_range(1..4),
        );
        let (kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let (sh, sw) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let x = random_vec(h * w * cin, -1.0, 1.0, &mut rng);
        let wt = random_vec(kh * kw * cin * cout, -1.0, 1.0, &mut rng);
        let b = random_vec(cout, -0.5, 0.5, &mut rng);
        let mut g = Graph::new();
        let xn = g.constant(Tensor::new(vec![h, w, cin], x.clone()));
        let wn = g.constant(Tensor::new(vec![kh, kw, cin, cout], wt.clone()));
        let bn = g.constant(Tensor::from_vec(b.clone()));
        let spec = ConvSpec::new(cout, [kh, kw], [sh, sw]);
        let y = conv2d_same(&mut g, xn, &spec, wn, bn).unwrap();
        let want = conv_loop_oracle(&x, (h, w, cin), &wt, (kh, kw, cout), (sh, sw), &b);
        for (got, want) in g.value(y).data().iter().zip(&want) {
            assert!((got - want).abs() < 1e-10, "conv mismatch {got} vs {want}");
        }
    }

    // maxpool2d_same vs nested loops, 100 instances.
    for _ in 0..100 {
        let (h, w, c) = (rng.gen_range(2..9), rng.gen_range(2..9), rng.gen_range(1..3));
        let (wh, ww) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let (sh, sw) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let x = random_vec(h * w * c, -2.0, 2.0, &mut rng);
        let mut g = Graph::new();
        let xn = g.constant(Tensor::new(vec![h, w, c], x.clone()));
        let y = g
            .apply(MaxPool2dSame { window: [wh, ww], stride: [sh, sw] }, &[xn])
            .unwrap();
        let want = maxpool_loop_oracle(&x, (h, w, c), (wh, ww), (sh, sw));
        for (got, want) in g.value(y).data().iter().zip(&want) {
            assert!((got - want).abs() < 1e-10, "pool mismatch {got} vs {want}");
        }
    }

    // dense_affine vs nested loops, 100 instances.
    for _ in 0..100 {
        let (d_in, d_out) = (rng.gen_range(1..12), rng.gen_range(1..9));
        let x = random_vec(d_in, -2.0, 2.0, &mut rng);
        let w = random_vec(d_in * d_out, -1.0, 1.0, &mut rng);
        let b = random_vec(d_out, -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xn = g.constant(Tensor::from_vec(x.clone()));
        let wn = g.constant(Tensor::new(vec![d_in, d_out], w.clone()));
        let bn = g.constant(Tensor::from_vec(b.clone()));
        let y = dense_affine(&mut g, xn, wn, bn, Activation::None).unwrap();
        for j in 0..d_out {
            let mut acc = b[j];
            for i in 0..d_in {
                acc += x[i] * w[i * d_out + j];
            }
            assert!((g.value(y).data()[j] - acc).abs() < 1e-10);
        }
    }

    // Loss kernels vs scalar loops, 100 instances each.
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let a = random_vec(n, -2.0, 2.0, &mut rng);
        let b = random_vec(n, -2.0, 2.0, &mut rng);
        let mut g = Graph::new();
        let an = g.constant(Tensor::from_vec(a.clone()));
        let bn = g.constant(Tensor::from_vec(b.clone()));
        let ld = mse_loss(&mut g, an, bn).unwrap();
        let want = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n as f64;
        assert!((g.value(ld).scalar_value() - want).abs() < 1e-10);

        let p = random_vec(n, 0.02, 0.98, &mut rng);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let pn = g.constant(Tensor::from_vec(p.clone()));
        let yn = g.constant(Tensor::from_vec(y.clone()));
        let ls = bce_loss(&mut g, pn, yn).unwrap();
        let want = p
            .iter()
            .zip(&y)
            .map(|(&pi, &yi)| -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln()))
            .sum::<f64>()
            / n as f64;
        assert!((g.value(ls).scalar_value() - want).abs() < 1e-10);

        let c = rng.gen_range(2..10);
        let probs = random_vec(c, 0.02, 0.98, &mut rng);
        let class = rng.gen_range(0..c);
        let mut one_hot = vec![0.0; c];
        one_hot[class] = 1.0;
        let pn = g.constant(Tensor::from_vec(probs.clone()));
        let hn = g.constant(Tensor::from_vec(one_hot));
        let lp = ce_loss(&mut g, pn, hn).unwrap();
        assert!((g.value(lp).scalar_value() + probs[class].ln()).abs() < 1e-10);
    }

    // Transposed convolution: adjoint identity, 100 instances.
    for _ in 0..100 {
        let (big_h, big_w): (usize, usize) = (rng.gen_range(2..10), rng.gen_range(2..10));
        let (cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let (kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let (sh, sw) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let h = big_h.div_ceil(sh);
        let w = big_w.div_ceil(sw);
        let x = random_vec(big_h * big_w * cin, -1.0, 1.0, &mut rng);
        let wt = random_vec(kh * kw * cin * cout, -1.0, 1.0, &mut rng);
        let y = random_vec(h * w * cout, -1.0, 1.0, &mut rng);

        let mut g = Graph::new();
        let xn = g.constant(Tensor::new(vec![big_h, big_w, cin], x.clone()));
        let wn = g.constant(Tensor::new(vec![kh, kw, cin, cout], wt.clone()));
        let cx = g.apply(Conv2dSame { stride: [sh, sw] }, &[xn, wn]).unwrap();
        let lhs: f64 = g.value(cx).data().iter().zip(&y).map(|(a, b)| a * b).sum();

        let mut g2 = Graph::new();
        let yn = g2.constant(Tensor::new(vec![h, w, cout], y));
        let wn2 = g2.constant(Tensor::new(vec![kh, kw, cin, cout], wt));
        let ty = g2
            .apply(ConvTranspose2d { stride: [sh, sw], target: [big_h, big_w] }, &[yn, wn2])
            .unwrap();
        let rhs: f64 = g2.value(ty).data().iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "adjoint violated: {lhs} vs {rhs}");
    }

    // AUC vs the O(n^2) pairwise statistic, 100 instances with ties.
    for _ in 0..100 {
        let n = rng.gen_range(6..60);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        if labels.iter().all(|&y| y == 1) || labels.iter().all(|&y| y == 0) {
            continue;
        }
        // Quantized scores force tie groups.
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0.0..1.0f64) * 8.0).round() / 8.0)
            .collect();
        let (_, auc) = roc_auc(&labels, &scores).unwrap();
        let oracle = pairwise_auc_oracle(&labels, &scores);
        assert!(
            (auc - oracle).abs() < 1e-9,
            "AUC mismatch: trapezoid {auc} vs pairwise {oracle}"
        );
    }

    println!("[PASS] oracle equivalence: conv/pool/dense/L_D/L_s/L_p within 1e-10, adjoint within 1e-9, AUC within 1e-9, 100 instances each");
}

// ── Criterion 3: shape contract ─────────────────────────────────────────

#[test]
fn shape_contract() {
    let config = ModelConfig::new(13);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A0);
    let params = ModelParameters::init(config.clone(), &mut rng);
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let window = g.constant(Tensor::new(
        vec![250, 22],
        random_vec(250 * 22, -1.0, 1.0, &mut rng),
    ));

    let latents = encode(&mut g, &bound, window).unwrap();
    assert_eq!(g.shape(latents.seizure), &[63, 11, 4]);
    assert_eq!(g.shape(latents.patient), &[63, 11, 4]);
    let decomposed = decode(&mut g, &bound, &latents).unwrap();
    assert_eq!(g.shape(decomposed.seizure), &[250, 22]);
    assert_eq!(g.shape(decomposed.patient), &[250, 22]);

    // Seizure trunk chain, read back from the realized graph.
    let mut g2 = Graph::new();
    let bound2 = params.bind_seizure_path(&mut g2);
    let window2 = g2.constant(g.value(window).clone());
    let latent = ictal_core::model::encode_seizure(&mut g2, &bound2, window2).unwrap();
    let att = attention_weights(&mut g2, &bound2, window2).unwrap();
    let (logit, prob) =
        seizure_predict(&mut g2, &bound2, latent, att, Mode::Eval, 0.8, &mut rng).unwrap();
    let pools: Vec<Vec<usize>> = g2
        .node_ids()
        .filter(|&id| g2.primitive_name(id) == Some("maxpool2d_same"))
        .map(|id| g2.shape(id).to_vec())
        .collect();
    assert_eq!(
        pools,
        vec![
            vec![63, 11, 4],
            vec![32, 6, 16],
            vec![16, 3, 32],
            vec![8, 2, 64],
            vec![4, 2, 128],
        ],
        "trunk pooling chain"
    );
    let reshapes: Vec<Vec<usize>> = g2
        .node_ids()
        .filter(|&id| g2.primitive_name(id) == Some("reshape"))
        .map(|id| g2.shape(id).to_vec())
        .collect();
    assert!(reshapes.contains(&vec![1024]), "flatten to 1024: {reshapes:?}");
    let sigmoids: Vec<Vec<usize>> = g2
        .node_ids()
        .filter(|&id| g2.primitive_name(id) == Some("sigmoid"))
        .map(|id| g2.shape(id).to_vec())
        .collect();
    assert!(sigmoids.contains(&vec![300]), "dense 300: {sigmoids:?}");
    assert!(sigmoids.contains(&vec![22]), "dense 22: {sigmoids:?}");
    assert_eq!(g2.shape(logit), &[1], "scalar prediction");
    assert_eq!(g2.shape(prob), &[1]);
    assert_eq!(config.flatten_len(), 1024);
    assert_eq!(
        config.trunk_chain(),
        vec![[32, 6, 16], [16, 3, 32], [8, 2, 64], [4, 2, 128]]
    );

    println!("[PASS] shape contract: [250,22] -> [63,11,4] -> S,P [250,22]; trunk [63,11,4]->[32,6,16]->[16,3,32]->[8,2,64]->[4,2,128]->1024->300->22->scalar");
}

// ── Criterion 4: overfit experiment ─────────────────────────────────────

fn overfit_fixture() -> Vec<EegWindow> {
    let spec = SynthSpec {
        subjects: 3,
        seconds_per_subject: 8.32, // 2080 steps -> exactly 64 windows of 64 steps
        block_seconds: 1.024,      // block edges land on the window grid
        noise_level: 0.1,
        seed: 33,
        ..SynthSpec::default()
    };
    let mut windows = Vec::new();
    for rec in generate_synthetic(&spec) {
        let w = window_signal(&rec, 64, 0.5).unwrap();
        assert_eq!(w.len(), 64, "fixture is 64 windows per subject");
        windows.extend(w);
    }
    windows
}

#[test]
fn overfit_experiment() {
    let started = Instant::now();
    let windows = overfit_fixture();
    assert_eq!(windows.len(), 192);
    let mut config = ModelConfig::new(3);
    config.window_len = 64;
    let classes: BTreeMap<u32, usize> = [(0u32, 0usize), (1, 1), (2, 2)].into_iter().collect();
    let train = TrainConfig {
        epochs: 200,
        learning_rate: 1e-3,
        batch_size: 64,
        seed: 77,
        // Fail loudly if the seizure step ever moves a patient-branch bit.
        verify_branch_separation: true,
        ..TrainConfig::default()
    };
    let (params, log) = fit(&windows, &classes, config, &train).expect("training runs");

    let first = log.epochs.first().unwrap().total;
    let last_record = log.epochs.last().unwrap();
    let reduction = 1.0 - last_record.total / first;
    assert!(
        reduction >= 0.90,
        "total loss fell only {:.1}% ({} -> {})",
        reduction * 100.0,
        first,
        last_record.total
    );
    assert!(
        last_record.train_accuracy >= 0.95,
        "final train accuracy {:.3} < 0.95",
        last_record.train_accuracy
    );
    // The same windows, scored deterministically in eval mode.
    let correct = windows
        .iter()
        .filter(|w| {
            let (p, _) = predict_window(&params, &w.values).unwrap();
            (p >= 0.5) == (w.label == 1)
        })
        .count();
    let eval_acc = correct as f64 / windows.len() as f64;
    assert!(eval_acc >= 0.95, "eval-mode train accuracy {eval_acc:.3} < 0.95");

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 600,
        "overfit run took {elapsed:?}, budget is 10 min"
    );
    println!(
        "[PASS] overfit experiment: loss -{:.1}% (>=90%), train acc {:.3}, eval acc {:.3} (>=0.95), branch separation bit-exact every step, {:.0?}",
        reduction * 100.0,
        last_record.train_accuracy,
        eval_acc,
        elapsed
    );
}

// ── Criterion 5: generalization smoke test ──────────────────────────────

#[test]
fn generalization_smoke_test() {
    let started = Instant::now();
    let spec = SynthSpec {
        subjects: 6,
        seconds_per_subject: 30.0,
        block_seconds: 1.024,
        noise_level: 0.1,
        seed: 202,
        ..SynthSpec::default()
    };
    let recordings = generate_synthetic(&spec);
    let subjects: Vec<u32> = recordings.iter().map(|r| r.subject).collect();
    let plan = build_loo_splits(&subjects).unwrap();

    let mut by_subject: BTreeMap<u32, Vec<EegWindow>> = BTreeMap::new();
    for rec in &recordings {
        by_subject.insert(rec.subject, window_signal(rec, 64, 0.5).unwrap());
    }

    let accuracies = std::sync::Mutex::new(Vec::<f64>::new());
    let queue = std::sync::Mutex::new(plan.folds.clone());
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| loop {
                let fold = match queue.lock().unwrap().pop() {
                    Some(f) => f,
                    None => return,
                };
                let mut train_windows = Vec::new();
                for s in &fold.train_subjects {
                    train_windows.extend(by_subject[s].iter().cloned());
                }
                verify_no_leakage(&fold, &train_windows).unwrap();
                let mut config = ModelConfig::new(fold.num_classes());
                config.window_len = 64;
                let train = TrainConfig {
                    epochs: 10,
                    learning_rate: 1e-3,
                    batch_size: 64,
                    seed: 99,
                    ..TrainConfig::default()
                };
                let (params, _) = fit(&train_windows, &fold.class_map(), config, &train).unwrap();
                let test = &by_subject[&fold.test_subject];
                let correct = test
                    .iter()
                    .filter(|w| {
                        let (p, _) = predict_window(&params, &w.values).unwrap();
                        (p >= 0.5) == (w.label == 1)
                    })
                    .count();
                accuracies
                    .lock()
                    .unwrap()
                    .push(correct as f64 / test.len() as f64);
            });
        }
    });

    let accuracies = accuracies.into_inner().unwrap();
    assert_eq!(accuracies.len(), 6);
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    assert!(
        mean >= 0.65,
        "mean LOO accuracy {mean:.3} does not beat the 0.5 baseline by 0.15"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 1800,
        "generalization run took {elapsed:?}, budget is 30 min"
    );
    println!(
        "[PASS] generalization smoke test: mean LOO accuracy {mean:.3} >= 0.65 over 6 folds, {elapsed:.0?}"
    );
}

// ── Criterion 6: dataset arithmetic + leakage guard ─────────────────────

#[test]
fn dataset_arithmetic() {
    let spec = SynthSpec {
        subjects: 14,
        seconds_per_subject: 500.0,
        seed: 7,
        ..SynthSpec::default()
    };
    let recordings = generate_synthetic(&spec);
    let mut total = 0usize;
    for rec in &recordings {
        total += window_signal(rec, 250, 0.5).unwrap().len();
    }
    assert_eq!(total, 13_986, "14 subjects x 500 s must give 13,986 windows");

    // Deliberately corrupt a split: the guard must trip.
    let subjects: Vec<u32> = (0..14).collect();
    let plan = build_loo_splits(&subjects).unwrap();
    let fold = &plan.folds[0];
    let mut windows = window_signal(&recordings[1], 250, 0.5).unwrap();
    // Smuggle in windows from the held-out subject.
    windows.extend(window_signal(&recordings[0], 250, 0.5).unwrap());
    match verify_no_leakage(fold, &windows) {
        Err(DataError::Leakage {
            test_subject: 0,
            offending_subject: 0,
        }) => {}
        other => panic!("leakage guard did not trip: {other:?}"),
    }
    println!("[PASS] dataset arithmetic: 14 x 500 s -> 13,986 windows; leakage guard trips on a corrupted split");
}

// ── Criterion 7: determinism of the loo command ─────────────────────────

fn run_ictal(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_ictal"))
        .args(args)
        .env("ICTAL_WORKERS", "2")
        .status()
        .expect("binary runs");
    assert!(status.success(), "ictal {args:?} failed");
}

fn collect_files(root: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, out);
        } else {
            out.push(path);
        }
    }
}

#[test]
fn determinism_of_loo_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "[train]\nepochs = 3\nlearning_rate = 1e-3\nseed = 11\n\n[model]\nwindow_len = 64\ntrunk_filters = [4, 8]\nfc_hidden = 16\n",
    )
    .unwrap();
    run_ictal(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--subjects",
        "3",
        "--seconds",
        "10",
        "--seed",
        "5",
        "--block-seconds",
        "1.024",
        "--window-len",
        "64",
    ]);
    let manifest = data.join("manifest.txt");
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    for out in [&run1, &run2] {
        run_ictal(&[
            "loo",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--config",
            config_path.to_str().unwrap(),
        ]);
    }

    let mut files = Vec::new();
    collect_files(&run1, &mut files);
    assert!(files.iter().any(|p| p.ends_with("aggregate.csv")));
    let mut compared = 0usize;
    for path in files {
        let rel = path.strip_prefix(&run1).unwrap();
        if rel.file_name().map(|n| n == "timings.csv").unwrap_or(false) {
            continue; // wall-clock lives in its own file, outside the contract
        }
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(run2.join(rel)).unwrap();
        assert_eq!(a, b, "artifact {} differs between runs", rel.display());
        compared += 1;
    }
    assert!(compared >= 10, "only {compared} artifacts compared");
    println!(
        "[PASS] determinism: two identical loo runs produced {compared} byte-identical artifacts (trainlogs, metrics, checkpoints, topographies, aggregate)"
    );
}

// ── Criterion 8: attention sanity ───────────────────────────────────────

#[test]
fn attention_sanity() {
    // Seizure energy on channels 0..13; channels 13..22 untouched.
    let spec = SynthSpec {
        subjects: 3,
        seconds_per_subject: 60.0,
        block_seconds: 1.024,
        noise_level: 0.1,
        seed: 101,
        ..SynthSpec::default()
    };
    assert_eq!(spec.seizure_channels, (0..13).collect::<Vec<_>>());
    let mut windows = Vec::new();
    for rec in generate_synthetic(&spec) {
        windows.extend(window_signal(&rec, 64, 0.5).unwrap());
    }
    let mut config = ModelConfig::new(3);
    config.window_len = 64;
    let classes: BTreeMap<u32, usize> = [(0u32, 0usize), (1, 1), (2, 2)].into_iter().collect();
    let train = TrainConfig {
        epochs: 15,
        learning_rate: 1e-3,
        batch_size: 64,
        seed: 55,
        ..TrainConfig::default()
    };
    let (params, _) = fit(&windows, &classes, config, &train).expect("training runs");

    let mut mean = vec![0.0f64; 22];
    for w in &windows {
        let (_, att) = predict_window(&params, &w.values).unwrap();
        for (m, a) in mean.iter_mut().zip(&att) {
            *m += a;
        }
    }
    for m in &mut mean {
        *m /= windows.len() as f64;
    }
    let injected = mean[..13].iter().sum::<f64>() / 13.0;
    let untouched = mean[13..].iter().sum::<f64>() / 9.0;
    assert!(
        injected > untouched,
        "mean attention on injected channels ({injected:.4}) does not exceed untouched ({untouched:.4})"
    );
    println!(
        "[PASS] attention sanity: mean a_tt on the 13 injected channels {injected:.4} > untouched {untouched:.4}"
    );
}

// ── Criterion 9: clinical-protocol support (not an accuracy gate) ───────

#[test]
fn clinical_protocol_runs_on_user_format_data() {
    // A user-supplied dataset in the documented CSV format drives the same
    // end-to-end loo protocol. Matching the published average accuracy is
    // explicitly NOT gated here: it depends on the restricted corpus and
    // datacenter-scale training budgets.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("csvdata");
    run_ictal(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--subjects",
        "3",
        "--seconds",
        "10",
        "--seed",
        "21",
        "--block-seconds",
        "1.024",
        "--csv",
        "--window-len",
        "64",
    ]);
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "[train]\nepochs = 2\nlearning_rate = 1e-3\nseed = 4\ncheckpoint_every = 1\n\n[model]\nwindow_len = 64\ntrunk_filters = [4, 8]\nfc_hidden = 16\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ictal(&[
        "loo",
        "--manifest",
        data.join("manifest.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
    ]);
    for fold in 0..3 {
        let fold_dir = out.join(format!("fold_{fold}"));
        for artifact in [
            "trainlog.jsonl",
            "checkpoint.ckpt",
            "checkpoint_epoch_1.ckpt", // periodic checkpoint cadence
            "metrics.txt",
            "topography.csv",
            "topography.svg",
        ] {
            assert!(
                fold_dir.join(artifact).exists(),
                "missing {artifact} in {}",
                fold_dir.display()
            );
        }
    }
    assert!(out.join("aggregate.csv").exists());
    println!("[PASS] clinical protocol: loo runs end-to-end on user-format CSV data; published accuracy figures are documented as environment-dependent, not gated");
}
