//! Kernel and end-to-end benchmarks: encoder-scale convolution forward and
//! backward, a full three-branch window pass, and one Adam step.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ictal_core::dataset::EegWindow;
use ictal_core::graph::Graph;
use ictal_core::model::{forward_window, l2_penalty, ModelConfig, ModelParameters};
use ictal_core::nn::{Conv2dSame, Mode};
use ictal_core::optim::AdamState;
use ictal_core::tensor::Tensor;

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor::new(shape, (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn bench_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(vec![250, 22, 1], &mut rng);
    let w = random_tensor(vec![3, 3, 1, 4], &mut rng);

    c.bench_function("conv2d_same forward 250x22 s2 f4", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let wn = g.constant(w.clone());
            g.apply(Conv2dSame { stride: [2, 2] }, &[xn, wn]).unwrap()
        })
    });

    c.bench_function("conv2d_same forward+backward 250x22 s2 f4", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xn = g.parameter(x.clone());
            let wn = g.parameter(w.clone());
            let y = g.apply(Conv2dSame { stride: [2, 2] }, &[xn, wn]).unwrap();
            let loss = g.sum(y).unwrap();
            g.backward(loss).unwrap()
        })
    });
}

fn bench_full_window(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let config = ModelConfig::new(13);
    let params = ModelParameters::init(config.clone(), &mut rng);
    let window = EegWindow {
        values: random_tensor(vec![config.window_len, config.channels], &mut rng),
        label: 1,
        subject: 0,
    };

    c.bench_function("full window forward+backward 250x22", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let mut drop_rng = ChaCha8Rng::seed_from_u64(3);
            let fwd = forward_window(
                &mut g, &bound, &window, 0, Mode::Train, 0.8, 0.5, 0.5, &mut drop_rng,
            )
            .unwrap();
            let l2 = l2_penalty(&mut g, &bound, 1e-4).unwrap();
            let a = g.add(fwd.reconstruction_loss, fwd.seizure_loss).unwrap();
            let b2 = g.add(a, fwd.patient_loss).unwrap();
            let total = g.add(b2, l2).unwrap();
            g.backward(total).unwrap()
        })
    });
}

fn bench_adam(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = ModelConfig::new(13);
    let params = ModelParameters::init(config, &mut rng);
    let grads: Vec<(String, Tensor)> = params
        .named()
        .into_iter()
        .map(|(name, t)| {
            let g = random_tensor(t.shape().to_vec(), &mut rng);
            (name, g)
        })
        .collect();

    c.bench_function("adam step over all parameters", |b| {
        b.iter(|| {
            let mut p = params.clone();
            let mut opt = AdamState::new(1e-4);
            let mut named = p.named_mut();
            let mut entries: Vec<(&str, &mut Tensor, &Tensor)> = named
                .iter_mut()
                .zip(&grads)
                .map(|((name, t), (_, g))| (name.as_str(), &mut **t, g))
                .collect();
            opt.step(&mut entries).unwrap();
        })
    });
}

criterion_group!(benches, bench_conv, bench_full_window, bench_adam);
criterion_main!(benches);
