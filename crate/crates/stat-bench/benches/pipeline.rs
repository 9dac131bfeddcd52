use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stat_core::data::{load_dataset, Registry};
use stat_core::metrics::dtw;
use stat_core::model::{fit_codebooks, Ablation, Featurizer, StatModel};
use stat_core::nn::Graph;
use stat_core::symbolic::compress;
use stat_core::tensor::{Tape, Tensor};

fn rnd(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rnd(&mut rng, &[64, 64]);
    let b = rnd(&mut rng, &[64, 64]);
    c.bench_function("matmul 64x64", |bch| {
        bch.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(black_box(a.clone()));
            let y = tape.leaf(black_box(b.clone()));
            let o = tape.matmul(x, y).unwrap();
            black_box(tape.value(o).data()[0])
        })
    });
}

fn bench_softmax(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rnd(&mut rng, &[32, 96, 3]);
    c.bench_function("softmax 32x96x3", |bch| {
        bch.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(black_box(a.clone()));
            let o = tape.softmax_last(x);
            black_box(tape.value(o).data()[0])
        })
    });
}

fn bench_compress(c: &mut Criterion) {
    let x: Vec<f64> = (0..96)
        .map(|t| (t as f64 * 0.26).sin() + 0.05 * (t as f64 * 1.7).cos())
        .collect();
    c.bench_function("compress 96 points", |bch| {
        bch.iter(|| black_box(compress(black_box(&x), 0.1).unwrap().len()))
    });
}

fn bench_dtw(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = (0..96).map(|_| rng.random_range(-1.0..1.0)).collect();
    let yh: Vec<f64> = (0..96).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("dtw 96 vs 96", |bch| {
        bch.iter(|| black_box(dtw(black_box(&y), black_box(&yh)).unwrap().cost))
    });
}

fn bench_forward(c: &mut Criterion) {
    let reg = Registry::builtin();
    let ds = load_dataset(reg.get("synthetic").unwrap(), Path::new("data"), 96, 96).unwrap();
    let codebooks = fit_codebooks(&ds.train, &[0.01, 0.1, 0.5], 64).unwrap();
    let provider = stat_core::embed::Provider::seeded(&[ds.description.clone()], 32, 7);
    let cfg = stat_core::model::ModelConfig {
        lookback: 96,
        horizon: 96,
        channels: ds.train.channels(),
        patch_len: 16,
        stride: 8,
        d_model: 32,
        heads: 4,
        top_k: 4,
        bank_capacity: 32,
        d_emb: 32,
        eta: 2.0,
        adf: Default::default(),
    };
    let model = StatModel::new(cfg, Ablation::default(), 7).unwrap();
    let featurizer = Featurizer {
        provider: &provider,
        codebooks: &codebooks,
        description: ds.description.clone(),
        horizon: 96,
    };
    let (x, _) = ds.train.gather(&[0, 1, 2, 3, 4, 5, 6, 7]);
    let feats = featurizer.features(&x, true, true).unwrap();
    c.bench_function("model forward batch 8", |bch| {
        bch.iter(|| {
            let mut g = Graph::new();
            let out = model.forward(&mut g, black_box(&x), &feats).unwrap();
            black_box(g.tape.value(out.prediction).data()[0])
        })
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_softmax,
    bench_compress,
    bench_dtw,
    bench_forward
);
criterion_main!(benches);
