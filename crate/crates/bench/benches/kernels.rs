use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use saeft_core::finetune::{batch_objective, TinyEncoder};
use saeft_core::metrics::linear_cka;
use saeft_core::ot::{exact_w1, sinkhorn, CostMatrix, DiscreteMeasure};
use saeft_core::regularize::Regularizer;
use saeft_core::repr::{synth_superposition, SynthConfig};
use saeft_core::sae::{init_sae, train_sae, SaeTrainConfig};
use saeft_core::{LinearHead, RegKind, RegularizerSpec};

criterion_group!(benches, sae_encode, transport, cka, training);
criterion_main!(benches);

fn data(d: usize, n: usize) -> saeft_core::RepresentationSet {
    synth_superposition(&SynthConfig {
        d,
        p_true: 2 * d,
        n_samples: n,
        n_classes: 10,
        ..SynthConfig::default()
    })
    .unwrap()
    .set
}

fn sae_encode(c: &mut Criterion) {
    let mut group = c.benchmark_group("sae_encode");
    for d in [32, 128] {
        let sae = init_sae(d, 4 * d, 8, 0).unwrap();
        let set = data(d, 64);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| set.rows().map(|r| sae.encode(black_box(r)).unwrap().len()).sum::<usize>())
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let weights = |n: usize, shift: usize| {
        let w: Vec<f64> = (0..n).map(|i| 1.0 + ((i + shift) % 5) as f64).collect();
        let total: f64 = w.iter().sum();
        DiscreteMeasure::from_weights(w.into_iter().map(|v| v / total).collect()).unwrap()
    };
    for n in [8, 32] {
        let (mu, nu) = (weights(n, 0), weights(n, 2));
        let cost = CostMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0).unwrap();
        c.bench_function(&format!("exact_w1/{n}"), |b| {
            b.iter(|| exact_w1(&mu, &nu, black_box(&cost)).unwrap().value)
        });
        c.bench_function(&format!("sinkhorn_eps0.01/{n}"), |b| {
            b.iter(|| sinkhorn(&mu, &nu, black_box(&cost), 1e-2, 10_000).unwrap().value)
        });
    }
}

fn cka(c: &mut Criterion) {
    let x = data(64, 1024);
    let y = data(64, 1024);
    c.bench_function("linear_cka/1024x64", |b| b.iter(|| linear_cka(black_box(&x), &y).unwrap()));
}

fn training(c: &mut Criterion) {
    let set = data(32, 512);
    let cfg = SaeTrainConfig {
        epochs: 1,
        batch_size: 64,
        ..SaeTrainConfig::default()
    };
    let sae = init_sae(32, 128, 4, 0).unwrap();
    c.bench_function("train_sae/epoch_512x32", |b| {
        b.iter(|| train_sae(&set, &cfg, sae.clone()).unwrap())
    });

    let enc = TinyEncoder::identity_mlp(32).unwrap();
    let head = LinearHead::new(10, 32, vec![0.1; 320], 10.0).unwrap();
    let labels = set.labels().unwrap()[..32].to_vec();
    let inputs: Vec<&[f64]> = set.rows().take(32).collect();
    for kind in [RegKind::L2, RegKind::SaeAdd, RegKind::SaeWass] {
        let reg = Regularizer::new(RegularizerSpec::new(kind, 1.0, 1.0, 1.0), Some(&sae), None).unwrap();
        c.bench_function(&format!("batch_objective/{kind}"), |b| {
            b.iter(|| batch_objective(&enc, &head, &reg, &inputs, &inputs, &labels).map(|o| o.loss))
        });
    }
}
