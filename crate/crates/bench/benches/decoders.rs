use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mimo3d::decoders::{ml_bruteforce, simplified_ml_decode, sphere_decode_se};
use mimo3d::harness::{draw_instance, Instance};
use mimo3d::stbc::generator_matrix;
use mimo3d::structured_qr::{gram_schmidt_qr, qr_r23};
use mimo3d::{DecodeOptions, NoiseConfig, QamConstellation};

fn instances(order: usize, snr_db: f64, n: u64) -> (QamConstellation, Vec<Instance>) {
    let c = QamConstellation::new(order).unwrap();
    let g = generator_matrix();
    let noise = NoiseConfig::new(snr_db).unwrap();
    let v = (0..n)
        .map(|t| draw_instance(&c, &g, &noise, 7, t).unwrap())
        .collect();
    (c, v)
}

fn qr(crit: &mut Criterion) {
    let (_, insts) = instances(4, 10.0, 64);
    crit.bench_function("gram_schmidt_qr", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % insts.len();
            black_box(gram_schmidt_qr(black_box(&insts[i].h_eq)).unwrap())
        })
    });
    let r23: Vec<_> = insts
        .iter()
        .map(|x| gram_schmidt_qr(&x.h_eq).unwrap().r23())
        .collect();
    crit.bench_function("qr_r23", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % r23.len();
            black_box(qr_r23(black_box(&r23[i])))
        })
    });
}

fn decoders(crit: &mut Criterion) {
    let opts = DecodeOptions::default();
    let mut group = crit.benchmark_group("decode_m4");
    for snr in [0.0, 10.0, 20.0] {
        let (c, insts) = instances(4, snr, 64);
        group.bench_with_input(BenchmarkId::new("sphere", snr), &insts, |b, insts| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % insts.len();
                black_box(sphere_decode_se(&insts[i].y, &insts[i].h_eq, &c, &opts).unwrap())
            })
        });
        group.bench_with_input(BenchmarkId::new("simplified", snr), &insts, |b, insts| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % insts.len();
                black_box(simplified_ml_decode(&insts[i].y, &insts[i].h_eq, &c, &opts).unwrap())
            })
        });
    }
    let (c, insts) = instances(4, 10.0, 4);
    group.sample_size(10);
    group.bench_function("bruteforce", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % insts.len();
            black_box(ml_bruteforce(&insts[i].y, &insts[i].h_eq, &c, &opts).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, qr, decoders);
criterion_main!(benches);
