use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sess_bench::{dense_stack, ramp_map, textured_image};
use sess_core::backend::QuadrantMock;
use sess_core::imgproc::{bilinear_resize, gaussian_blur, resize_shorter_side};
use sess_core::pipeline::{fuse, run_sess, SessConfig, SmoothingConfig};
use sess_core::saliency::{Occlusion, OcclusionConfig};

fn fusion(c: &mut Criterion) {
    let stack = dense_stack(400, 600, 16);
    c.bench_function("fuse_16x400x600", |b| b.iter(|| fuse(black_box(&stack), 0.0).unwrap()));
}

fn imgproc(c: &mut Criterion) {
    let map = ramp_map(400, 600);
    c.bench_function("blur_k11_400x600", |b| {
        b.iter(|| gaussian_blur(black_box(&map), 11, 5.0).unwrap())
    });
    c.bench_function("resize_224_to_600x400", |b| {
        let small = ramp_map(224, 224);
        b.iter(|| bilinear_resize(black_box(&small), 400, 600).unwrap())
    });
    let img = textured_image(400, 600, (20, 20, 40));
    c.bench_function("resize_shorter_side_928", |b| {
        b.iter(|| resize_shorter_side(black_box(&img), 928).unwrap())
    });
}

fn end_to_end(c: &mut Criterion) {
    let img = textured_image(400, 600, (20, 20, 40));
    let mock = QuadrantMock::new(224);
    let base = Occlusion::new(OcclusionConfig::default()).unwrap();
    let cfg = SessConfig {
        n_scales: 4,
        prefilter_ratio: 50.0,
        smoothing: SmoothingConfig {
            enabled: false,
            ..Default::default()
        },
        ..SessConfig::default()
    };
    let mut group = c.benchmark_group("run_sess");
    group.sample_size(10);
    group.bench_function("mock_occlusion_n4_r50", |b| {
        b.iter(|| run_sess(black_box(&img), &mock, &base, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fusion, imgproc, end_to_end);
criterion_main!(benches);
