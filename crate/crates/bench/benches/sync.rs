use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mobisync::avt::{Avt, Feedback};
use mobisync::protocols::least_squares_fit;
use mobisync::{simulate, ProtocolKind};
use mobisync_bench::{desk_run, regression_points};

fn avt_adjust(c: &mut Criterion) {
    c.bench_function("avt_adjust_1000", |b| {
        b.iter(|| {
            let mut avt = Avt::new(-1e-4, 1e-4, 0.0).unwrap();
            let target = black_box(3.7e-5);
            for _ in 0..1000 {
                let f = if avt.value() < target { Feedback::Up } else { Feedback::Down };
                avt.adjust(f);
            }
            avt.value()
        })
    });
}

fn regression(c: &mut Criterion) {
    let pts = regression_points();
    c.bench_function("least_squares_fit_8", |b| b.iter(|| least_squares_fit(black_box(&pts)).unwrap()));
}

fn desk(c: &mut Criterion) {
    let mut g = c.benchmark_group("desk_run_1000s");
    g.sample_size(10);
    for p in ProtocolKind::ALL {
        let cfg = desk_run(p, 1000.0);
        g.bench_function(p.name(), |b| b.iter(|| simulate(black_box(&cfg), None).unwrap().samples.len()));
    }
    g.finish();
}

criterion_group!(benches, avt_adjust, regression, desk);
criterion_main!(benches);
