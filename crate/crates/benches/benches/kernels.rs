use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use coral::bench::{run_shift, suite_protocol, suite_shift};
use coral::data::{generate_shift, ShiftSpec, TargetMap};
use coral::linalg::sym_eig;
use coral::{coral_regularized, estimate_covariance, train_linear_svm, FeatureMatrix, LabeledDataset};

fn pair(dim: usize, per_class: usize) -> (LabeledDataset, LabeledDataset) {
    let spec = ShiftSpec {
        dim,
        classes: 4,
        per_class,
        separation: 1.5,
        target_map: TargetMap::RotationColoring { angle: 0.1, stretch: 5.0 },
        noise: 0.1,
        seed: 1,
    };
    let shift = generate_shift(&spec).unwrap();
    (shift.source, shift.target)
}

fn features(data: &LabeledDataset) -> &FeatureMatrix {
    data.features()
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for dim in [64, 256, 512] {
        let (source, _) = pair(dim, dim);
        let cov = estimate_covariance(features(&source), 1.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &cov, |b, cov| {
            b.iter(|| sym_eig(black_box(cov.matrix())).unwrap())
        });
    }
    group.finish();
}

fn alignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("coral_regularized");
    group.sample_size(20);
    for (dim, per_class) in [(64, 50), (256, 50), (256, 200)] {
        let (s, t) = pair(dim, per_class);
        group.bench_function(BenchmarkId::new(format!("d{dim}"), 4 * per_class), |b| {
            b.iter(|| coral_regularized(black_box(features(&s)), black_box(features(&t)), 1.0).unwrap())
        });
    }
    group.finish();
}

fn svm(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_linear_svm");
    for per_class in [50, 250] {
        let (s, _) = pair(10, per_class);
        group.bench_with_input(BenchmarkId::from_parameter(4 * per_class), &s, |b, s| {
            b.iter(|| train_linear_svm(black_box(s), 1.0).unwrap())
        });
    }
    group.finish();
}

fn suite_trial(c: &mut Criterion) {
    let shift = generate_shift(&suite_shift(0)).unwrap();
    let protocol = suite_protocol();
    let mut group = c.benchmark_group("suite_trial");
    group.sample_size(10);
    group.bench_function("CORAL_REG(1)", |b| {
        b.iter(|| {
            run_shift("s->t", &shift.source, &shift.target, coral::bench::MethodId::CoralReg(1.0), &protocol)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, eigen, alignment, svm, suite_trial);
criterion_main!(benches);
