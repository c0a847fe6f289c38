use criterion::{criterion_group, criterion_main, Criterion};
use std::fs;
use vsgame::case_model::parse_native_case;
use vsgame::game::GameSpec;
use vsgame::solver::{solve_cbse_with, Execution};
use vsgame::stability::{covert_limit, CovertOptions, StabilityModel};

fn bench_solve(c: &mut Criterion) {
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/case9.json"
    ))
    .expect("bundled case9");
    let case = parse_native_case(&text).unwrap();
    let model = StabilityModel::from_case(&case).unwrap();
    let k = model.n_loads();
    let qa: Vec<f64> = (0..k)
        .map(|i| covert_limit(&case, i, &CovertOptions::default()).unwrap())
        .collect();
    let spec = GameSpec::new(
        &model,
        (0..k).collect(),
        0.1,
        0.2,
        3,
        3,
        qa,
        vec![2.0; k],
    )
    .unwrap();

    let mut group = c.benchmark_group("solve_cbse_9bus_L3");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| solve_cbse_with(&spec, Execution::Sequential).unwrap())
    });
    group.bench_function("parallel", |b| {
        b.iter(|| solve_cbse_with(&spec, Execution::Parallel).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_solve);
criterion_main!(benches);
