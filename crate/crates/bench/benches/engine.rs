use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use wrangle_bench::{pipeline, samples, store};
use wrangle_core::demo::column_letter;
use wrangle_core::interp::stats::welch_t_test;
use wrangle_core::table::{emit_csv, ingest_csv};
use wrangle_core::{check_program, explain_program, run_program, CellValue, DemoEvent, Table, TableDiff};

fn interpreter(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    for rows in [100, 1_000, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(rows), &rows, |b, &rows| {
            let program = pipeline();
            b.iter_batched(|| store(rows), |mut s| run_program(&program, &mut s).unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn static_passes(c: &mut Criterion) {
    let program = pipeline();
    let s = store(10);
    c.bench_function("check_pipeline", |b| b.iter(|| check_program(black_box(&program), &s)));
    c.bench_function("explain_pipeline", |b| b.iter(|| explain_program(black_box(&program))));
}

fn csv_round_trip(c: &mut Criterion) {
    let bytes = emit_csv(&wrangle_bench::people(10_000, 3));
    c.bench_function("ingest_10k_rows", |b| b.iter(|| ingest_csv(black_box(&bytes), "people.csv").unwrap()));
}

fn demonstration(c: &mut Criterion) {
    let rows = 200;
    let table = Table::new("t.csv", vec!["a".into(), "b".into()], vec![vec![CellValue::Int(0); 2]; rows]).unwrap();
    c.bench_function("merge_column_edits_200", |b| {
        b.iter(|| {
            let mut diff = TableDiff::new();
            diff.register_table(&table);
            for r in 1..=rows {
                let e = DemoEvent::edit("t.csv", r, &column_letter(2), CellValue::Int(0), CellValue::Int(r as i64));
                diff.log_event(e).unwrap();
            }
            diff
        })
    });
}

fn statistics(c: &mut Criterion) {
    let mut group = c.benchmark_group("welch");
    for n in [10, 1_000, 100_000] {
        let (a, b) = samples(n, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| welch_t_test(&a, &b).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, interpreter, static_passes, csv_round_trip, demonstration, statistics);
criterion_main!(benches);
