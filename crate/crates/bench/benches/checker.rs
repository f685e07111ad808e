use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use obs_bench::{synthetic, CORPUS, TVM};
use obs_core::interp::{Interpreter, Value};
use obs_core::{analyze, check_source};

fn corpus(c: &mut Criterion) {
    let mut g = c.benchmark_group("check_corpus");
    for (name, src) in CORPUS {
        g.bench_with_input(BenchmarkId::from_parameter(name), src, |b, src| b.iter(|| check_source(black_box(src))));
    }
    g.finish();
}

fn scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("check_synthetic");
    for n in [10, 50, 200] {
        let src = synthetic(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &src, |b, src| b.iter(|| check_source(black_box(src))));
    }
    g.finish();
}

fn interpret(c: &mut Criterion) {
    let a = analyze(TVM);
    let table = a.table.clone().expect("tvm parses");
    let interp = Interpreter::new(&a.program, &table);
    c.bench_function("tvm_restock_buy", |b| {
        b.iter(|| {
            let mut w = interp.deploy(&[]).expect("deploys");
            interp.create(&mut w, "Candy", &[]);
            interp.create(&mut w, "Coin", &[]);
            interp.invoke(&mut w, 1, "restock", &[Value::handle(3)]);
            black_box(interp.invoke(&mut w, 1, "buy", &[Value::handle(4)]))
        })
    });
}

criterion_group!(benches, corpus, scaling, interpret);
criterion_main!(benches);
