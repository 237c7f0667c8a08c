use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oadm::adm::{BatchAdm, IterateState};
use oadm::harness::ProblemKind;
use oadm::oadm::{OnlineAdm, ScheduleSpec};
use oadm::DivergenceSpec;
use oadm_bench::{instance, losses};

fn online_rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("oadm_round");
    for problem in [ProblemKind::Lasso, ProblemKind::Tv] {
        for n in [200, 2000] {
            let inst = instance(problem, n);
            let stream = losses(&inst);
            let schedule = ScheduleSpec::Constant { rho: 1.0, eta: 1.0 };
            group.bench_with_input(BenchmarkId::new(problem.to_string(), n), &n, |b, _| {
                let mut solver = OnlineAdm::new(&inst.online, schedule.clone(), DivergenceSpec::quadratic()).unwrap();
                let mut state = solver.initial_state();
                let mut t = 0;
                b.iter(|| {
                    state = solver.step(&state, &stream[t % stream.len()]).unwrap().0;
                    t += 1;
                });
            });
        }
    }
    group.finish();
}

fn batch_iterations(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_iteration");
    for n in [50, 200] {
        let inst = instance(ProblemKind::Lasso, n);
        group.bench_with_input(BenchmarkId::new("lasso", n), &n, |b, _| {
            let mut solver = BatchAdm::new(&inst.aggregate, 1.0).unwrap();
            let mut state = IterateState::zeros(&inst.aggregate.constraint);
            b.iter(|| state = solver.step(&state).unwrap().0);
        });
    }
    group.finish();
}

criterion_group!(benches, online_rounds, batch_iterations);
criterion_main!(benches);
