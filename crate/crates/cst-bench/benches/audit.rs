use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cst_bench::{audit_config, loan_fixture};
use cst_core::detection::{run_cf, run_cst, run_st};
use cst_core::metric::{DistanceContext, DistanceSpec};
use cst_core::neighborhood::{get_top_k, partition_search_spaces, ProtectedSpec};
use cst_core::scenarios::{generate_loan, loan_model};
use cst_core::scm::{generate_counterfactual_dataset, AbductionMode, Intervention};

fn bench_generation(c: &mut Criterion) {
    c.bench_function("generate_loan/n=5000", |b| {
        b.iter(|| generate_loan(black_box(5000), black_box(13)).unwrap())
    });

    let fixture = loan_fixture(5000, 13);
    c.bench_function("counterfactual/oracle/n=5000", |b| {
        b.iter(|| {
            generate_counterfactual_dataset(
                &fixture.loan.scm,
                &fixture.loan.dataset,
                &Intervention::single("A", 0.0),
                &loan_model(),
                AbductionMode::Oracle,
                Some(&fixture.loan.latents),
            )
            .unwrap()
        })
    });
}

fn bench_knn(c: &mut Criterion) {
    let fixture = loan_fixture(5000, 13);
    let ctx =
        DistanceContext::from_dataset(&fixture.loan.dataset, &fixture.schema, DistanceSpec::default())
            .unwrap();
    let matrix = ctx.extract(&fixture.loan.dataset).unwrap();
    let spaces =
        partition_search_spaces(&fixture.loan.dataset, &ProtectedSpec::new([("A", 1.0)])).unwrap();
    let center = matrix.row(spaces.control[0]).to_vec();
    for k in [15usize, 100] {
        c.bench_with_input(BenchmarkId::new("get_top_k/n=5000", k), &k, |b, &k| {
            b.iter(|| {
                get_top_k(
                    black_box(&center),
                    &spaces.test,
                    k,
                    &ctx,
                    &matrix,
                    None,
                    None,
                )
                .unwrap()
            })
        });
    }
}

fn bench_audits(c: &mut Criterion) {
    let fixture = loan_fixture(5000, 13);
    let cfg = audit_config(50);
    c.bench_function("run_cst/n=5000/k=50", |b| {
        b.iter(|| {
            run_cst(
                &fixture.loan.dataset,
                &fixture.counterfactual,
                &fixture.schema,
                &cfg,
            )
            .unwrap()
        })
    });
    c.bench_function("run_st/n=5000/k=50", |b| {
        b.iter(|| run_st(&fixture.loan.dataset, &fixture.schema, &cfg).unwrap())
    });
    c.bench_function("run_cf/n=5000", |b| {
        b.iter(|| {
            run_cf(
                &fixture.loan.dataset,
                &fixture.counterfactual,
                &fixture.schema,
            )
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_generation, bench_knn, bench_audits
}
criterion_main!(benches);
