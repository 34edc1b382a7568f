//! Plan construction and application, rayon pool against a single worker.
//!
//! With `--no-default-features` only the sequential path is built and the `seq` rows remain.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fsaconv::grid::{sample_density, DensityPreset, Domain, GridSpec};
use fsaconv::kernels::{Kernel, KernelDescriptor};
use fsaconv::plan::{build_plan, EpsChoice};
use fsaconv::solve::apply;

fn cases() -> Vec<(&'static str, KernelDescriptor, GridSpec)> {
    vec![
        (
            "coulomb3d-N32",
            KernelDescriptor::new(Kernel::Coulomb3d),
            GridSpec::new(Domain::new(8.0, vec![1.0, 1.0, 0.5]).unwrap(), 32).unwrap(),
        ),
        (
            "poisson2d-N256",
            KernelDescriptor::new(Kernel::Poisson2d),
            GridSpec::new(Domain::isotropic(2, 8.0).unwrap(), 256).unwrap(),
        ),
        (
            "yukawa3d-N32",
            KernelDescriptor::new(Kernel::Yukawa3d { lambda: 1.0 }),
            GridSpec::new(Domain::isotropic(3, 8.0).unwrap(), 32).unwrap(),
        ),
    ]
}

/// Run `f` under the requested execution mode.
fn run_in<R: Send>(mode: &str, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if mode == "seq" {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        return pool.install(f);
    }
    let _ = mode;
    f()
}

fn modes() -> &'static [&'static str] {
    if cfg!(feature = "parallel") {
        &["par", "seq"]
    } else {
        &["seq"]
    }
}

fn bench_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_plan");
    g.sample_size(10);
    for (name, desc, grid) in cases() {
        for &mode in modes() {
            g.bench_with_input(BenchmarkId::new(mode, name), &grid, |b, grid| {
                b.iter(|| {
                    run_in(mode, || {
                        build_plan(&desc, black_box(grid), EpsChoice::Fixed(1.0)).unwrap()
                    })
                })
            });
        }
    }
    g.finish();
}

fn bench_apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply");
    g.sample_size(20);
    for (name, desc, grid) in cases() {
        let plan = build_plan(&desc, &grid, EpsChoice::Fixed(1.0)).unwrap();
        let rho = sample_density(&DensityPreset::Gaussian { sigma: 1.0 }, &grid).unwrap();
        for &mode in modes() {
            g.bench_with_input(BenchmarkId::new(mode, name), &rho, |b, rho| {
                b.iter(|| run_in(mode, || apply(&plan, black_box(rho)).unwrap()))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_build, bench_apply);
criterion_main!(benches);
