//! Reference potentials checked against the solver's own refinement sequence.

use std::sync::Mutex;

use fsaconv::grid::{sample_density, Field};
use fsaconv::kernels::KernelDescriptor;
use fsaconv::plan::{build_plan, EpsChoice};
use fsaconv::solve::solve_for_kernel;
use fsaconv::tables::{rows, RowSpec, TableId};
use fsaconv::validate::{error_norm, reference_for};

const LEVELS: usize = 4;

/// The finest 3D grids need about 2 GB; one refinement sequence at a time.
static HEAVY: Mutex<()> = Mutex::new(());

fn solve(row: &RowSpec) -> Field {
    let grid = row.grid().unwrap();
    let rho = sample_density(&row.density, &grid).unwrap();
    let plan = build_plan(
        &KernelDescriptor::new(row.kernel),
        &grid,
        EpsChoice::Fixed(row.eps),
    )
    .unwrap();
    solve_for_kernel(&plan, &rho, row.dipoles.as_ref()).unwrap()
}

/// Values of `fine` at the points of a grid `2^level` times coarser.
fn coarsen(fine: &Field, level: u32) -> Vec<f64> {
    let step = 1usize << level;
    let n = fine.grid.n;
    let d = fine.grid.dim();
    (0..fine.grid.len())
        .filter(|&f| fine.grid.unravel(f)[..d].iter().all(|i| i % step == 0))
        .map(|f| fine.values[f])
        .take((n / step).pow(d as u32))
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn pick(table: TableId, kernel: &str, case: &str, gamma_last: f64) -> RowSpec {
    rows(table, 1.0)
        .unwrap()
        .into_iter()
        .find(|r| {
            r.kernel.name() == kernel && r.case == case && *r.gamma.last().unwrap() == gamma_last
        })
        .unwrap_or_else(|| panic!("no row {kernel} {case}"))
}

fn check(mut row: RowSpec, h0: f64) {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut sols = Vec::new();
    for level in 0..LEVELS {
        row.h = h0 / (1u32 << level) as f64;
        sols.push(solve(&row));
    }
    let finest = sols.last().unwrap();
    let errs: Vec<f64> = sols[..LEVELS - 1]
        .iter()
        .enumerate()
        .map(|(i, s)| rel(&s.values, &coarsen(finest, (LEVELS - 1 - i) as u32)))
        .collect();
    for w in errs.windows(2) {
        assert!(
            w[1] < w[0] || w[1] < 1e-13,
            "{}: not converging {errs:?}",
            row.label()
        );
    }
    let reference = reference_for(&row.kernel, &row.density, &row.gamma, row.dipoles.as_ref())
        .unwrap()
        .sample(&finest.grid)
        .unwrap();
    let e = error_norm(finest, &reference).unwrap();
    assert!(
        e < 1e-12,
        "{}: reference off by {e:.3e} ({errs:?})",
        row.label()
    );
}

#[test]
fn coarsen_picks_shared_points() {
    let mut row = pick(TableId::Table4, "poisson2d", "iso", 1.0);
    row.h = 0.5;
    let grid = row.grid().unwrap();
    let f = Field::from_fn(grid.clone(), |x| x[0] + 10.0 * x[1]);
    row.h = 1.0;
    let coarse = Field::from_fn(row.grid().unwrap(), |x| x[0] + 10.0 * x[1]);
    assert_eq!(coarsen(&f, 1), coarse.values);
}

#[test]
fn coulomb_isotropic() {
    check(pick(TableId::Table2Iso, "coulomb2d", "I", 1.0), 1.0);
    check(pick(TableId::Table2Iso, "coulomb3d", "I", 1.0), 2.0);
}

#[test]
fn coulomb_anisotropic() {
    check(pick(TableId::Table2Aniso, "coulomb2d", "I", 0.25), 1.0);
    check(pick(TableId::Table2Aniso, "coulomb3d", "I", 0.25), 2.0);
    check(pick(TableId::Table2Aniso, "coulomb3d", "II", 0.5), 1.0);
}

#[test]
fn poisson() {
    check(pick(TableId::Table4, "poisson2d", "iso", 1.0), 2.0);
    check(pick(TableId::Table4, "poisson2d", "aniso", 0.25), 1.0);
}

#[test]
fn biharmonic_yukawa_dipolar() {
    for k in [
        "biharmonic2d",
        "biharmonic3d",
        "yukawa2d",
        "yukawa3d",
        "ddiq2d",
        "ddi3d",
    ] {
        check(pick(TableId::Table5, k, "-", 1.0), 2.0);
    }
}
