//! Built-in parameter sets for the published error tables, and a row runner.

use crate::error::{Error, Result};
use crate::grid::{sample_density, DensityPreset, Domain, GridSpec};
use crate::kernels::{FsaForm, Kernel, KernelDescriptor};
use crate::plan::{build_plan, EpsChoice};
use crate::solve::{solve_for_kernel, DipoleConfig};
use crate::validate::{error_norm, reference_for};
use std::time::Instant;

/// Orientations used for the 3D dipolar rows.
pub const DDI3D_N: [f64; 3] = [0.82778, 0.41505, -0.37751];
pub const DDI3D_M: [f64; 3] = [0.3118, 0.9378, -0.15214];

/// Quasi-2D confinement width, `1/sqrt(32)`.
pub fn eta_q2d() -> f64 {
    1.0 / 32f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Table2Iso,
    Table2Aniso,
    Table4,
    Table5,
}

impl TableId {
    pub const ALL: [TableId; 4] = [
        TableId::Table2Iso,
        TableId::Table2Aniso,
        TableId::Table4,
        TableId::Table5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TableId::Table2Iso => "table2-iso",
            TableId::Table2Aniso => "table2-aniso",
            TableId::Table4 => "table4",
            TableId::Table5 => "table5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown table '{s}'")))
    }
}

/// Pass condition attached to a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    /// Error within a factor of the published value.
    Within {
        published: f64,
        factor: f64,
    },
    AtMost(f64),
    /// `error / error(row with h = other_h) <= max`, same kernel and case.
    RatioTo {
        other_h: f64,
        max: f64,
    },
    None,
}

#[derive(Debug, Clone)]
pub struct RowSpec {
    pub table: TableId,
    pub kernel: Kernel,
    pub case: &'static str,
    pub l: f64,
    pub gamma: Vec<f64>,
    pub h: f64,
    pub eps: f64,
    pub density: DensityPreset,
    pub dipoles: Option<DipoleConfig>,
    /// Published double-precision error, if tabulated.
    pub published: Option<f64>,
    pub check: Check,
}

impl RowSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::with_spacing(Domain::new(self.l, self.gamma.clone())?, self.h)
    }

    pub fn gamma_string(&self) -> String {
        self.gamma
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn label(&self) -> String {
        format!(
            "{} {} {} gamma={} h={}",
            self.table.name(),
            self.kernel.name(),
            self.case,
            self.gamma_string(),
            self.h
        )
    }
}

#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub n: usize,
    pub error: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

fn gamma_vec(dim: usize, last: f64) -> Vec<f64> {
    let mut g = vec![1.0; dim];
    g[dim - 1] = last;
    g
}

fn within(published: f64) -> Check {
    Check::Within {
        published,
        factor: 10.0,
    }
}

/// Rows of one table; `lambda` is the Yukawa screening parameter.
pub fn rows(table: TableId, lambda: f64) -> Result<Vec<RowSpec>> {
    let gaussian = |sigma: f64| DensityPreset::Gaussian { sigma };
    let mut out = Vec::new();
    let mut push = |kernel,
                    case,
                    l,
                    gamma: Vec<f64>,
                    h,
                    eps,
                    density: &DensityPreset,
                    dipoles: &Option<DipoleConfig>,
                    published,
                    check| {
        out.push(RowSpec {
            table,
            kernel,
            case,
            l,
            gamma,
            h,
            eps,
            density: density.clone(),
            dipoles: dipoles.clone(),
            published,
            check,
        })
    };
    match table {
        TableId::Table2Iso => {
            let rho = gaussian(0.8f64.sqrt());
            let d2 = [
                (1.0, 1.3856e-2),
                (0.5, 2.9648e-8),
                (0.25, 2.8012e-16),
                (0.125, 5.6025e-16),
            ];
            for (i, (h, p)) in d2.into_iter().enumerate() {
                let c = if i < 2 {
                    within(p)
                } else {
                    Check::AtMost(1e-13)
                };
                push(
                    Kernel::Coulomb2d,
                    "I",
                    8.0,
                    gamma_vec(2, 1.0),
                    h,
                    1.0,
                    &rho,
                    &None,
                    Some(p),
                    c,
                );
            }
            let d3 = [
                (1.0, 2.0681e-2),
                (0.5, 2.5036e-6),
                (0.25, 5.5511e-16),
                (0.125, 6.9389e-16),
            ];
            for (i, (h, p)) in d3.into_iter().enumerate() {
                let c = match i {
                    0 | 1 => within(p),
                    2 => Check::AtMost(1e-13),
                    _ => Check::None,
                };
                push(
                    Kernel::Coulomb3d,
                    "I",
                    8.0,
                    gamma_vec(3, 1.0),
                    h,
                    1.0,
                    &rho,
                    &None,
                    Some(p),
                    c,
                );
            }
        }
        TableId::Table2Aniso => {
            let rho = gaussian(1.2f64.sqrt());
            let gammas = [1.0, 0.5, 0.25, 0.125];
            let p2 = [4.1758e-16, 2.5550e-15, 1.5455e-15, 1.8119e-15];
            let p3 = [3.7007e-16, 5.3559e-15, 5.1651e-15, 3.9372e-15];
            let pc = [6.0077e-16, 6.0289e-16, 8.0178e-16, 1.2020e-15];
            for (g, p) in gammas.iter().zip(p2) {
                push(
                    Kernel::Coulomb2d,
                    "I",
                    8.0,
                    gamma_vec(2, *g),
                    0.25,
                    0.5,
                    &rho,
                    &None,
                    Some(p),
                    Check::AtMost(1e-12),
                );
            }
            for (g, p) in gammas.iter().zip(p3) {
                push(
                    Kernel::Coulomb3d,
                    "I",
                    8.0,
                    gamma_vec(3, *g),
                    0.25,
                    0.5,
                    &rho,
                    &None,
                    Some(p),
                    Check::AtMost(1e-12),
                );
            }
            let shifted = DensityPreset::ShiftedLaplacian {
                sigma: 0.8f64.sqrt(),
                x0: vec![1.0, 1.0, 0.0],
            };
            for (g, p) in gammas.iter().zip(pc) {
                push(
                    Kernel::Coulomb3d,
                    "II",
                    12.0,
                    gamma_vec(3, *g),
                    0.125,
                    0.4,
                    &shifted,
                    &None,
                    Some(p),
                    Check::AtMost(1e-12),
                );
            }
        }
        TableId::Table4 => {
            let rho = gaussian(1.2f64.sqrt());
            let iso = [
                (2.0, 2.1786e-1),
                (1.0, 1.3761e-3),
                (0.5, 5.5617e-9),
                (0.25, 4.9577e-16),
            ];
            for (i, (h, p)) in iso.into_iter().enumerate() {
                let c = if i < 3 {
                    within(p)
                } else {
                    Check::AtMost(1e-13)
                };
                push(
                    Kernel::Poisson2d,
                    "iso",
                    8.0,
                    gamma_vec(2, 1.0),
                    h,
                    1.0,
                    &rho,
                    &None,
                    Some(p),
                    c,
                );
            }
            let aniso = DensityPreset::LaplacianAniso2d { sigma: 1.2 };
            let gp = [
                (1.0, 4.5519e-16),
                (0.5, 2.2204e-16),
                (0.25, 6.2728e-16),
                (0.125, 1.5016e-15),
            ];
            for (g, p) in gp {
                push(
                    Kernel::Poisson2d,
                    "aniso",
                    10.0,
                    gamma_vec(2, g),
                    0.125,
                    0.4,
                    &aniso,
                    &None,
                    Some(p),
                    Check::AtMost(1e-12),
                );
            }
        }
        TableId::Table5 => {
            let rho = gaussian(1.2f64.sqrt());
            let hs = [2.0, 1.0, 0.5, 0.25];
            let q2d = Some(DipoleConfig::new(
                [0.0, 0.0, 1.0],
                [0.0, 0.0, 1.0],
                eta_q2d(),
            )?);
            let p = [2.0847e-1, 7.4038e-3, 2.2647e-7, 5.0826e-15];
            for i in 0..4 {
                let c = if i < 3 {
                    within(p[i])
                } else {
                    Check::AtMost(1e-12)
                };
                push(
                    Kernel::DdiQuasi2d { eta: eta_q2d() },
                    "-",
                    12.0,
                    gamma_vec(2, 1.0),
                    hs[i],
                    1.0,
                    &rho,
                    &q2d,
                    Some(p[i]),
                    c,
                );
            }
            let d3 = Some(DipoleConfig::new(DDI3D_N, DDI3D_M, 1.0)?);
            let p = [2.2087, 3.3668e-2, 8.5098e-7, 7.5667e-15];
            for i in 0..4 {
                let c = match i {
                    1 => within(p[i]),
                    3 => Check::AtMost(1e-12),
                    _ => Check::None,
                };
                push(
                    Kernel::Ddi3d,
                    "-",
                    8.0,
                    gamma_vec(3, 1.0),
                    hs[i],
                    1.0,
                    &rho,
                    &d3,
                    Some(p[i]),
                    c,
                );
            }
            let bih = [
                (
                    Kernel::Biharmonic2d,
                    2,
                    [2.1351e-1, 2.6558e-5, 5.8860e-12, 1.2938e-15],
                ),
                (
                    Kernel::Biharmonic3d,
                    3,
                    [3.4293e-1, 2.6307e-4, 1.1065e-10, 1.0623e-15],
                ),
            ];
            for (k, dim, p) in bih {
                for i in 0..4 {
                    let c = match i {
                        1 => within(p[i]),
                        3 => Check::AtMost(1e-13),
                        _ => Check::None,
                    };
                    push(
                        k,
                        "-",
                        12.0,
                        gamma_vec(dim, 1.0),
                        hs[i],
                        1.0,
                        &rho,
                        &None,
                        Some(p[i]),
                        c,
                    );
                }
            }
            let yuk = [
                (
                    Kernel::Yukawa2d { lambda },
                    2,
                    [1.7460e-1, 4.5096e-3, 4.3501e-8, 5.2274e-16],
                ),
                (
                    Kernel::Yukawa3d { lambda },
                    3,
                    [2.4997e-1, 6.8294e-3, 7.3633e-8, 9.5568e-16],
                ),
            ];
            for (k, dim, p) in yuk {
                for i in 0..4 {
                    let c = if i == 2 {
                        Check::RatioTo {
                            other_h: 1.0,
                            max: 1e-4,
                        }
                    } else {
                        Check::None
                    };
                    push(
                        k,
                        "-",
                        12.0,
                        gamma_vec(dim, 1.0),
                        hs[i],
                        1.0,
                        &rho,
                        &None,
                        Some(p[i]),
                        c,
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Build the plan, solve, and measure the error against the reference potential.
pub fn run_row(row: &RowSpec, form: Option<FsaForm>) -> Result<RowOutcome> {
    let grid = row.grid()?;
    let mut desc = KernelDescriptor::new(row.kernel);
    if let Some(f) = form {
        desc = desc.with_form(f)?;
    }
    let reference = reference_for(&row.kernel, &row.density, &row.gamma, row.dipoles.as_ref())?;
    let rho = sample_density(&row.density, &grid)?;
    let t0 = Instant::now();
    let plan = build_plan(&desc, &grid, EpsChoice::Fixed(row.eps))?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let phi = solve_for_kernel(&plan, &rho, row.dipoles.as_ref())?;
    let solve_seconds = t1.elapsed().as_secs_f64();
    drop(plan);
    let exact = reference.sample(&grid)?;
    Ok(RowOutcome {
        n: grid.n,
        error: error_norm(&phi, &exact)?,
        build_seconds,
        solve_seconds,
    })
}

/// Evaluate each row's check; `None` where the row has no check.
pub fn evaluate_checks(rows: &[RowSpec], outcomes: &[RowOutcome]) -> Vec<Option<bool>> {
    rows.iter()
        .zip(outcomes)
        .map(|(row, out)| match row.check {
            Check::Within { published, factor } => {
                Some(out.error >= published / factor && out.error <= published * factor)
            }
            Check::AtMost(limit) => Some(out.error <= limit),
            Check::RatioTo { other_h, max } => {
                let other = rows.iter().zip(outcomes).find(|(r, _)| {
                    r.kernel == row.kernel
                        && r.case == row.case
                        && r.gamma == row.gamma
                        && r.h == other_h
                });
                Some(other.is_some_and(|(_, o)| out.error / o.error <= max))
            }
            Check::None => None,
        })
        .collect()
}

pub const CSV_HEADER: &str = "kernel,d,case,L,gamma,N,h,eps,error,published";

pub fn csv_line(row: &RowSpec, out: &RowOutcome) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{:.4e},{}",
        row.kernel.name(),
        row.kernel.dim(),
        row.case,
        row.l,
        row.gamma_string(),
        out.n,
        row.h,
        row.eps,
        out.error,
        row.published.map_or(String::new(), |p| format!("{p:.4e}"))
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_row_has_a_valid_grid_and_reference() {
        for t in TableId::ALL {
            for row in rows(t, 1.0).unwrap() {
                let g = row.grid().unwrap();
                assert_eq!(g.h[0], row.h, "{}", row.label());
                reference_for(&row.kernel, &row.density, &row.gamma, row.dipoles.as_ref()).unwrap();
            }
        }
        assert_eq!(TableId::parse("table4").unwrap(), TableId::Table4);
        assert!(TableId::parse("table3").is_err());
    }

    #[test]
    fn small_rows_run() {
        let r = rows(TableId::Table4, 1.0).unwrap();
        let out = run_row(&r[0], None).unwrap();
        assert_eq!(out.n, 8);
        assert!(out.error > 0.0 && out.error < 1.0);
        let line = csv_line(&r[0], &out);
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
    }
}
