//! Reference potentials, the literal-sum oracle, and the relative max-norm error.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{gaussian_and_laplacian, DensityPreset, Field, GridSpec};
use crate::kernels::{yukawa3d_screened, Kernel, KernelDescriptor};
use crate::plan::{build_fourier_tensor, build_regular_tensor, radial_abs_table};
use crate::quad::{integrate, QuadSettings};
use crate::solve::DipoleConfig;
use crate::specfun::{
    bessel_i0e, bessel_j0, erf, erfcx, exp1, exp1_series_tail, EULER_GAMMA, SQRT_PI,
};
use std::f64::consts::{PI, SQRT_2};

/// Largest N accepted by [`direct_sum_oracle`].
pub const DIRECT_SUM_LIMIT: usize = 16;

/// `max |num - ref| / max |ref|` over the mesh.
pub fn error_norm(num: &Field, reference: &Field) -> Result<f64> {
    if !num.grid.matches(&reference.grid) {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let diff = num
        .values
        .iter()
        .zip(&reference.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(diff / reference.max_abs())
}

type RadialFn = Box<dyn Fn(f64) -> Result<f64> + Sync + Send>;
type PointFn = Box<dyn Fn(&[f64]) -> Result<f64> + Sync + Send>;

enum Shape {
    /// Depends on `|x|` only.
    Radial(RadialFn),
    /// Even in every coordinate separately.
    AxisEven(PointFn),
    General(PointFn),
}

/// A reference potential with a note on where it comes from.
pub struct ReferenceSolution {
    pub provenance: String,
    shape: Shape,
}

impl std::fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ReferenceSolution {
    fn radial(provenance: &str, f: impl Fn(f64) -> Result<f64> + Sync + Send + 'static) -> Self {
        Self {
            provenance: provenance.into(),
            shape: Shape::Radial(Box::new(f)),
        }
    }

    fn even(provenance: &str, f: impl Fn(&[f64]) -> Result<f64> + Sync + Send + 'static) -> Self {
        Self {
            provenance: provenance.into(),
            shape: Shape::AxisEven(Box::new(f)),
        }
    }

    fn general(
        provenance: &str,
        f: impl Fn(&[f64]) -> Result<f64> + Sync + Send + 'static,
    ) -> Self {
        Self {
            provenance: provenance.into(),
            shape: Shape::General(Box::new(f)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match &self.shape {
            Shape::Radial(f) => f(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            Shape::AxisEven(f) | Shape::General(f) => f(x),
        }
    }

    /// Evaluate on every mesh point; symmetric shapes are evaluated once per distinct point.
    pub fn sample(&self, grid: &GridSpec) -> Result<Field> {
        let d = grid.dim();
        let half = grid.n / 2;
        // Mesh points have |i - N/2| in 0..=N/2 on each axis.
        let abs_slot = |flat: usize| {
            let idx = grid.unravel(flat);
            (0..d).fold(0, |acc, j| acc * (half + 1) + idx[j].abs_diff(half))
        };
        let values = match &self.shape {
            Shape::Radial(f) => {
                let table = radial_abs_table(half, &grid.h, |r2| f(r2.sqrt()))?;
                exec::map_range(grid.len(), |i| table[abs_slot(i)])
            }
            Shape::AxisEven(f) => {
                let count = (half + 1).pow(d as u32);
                let table: Vec<Result<f64>> = exec::map_range(count, |t| {
                    let mut x = [0.0; 3];
                    let mut rest = t;
                    for j in (0..d).rev() {
                        x[j] = (rest % (half + 1)) as f64 * grid.h[j];
                        rest /= half + 1;
                    }
                    f(&x[..d])
                });
                let table: Vec<f64> = table.into_iter().collect::<Result<_>>()?;
                exec::map_range(grid.len(), |i| table[abs_slot(i)])
            }
            Shape::General(f) => {
                let v: Vec<Result<f64>> = exec::map_range(grid.len(), |i| f(&grid.point(i)[..d]));
                v.into_iter().collect::<Result<_>>()?
            }
        };
        Field::new(grid.clone(), values)
    }
}

fn settings() -> QuadSettings {
    QuadSettings {
        abs_tol: 1e-300,
        rel_tol: 1e-14,
        max_intervals: 4000,
    }
}

/// `G(t) = erf(sqrt t)/sqrt t` and its first two derivatives.
fn erf_ratio_derivs(t: f64) -> (f64, f64, f64) {
    if t < 2.0 {
        erf_ratio_series(t)
    } else {
        erf_ratio_closed(t)
    }
}

fn erf_ratio_series(t: f64) -> (f64, f64, f64) {
    // G = (2/sqrt pi) sum (-t)^k / (k! (2k+1)), differentiated termwise.
    let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
    let mut term = 1.0; // (-t)^k / k!
    for k in 0..60usize {
        let kf = k as f64;
        g += term / (2.0 * kf + 1.0);
        g1 -= term / (2.0 * kf + 3.0);
        g2 += term / (2.0 * kf + 5.0);
        term *= -t / (kf + 1.0);
        if term.abs() < 1e-18 {
            break;
        }
    }
    let c = 2.0 / SQRT_PI;
    (c * g, c * g1, c * g2)
}

fn erf_ratio_closed(t: f64) -> (f64, f64, f64) {
    let s = t.sqrt();
    let e = (-t).exp() / SQRT_PI;
    let g = erf(s) / s;
    let g1 = e / t - 0.5 * g / t;
    let g2 = -e / t - 1.5 * e / (t * t) + 0.75 * g / (t * t);
    (g, g1, g2)
}

/// Potentials of `exp(-|x|^2/sigma^2)` for the radial kernels.
pub fn reference_radial(kernel: &Kernel, sigma: f64) -> Result<ReferenceSolution> {
    let s2 = sigma * sigma;
    Ok(match *kernel {
        Kernel::Coulomb3d | Kernel::Ddi3d => {
            ReferenceSolution::radial("Gaussian charge, erf closed form", move |r| {
                Ok(0.25 * SQRT_PI * s2 * erf_ratio_derivs(r * r / s2).0)
            })
        }
        Kernel::Coulomb2d => {
            ReferenceSolution::radial("2D Gaussian against 1/(2 pi r), scaled I0", move |r| {
                Ok(0.5 * sigma * SQRT_PI * bessel_i0e(0.5 * r * r / s2))
            })
        }
        Kernel::Poisson2d => ReferenceSolution::radial(
            "2D Gaussian against -ln r/(2 pi), E1 closed form",
            move |r| {
                let z = r * r / s2;
                // ln r^2 + E1(z) = ln sigma^2 + ln z + E1(z); small z uses the series.
                let v = if z < 1.0 {
                    s2.ln() - EULER_GAMMA - exp1_series_tail(z)
                } else {
                    (r * r).ln() + exp1(z)?
                };
                Ok(-0.25 * s2 * v)
            },
        ),
        Kernel::Biharmonic3d => {
            ReferenceSolution::radial("shell average of r/(8 pi), radial quadrature", move |r| {
                biharmonic3d_gaussian(r, sigma)
            })
        }
        Kernel::Biharmonic2d => ReferenceSolution::radial(
            "ring average of the 2D biharmonic kernel, radial quadrature",
            move |r| biharmonic2d_gaussian(r, sigma),
        ),
        Kernel::Yukawa3d { lambda } => ReferenceSolution::radial(
            "Gaussian as a heat kernel, screened closed form",
            move |r| {
                let scale = PI.powf(1.5) * s2 * sigma * (0.25 * lambda * lambda * s2).exp();
                Ok(scale * yukawa3d_screened(r, sigma, lambda)?)
            },
        ),
        Kernel::Yukawa2d { lambda } => ReferenceSolution::radial(
            "Hankel transform of the Gaussian times 1/(k^2+lambda^2)",
            move |r| {
                hankel0(r, sigma, |k| PI * s2 / (k * k + lambda * lambda)).map(|v| v / (2.0 * PI))
            },
        ),
        Kernel::DdiQuasi2d { .. } => {
            return Err(Error::InvalidParameter(
                "ddiq2d references need dipole orientations; use reference_ddi_quasi2d".into(),
            ))
        }
    })
}

/// `int_0^inf a(k) exp(-k^2 sigma^2/4) J0(k r) k dk`.
fn hankel0(r: f64, sigma: f64, a: impl Fn(f64) -> f64) -> Result<f64> {
    let k_end = 2.0 * 46f64.sqrt() / sigma;
    let step = if r > 0.0 {
        (PI / r).min(0.5 / sigma)
    } else {
        0.5 / sigma
    };
    let mut breaks: Vec<f64> = (0..)
        .map(|i| i as f64 * step)
        .take_while(|k| *k < k_end)
        .collect();
    breaks.push(k_end);
    let f = |k: f64| a(k) * (-0.25 * k * k * sigma * sigma).exp() * bessel_j0(k * r) * k;
    Ok(integrate(f, &breaks, settings())?.value)
}

fn radial_breaks(r: f64, sigma: f64) -> Vec<f64> {
    let end = 8.0 * sigma;
    let mut b: Vec<f64> = (0..=16).map(|i| i as f64 * end / 16.0).collect();
    if r > 0.0 && r < end {
        b.push(r);
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * sigma);
    b
}

fn biharmonic3d_gaussian(r: f64, sigma: f64) -> Result<f64> {
    let f = |s: f64| {
        let avg = if r == 0.0 {
            s
        } else if s < r {
            r + s * s / (3.0 * r)
        } else {
            s + r * r / (3.0 * s)
        };
        s * s * (-(s * s) / (sigma * sigma)).exp() * avg
    };
    // Mass beyond 8 sigma is below 1e-27 relative.
    Ok(0.5 * integrate(f, &radial_breaks(r, sigma), settings())?.value)
}

/// Circle average of `-(1/8pi) rho^2 (ln rho - 1)` over a ring of radius `s` seen from radius `r`.
pub(crate) fn biharmonic2d_ring(r: f64, s: f64) -> f64 {
    let sum = r * r + s * s;
    let (lo, hi) = if r < s { (r, s) } else { (s, r) };
    let ln_hi = if hi == 0.0 { 0.0 } else { hi.ln() };
    -(sum * ln_hi + lo * lo - sum) / (8.0 * PI)
}

fn biharmonic2d_gaussian(r: f64, sigma: f64) -> Result<f64> {
    let f = |s: f64| 2.0 * PI * s * (-(s * s) / (sigma * sigma)).exp() * biharmonic2d_ring(r, s);
    Ok(integrate(f, &radial_breaks(r, sigma), settings())?.value)
}

/// Coulomb potential of `exp(-sum_j x_j^2/(gamma_j sigma)^2)` by the Gaussian integral of `1/r`.
pub fn reference_coulomb_aniso(dim: usize, sigma: f64, gamma: &[f64]) -> Result<ReferenceSolution> {
    if gamma.len() != dim || !(dim == 2 || dim == 3) {
        return Err(Error::InvalidParameter(
            "anisotropy vector does not match dimension".into(),
        ));
    }
    let s: Vec<f64> = gamma.iter().map(|g| g * sigma).collect();
    let cd = if dim == 3 {
        1.0 / (4.0 * PI)
    } else {
        1.0 / (2.0 * PI)
    };
    Ok(ReferenceSolution::even(
        "1/r = (2/sqrt pi) int exp(-t^2 r^2) dt, per-axis Gaussian integrals",
        move |x| {
            // t = tan(theta) / sigma maps t in [0, inf) to theta in [0, pi/2).
            let f = |theta: f64| {
                let t = theta.tan() / sigma;
                let jac = 1.0 / (sigma * theta.cos().powi(2));
                let mut p = 1.0;
                for (xj, sj) in x.iter().zip(&s) {
                    let q = 1.0 + t * t * sj * sj;
                    p *= SQRT_PI * sj / q.sqrt() * (-(t * t * xj * xj) / q).exp();
                }
                p * jac
            };
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut breaks = vec![0.0, 0.5 * PI];
            if r > 0.0 {
                for c in [0.1, 0.3, 1.0, 3.0, 10.0] {
                    breaks.push((c * sigma / r).atan());
                }
            } else {
                breaks.push(0.25 * PI);
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            Ok(cd * 2.0 / SQRT_PI * integrate(f, &breaks, settings())?.value)
        },
    ))
}

/// `Phi_0(x) + Phi_0(x - x0)` with `Phi_0 = exp(-sum_j x_j^2/(gamma_j sigma)^2)`.
pub fn reference_case2(
    kernel: &Kernel,
    sigma: f64,
    gamma: &[f64],
    x0: &[f64],
) -> Result<ReferenceSolution> {
    match kernel {
        Kernel::Coulomb3d | Kernel::Poisson2d => {}
        other => {
            return Err(Error::InvalidParameter(format!(
                "the Laplacian-generated densities are exact only for coulomb3d and poisson2d, not {other}"
            )))
        }
    }
    if gamma.len() != kernel.dim() {
        return Err(Error::InvalidParameter(
            "anisotropy vector does not match dimension".into(),
        ));
    }
    let gamma = gamma.to_vec();
    let shift: Vec<f64> = if x0.is_empty() {
        vec![0.0; gamma.len()]
    } else {
        x0.to_vec()
    };
    Ok(ReferenceSolution::general(
        "Green's identity: the potential is Phi_0 itself",
        move |x| {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
            Ok(gaussian_and_laplacian(x, &gamma, sigma).0
                + gaussian_and_laplacian(&y, &gamma, sigma).0)
        },
    ))
}

/// 3D dipolar potential of `exp(-|x|^2/sigma^2)`.
pub fn reference_ddi3d(sigma: f64, cfg: &DipoleConfig) -> ReferenceSolution {
    let s2 = sigma * sigma;
    let (n, m) = (cfg.n, cfg.m);
    let mn = cfg.m_dot_n();
    ReferenceSolution::general(
        "-(m.n) rho - 3 d_n d_m of the Gaussian Coulomb potential",
        move |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let (_, g1, g2) = erf_ratio_derivs(r2 / s2);
            let nx: f64 = n.iter().zip(x).map(|(a, b)| a * b).sum();
            let mx: f64 = m.iter().zip(x).map(|(a, b)| a * b).sum();
            let dnm = 0.25 * SQRT_PI * s2 * (4.0 * g2 * nx * mx / (s2 * s2) + 2.0 * g1 * mn / s2);
            Ok(-mn * (-r2 / s2).exp() - 3.0 * dnm)
        },
    )
}

/// Quasi-2D dipolar potential of `exp(-|x|^2/sigma^2)` for dipoles normal to the plane.
pub fn reference_ddi_quasi2d(sigma: f64, cfg: &DipoleConfig) -> Result<ReferenceSolution> {
    let np = cfg.n_perp();
    if np[0].hypot(np[1]) > 1e-14 {
        return Err(Error::InvalidParameter(
            "quasi-2D reference is available only for n = (0, 0, 1)".into(),
        ));
    }
    let s2 = sigma * sigma;
    let a = cfg.eta / SQRT_2;
    Ok(ReferenceSolution::radial(
        "Hankel transform with the transverse-averaged kernel",
        move |r| {
            let v = hankel0(r, sigma, |k| k * erfcx(a * k))?;
            Ok(-0.75 * s2 * v)
        },
    ))
}

/// Reference for a density preset, when one is known.
pub fn reference_for(
    kernel: &Kernel,
    preset: &DensityPreset,
    gamma: &[f64],
    dipoles: Option<&DipoleConfig>,
) -> Result<ReferenceSolution> {
    let isotropic = gamma.iter().all(|g| *g == 1.0);
    match (kernel, preset) {
        (Kernel::Ddi3d, DensityPreset::Gaussian { sigma }) if isotropic => {
            let cfg = dipoles
                .ok_or_else(|| Error::InvalidParameter("ddi3d needs dipole orientations".into()))?;
            Ok(reference_ddi3d(*sigma, cfg))
        }
        (Kernel::DdiQuasi2d { eta }, DensityPreset::Gaussian { sigma }) if isotropic => {
            let cfg = dipoles.ok_or_else(|| {
                Error::InvalidParameter("ddiq2d needs dipole orientations".into())
            })?;
            if (cfg.eta - eta).abs() > 1e-15 * eta {
                return Err(Error::InvalidParameter(
                    "dipole eta differs from the kernel eta".into(),
                ));
            }
            reference_ddi_quasi2d(*sigma, cfg)
        }
        (Kernel::Coulomb2d | Kernel::Coulomb3d, DensityPreset::Gaussian { sigma })
            if !isotropic =>
        {
            reference_coulomb_aniso(kernel.dim(), *sigma, gamma)
        }
        (_, DensityPreset::Gaussian { sigma }) if isotropic => reference_radial(kernel, *sigma),
        (Kernel::Coulomb3d | Kernel::Poisson2d, DensityPreset::ShiftedLaplacian { sigma, x0 }) => {
            reference_case2(kernel, *sigma, gamma, x0)
        }
        (Kernel::Poisson2d, DensityPreset::LaplacianAniso2d { sigma }) => {
            let g = gamma.to_vec();
            let sigma = *sigma;
            Ok(ReferenceSolution::even(
                "Green's identity: the potential is Phi_0 itself",
                move |x| Ok(gaussian_and_laplacian(x, &g, sigma).0),
            ))
        }
        _ => Err(Error::InvalidParameter(format!(
            "no reference potential for kernel {kernel} with density {}",
            preset.name()
        ))),
    }
}

/// Literal `sum_{n'} (T1 + T2)_{n - n'} rho_{n'}` without FFTs in the sum.
pub fn direct_sum_oracle(desc: &KernelDescriptor, eps: f64, rho: &Field) -> Result<Field> {
    let grid = &rho.grid;
    if grid.n > DIRECT_SUM_LIMIT {
        return Err(Error::SizeGuard {
            n: grid.n,
            limit: DIRECT_SUM_LIMIT,
        });
    }
    let t1 = build_regular_tensor(desc, grid, eps)?;
    let t2 = build_fourier_tensor(desc, grid, eps)?;
    let d = grid.dim();
    let len = grid.len();
    let values = exec::map_range(len, |out| {
        let a = grid.unravel(out);
        let mut sum = 0.0;
        let mut idx = [0i64; 3];
        for src in 0..len {
            let rho_v = rho.values[src];
            if rho_v == 0.0 {
                continue;
            }
            let b = grid.unravel(src);
            for j in 0..d {
                idx[j] = a[j] as i64 - b[j] as i64;
            }
            let pos = t1.position(&idx[..d]);
            sum += (t1.data[pos] + t2.data[pos]) * rho_v;
        }
        sum
    });
    Field::new(grid.clone(), values)
}
