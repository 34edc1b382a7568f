//! Kernel registry: `U`, its smooth far-field approximation `U^eps`, and the
//! Fourier transform of the residual `U - U^eps`.
//!
//! For the two dipolar entries the descriptor describes the radial base kernel
//! the solver convolves with: the 3D Coulomb kernel for `ddi3d`, and
//! `Ut(r) = (2 pi)^{-3/2} int exp(-s^2/2) / sqrt(r^2 + eta^2 s^2) ds` for `ddiq2d`.

use crate::error::{Error, Result};
use crate::quad::{gauss_hermite, integrate, QuadSettings};
use crate::specfun::{
    bessel_j0, bessel_k0, bessel_k0e, erf, erfc, erfcx, exp1, exp1_series_tail, window_unchecked,
    EULER_GAMMA, FRAC_1_SQRT_PI, SQRT_PI,
};
use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

/// Window edges as multiples of eps.
pub const WINDOW_LOWER: f64 = 1.0;
pub const WINDOW_UPPER: f64 = 3.0;

/// Small-k series switch for the analytic residual transforms, as `k eps`.
pub const K_SWITCH: f64 = 1e-3;

const GH_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Poisson2d,
    Coulomb2d,
    Coulomb3d,
    Biharmonic2d,
    Biharmonic3d,
    Yukawa2d { lambda: f64 },
    Yukawa3d { lambda: f64 },
    Ddi3d,
    DdiQuasi2d { eta: f64 },
}

pub const KERNEL_NAMES: [&str; 9] = [
    "poisson2d",
    "coulomb2d",
    "coulomb3d",
    "biharmonic2d",
    "biharmonic3d",
    "yukawa2d",
    "yukawa3d",
    "ddi3d",
    "ddiq2d",
];

impl Kernel {
    /// Parse a CLI kernel name; `lambda` and `eta` apply to the kernels that take them.
    pub fn from_name(name: &str, lambda: f64, eta: f64) -> Result<Self> {
        let k = match name {
            "poisson2d" => Kernel::Poisson2d,
            "coulomb2d" => Kernel::Coulomb2d,
            "coulomb3d" => Kernel::Coulomb3d,
            "biharmonic2d" => Kernel::Biharmonic2d,
            "biharmonic3d" => Kernel::Biharmonic3d,
            "yukawa2d" => Kernel::Yukawa2d { lambda },
            "yukawa3d" => Kernel::Yukawa3d { lambda },
            "ddi3d" => Kernel::Ddi3d,
            "ddiq2d" => Kernel::DdiQuasi2d { eta },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown kernel '{other}' (expected one of {})",
                    KERNEL_NAMES.join(", ")
                )))
            }
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Yukawa2d { lambda } | Kernel::Yukawa3d { lambda }
                if !(lambda > 0.0 && lambda.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "yukawa lambda must be positive, got {lambda}"
                )))
            }
            Kernel::DdiQuasi2d { eta } if !(eta > 0.0 && eta.is_finite()) => Err(
                Error::InvalidParameter(format!("ddiq2d eta must be positive, got {eta}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Poisson2d => "poisson2d",
            Kernel::Coulomb2d => "coulomb2d",
            Kernel::Coulomb3d => "coulomb3d",
            Kernel::Biharmonic2d => "biharmonic2d",
            Kernel::Biharmonic3d => "biharmonic3d",
            Kernel::Yukawa2d { .. } => "yukawa2d",
            Kernel::Yukawa3d { .. } => "yukawa3d",
            Kernel::Ddi3d => "ddi3d",
            Kernel::DdiQuasi2d { .. } => "ddiq2d",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::Poisson2d
            | Kernel::Coulomb2d
            | Kernel::Biharmonic2d
            | Kernel::Yukawa2d { .. }
            | Kernel::DdiQuasi2d { .. } => 2,
            _ => 3,
        }
    }

    pub fn default_form(&self) -> FsaForm {
        match self {
            Kernel::Poisson2d | Kernel::Biharmonic2d => FsaForm::E1Subtraction,
            Kernel::Yukawa2d { .. } | Kernel::Yukawa3d { .. } | Kernel::DdiQuasi2d { .. } => {
                FsaForm::GaussianScreened
            }
            _ => FsaForm::ErfMultiplier,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Yukawa2d { lambda } | Kernel::Yukawa3d { lambda } => {
                write!(f, "{}(lambda={lambda})", self.name())
            }
            Kernel::DdiQuasi2d { eta } => write!(f, "{}(eta={eta})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsaForm {
    /// `U(r) erf(r/eps)`.
    ErfMultiplier,
    /// `-ln r` replaced by `-(ln r + E1(r^2/eps^2)/2)` (2D Poisson and biharmonic).
    E1Subtraction,
    /// `U(r) erf(r/eps) (1 - xi(r))` with the smooth window `xi` on `[eps, 3 eps]`.
    WindowedErf,
    /// Heat-kernel split at diffusion time `eps^2/4`; analytic for Yukawa and `ddiq2d`.
    GaussianScreened,
}

impl FsaForm {
    pub fn name(&self) -> &'static str {
        match self {
            FsaForm::ErfMultiplier => "erf",
            FsaForm::E1Subtraction => "e1",
            FsaForm::WindowedErf => "windowed",
            FsaForm::GaussianScreened => "screened",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "erf" => Ok(FsaForm::ErfMultiplier),
            "e1" => Ok(FsaForm::E1Subtraction),
            "windowed" => Ok(FsaForm::WindowedErf),
            "screened" => Ok(FsaForm::GaussianScreened),
            _ => Err(Error::InvalidParameter(format!(
                "unknown far-field form '{s}' (expected erf, e1, windowed or screened)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualFtMode {
    Analytic,
    RadialQuadrature,
}

impl ResidualFtMode {
    pub fn name(&self) -> &'static str {
        match self {
            ResidualFtMode::Analytic => "analytic",
            ResidualFtMode::RadialQuadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDescriptor {
    pub kernel: Kernel,
    pub form: FsaForm,
    pub mode: ResidualFtMode,
}

impl KernelDescriptor {
    /// Default far-field form, analytic residual transform where one exists.
    pub fn new(kernel: Kernel) -> Self {
        let form = kernel.default_form();
        let mut d = Self {
            kernel,
            form,
            mode: ResidualFtMode::Analytic,
        };
        if !d.has_analytic_ft() {
            d.mode = ResidualFtMode::RadialQuadrature;
        }
        d
    }

    pub fn with_form(self, form: FsaForm) -> Result<Self> {
        let ok = match form {
            FsaForm::ErfMultiplier => {
                !matches!(self.kernel, Kernel::Poisson2d | Kernel::Biharmonic2d)
            }
            FsaForm::E1Subtraction => {
                matches!(self.kernel, Kernel::Poisson2d | Kernel::Biharmonic2d)
            }
            FsaForm::WindowedErf => true,
            FsaForm::GaussianScreened => matches!(
                self.kernel,
                Kernel::Coulomb3d
                    | Kernel::Ddi3d
                    | Kernel::Yukawa2d { .. }
                    | Kernel::Yukawa3d { .. }
                    | Kernel::DdiQuasi2d { .. }
            ),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "form '{}' is not available for kernel {}",
                form.name(),
                self.kernel.name()
            )));
        }
        let mut d = Self { form, ..self };
        if !d.has_analytic_ft() {
            d.mode = ResidualFtMode::RadialQuadrature;
        }
        Ok(d)
    }

    pub fn with_mode(self, mode: ResidualFtMode) -> Result<Self> {
        if mode == ResidualFtMode::Analytic && !self.has_analytic_ft() {
            return Err(Error::InvalidParameter(format!(
                "no analytic residual transform for {} with form '{}'",
                self.kernel.name(),
                self.form.name()
            )));
        }
        Ok(Self { mode, ..self })
    }

    pub fn name(&self) -> &'static str {
        self.kernel.name()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Stable text identity used by the plan cache.
    pub fn spec_string(&self) -> String {
        let params = match self.kernel {
            Kernel::Yukawa2d { lambda } | Kernel::Yukawa3d { lambda } => {
                format!("lambda={lambda:e}")
            }
            Kernel::DdiQuasi2d { eta } => format!("eta={eta:e}"),
            _ => String::new(),
        };
        format!(
            "{};{};{};{}",
            self.name(),
            params,
            self.form.name(),
            self.mode.name()
        )
    }

    pub fn has_analytic_ft(&self) -> bool {
        use FsaForm::*;
        matches!(
            (self.kernel, self.form),
            (Kernel::Poisson2d | Kernel::Biharmonic2d, E1Subtraction)
                | (
                    Kernel::Coulomb2d | Kernel::Coulomb3d | Kernel::Ddi3d | Kernel::Biharmonic3d,
                    ErfMultiplier
                )
                | (
                    Kernel::Coulomb3d
                        | Kernel::Ddi3d
                        | Kernel::Yukawa2d { .. }
                        | Kernel::Yukawa3d { .. }
                        | Kernel::DdiQuasi2d { .. },
                    GaussianScreened
                )
        )
    }

    /// Window edges `(a, b)` when the form uses a window.
    pub fn window_edges(&self, eps: f64) -> Option<(f64, f64)> {
        (self.form == FsaForm::WindowedErf).then_some((WINDOW_LOWER * eps, WINDOW_UPPER * eps))
    }

    /// Radius beyond which `U - U^eps` is below double-precision underflow relevance.
    pub fn significant_radius(&self, eps: f64) -> f64 {
        let start = self.window_edges(eps).map_or(0.0, |(_, b)| b);
        start + 9.0 * eps
    }

    /// The kernel `U(r)`.
    pub fn kernel_value(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return match self.kernel {
                Kernel::Biharmonic2d | Kernel::Biharmonic3d => Ok(0.0),
                _ => Err(Error::Singularity {
                    kernel: self.kernel.name(),
                }),
            };
        }
        let r = r.abs();
        Ok(match self.kernel {
            Kernel::Poisson2d => -r.ln() / (2.0 * PI),
            Kernel::Coulomb2d => 1.0 / (2.0 * PI * r),
            Kernel::Coulomb3d | Kernel::Ddi3d => 1.0 / (4.0 * PI * r),
            Kernel::Biharmonic2d => -r * r * (r.ln() - 1.0) / (8.0 * PI),
            Kernel::Biharmonic3d => r / (8.0 * PI),
            Kernel::Yukawa2d { lambda } => bessel_k0(lambda * r)? / (2.0 * PI),
            Kernel::Yukawa3d { lambda } => (-lambda * r).exp() / (4.0 * PI * r),
            Kernel::DdiQuasi2d { eta } => ddiq_base(r, eta),
        })
    }

    /// The far-field smooth approximation `U^eps(r)`, finite at `r = 0`.
    pub fn fsa_value(&self, r: f64, eps: f64) -> Result<f64> {
        let r = r.abs();
        match self.form {
            FsaForm::WindowedErf => {
                let (a, b) = (WINDOW_LOWER * eps, WINDOW_UPPER * eps);
                if r <= a {
                    return Ok(0.0);
                }
                let u = self.kernel_value(r)?;
                Ok(u * erf(r / eps) * (1.0 - window_unchecked(r, a, b)))
            }
            FsaForm::ErfMultiplier => self.fsa_erf(r, eps),
            FsaForm::E1Subtraction => Ok(match self.kernel {
                Kernel::Poisson2d => -log_plus_half_e1(r, eps)? / (2.0 * PI),
                Kernel::Biharmonic2d => -r * r * (log_plus_half_e1(r, eps)? - 1.0) / (8.0 * PI),
                _ => unreachable!("form validated at construction"),
            }),
            FsaForm::GaussianScreened => self.fsa_screened(r, eps),
        }
    }

    fn fsa_erf(&self, r: f64, eps: f64) -> Result<f64> {
        // erf(x)/x with its limit at 0.
        let erf_ratio = |x: f64| {
            if x == 0.0 {
                2.0 * FRAC_1_SQRT_PI
            } else {
                erf(x) / x
            }
        };
        let x = r / eps;
        Ok(match self.kernel {
            Kernel::Coulomb2d => erf_ratio(x) / (2.0 * PI * eps),
            Kernel::Coulomb3d | Kernel::Ddi3d => erf_ratio(x) / (4.0 * PI * eps),
            Kernel::Biharmonic3d => r * erf(x) / (8.0 * PI),
            Kernel::Yukawa3d { lambda } => (-lambda * r).exp() * erf_ratio(x) / (4.0 * PI * eps),
            _ => {
                if r == 0.0 {
                    return Err(Error::Singularity {
                        kernel: self.kernel.name(),
                    });
                }
                self.kernel_value(r)? * erf(x)
            }
        })
    }

    fn fsa_screened(&self, r: f64, eps: f64) -> Result<f64> {
        match self.kernel {
            Kernel::Coulomb3d | Kernel::Ddi3d => self.fsa_erf(r, eps),
            Kernel::Yukawa3d { lambda } => yukawa3d_screened(r, eps, lambda),
            Kernel::Yukawa2d { lambda } => {
                let tau = 0.25 * eps * eps;
                let c = 0.25 * lambda * lambda * r * r;
                if r < eps {
                    Ok(incomplete_bessel(lambda * lambda * tau, c)? / (4.0 * PI))
                } else {
                    Ok(self.kernel_value(r)?
                        - incomplete_bessel(r * r / (eps * eps), c)? / (4.0 * PI))
                }
            }
            Kernel::DdiQuasi2d { eta } => Ok(ddiq_screened_fsa(r, eps, eta)),
            _ => unreachable!("form validated at construction"),
        }
    }

    /// `U(r) - U^eps(r)` for `r > 0`, evaluated without forming the difference.
    pub fn residual_value(&self, r: f64, eps: f64) -> Result<f64> {
        let r = r.abs();
        if r == 0.0 {
            return match self.kernel {
                Kernel::Biharmonic2d | Kernel::Biharmonic3d => Ok(0.0),
                _ => Err(Error::Singularity {
                    kernel: self.kernel.name(),
                }),
            };
        }
        let x = r / eps;
        match self.form {
            FsaForm::WindowedErf => {
                let (a, b) = (WINDOW_LOWER * eps, WINDOW_UPPER * eps);
                let u = self.kernel_value(r)?;
                Ok(u * (erfc(x) + erf(x) * window_unchecked(r, a, b)))
            }
            FsaForm::ErfMultiplier => Ok(self.kernel_value(r)? * erfc(x)),
            FsaForm::E1Subtraction => {
                let e1 = exp1(x * x)?;
                Ok(match self.kernel {
                    Kernel::Poisson2d => e1 / (4.0 * PI),
                    _ => r * r * e1 / (16.0 * PI),
                })
            }
            FsaForm::GaussianScreened => match self.kernel {
                Kernel::Coulomb3d | Kernel::Ddi3d => Ok(self.kernel_value(r)? * erfc(x)),
                Kernel::Yukawa3d { lambda } => {
                    let half = 0.5 * lambda * eps;
                    let t1 = (-lambda * r).exp() * erfc(x - half);
                    let t2 = (-half * half - x * x).exp() * erfcx(x + half);
                    Ok((t1 + t2) / (8.0 * PI * r))
                }
                Kernel::Yukawa2d { lambda } => {
                    Ok(incomplete_bessel(x * x, 0.25 * lambda * lambda * r * r)? / (4.0 * PI))
                }
                Kernel::DdiQuasi2d { eta } => ddiq_screened_residual(r, eps, eta),
                _ => unreachable!("form validated at construction"),
            },
        }
    }

    /// Residual transform evaluator for a given eps and R0.
    pub fn residual_ft(&self, eps: f64, r0: f64) -> ResidualFt {
        ResidualFt::new(*self, eps, r0)
    }

    /// Closed-form residual transform, if this kernel/form pair has one.
    pub fn residual_ft_analytic(&self, k: f64, eps: f64) -> Option<f64> {
        if !self.has_analytic_ft() {
            return None;
        }
        let k = k.abs();
        let ke = k * eps;
        let t = 0.25 * ke * ke;
        Some(match self.kernel {
            Kernel::Coulomb3d | Kernel::Ddi3d | Kernel::Poisson2d => {
                if ke < K_SWITCH {
                    0.25 * eps * eps * series(|n| (-t).powi(n as i32) / factorial(n + 1))
                } else {
                    -(-t).exp_m1() / (k * k)
                }
            }
            Kernel::Coulomb2d => {
                let x = 0.5 * ke;
                if ke < K_SWITCH {
                    eps * FRAC_1_SQRT_PI
                        * series(|n| (-x * x).powi(n as i32) / (factorial(n) * (2 * n + 1) as f64))
                } else {
                    erf(x) / k
                }
            }
            Kernel::Biharmonic2d | Kernel::Biharmonic3d => {
                let three_d = matches!(self.kernel, Kernel::Biharmonic3d);
                // Below t = 1 the closed form loses digits to cancellation.
                if t < 1.0 {
                    let coef = |n: usize| {
                        let nf = n as f64;
                        if three_d {
                            (2.0 * nf - 1.0) * (nf - 1.0)
                        } else {
                            (nf - 1.0) * (nf - 1.0)
                        }
                    };
                    let e4 = eps.powi(4) / 16.0;
                    e4 * series(|m| {
                        let n = m + 2;
                        (-1f64).powi(n as i32) * coef(n) * t.powi(m as i32) / factorial(n)
                    })
                } else {
                    let quad = if three_d { 2.0 } else { 1.0 };
                    ((-t).exp() * (1.0 + t + quad * t * t) - 1.0) / (k * k * k * k)
                }
            }
            Kernel::Yukawa2d { lambda } | Kernel::Yukawa3d { lambda } => {
                let m2 = k * k + lambda * lambda;
                -(-0.25 * m2 * eps * eps).exp_m1() / m2
            }
            Kernel::DdiQuasi2d { eta } => {
                let a = eta / std::f64::consts::SQRT_2;
                let c = (0.5 * eta * eta + 0.25 * eps * eps).sqrt();
                if k * c < 1e-6 {
                    let k2 = k * k;
                    2.0 * FRAC_1_SQRT_PI
                        * (c - a)
                        * (1.0 + a * a * k2 - k2 * (c * c + c * a + a * a) / 3.0)
                } else if a * k < 0.5 {
                    (a * a * k * k).exp() * (erf(c * k) - erf(a * k)) / k
                } else {
                    (erfcx(a * k) - (-t).exp() * erfcx(c * k)) / k
                }
            }
        })
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

// Sum terms until they drop below 1e-18 relative.
fn series(term: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    for n in 0..60 {
        let c = term(n);
        sum += c;
        if c.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `ln r + E1(r^2/eps^2)/2`, smooth down to `r = 0` where it equals `ln eps - gamma/2`.
fn log_plus_half_e1(r: f64, eps: f64) -> Result<f64> {
    let z = (r / eps) * (r / eps);
    if z < 1.0 {
        Ok(eps.ln() - 0.5 * EULER_GAMMA - 0.5 * exp1_series_tail(z))
    } else {
        Ok(r.ln() + 0.5 * exp1(z)?)
    }
}

/// `F(x, c) = int_x^inf exp(-w - c/w) dw / w`, an incomplete Bessel function.
fn incomplete_bessel(x: f64, c: f64) -> Result<f64> {
    if c == 0.0 {
        return exp1(x);
    }
    // Shift to t = w - x and grade the breakpoints toward t = 0, where 1/w varies on scale x.
    let f = |t: f64| {
        let w = x + t;
        (-t - c / w).exp() / w
    };
    let peak = (c.sqrt() - x).max(0.0);
    let breaks = graded_breaks(x.min(1.0), peak, 60.0 + peak);
    Ok((-x).exp() * integrate(f, &breaks, QuadSettings::rel(1e-15))?.value)
}

// 0, then geometric from `scale/4` up to `end`, with `extra` inserted.
pub(crate) fn graded_breaks(scale: f64, extra: f64, end: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut s = 0.25 * scale;
    while s < end {
        b.push(s);
        s *= 2.0;
    }
    b.push(end);
    if extra > 0.0 && extra < end {
        b.push(extra);
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    b
}

pub(crate) fn yukawa3d_screened(r: f64, eps: f64, lambda: f64) -> Result<f64> {
    // The closed form cancels as r -> 0.
    if r < 0.1 * eps {
        yukawa3d_screened_heat(r, eps, lambda)
    } else {
        Ok(yukawa3d_screened_closed(r, eps, lambda))
    }
}

// (4 pi)^{-3/2} int_tau^inf s^{-3/2} exp(-r^2/4s - lambda^2 s) ds with s = tau e^v.
fn yukawa3d_screened_heat(r: f64, eps: f64, lambda: f64) -> Result<f64> {
    let tau = 0.25 * eps * eps;
    let lt = lambda * lambda * tau;
    let f = |v: f64| {
        let s = v.exp();
        (-0.5 * v - r * r / (4.0 * tau * s) - lt * s).exp()
    };
    let v_end = 80f64.min((45.0 / lt).ln().max(1.0));
    let mut breaks: Vec<f64> = (0..=v_end.ceil() as usize)
        .map(|i| (i as f64).min(v_end))
        .collect();
    breaks.dedup();
    let val = integrate(f, &breaks, QuadSettings::rel(1e-15))?.value;
    Ok(val / ((4.0 * PI).powf(1.5) * tau.sqrt()))
}

fn yukawa3d_screened_closed(r: f64, eps: f64, lambda: f64) -> f64 {
    let x = r / eps;
    let half = 0.5 * lambda * eps;
    let t1 = (-lambda * r).exp() * erfc(half - x);
    let t2 = (-half * half - x * x).exp() * erfcx(half + x);
    (t1 - t2) / (8.0 * PI * r)
}

/// Base kernel of the quasi-2D dipolar interaction.
fn ddiq_base(r: f64, eta: f64) -> f64 {
    let x = r * r / (4.0 * eta * eta);
    // bessel_k0e only fails for x <= 0, excluded by the caller.
    bessel_k0e(x).unwrap_or(f64::INFINITY) / ((2.0 * PI).powf(1.5) * eta)
}

fn gh64() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_hermite(GH_NODES))
}

// U^eps(r) = int g(z) erf(rho/eps) / (2 pi rho) dz, g the N(0, eta^2) density, rho = |(r, z)|.
fn ddiq_screened_fsa(r: f64, eps: f64, eta: f64) -> f64 {
    let (u, w) = gh64();
    let s = 2.0 * eta * eta;
    let mut sum = 0.0;
    for (ui, wi) in u.iter().zip(w) {
        let rho = (r * r + s * ui * ui).sqrt();
        let x = rho / eps;
        let g = if x == 0.0 {
            2.0 * FRAC_1_SQRT_PI
        } else {
            erf(x) / x
        };
        sum += wi * g;
    }
    sum / (SQRT_PI * 2.0 * PI * eps)
}

// (2/(4 pi)^{3/2}) int_{A}^inf e^{-w} / sqrt(w (tau A + eta^2 w / 2)) dw with A = r^2/eps^2.
fn ddiq_screened_residual(r: f64, eps: f64, eta: f64) -> Result<f64> {
    let a = (r / eps) * (r / eps);
    let tau = 0.25 * eps * eps;
    let f = |t: f64| {
        let w = a + t;
        (-t).exp() / (w * (tau * a + 0.5 * eta * eta * w)).sqrt()
    };
    let breaks = graded_breaks(a.min(1.0), 0.0, 60.0);
    let v = integrate(f, &breaks, QuadSettings::rel(1e-15))?.value;
    Ok(2.0 * (-a).exp() * v / (4.0 * PI).powf(1.5))
}

/// Evaluates `k -> (U - U^eps)^(k)` in the selected mode.
#[derive(Debug, Clone)]
pub struct ResidualFt {
    pub desc: KernelDescriptor,
    pub eps: f64,
    pub r_cut: f64,
    pub k_switch: f64,
    pub settings: QuadSettings,
}

impl ResidualFt {
    pub fn new(desc: KernelDescriptor, eps: f64, r0: f64) -> Self {
        let edge = desc.window_edges(eps).map_or(0.0, |(_, b)| b);
        Self {
            desc,
            eps,
            r_cut: (r0 + 40.0 * eps).max(edge + 40.0 * eps),
            k_switch: K_SWITCH / eps,
            settings: QuadSettings::rel(1e-14),
        }
    }

    pub fn eval(&self, k: f64) -> Result<f64> {
        match self.desc.mode {
            ResidualFtMode::Analytic => Ok(self
                .desc
                .residual_ft_analytic(k, self.eps)
                .expect("analytic mode is only set when a closed form exists")),
            ResidualFtMode::RadialQuadrature => self.quadrature(k),
        }
    }

    /// Radial transform of the residual: `2 pi int f J0(kr) r dr` in 2D, `4 pi int f sinc(kr) r^2 dr` in 3D.
    pub fn quadrature(&self, k: f64) -> Result<f64> {
        let k = k.abs();
        let eps = self.eps;
        let sig = self.desc.significant_radius(eps).min(self.r_cut);
        let mut step = 0.5 * eps;
        if k > 0.0 {
            step = step.min(PI / k);
        }
        let mut breaks = Vec::new();
        let mut r = 0.0;
        while r < sig {
            breaks.push(r);
            r += step;
        }
        if let Some((a, b)) = self.desc.window_edges(eps) {
            breaks.extend([a, b]);
        }
        breaks.push(sig);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * eps);
        if self.r_cut > sig * (1.0 + 1e-12) {
            breaks.push(self.r_cut);
        }
        let desc = self.desc;
        let value = match desc.dim() {
            2 => {
                let f = |r: f64| {
                    if r == 0.0 {
                        return 0.0;
                    }
                    desc.residual_value(r, eps).unwrap_or(f64::NAN) * bessel_j0(k * r) * r
                };
                2.0 * PI * integrate(f, &breaks, self.settings)?.value
            }
            _ => {
                let f = |r: f64| {
                    if r == 0.0 {
                        return 0.0;
                    }
                    let kr = k * r;
                    let sinc = if kr < 1e-8 {
                        1.0 - kr * kr / 6.0
                    } else {
                        kr.sin() / kr
                    };
                    desc.residual_value(r, eps).unwrap_or(f64::NAN) * sinc * r * r
                };
                4.0 * PI * integrate(f, &breaks, self.settings)?.value
            }
        };
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kernels() -> Vec<Kernel> {
        KERNEL_NAMES
            .iter()
            .map(|n| Kernel::from_name(n, 1.0, 1.0 / 32f64.sqrt()).unwrap())
            .collect()
    }

    fn log_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn kernel_values_from_table() {
        let c3 = KernelDescriptor::new(Kernel::Coulomb3d);
        assert!(rel(c3.kernel_value(1.0).unwrap(), 1.0 / (4.0 * PI)) < 1e-15);
        let b3 = KernelDescriptor::new(Kernel::Biharmonic3d);
        assert!(rel(b3.kernel_value(2.0).unwrap(), 1.0 / (4.0 * PI)) < 1e-15);
        let p2 = KernelDescriptor::new(Kernel::Poisson2d);
        assert_eq!(p2.kernel_value(1.0).unwrap(), 0.0);
        assert!(matches!(
            p2.kernel_value(0.0),
            Err(Error::Singularity { .. })
        ));
        assert_eq!(
            KernelDescriptor::new(Kernel::Biharmonic2d)
                .kernel_value(0.0)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn fsa_limits_at_origin() {
        let eps = 0.7;
        let at0 = |k: Kernel| KernelDescriptor::new(k).fsa_value(0.0, eps).unwrap();
        assert!(rel(at0(Kernel::Coulomb3d), 1.0 / (2.0 * PI.powf(1.5) * eps)) < 1e-15);
        assert!(rel(at0(Kernel::Coulomb2d), 1.0 / (PI.powf(1.5) * eps)) < 1e-15);
        assert!(
            rel(
                at0(Kernel::Poisson2d),
                (EULER_GAMMA - 2.0 * eps.ln()) / (4.0 * PI)
            ) < 1e-15
        );
        assert_eq!(at0(Kernel::Biharmonic2d), 0.0);
        assert_eq!(at0(Kernel::Biharmonic3d), 0.0);
        let w = KernelDescriptor::new(Kernel::Yukawa2d { lambda: 1.0 })
            .with_form(FsaForm::WindowedErf)
            .unwrap();
        assert_eq!(w.fsa_value(0.0, eps).unwrap(), 0.0);
        assert_eq!(w.fsa_value(0.99 * eps, eps).unwrap(), 0.0);
    }

    #[test]
    fn fsa_is_continuous_at_origin() {
        for k in all_kernels() {
            let d = KernelDescriptor::new(k);
            let eps = 1.0;
            let v0 = d.fsa_value(0.0, eps).unwrap();
            let v1 = d.fsa_value(1e-7, eps).unwrap();
            assert!(
                (v0 - v1).abs() <= 1e-12 * v0.abs().max(1e-3),
                "{k}: {v0} vs {v1}"
            );
        }
    }

    #[test]
    fn fsa_matches_kernel_in_far_field() {
        let eps = 1.0;
        for k in all_kernels() {
            let d = KernelDescriptor::new(k);
            for r in [8.7, 10.0, 15.0] {
                let u = d.kernel_value(r).unwrap();
                let ue = d.fsa_value(r, eps).unwrap();
                assert!(
                    (u - ue).abs() <= 1e-15 * u.abs(),
                    "{k} r = {r}: {u} vs {ue}"
                );
            }
        }
        // 4 pi r |U - U^eps| = erfc(r/eps) for the Coulomb kernel.
        let c3 = KernelDescriptor::new(Kernel::Coulomb3d);
        assert!(4.0 * PI * 8.7 * c3.residual_value(8.7, 1.0).unwrap() < 1e-33);
    }

    #[test]
    fn poisson_fsa_at_eps() {
        let eps: f64 = 0.8;
        let d = KernelDescriptor::new(Kernel::Poisson2d);
        let want = -(eps.ln() + 0.5 * exp1(1.0).unwrap()) / (2.0 * PI);
        assert!(rel(d.fsa_value(eps, eps).unwrap(), want) < 1e-15);
    }

    #[test]
    fn residual_is_difference() {
        let eps = 1.0;
        for k in all_kernels() {
            for form in [k.default_form(), FsaForm::WindowedErf] {
                let d = KernelDescriptor::new(k).with_form(form).unwrap();
                for r in [0.3, 0.9, 1.7, 2.5, 4.0] {
                    let u = d.kernel_value(r).unwrap();
                    let diff = u - d.fsa_value(r, eps).unwrap();
                    let res = d.residual_value(r, eps).unwrap();
                    assert!(
                        (diff - res).abs() <= 2e-15 * u.abs().max(1e-2),
                        "{k}/{form:?} r = {r}: {diff} vs {res}"
                    );
                }
            }
        }
    }

    #[test]
    fn yukawa3d_screened_branches_agree() {
        let (eps, lambda) = (1.0, 1.3);
        for r in [0.1, 0.3, 1.0] {
            let a = yukawa3d_screened_heat(r * eps, eps, lambda).unwrap();
            let b = yukawa3d_screened_closed(r * eps, eps, lambda);
            assert!(rel(a, b) < 1e-14, "r = {r}: {a} vs {b}");
        }
        // r = 0 value: (4 pi)^{-3/2} (2 tau^{-1/2} e^{-l^2 tau} - 2 l sqrt(pi) erfc(l sqrt(tau))).
        let tau: f64 = 0.25;
        let want = (2.0 / tau.sqrt() * (-lambda * lambda * tau).exp()
            - 2.0 * lambda * SQRT_PI * erfc(lambda * tau.sqrt()))
            / (4.0 * PI).powf(1.5);
        assert!(rel(yukawa3d_screened(0.0, eps, lambda).unwrap(), want) < 1e-14);
    }

    #[test]
    fn yukawa2d_screened_parts_sum_to_kernel() {
        let d = KernelDescriptor::new(Kernel::Yukawa2d { lambda: 0.8 });
        for r in [0.05, 0.5, 0.999, 1.0, 2.0, 6.0] {
            let u = d.kernel_value(r).unwrap();
            let s = d.fsa_value(r, 1.0).unwrap() + d.residual_value(r, 1.0).unwrap();
            assert!(rel(s, u) < 1e-14, "r = {r}");
        }
        // At r = 0 the smooth part is E1(lambda^2 eps^2 / 4) / (4 pi).
        let want = exp1(0.16).unwrap() / (4.0 * PI);
        assert!(rel(d.fsa_value(0.0, 1.0).unwrap(), want) < 1e-15);
    }

    #[test]
    fn ddiq_base_matches_direct_integral() {
        let eta = 1.0 / 32f64.sqrt();
        for r in [0.05, 0.3, 1.0, 4.0] {
            let f = |s: f64| (-0.5 * s * s).exp() / (r * r + eta * eta * s * s).sqrt();
            let v = integrate(
                f,
                &[-40.0, -5.0, -1.0, 0.0, 1.0, 5.0, 40.0],
                QuadSettings::rel(1e-15),
            )
            .unwrap();
            let want = v.value / (2.0 * PI).powf(1.5);
            assert!(rel(ddiq_base(r, eta), want) < 1e-13, "r = {r}");
        }
    }

    #[test]
    fn ddiq_screened_fsa_matches_heat_integral() {
        // U^eps = 2 int_tau^inf (4 pi s)^{-3/2} e^{-r^2/4s} (1 + eta^2/2s)^{-1/2} ds, s = tau e^v.
        let (eps, eta) = (1.0, 1.0 / 32f64.sqrt());
        let tau = 0.25 * eps * eps;
        for r in [0.0, 0.4, 1.5, 3.0] {
            let f = |v: f64| {
                let s = tau * v.exp();
                2.0 * (4.0 * PI * s).powf(-1.5) * (-r * r / (4.0 * s)).exp()
                    / (1.0 + eta * eta / (2.0 * s)).sqrt()
                    * s
            };
            let breaks: Vec<f64> = (0..=90).map(|i| i as f64).collect();
            let want = integrate(f, &breaks, QuadSettings::rel(1e-15))
                .unwrap()
                .value;
            let got = ddiq_screened_fsa(r, eps, eta);
            assert!(rel(got, want) < 1e-13, "r = {r}: {got} vs {want}");
        }
    }

    #[test]
    fn analytic_ft_reference_values() {
        let c3 = KernelDescriptor::new(Kernel::Coulomb3d);
        assert!(rel(c3.residual_ft_analytic(0.0, 1.3).unwrap(), 0.25 * 1.69) < 1e-15);
        assert!(
            rel(
                c3.residual_ft_analytic(2.0, 1.0).unwrap(),
                (1.0 - (-1f64).exp()) / 4.0
            ) < 1e-15
        );
        let c2 = KernelDescriptor::new(Kernel::Coulomb2d);
        assert!(rel(c2.residual_ft_analytic(0.0, 0.5).unwrap(), 0.5 / SQRT_PI) < 1e-15);
        let b2 = KernelDescriptor::new(Kernel::Biharmonic2d);
        assert!(rel(b2.residual_ft_analytic(0.0, 1.0).unwrap(), 1.0 / 32.0) < 1e-15);
        let b3 = KernelDescriptor::new(Kernel::Biharmonic3d);
        assert!(rel(b3.residual_ft_analytic(0.0, 1.0).unwrap(), 3.0 / 32.0) < 1e-15);
    }

    #[test]
    fn analytic_ft_continuous_at_switch() {
        let eps = 0.9;
        for k in all_kernels() {
            let d = KernelDescriptor::new(k);
            for ks in [K_SWITCH / eps, 2.0 / eps] {
                let lo = d.residual_ft_analytic(ks * (1.0 - 1e-13), eps).unwrap();
                let hi = d.residual_ft_analytic(ks * (1.0 + 1e-13), eps).unwrap();
                assert!(rel(lo, hi) < 1e-12, "{k} at {ks}: {lo} vs {hi}");
            }
        }
    }

    #[test]
    fn analytic_ft_is_even() {
        for k in all_kernels() {
            let d = KernelDescriptor::new(k);
            for kk in [0.3, 2.0, 7.0] {
                assert_eq!(
                    d.residual_ft_analytic(kk, 1.0),
                    d.residual_ft_analytic(-kk, 1.0)
                );
            }
        }
    }

    #[test]
    fn biharmonic_ft_bounded_near_zero() {
        for k in [Kernel::Biharmonic2d, Kernel::Biharmonic3d] {
            let d = KernelDescriptor::new(k);
            let lim = d.residual_ft_analytic(0.0, 1.0).unwrap();
            for e in 1..=6 {
                let v = d.residual_ft_analytic(10f64.powi(-e), 1.0).unwrap();
                assert!(v.is_finite() && rel(v, lim) < 1e-2, "{k} k = 1e-{e}: {v}");
            }
        }
    }

    #[test]
    fn quadrature_reproduces_analytic_ft() {
        let (eps, r0) = (1.0, 16.0);
        for k in all_kernels() {
            let d = KernelDescriptor::new(k);
            let ft = d.residual_ft(eps, r0);
            for kk in log_sweep(1e-3, 8.0, 50) {
                let a = d.residual_ft_analytic(kk, eps).unwrap();
                let q = ft.quadrature(kk).unwrap();
                assert!(rel(q, a) < 1e-11, "{k} k = {kk}: quad {q} vs analytic {a}");
            }
        }
    }

    // Composite Simpson on a fine uniform mesh, no adaptivity.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn yukawa3d_quadrature_matches_simpson() {
        let d = KernelDescriptor::new(Kernel::Yukawa3d { lambda: 1.0 })
            .with_mode(ResidualFtMode::RadialQuadrature)
            .unwrap();
        let eps = 1.0;
        let ft = d.residual_ft(eps, 24.0);
        for i in 0..20 {
            let k = 0.05 + 0.4 * i as f64;
            let f = |r: f64| {
                if r == 0.0 {
                    // r^2 * residual -> r/(4 pi) * (erfc(-l eps/2) + ...) -> 0
                    return 0.0;
                }
                let kr = k * r;
                d.residual_value(r, eps).unwrap() * r * r * kr.sin() / kr
            };
            let want = 4.0 * PI * simpson(f, 0.0, 12.0, 200_000);
            let got = ft.quadrature(k).unwrap();
            assert!(rel(got, want) < 1e-12, "k = {k}: {got} vs {want}");
        }
    }

    #[test]
    fn form_and_mode_validation() {
        let p = KernelDescriptor::new(Kernel::Poisson2d);
        assert!(p.with_form(FsaForm::ErfMultiplier).is_err());
        assert!(p.with_form(FsaForm::WindowedErf).is_ok());
        let w = KernelDescriptor::new(Kernel::Yukawa2d { lambda: 1.0 })
            .with_form(FsaForm::WindowedErf)
            .unwrap();
        assert_eq!(w.mode, ResidualFtMode::RadialQuadrature);
        assert!(w.with_mode(ResidualFtMode::Analytic).is_err());
        assert!(Kernel::from_name("yukawa3d", -1.0, 1.0).is_err());
        assert!(Kernel::from_name("nope", 1.0, 1.0).is_err());
    }
}
