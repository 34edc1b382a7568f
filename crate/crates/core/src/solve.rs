//! Applying a plan to densities, and the dipolar drivers built on top of it.

use crate::error::{Error, Result};
use crate::exec;
use crate::fft::FftPlan;
use crate::grid::{Field, GridSpec, SUPPORT_THRESHOLD};
use crate::kernels::Kernel;
use crate::plan::ConvPlan;
use num_complex::Complex64;

/// Allowed `max |Im| / max |Re|` of the restricted convolution.
pub const IMAG_RESIDUE_LIMIT: f64 = 1e-12;

/// Copy `values` (N^d) into the corner `[0, N)^d` of a zeroed `(2N)^d` buffer.
fn pad(grid: &GridSpec, values: &[f64]) -> Vec<Complex64> {
    let n = grid.n;
    let m = 2 * n;
    let dim = grid.dim();
    let mut buf = vec![Complex64::default(); m.pow(dim as u32)];
    exec::for_each_chunk_mut(&mut buf, m, |row, chunk| {
        // Leading (d-1) padded indices of this row, mapped to a source row.
        let mut rest = row;
        let mut src_row = 0;
        let mut mult = 1;
        for _ in 0..dim - 1 {
            let q = rest % m;
            rest /= m;
            if q >= n {
                return;
            }
            src_row += q * mult;
            mult *= n;
        }
        let src = &values[src_row * n..(src_row + 1) * n];
        for (z, &v) in chunk[..n].iter_mut().zip(src) {
            *z = Complex64::new(v, 0.0);
        }
    });
    buf
}

/// Pull `[0, N)^d` out of a padded buffer; returns (real part, max |Re|, max |Im|).
fn restrict(grid: &GridSpec, buf: &[Complex64]) -> (Vec<f64>, f64, f64) {
    let n = grid.n;
    let m = 2 * n;
    let dim = grid.dim();
    let rows = n.pow(dim as u32 - 1);
    let parts = exec::map_range(rows, |r| {
        let mut rest = r;
        let mut pos = 0;
        let mut mult = m;
        for _ in 0..dim - 1 {
            pos += (rest % n) * mult;
            rest /= n;
            mult *= m;
        }
        let row = &buf[pos..pos + n];
        let re: Vec<f64> = row.iter().map(|z| z.re).collect();
        let max_re = re.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_im = row.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
        (re, max_re, max_im)
    });
    let mut out = Vec::with_capacity(grid.len());
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for (re, a, b) in parts {
        out.extend_from_slice(&re);
        max_re = max_re.max(a);
        max_im = max_im.max(b);
    }
    (out, max_re, max_im)
}

/// `Phi_n = sum_{n'} T_{n-n'} rho_{n'}` via `iFFT(T_hat * FFT(padded rho))`.
pub fn apply(plan: &ConvPlan, rho: &Field) -> Result<Field> {
    if !plan.grid.matches(&rho.grid) {
        return Err(Error::GridMismatch(format!(
            "density grid (N={}, L={}, gamma={:?}) differs from plan grid (N={}, L={}, gamma={:?})",
            rho.grid.n,
            rho.grid.domain.l,
            rho.grid.domain.gamma,
            plan.grid.n,
            plan.grid.domain.l,
            plan.grid.domain.gamma
        )));
    }
    let fft = plan.fft();
    let mut buf = pad(&rho.grid, &rho.values);
    fft.forward(&mut buf)?;
    let m = plan.side();
    let t_hat = &plan.t_hat;
    exec::for_each_chunk_mut(&mut buf, m, |row, chunk| {
        for (z, t) in chunk.iter_mut().zip(&t_hat[row * m..(row + 1) * m]) {
            *z *= t;
        }
    });
    fft.inverse(&mut buf)?;
    let (values, max_re, max_im) = restrict(&rho.grid, &buf);
    let limit = IMAG_RESIDUE_LIMIT * max_re;
    if max_im > limit {
        return Err(Error::ImaginaryResidue {
            residue: max_im,
            limit,
        });
    }
    Ok(Field {
        grid: rho.grid.clone(),
        values,
    })
}

/// One term `coef * prod_j (i k_j)^{powers_j}` of a constant-coefficient operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 3],
}

/// Differential operator with constant coefficients, as a polynomial in `i k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

impl DiffOperator {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            terms: vec![Monomial {
                coef: 1.0,
                powers: [0; 3],
            }],
        }
    }

    /// `(a . grad)(b . grad)`.
    pub fn directional(a: &[f64], b: &[f64]) -> Self {
        let dim = a.len();
        assert_eq!(dim, b.len());
        let mut terms = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let coef = a[i] * b[j];
                if coef != 0.0 {
                    let mut powers = [0; 3];
                    powers[i] += 1;
                    powers[j] += 1;
                    terms.push(Monomial { coef, powers });
                }
            }
        }
        Self { dim, terms }
    }

    pub fn laplacian(dim: usize) -> Self {
        let terms = (0..dim)
            .map(|j| {
                let mut powers = [0; 3];
                powers[j] = 2;
                Monomial { coef: 1.0, powers }
            })
            .collect();
        Self { dim, terms }
    }

    /// `a * self + b * other`.
    pub fn combine(self, a: f64, other: DiffOperator, b: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut terms: Vec<Monomial> = self
            .terms
            .into_iter()
            .map(|t| Monomial {
                coef: a * t.coef,
                ..t
            })
            .collect();
        terms.extend(other.terms.into_iter().map(|t| Monomial {
            coef: b * t.coef,
            ..t
        }));
        Self {
            dim: self.dim,
            terms,
        }
    }

    /// Symbol at the signed wavenumbers `k`; odd powers vanish on Nyquist bins.
    fn symbol(&self, k: &[f64; 3], nyquist: &[bool; 3]) -> Complex64 {
        let mut total = Complex64::default();
        for t in &self.terms {
            let mut v = Complex64::new(t.coef, 0.0);
            for j in 0..self.dim {
                let p = t.powers[j];
                if p == 0 {
                    continue;
                }
                if p % 2 == 1 && nyquist[j] {
                    v = Complex64::default();
                    break;
                }
                v *= Complex64::new(0.0, k[j]).powu(p);
            }
            total += v;
        }
        total
    }
}

/// Apply `op` spectrally on the two-fold padded grid and restrict back.
pub fn fourier_derivative_source(rho: &Field, op: &DiffOperator) -> Result<Field> {
    let grid = &rho.grid;
    if op.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "{}D operator on a {}D grid",
            op.dim,
            grid.dim()
        )));
    }
    let ratio = rho.boundary_ratio();
    if ratio >= SUPPORT_THRESHOLD {
        log::warn!("derivative source: density reaches the boundary (boundary/max = {ratio:.3e})");
    }
    let n = grid.n;
    let m = 2 * n;
    let dim = grid.dim();
    let fft = FftPlan::new(&vec![m; dim])?;
    let mut buf = pad(grid, &rho.values);
    fft.forward(&mut buf)?;
    let wavenumber = |axis: usize, q: usize| {
        let signed = if q < n { q as f64 } else { q as f64 - m as f64 };
        2.0 * std::f64::consts::PI * signed / (m as f64 * grid.h[axis])
    };
    exec::for_each_chunk_mut(&mut buf, m, |row, chunk| {
        let mut k = [0.0; 3];
        let mut nyq = [false; 3];
        let mut rest = row;
        for axis in (0..dim - 1).rev() {
            let q = rest % m;
            rest /= m;
            k[axis] = wavenumber(axis, q);
            nyq[axis] = q == n;
        }
        let last = dim - 1;
        for (q, z) in chunk.iter_mut().enumerate() {
            k[last] = wavenumber(last, q);
            nyq[last] = q == n;
            *z *= op.symbol(&k, &nyq);
        }
    });
    fft.inverse(&mut buf)?;
    let (values, _, _) = restrict(grid, &buf);
    Ok(Field {
        grid: grid.clone(),
        values,
    })
}

/// Dipole orientations and the quasi-2D confinement width.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleConfig {
    pub n: [f64; 3],
    pub m: [f64; 3],
    pub eta: f64,
}

fn unit(v: [f64; 3], what: &str) -> Result<[f64; 3]> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{what} must be a nonzero finite vector"
        )));
    }
    if (norm - 1.0).abs() > 1e-12 {
        log::debug!("normalizing {what}: |{what}| = {norm}");
    }
    Ok(v.map(|x| x / norm))
}

impl DipoleConfig {
    /// Normalizes `n` and `m`.
    pub fn new(n: [f64; 3], m: [f64; 3], eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {eta}"
            )));
        }
        Ok(Self {
            n: unit(n, "n")?,
            m: unit(m, "m")?,
            eta,
        })
    }

    pub fn n_perp(&self) -> [f64; 2] {
        [self.n[0], self.n[1]]
    }

    pub fn n3(&self) -> f64 {
        self.n[2]
    }

    pub fn m_dot_n(&self) -> f64 {
        self.n.iter().zip(&self.m).map(|(a, b)| a * b).sum()
    }

    /// `-(3/2)(d_{n_perp n_perp} - n3^2 Laplacian_perp)` on a 2D grid.
    pub fn quasi2d_operator(&self) -> DiffOperator {
        let np = self.n_perp();
        DiffOperator::directional(&np, &np).combine(
            -1.5,
            DiffOperator::laplacian(2),
            1.5 * self.n3() * self.n3(),
        )
    }
}

/// `Phi = -(m.n) rho - 3 (1/(4 pi r)) * (d_n d_m rho)`.
pub fn solve_ddi3d(plan: &ConvPlan, rho: &Field, cfg: &DipoleConfig) -> Result<Field> {
    if !matches!(plan.kernel.kernel, Kernel::Coulomb3d | Kernel::Ddi3d) {
        return Err(Error::InvalidParameter(format!(
            "3D dipolar solve needs a coulomb3d/ddi3d plan, got {}",
            plan.kernel.name()
        )));
    }
    let source = fourier_derivative_source(rho, &DiffOperator::directional(&cfg.n, &cfg.m))?;
    let mut phi = apply(plan, &source)?;
    let mn = cfg.m_dot_n();
    for (p, r) in phi.values.iter_mut().zip(&rho.values) {
        *p = -mn * r - 3.0 * *p;
    }
    Ok(phi)
}

/// `Phi = Ut * (-(3/2)(d_{n_perp n_perp} - n3^2 Laplacian_perp) rho)`.
pub fn solve_ddi_quasi2d(plan: &ConvPlan, rho: &Field, cfg: &DipoleConfig) -> Result<Field> {
    match plan.kernel.kernel {
        Kernel::DdiQuasi2d { eta } if (eta - cfg.eta).abs() <= 1e-15 * eta => {}
        other => {
            return Err(Error::InvalidParameter(format!(
                "quasi-2D dipolar solve needs a ddiq2d plan with eta = {}, got {other}",
                cfg.eta
            )))
        }
    }
    let source = fourier_derivative_source(rho, &cfg.quasi2d_operator())?;
    apply(plan, &source)
}

/// Potential for `plan`'s kernel: the dipolar drivers for `ddi3d`/`ddiq2d`, plain convolution otherwise.
pub fn solve_for_kernel(
    plan: &ConvPlan,
    rho: &Field,
    dipoles: Option<&DipoleConfig>,
) -> Result<Field> {
    let need = |name: &str| Error::InvalidParameter(format!("{name} needs dipole orientations"));
    match plan.kernel.kernel {
        Kernel::Ddi3d => solve_ddi3d(plan, rho, dipoles.ok_or_else(|| need("ddi3d"))?),
        Kernel::DdiQuasi2d { .. } => {
            solve_ddi_quasi2d(plan, rho, dipoles.ok_or_else(|| need("ddiq2d"))?)
        }
        _ => apply(plan, rho),
    }
}
