//! Precomputed convolution tensors.
//!
//! Logical tensor indices `n` run over `[-N, N-1]` per axis and are stored on the
//! `(2N)^d` circulant grid at position `n mod 2N`, last axis fastest. Both parts of
//! the tensor are radial, so they are sampled on the `(N+1)^d` table of absolute
//! indices and then scattered.

use crate::error::{Error, Result};
use crate::exec;
use crate::fft::{FftPlan, FftStats};
use crate::grid::GridSpec;
use crate::kernels::{KernelDescriptor, ResidualFt};
use crate::params::{self, EpsilonReport, DEFAULT_TOL};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

/// Real tensor on the `(2N)^d` circulant grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn side(&self) -> usize {
        2 * self.n
    }

    /// Flat storage position of logical index `idx`, each entry in `[-N, N-1]`.
    pub fn position(&self, idx: &[i64]) -> usize {
        assert_eq!(idx.len(), self.dim);
        let m = self.side() as i64;
        idx.iter().fold(0usize, |acc, &i| {
            assert!(
                i >= -(self.n as i64) && i < self.n as i64,
                "index {i} out of range"
            );
            acc * m as usize + i.rem_euclid(m) as usize
        })
    }

    pub fn get(&self, idx: &[i64]) -> f64 {
        self.data[self.position(idx)]
    }
}

/// How eps is obtained for a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsChoice {
    Fixed(f64),
    Auto { tol: f64 },
}

impl EpsChoice {
    /// Parses `1.0` or `auto:1e-16`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidParameter(format!("eps must be a number or auto:<tol>, got '{s}'"));
        if let Some(t) = s.strip_prefix("auto") {
            let tol = match t.strip_prefix(':') {
                Some(v) => v.parse().map_err(|_| bad())?,
                None if t.is_empty() => DEFAULT_TOL,
                None => return Err(bad()),
            };
            return Ok(EpsChoice::Auto { tol });
        }
        let eps: f64 = s.parse().map_err(|_| bad())?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(bad());
        }
        Ok(EpsChoice::Fixed(eps))
    }
}

/// Immutable precomputed spectrum `T_hat` plus its metadata.
#[derive(Debug)]
pub struct ConvPlan {
    pub grid: GridSpec,
    pub kernel: KernelDescriptor,
    pub eps: f64,
    pub eps_report: EpsilonReport,
    pub t_hat: Vec<Complex64>,
    /// Transforms executed while building `t_hat`.
    pub build_fft: FftStats,
    /// Total length of those transforms.
    pub build_fft_len: usize,
    fft: FftPlan,
}

impl ConvPlan {
    /// Shared transform plan on the padded grid.
    pub fn fft(&self) -> &FftPlan {
        &self.fft
    }

    pub fn side(&self) -> usize {
        2 * self.grid.n
    }
}

/// Values of `f(|v|^2)` on `(N+1)^d` absolute indices, `v_j = a_j * spacing_j`.
///
/// Squared axis terms are summed in sorted order so permuted tuples on equal
/// spacings hit the same key; `f` runs once per distinct radius.
pub(crate) fn radial_abs_table<F>(n: usize, spacing: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    let dim = spacing.len();
    let base = n + 1;
    let count = base.pow(dim as u32);
    let keys: Vec<u64> = exec::map_range(count, |t| {
        let mut terms = [0.0f64; 3];
        let mut rest = t;
        for j in (0..dim).rev() {
            let a = (rest % base) as f64;
            rest /= base;
            terms[j] = (a * spacing[j]) * (a * spacing[j]);
        }
        let terms = &mut terms[..dim];
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>().to_bits()
    });
    let mut unique = keys.clone();
    unique.sort_unstable();
    unique.dedup();
    let values: Vec<Result<f64>> = exec::map_slice(&unique, |b| f(f64::from_bits(*b)));
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(exec::map_range(count, |t| {
        values[unique.binary_search(&keys[t]).expect("key present")]
    }))
}

/// Visit every circulant position row by row, giving each entry's `(N+1)^d` table slot.
fn scatter_circulant<T, F>(n: usize, dim: usize, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(&mut T, usize) + Sync + Send,
{
    let m = 2 * n;
    let base = n + 1;
    let fold = |q: usize| q.min(m - q);
    exec::for_each_chunk_mut(out, m, |row, chunk| {
        let mut lead = 0;
        let mut rest = row;
        let mut mult = base;
        for _ in 0..dim - 1 {
            lead += fold(rest % m) * mult;
            rest /= m;
            mult *= base;
        }
        for (q, slot) in chunk.iter_mut().enumerate() {
            f(slot, lead + fold(q));
        }
    });
}

fn check_inputs(desc: &KernelDescriptor, grid: &GridSpec, eps: f64) -> Result<()> {
    if desc.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel {} is {}D but the grid is {}D",
            desc.name(),
            desc.dim(),
            grid.dim()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if let Some((_, b)) = desc.window_edges(eps) {
        if b >= grid.r0() {
            return Err(Error::WindowEdge {
                edge: b,
                r0: grid.r0(),
            });
        }
    }
    Ok(())
}

fn regular_table(desc: &KernelDescriptor, grid: &GridSpec, eps: f64) -> Result<Vec<f64>> {
    let cell: f64 = grid.h.iter().product();
    radial_abs_table(grid.n, &grid.h, |r2| {
        Ok(cell * desc.fsa_value(r2.sqrt(), eps)?)
    })
}

/// Fourier mesh spacing `pi / (2 L gamma_j)` per axis.
fn fourier_spacing(grid: &GridSpec) -> Vec<f64> {
    grid.domain
        .gamma
        .iter()
        .map(|g| std::f64::consts::PI / (2.0 * grid.domain.l * g))
        .collect()
}

fn spectrum_table(desc: &KernelDescriptor, grid: &GridSpec, eps: f64) -> Result<Vec<f64>> {
    let ft = ResidualFt::new(*desc, eps, grid.r0());
    radial_abs_table(grid.n, &fourier_spacing(grid), |k2| ft.eval(k2.sqrt()))
}

/// `T1_n = (prod_j h_j) U^eps(|n h|)` on `[-N, N-1]^d`.
pub fn build_regular_tensor(desc: &KernelDescriptor, grid: &GridSpec, eps: f64) -> Result<Tensor> {
    check_inputs(desc, grid, eps)?;
    let table = regular_table(desc, grid, eps)?;
    let mut data = vec![0.0; (2 * grid.n).pow(grid.dim() as u32)];
    scatter_circulant(grid.n, grid.dim(), &mut data, |v, t| *v = table[t]);
    Ok(Tensor {
        n: grid.n,
        dim: grid.dim(),
        data,
    })
}

/// Samples of the residual transform `W` on the Fourier mesh, circulant layout.
pub fn sample_residual_spectrum(
    desc: &KernelDescriptor,
    grid: &GridSpec,
    eps: f64,
) -> Result<Tensor> {
    check_inputs(desc, grid, eps)?;
    let table = spectrum_table(desc, grid, eps)?;
    let mut data = vec![0.0; (2 * grid.n).pow(grid.dim() as u32)];
    scatter_circulant(grid.n, grid.dim(), &mut data, |v, t| *v = table[t]);
    Ok(Tensor {
        n: grid.n,
        dim: grid.dim(),
        data,
    })
}

/// `T2 = (2N)^{-d} sum_p W(k_p) exp(i k_p . x_n)`.
pub fn build_fourier_tensor(desc: &KernelDescriptor, grid: &GridSpec, eps: f64) -> Result<Tensor> {
    let w = sample_residual_spectrum(desc, grid, eps)?;
    Ok(Tensor {
        data: inverse_real(&w)?,
        ..w
    })
}

fn inverse_real(t: &Tensor) -> Result<Vec<f64>> {
    let fft = FftPlan::new(&vec![t.side(); t.dim])?;
    let mut buf: Vec<Complex64> = t.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.inverse(&mut buf)?;
    Ok(buf.into_iter().map(|z| z.re).collect())
}

/// Resolve eps for a descriptor and grid, certifying the tail against `DEFAULT_TOL` when fixed.
pub fn resolve_eps(
    desc: &KernelDescriptor,
    grid: &GridSpec,
    choice: EpsChoice,
) -> Result<EpsilonReport> {
    match choice {
        EpsChoice::Fixed(eps) => {
            let report = params::certify(desc, eps, grid.r0(), DEFAULT_TOL)?;
            if !report.certified {
                log::warn!(
                    "eps = {eps} leaves tail {:.3e} above {:.0e} for R0 = {} (c = {:.3})",
                    report.tail_value,
                    DEFAULT_TOL,
                    grid.r0(),
                    report.c
                );
            }
            Ok(report)
        }
        EpsChoice::Auto { tol } => params::choose_epsilon(desc, grid.r0(), tol),
    }
}

/// Build `T_hat = FFT(T1) + W` on the `(2N)^d` grid with one forward transform.
///
/// `FFT(T2)` equals the sampled spectrum `W` exactly, so `T2` is never formed.
pub fn build_plan(desc: &KernelDescriptor, grid: &GridSpec, choice: EpsChoice) -> Result<ConvPlan> {
    if desc.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel {} is {}D but the grid is {}D",
            desc.name(),
            desc.dim(),
            grid.dim()
        )));
    }
    let report = resolve_eps(desc, grid, choice)?;
    build_plan_with_report(desc, grid, report)
}

fn build_plan_with_report(
    desc: &KernelDescriptor,
    grid: &GridSpec,
    report: EpsilonReport,
) -> Result<ConvPlan> {
    let eps = report.eps;
    check_inputs(desc, grid, eps)?;
    let (n, dim) = (grid.n, grid.dim());
    let fft = FftPlan::new(&vec![2 * n; dim])?;

    let regular = regular_table(desc, grid, eps)?;
    let mut t_hat = vec![Complex64::default(); fft.len()];
    scatter_circulant(n, dim, &mut t_hat, |z, t| {
        *z = Complex64::new(regular[t], 0.0)
    });
    drop(regular);
    fft.forward(&mut t_hat)?;

    let spectrum = spectrum_table(desc, grid, eps)?;
    scatter_circulant(n, dim, &mut t_hat, |z, t| z.re += spectrum[t]);

    let build_fft = fft.stats();
    let build_fft_len = (build_fft.forward + build_fft.inverse) * fft.len();
    log::debug!(
        "plan {} N={} eps={} built with {} transform(s) of length {}",
        desc.spec_string(),
        n,
        eps,
        build_fft.forward + build_fft.inverse,
        fft.len()
    );
    Ok(ConvPlan {
        grid: grid.clone(),
        kernel: *desc,
        eps,
        eps_report: report,
        t_hat,
        build_fft,
        build_fft_len,
        fft,
    })
}

const PLAN_MAGIC: &[u8; 4] = b"FSAP";
const PLAN_VERSION: u32 = 1;

/// Write the plan cache: magic, version, kernel identity, grid, eps, then `T_hat` as (re, im) pairs.
pub fn save_plan(plan: &ConvPlan, path: impl AsRef<Path>) -> Result<()> {
    let spec = plan.kernel.spec_string();
    let mut buf = Vec::with_capacity(64 + 16 * plan.t_hat.len());
    buf.extend_from_slice(PLAN_MAGIC);
    buf.extend_from_slice(&PLAN_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec.as_bytes());
    buf.extend_from_slice(&(plan.grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(plan.grid.n as u64).to_le_bytes());
    buf.extend_from_slice(&plan.grid.domain.l.to_le_bytes());
    for g in &plan.grid.domain.gamma {
        buf.extend_from_slice(&g.to_le_bytes());
    }
    buf.extend_from_slice(&plan.eps.to_le_bytes());
    for z in &plan.t_hat {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&buf)?;
    file.flush()?;
    Ok(())
}

/// Load a cached plan, checking that it was built for `desc`, `grid` and `eps`.
pub fn load_plan(
    path: impl AsRef<Path>,
    desc: &KernelDescriptor,
    grid: &GridSpec,
    eps: f64,
) -> Result<ConvPlan> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header = |m: &str| Error::MalformedHeader(m.to_string());
    let mut at = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let s = bytes
            .get(at..at + len)
            .ok_or_else(|| header("plan file ends inside the header"))?;
        at += len;
        Ok(s)
    };
    if take(4)? != PLAN_MAGIC {
        return Err(header("bad magic, expected FSAP"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != PLAN_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported plan version {version}"
        )));
    }
    let spec_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let spec = String::from_utf8(take(spec_len)?.to_vec())
        .map_err(|_| header("kernel id is not UTF-8"))?;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut gamma = Vec::with_capacity(dim.min(3));
    for _ in 0..dim.min(3) {
        gamma.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let file_eps = f64::from_le_bytes(take(8)?.try_into().unwrap());
    if spec != desc.spec_string() {
        return Err(Error::GridMismatch(format!(
            "plan was built for {spec}, requested {}",
            desc.spec_string()
        )));
    }
    if dim != grid.dim()
        || n != grid.n
        || l != grid.domain.l
        || gamma != grid.domain.gamma
        || file_eps != eps
    {
        return Err(Error::GridMismatch(
            "cached plan grid or eps differs from the request".into(),
        ));
    }
    let len = (2 * n).pow(dim as u32);
    let payload = &bytes[at..];
    if payload.len() != 16 * len {
        return Err(Error::TruncatedPayload {
            expected: 16 * len,
            found: payload.len(),
        });
    }
    let t_hat = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let report = params::certify(desc, eps, grid.r0(), DEFAULT_TOL)?;
    Ok(ConvPlan {
        grid: grid.clone(),
        kernel: *desc,
        eps,
        eps_report: report,
        t_hat,
        build_fft: FftStats::default(),
        build_fft_len: 0,
        fft: FftPlan::new(&vec![2 * n; dim])?,
    })
}
