//! Tail certification and selection of the split parameter eps.

use crate::error::{Error, Result};
use crate::kernels::KernelDescriptor;
use crate::quad::{integrate, QuadSettings};

/// Default tail tolerance for double-precision runs.
pub const DEFAULT_TOL: f64 = 1e-16;

/// Tail integrals are truncated at `r0 + TAIL_SPAN * eps`.
pub const TAIL_SPAN: f64 = 40.0;

/// Lower probe of the bisection bracket, as `r0 / LOWEST_C`.
pub const LOWEST_C: f64 = 1e4;

/// Upper bracket, as `r0 / HIGHEST_C`.
pub const HIGHEST_C: f64 = 4.0;

/// Relative bracket width at which bisection stops.
const BISECTION_WIDTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub eps: f64,
    pub r0: f64,
    pub tol: f64,
    pub tail_value: f64,
    /// `r0 / eps`.
    pub c: f64,
    /// Whether `tail_value <= tol`.
    pub certified: bool,
    /// `r0 / eps*` at the feasibility boundary, when found by bisection.
    pub critical_c: Option<f64>,
}

impl EpsilonReport {
    /// `key=value` lines.
    pub fn to_lines(&self) -> String {
        let mut s = format!(
            "eps={}\nr0={}\ntol={:e}\ntail={:e}\nc={}\ncertified={}\n",
            self.eps, self.r0, self.tol, self.tail_value, self.c, self.certified
        );
        if let Some(cc) = self.critical_c {
            s.push_str(&format!("critical_c={cc}\n"));
        }
        s
    }
}

/// `int_{r0}^{r0 + 40 eps} |U - U^eps|(r) r^{d-1} dr`.
pub fn tail_integral(desc: &KernelDescriptor, eps: f64, r0: f64) -> Result<f64> {
    if !(eps > 0.0 && r0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail integral needs eps > 0 and r0 > 0, got eps = {eps}, r0 = {r0}"
        )));
    }
    let power = desc.dim() as i32 - 1;
    let breaks: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, TAIL_SPAN]
        .iter()
        .map(|t| r0 + t * eps)
        .collect();
    let f = |r: f64| desc.residual_value(r, eps).map_or(f64::NAN, f64::abs) * r.powi(power);
    let settings = QuadSettings {
        abs_tol: 1e-300,
        rel_tol: 1e-8,
        max_intervals: 2000,
    };
    Ok(integrate(f, &breaks, settings)?.value)
}

/// Report for a user-fixed eps; `certified` says whether the tail meets `tol`.
pub fn certify(desc: &KernelDescriptor, eps: f64, r0: f64, tol: f64) -> Result<EpsilonReport> {
    let tail = tail_integral(desc, eps, r0)?;
    Ok(EpsilonReport {
        eps,
        r0,
        tol,
        tail_value: tail,
        c: r0 / eps,
        certified: tail <= tol,
        critical_c: None,
    })
}

/// Largest eps in `(0, r0/4]` with tail `<= tol`, to two significant digits, rounded down.
pub fn choose_epsilon(desc: &KernelDescriptor, r0: f64, tol: f64) -> Result<EpsilonReport> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must lie in (0, 1), got {tol}"
        )));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r0 must be positive, got {r0}"
        )));
    }
    let (boundary, _) = bisect_boundary(|e| tail_integral(desc, e, r0), r0, tol)?;
    let eps = round_down_2sig(boundary);
    let mut report = certify(desc, eps, r0, tol)?;
    report.critical_c = Some(r0 / boundary);
    Ok(report)
}

/// Bisection on a tail function; returns the boundary eps and the probe trace.
pub(crate) fn bisect_boundary<F>(tail: F, r0: f64, tol: f64) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = r0 / LOWEST_C;
    let mut hi = r0 / HIGHEST_C;
    let t_lo = tail(lo)?;
    let mut trace = vec![(lo, t_lo)];
    if t_lo > tol {
        return Err(Error::NoFeasibleEps {
            eps: lo,
            tail: t_lo,
            tol,
        });
    }
    let t_hi = tail(hi)?;
    trace.push((hi, t_hi));
    if t_hi <= tol {
        check_monotone(&trace)?;
        return Ok((hi, trace));
    }
    while hi - lo > BISECTION_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        let t = tail(mid)?;
        trace.push((mid, t));
        if t <= tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    check_monotone(&trace)?;
    Ok((lo, trace))
}

fn check_monotone(trace: &[(f64, f64)]) -> Result<()> {
    let mut sorted = trace.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        // Quadrature is only asked for 1e-8 relative accuracy.
        if w[1].1 < w[0].1 * (1.0 - 1e-6) {
            return Err(Error::NonMonotoneTail {
                eps_lo: w[0].0,
                tail_lo: w[0].1,
                eps_hi: w[1].0,
                tail_hi: w[1].1,
            });
        }
    }
    Ok(())
}

/// Round a positive number down to two significant digits.
pub fn round_down_2sig(x: f64) -> f64 {
    let e = x.log10().floor() as i32 - 1;
    // Divide by an exact power of ten so 4.1 comes back as the literal 4.1.
    if e < 0 {
        let inv = 10f64.powi(-e);
        (x * inv * (1.0 + 1e-12)).floor() / inv
    } else {
        let scale = 10f64.powi(e);
        (x / scale * (1.0 + 1e-12)).floor() * scale
    }
}
