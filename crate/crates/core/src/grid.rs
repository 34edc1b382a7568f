//! Domains, uniform anisotropic meshes, fields and the FSAD field file format.

use crate::error::{Error, Result};
use crate::exec;
use std::io::{Read, Write};
use std::path::Path;

/// Rectangular box `prod_j [-L gamma_j, L gamma_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub l: f64,
    pub gamma: Vec<f64>,
}

impl Domain {
    pub fn new(l: f64, gamma: Vec<f64>) -> Result<Self> {
        let dim = gamma.len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "L must be positive, got {l}"
            )));
        }
        if gamma[0] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma_1 must be 1, got {}",
                gamma[0]
            )));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "anisotropy entries must lie in (0, 1], got {g}"
            )));
        }
        Ok(Self { dim, l, gamma })
    }

    pub fn isotropic(dim: usize, l: f64) -> Result<Self> {
        Self::new(l, vec![1.0; dim])
    }

    /// `gamma_f = prod_j 1/gamma_j`.
    pub fn anisotropy_strength(&self) -> f64 {
        self.gamma.iter().map(|g| 1.0 / g).product()
    }

    /// `R0 = min_j 2 L gamma_j`.
    pub fn r0(&self) -> f64 {
        self.gamma
            .iter()
            .map(|g| 2.0 * self.l * g)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `N` points per axis with spacing `h_j = 2 L gamma_j / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub domain: Domain,
    pub n: usize,
    pub h: Vec<f64>,
}

impl GridSpec {
    pub fn new(domain: Domain, n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "N must be a positive even integer, got {n}"
            )));
        }
        let h = domain
            .gamma
            .iter()
            .map(|g| 2.0 * domain.l * g / n as f64)
            .collect();
        Ok(Self { domain, n, h })
    }

    /// Grid whose first-axis spacing is `h`; `2L/h` must be an even integer.
    pub fn with_spacing(domain: Domain, h: f64) -> Result<Self> {
        let n_real = 2.0 * domain.l / h;
        let n = n_real.round() as usize;
        if (n_real - n as f64).abs() > 1e-9 * n_real {
            return Err(Error::InvalidParameter(format!(
                "2L/h = {n_real} is not an integer"
            )));
        }
        Self::new(domain, n)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn r0(&self) -> f64 {
        self.domain.r0()
    }

    /// Coordinate of array index `i` along `axis`: `(i - N/2) h_axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.h[axis]
    }

    /// Multi-index of a flat position (last axis fastest).
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Physical point of a flat position.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim() {
            x[axis] = self.coord(axis, idx[axis]);
        }
        x
    }

    /// Same shape and spacing up to rounding.
    pub fn matches(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && self.dim() == other.dim()
            && self.domain.l == other.domain.l
            && self.domain.gamma == other.domain.gamma
    }
}

/// Real samples on a grid, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "field contains non-finite values".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Evaluate `f` at every mesh point.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let values = exec::map_range(grid.len(), |i| f(grid.point(i)));
        Self { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude on the outermost layer of the mesh, relative to the global maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n;
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.grid.unravel(flat);
            if idx[..self.grid.dim()].iter().any(|&i| i == 0 || i == n - 1) {
                edge = edge.max(v.abs());
            }
        }
        edge / max
    }
}

/// Relative boundary level above which a density is not treated as compactly supported.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

/// Built-in source densities.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityPreset {
    /// `exp(-sum_j x_j^2 / (gamma_j sigma)^2)`.
    Gaussian { sigma: f64 },
    /// `rho0(x) + rho0(x - x0)`, `rho0 = -Laplacian exp(-sum_j x_j^2 / (gamma_j sigma)^2)`.
    ShiftedLaplacian { sigma: f64, x0: Vec<f64> },
    /// `rho0` alone on a 2D grid.
    LaplacianAniso2d { sigma: f64 },
}

impl DensityPreset {
    pub fn name(&self) -> &'static str {
        match self {
            DensityPreset::Gaussian { .. } => "gaussian",
            DensityPreset::ShiftedLaplacian { .. } => "shifted-laplacian",
            DensityPreset::LaplacianAniso2d { .. } => "laplacian-aniso-2d",
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            DensityPreset::Gaussian { sigma }
            | DensityPreset::ShiftedLaplacian { sigma, .. }
            | DensityPreset::LaplacianAniso2d { sigma } => *sigma,
        }
    }

    /// Parse `name:key=value,key=value`, e.g. `shifted-laplacian:sigma=0.894,x0=1;1;0`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut sigma = None;
        let mut x0 = None;
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("expected key=value, got '{kv}'"))
            })?;
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("not a number: '{t}'")))
            };
            match k.trim() {
                "sigma" => sigma = Some(num(v)?),
                "x0" => x0 = Some(v.split(';').map(num).collect::<Result<Vec<_>>>()?),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown density parameter '{other}'"
                    )))
                }
            }
        }
        let sigma =
            sigma.ok_or_else(|| Error::InvalidParameter("density needs sigma=...".into()))?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        match name {
            "gaussian" => Ok(DensityPreset::Gaussian { sigma }),
            "shifted-laplacian" => Ok(DensityPreset::ShiftedLaplacian {
                sigma,
                x0: x0.unwrap_or_default(),
            }),
            "laplacian-aniso-2d" => Ok(DensityPreset::LaplacianAniso2d { sigma }),
            other => Err(Error::InvalidParameter(format!(
                "unknown density preset '{other}'"
            ))),
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self {
            DensityPreset::ShiftedLaplacian { x0, .. }
                if !x0.is_empty() && x0.len() != grid.dim() =>
            {
                Err(Error::InvalidParameter(format!(
                    "shift x0 has {} components on a {}D grid",
                    x0.len(),
                    grid.dim()
                )))
            }
            DensityPreset::LaplacianAniso2d { .. } if grid.dim() != 2 => Err(
                Error::InvalidParameter("laplacian-aniso-2d needs a 2D grid".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// `exp(-sum_j x_j^2/(gamma_j sigma)^2)` and `-Laplacian` of it.
pub fn gaussian_and_laplacian(x: &[f64], gamma: &[f64], sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let mut q = 0.0;
    let mut lap = 0.0;
    for (xj, gj) in x.iter().zip(gamma) {
        let a = 1.0 / (gj * gj * s2);
        q += xj * xj * a;
        lap += 2.0 * a - 4.0 * xj * xj * a * a;
    }
    let phi = (-q).exp();
    (phi, phi * lap)
}

/// Evaluate a preset on the mesh; warns if the density is not negligible on the boundary layer.
pub fn sample_density(preset: &DensityPreset, grid: &GridSpec) -> Result<Field> {
    preset.validate(grid)?;
    let d = grid.dim();
    let gamma = grid.domain.gamma.clone();
    let field = match preset {
        DensityPreset::Gaussian { sigma } => Field::from_fn(grid.clone(), |x| {
            gaussian_and_laplacian(&x[..d], &gamma, *sigma).0
        }),
        DensityPreset::LaplacianAniso2d { sigma } => Field::from_fn(grid.clone(), |x| {
            gaussian_and_laplacian(&x[..d], &gamma, *sigma).1
        }),
        DensityPreset::ShiftedLaplacian { sigma, x0 } => {
            let shift: Vec<f64> = if x0.is_empty() {
                vec![0.0; d]
            } else {
                x0.clone()
            };
            Field::from_fn(grid.clone(), |x| {
                let mut y = [0.0; 3];
                for j in 0..d {
                    y[j] = x[j] - shift[j];
                }
                gaussian_and_laplacian(&x[..d], &gamma, *sigma).1
                    + gaussian_and_laplacian(&y[..d], &gamma, *sigma).1
            })
        }
    };
    let ratio = field.boundary_ratio();
    if ratio >= SUPPORT_THRESHOLD {
        log::warn!(
            "density {} is not compactly supported on this grid: boundary/max = {ratio:.3e}",
            preset.name()
        );
    }
    Ok(field)
}

const MAGIC: &[u8; 4] = b"FSAD";
const VERSION: u32 = 1;

/// Serialize a field: magic, version, dim, N, L, gamma, payload; little-endian.
pub fn write_field_to<W: Write>(f: &Field, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + 8 * (f.grid.dim() + f.values.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(f.grid.n as u64).to_le_bytes());
    buf.extend_from_slice(&f.grid.domain.l.to_le_bytes());
    for g in &f.grid.domain.gamma {
        buf.extend_from_slice(&g.to_le_bytes());
    }
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field_from<R: Read>(mut r: R) -> Result<Field> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_field(&bytes)
}

pub fn write_field(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_field_to(f, std::io::BufWriter::new(file))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    parse_field(&std::fs::read(path)?)
}

fn parse_field(bytes: &[u8]) -> Result<Field> {
    let header = |msg: &str| Error::MalformedHeader(msg.to_string());
    if bytes.len() < 28 {
        return Err(header("file shorter than the fixed header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(header("bad magic, expected FSAD"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let dim = u32_at(8) as usize;
    if dim != 2 && dim != 3 {
        return Err(Error::MalformedHeader(format!("dimension {dim}")));
    }
    let n = usize::try_from(u64_at(12)).map_err(|_| header("N does not fit in memory"))?;
    let l = f64_at(20);
    let gamma_end = 28 + 8 * dim;
    if bytes.len() < gamma_end {
        return Err(header("file ends inside the gamma block"));
    }
    let gamma: Vec<f64> = (0..dim).map(|j| f64_at(28 + 8 * j)).collect();
    let domain = Domain::new(l, gamma).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let grid = GridSpec::new(domain, n).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let count = n
        .checked_pow(dim as u32)
        .ok_or_else(|| header("N^dim overflows"))?;
    let expected = count * 8;
    let payload = &bytes[gamma_end..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::new(grid, values)
}
