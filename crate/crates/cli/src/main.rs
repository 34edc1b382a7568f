use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fsaconv::grid::{
    read_field, sample_density, write_field, DensityPreset, Domain, Field, GridSpec,
};
use fsaconv::kernels::{FsaForm, Kernel, KernelDescriptor};
use fsaconv::params::{self, DEFAULT_TOL};
use fsaconv::plan::{build_plan, EpsChoice};
use fsaconv::solve::{solve_for_kernel, DipoleConfig};
use fsaconv::tables::{self, TableId};
use fsaconv::validate::{error_norm, reference_for};

mod config;
use config::{parse_f64, parse_list, Settings};

#[derive(Parser, Debug)]
#[command(
    name = "fsaconv",
    version,
    about = "Spectrally accurate convolution potentials on uniform grids"
)]
struct Cli {
    /// Config file of key=value lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one potential and write it as an FSAD field.
    Solve(SolveArgs),
    /// Rerun a built-in error table and print CSV.
    Reproduce(ReproduceArgs),
    /// Choose or certify the split parameter eps.
    ChooseEps(ChooseEpsArgs),
    /// Time plan construction and application.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// poisson2d, coulomb2d, coulomb3d, biharmonic2d, biharmonic3d, yukawa2d, yukawa3d, ddi3d, ddiq2d
    #[arg(long)]
    kernel: Option<String>,
    /// Half-width of the reference box.
    #[arg(long = "L")]
    l: Option<String>,
    /// Anisotropy factors, e.g. 1,1,0.125.
    #[arg(long)]
    gamma: Option<String>,
    /// Points per axis (even).
    #[arg(long = "N")]
    n: Option<String>,
    /// Grid spacing along the first axis; alternative to --N.
    #[arg(long)]
    h: Option<String>,
    /// A number, or auto[:tol].
    #[arg(long)]
    eps: Option<String>,
    /// Density preset, e.g. gaussian:sigma=0.8944.
    #[arg(long)]
    density: Option<String>,
    /// Yukawa screening parameter.
    #[arg(long)]
    lambda: Option<String>,
    /// Quasi-2D confinement width.
    #[arg(long)]
    eta: Option<String>,
    /// Far-field form: erf, e1, windowed, screened.
    #[arg(long)]
    form: Option<String>,
    /// Dipole axis n, three components.
    #[arg(long = "dipole-n", allow_hyphen_values = true)]
    dipole_n: Option<String>,
    /// Dipole moment m, three components.
    #[arg(long = "dipole-m", allow_hyphen_values = true)]
    dipole_m: Option<String>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Density as an FSAD file instead of a preset.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output FSAD file for the potential.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// table2-iso, table2-aniso, table4, table5 or all.
    table: Option<String>,
    /// Exit 1 if any row misses its acceptance check.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    lambda: Option<String>,
    /// Override the far-field form for every row.
    #[arg(long)]
    form: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChooseEpsArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Tail tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Window radius; defaults to 2 L times the smallest gamma.
    #[arg(long)]
    r0: Option<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    repetitions: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

const PROBLEM_KEYS: [&str; 12] = [
    "kernel", "l", "gamma", "n", "h", "eps", "density", "lambda", "eta", "form", "dipole-n",
    "dipole-m",
];

/// Usage errors exit with 2, numerical failures with 1.
enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

trait UsageExt<T> {
    fn usage(self) -> std::result::Result<T, Failure>;
}

impl<T> UsageExt<T> for Result<T> {
    fn usage(self) -> std::result::Result<T, Failure> {
        self.map_err(Failure::Usage)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<fsaconv::Error> for Failure {
    fn from(e: fsaconv::Error) -> Self {
        Failure::Numerical(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p).usage()?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Solve(a) => {
            merge_problem(&mut settings, a.problem);
            settings.set_flag("input", a.input.map(path_string));
            settings.set_flag("out", a.out.map(path_string));
            warn_unknown(&settings, &["input", "out"]);
            cmd_solve(&settings)
        }
        Command::Reproduce(a) => {
            settings.set_flag("table", a.table);
            settings.set_flag("lambda", a.lambda);
            settings.set_flag("form", a.form);
            settings.set_flag("out", a.out.map(path_string));
            if a.check {
                settings.set_flag("check", Some("true".into()));
            }
            warn_unknown(&settings, &["table", "check", "out"]);
            cmd_reproduce(&settings)
        }
        Command::ChooseEps(a) => {
            merge_problem(&mut settings, a.problem);
            settings.set_flag("tol", a.tol);
            settings.set_flag("r0", a.r0);
            warn_unknown(&settings, &["tol", "r0"]);
            cmd_choose_eps(&settings)
        }
        Command::Bench(a) => {
            merge_problem(&mut settings, a.problem);
            settings.set_flag("repetitions", a.repetitions);
            settings.set_flag("out", a.out.map(path_string));
            warn_unknown(&settings, &["repetitions", "out"]);
            cmd_bench(&settings)
        }
    }
}

fn path_string(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

fn merge_problem(s: &mut Settings, p: ProblemArgs) {
    let pairs = [
        ("kernel", p.kernel),
        ("l", p.l),
        ("gamma", p.gamma),
        ("n", p.n),
        ("h", p.h),
        ("eps", p.eps),
        ("density", p.density),
        ("lambda", p.lambda),
        ("eta", p.eta),
        ("form", p.form),
        ("dipole-n", p.dipole_n),
        ("dipole-m", p.dipole_m),
    ];
    for (k, v) in pairs {
        s.set_flag(k, v);
    }
}

fn warn_unknown(s: &Settings, extra: &[&str]) {
    let known: Vec<&str> = PROBLEM_KEYS.iter().chain(extra).copied().collect();
    for k in s.unknown(&known) {
        log::warn!("ignoring unknown setting '{k}'");
    }
}

/// A fully resolved single problem.
struct Problem {
    desc: KernelDescriptor,
    grid: Option<GridSpec>,
    eps: EpsChoice,
    density: Option<DensityPreset>,
    dipoles: Option<DipoleConfig>,
}

fn kernel_from(s: &Settings) -> Result<Kernel> {
    let name = s.require("kernel")?;
    let lambda = s.f64_or("lambda", 1.0)?;
    let eta = s.f64_or("eta", tables::eta_q2d())?;
    Ok(Kernel::from_name(name, lambda, eta)?)
}

fn descriptor_from(s: &Settings) -> Result<KernelDescriptor> {
    let desc = KernelDescriptor::new(kernel_from(s)?);
    Ok(match s.get("form") {
        Some(f) => desc.with_form(FsaForm::from_name(f)?)?,
        None => desc,
    })
}

fn domain_from(s: &Settings, dim: usize) -> Result<Domain> {
    let l = parse_f64("L", s.require("l")?)?;
    let gamma = s.list("gamma")?.unwrap_or_else(|| vec![1.0; dim]);
    if gamma.len() != dim {
        bail!("gamma has {} entries but the kernel is {dim}D", gamma.len());
    }
    Ok(Domain::new(l, gamma)?)
}

fn grid_from(s: &Settings, dim: usize) -> Result<GridSpec> {
    let domain = domain_from(s, dim)?;
    match (s.get("n"), s.get("h")) {
        (Some(n), None) => {
            let n: usize = n
                .parse()
                .with_context(|| format!("N: not a positive integer: '{n}'"))?;
            Ok(GridSpec::new(domain, n)?)
        }
        (None, Some(h)) => Ok(GridSpec::with_spacing(domain, parse_f64("h", h)?)?),
        (Some(_), Some(_)) => bail!("give either N or h, not both"),
        (None, None) => bail!("missing required setting 'N' (or 'h')"),
    }
}

fn dipoles_from(s: &Settings, kernel: &Kernel) -> Result<Option<DipoleConfig>> {
    let eta = match kernel {
        Kernel::Ddi3d => 1.0,
        Kernel::DdiQuasi2d { eta } => *eta,
        _ => return Ok(None),
    };
    let vec3 = |key: &str| -> Result<[f64; 3]> {
        match s.get(key) {
            None => Ok([0.0, 0.0, 1.0]),
            Some(v) => {
                let l = parse_list(key, v)?;
                l.try_into()
                    .map_err(|_| anyhow::anyhow!("{key} needs three components"))
            }
        }
    };
    Ok(Some(DipoleConfig::new(
        vec3("dipole-n")?,
        vec3("dipole-m")?,
        eta,
    )?))
}

fn problem_from(s: &Settings, need_grid: bool) -> Result<Problem> {
    let desc = descriptor_from(s)?;
    let grid = if need_grid {
        Some(grid_from(s, desc.dim())?)
    } else {
        None
    };
    let eps = EpsChoice::parse(s.get("eps").unwrap_or("auto"))?;
    let density = s.get("density").map(DensityPreset::parse).transpose()?;
    let dipoles = dipoles_from(s, &desc.kernel)?;
    Ok(Problem {
        desc,
        grid,
        eps,
        density,
        dipoles,
    })
}

fn cmd_solve(s: &Settings) -> Outcome {
    let input = s.get("input").map(PathBuf::from);
    let p = problem_from(s, input.is_none()).usage()?;
    let rho: Field = match (&input, &p.density) {
        (Some(path), None) => {
            let f = read_field(path).with_context(|| format!("reading {}", path.display()))?;
            if let Ok(g) = grid_from(s, p.desc.dim()) {
                if !g.matches(&f.grid) {
                    return Err(Failure::Usage(anyhow::anyhow!(
                        "input field grid does not match the configured grid"
                    )));
                }
            }
            f
        }
        (None, Some(preset)) => sample_density(preset, p.grid.as_ref().expect("grid resolved"))?,
        (Some(_), Some(_)) => {
            return Err(Failure::Usage(anyhow::anyhow!(
                "give either density or input, not both"
            )))
        }
        (None, None) => {
            return Err(Failure::Usage(anyhow::anyhow!(
                "missing required setting 'density' (or 'input')"
            )))
        }
    };
    let grid = rho.grid.clone();

    let t0 = Instant::now();
    let plan = build_plan(&p.desc, &grid, p.eps)?;
    let build_s = t0.elapsed().as_secs_f64();
    if matches!(p.eps, EpsChoice::Auto { .. }) {
        print!("{}", plan.eps_report.to_lines());
    }
    let t1 = Instant::now();
    let phi = solve_for_kernel(&plan, &rho, p.dipoles.as_ref())?;
    let apply_s = t1.elapsed().as_secs_f64();
    let eps = plan.eps;
    drop(plan);

    let error = match &p.density {
        Some(preset) => match reference_for(
            &p.desc.kernel,
            preset,
            &grid.domain.gamma,
            p.dipoles.as_ref(),
        ) {
            Ok(r) => Some(error_norm(&phi, &r.sample(&grid)?)?),
            Err(e) => {
                log::info!("no reference potential: {e}");
                None
            }
        },
        None => None,
    };
    if let Some(out) = s.get("out") {
        write_field(&phi, out).with_context(|| format!("writing {out}"))?;
    }
    println!(
        "kernel={} d={} N={} L={} gamma={} eps={} build_s={:.6} apply_s={:.6} error={}",
        p.desc.name(),
        grid.dim(),
        grid.n,
        grid.domain.l,
        join(&grid.domain.gamma),
        eps,
        build_s,
        apply_s,
        error.map_or("none".to_string(), |e| format!("{e:.4e}"))
    );
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn output(s: &Settings) -> Result<Box<dyn Write>> {
    Ok(match s.get("out") {
        Some(p) => Box::new(BufWriter::new(
            File::create(Path::new(p)).with_context(|| format!("creating {p}"))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_reproduce(s: &Settings) -> Outcome {
    let which = s.require("table").usage()?;
    let ids: Vec<TableId> = if which == "all" {
        TableId::ALL.to_vec()
    } else {
        vec![TableId::parse(which).map_err(|e| Failure::Usage(e.into()))?]
    };
    let lambda = s.f64_or("lambda", 1.0).usage()?;
    let form = s
        .get("form")
        .map(FsaForm::from_name)
        .transpose()
        .map_err(|e| Failure::Usage(e.into()))?;
    let check = s.get("check").is_some_and(|v| v == "true" || v == "1");

    let mut out = output(s).usage()?;
    writeln!(out, "{}", tables::CSV_HEADER).context("writing CSV")?;
    let mut failed = 0;
    for id in ids {
        let rows = tables::rows(id, lambda)?;
        let mut outcomes = Vec::with_capacity(rows.len());
        for row in &rows {
            let o = tables::run_row(row, form).with_context(|| row.label())?;
            writeln!(out, "{}", tables::csv_line(row, &o)).context("writing CSV")?;
            out.flush().context("writing CSV")?;
            outcomes.push(o);
        }
        if check {
            for ((row, o), ok) in rows
                .iter()
                .zip(&outcomes)
                .zip(tables::evaluate_checks(&rows, &outcomes))
            {
                match ok {
                    Some(true) => eprintln!("PASS {} error={:.4e}", row.label(), o.error),
                    Some(false) => {
                        failed += 1;
                        eprintln!(
                            "FAIL {} error={:.4e} check={:?}",
                            row.label(),
                            o.error,
                            row.check
                        );
                    }
                    None => {}
                }
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Numerical(anyhow::anyhow!(
            "{failed} row(s) missed their check"
        )));
    }
    Ok(())
}

fn cmd_choose_eps(s: &Settings) -> Outcome {
    let desc = descriptor_from(s).usage()?;
    let tol = s.f64_or("tol", DEFAULT_TOL).usage()?;
    let r0 = match s.get("r0") {
        Some(v) => parse_f64("r0", v).usage()?,
        None => domain_from(s, desc.dim()).usage()?.r0(),
    };
    let report = match s.get("eps") {
        None => params::choose_epsilon(&desc, r0, tol)?,
        Some(v) => match EpsChoice::parse(v).map_err(|e| Failure::Usage(e.into()))? {
            EpsChoice::Fixed(eps) => params::certify(&desc, eps, r0, tol)?,
            EpsChoice::Auto { tol } => params::choose_epsilon(&desc, r0, tol)?,
        },
    };
    print!("kernel={}\n{}", desc.name(), report.to_lines());
    Ok(())
}

const BENCH_HEADER: &str = "rep,kernel,d,N,gamma,eps,build_s,apply_s,fft_len,build_fft_len";

fn cmd_bench(s: &Settings) -> Outcome {
    let p = problem_from(s, true).usage()?;
    let grid = p.grid.expect("grid resolved");
    let reps = s.usize_or("repetitions", 3).usage()?;
    if reps == 0 {
        return Err(Failure::Usage(anyhow::anyhow!(
            "repetitions must be at least 1"
        )));
    }
    let preset = p
        .density
        .clone()
        .unwrap_or(DensityPreset::Gaussian { sigma: 1.0 });
    let rho = sample_density(&preset, &grid)?;
    let mut out = output(s).usage()?;
    writeln!(out, "{BENCH_HEADER}").context("writing CSV")?;
    let mut builds = Vec::new();
    let mut applies = Vec::new();
    let mut last = None;
    for rep in 1..=reps {
        let t0 = Instant::now();
        let plan = build_plan(&p.desc, &grid, p.eps)?;
        let b = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        solve_for_kernel(&plan, &rho, p.dipoles.as_ref())?;
        let a = t1.elapsed().as_secs_f64();
        let row = (plan.eps, plan.fft().len(), plan.build_fft_len);
        writeln!(
            out,
            "{}",
            bench_line(&rep.to_string(), &p.desc, &grid, row, b, a)
        )
        .context("writing CSV")?;
        builds.push(b);
        applies.push(a);
        last = Some(row);
    }
    let row = last.expect("at least one repetition");
    writeln!(
        out,
        "{}",
        bench_line(
            "median",
            &p.desc,
            &grid,
            row,
            median(&mut builds),
            median(&mut applies)
        )
    )
    .context("writing CSV")?;
    out.flush().context("writing CSV")?;
    Ok(())
}

fn bench_line(
    rep: &str,
    desc: &KernelDescriptor,
    grid: &GridSpec,
    row: (f64, usize, usize),
    b: f64,
    a: f64,
) -> String {
    format!(
        "{rep},{},{},{},{},{},{b:.6},{a:.6},{},{}",
        desc.name(),
        grid.dim(),
        grid.n,
        join(&grid.domain.gamma),
        row.0,
        row.1,
        row.2
    )
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
