mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mig::cdf::{cdf, CdfMethod};
use mig::estimate::{method_of_moments, mle};
use mig::experiments::{run_study, StudyConfig, StudyMethod, TargetKind};
use mig::kde::{select_bandwidth, MigKde, PluginKind, SelectionMethod};
use mig::llt::{bulk_sup_errors, BulkSpec, LltModel, MultivariateBase};
use mig::sampling::MigSampler;
use mig::{MigParams, RngStream, SpdMatrix};

use io::{csv_writer, output, read_params, read_rows, read_samples, write_json, CliResult, Failure, ParamsFile};

/// Multivariate inverse Gaussian toolkit.
#[derive(Parser, Debug)]
#[command(name = "mig", version)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads (default: available parallelism). MIG_THREADS overrides.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw an exact sample.
    Sample(SampleArgs),
    /// Log density (and derivatives at a single point).
    Density(DensityArgs),
    /// Estimate the location and scale matrix from data.
    Fit(FitArgs),
    /// Estimate Pr(X <= q).
    Cdf(CdfArgs),
    /// Select a bandwidth and evaluate the kernel smoother.
    Kde(KdeArgs),
    /// Bulk errors of the Gaussian approximation along a grid of means.
    LltCheck(LltArgs),
    /// Replicated bandwidth comparison on the simulation targets.
    Study(StudyArgs),
}

#[derive(Args, Debug)]
struct ParamArgs {
    /// JSON file with beta, xi, omega (row-major) and d.
    #[arg(long, conflicts_with_all = ["beta", "xi", "omega"])]
    params: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    xi: Vec<f64>,
    /// Scale matrix, row-major.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    omega: Vec<f64>,
}

impl ParamArgs {
    fn build(&self) -> CliResult<MigParams> {
        if let Some(p) = &self.params {
            return read_params(p);
        }
        if self.beta.is_empty() || self.xi.is_empty() || self.omega.is_empty() {
            return Err(Failure::Usage(
                "give --params FILE or all of --beta, --xi and --omega".into(),
            ));
        }
        ParamsFile {
            beta: self.beta.clone(),
            xi: self.xi.clone(),
            omega: self.omega.clone(),
            d: None,
        }
        .build()
    }
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    n: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Write a header line x1,…,xd.
    #[arg(long)]
    header: bool,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// A single point; prints JSON with derivatives.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "data")]
    x: Vec<f64>,
    /// CSV of points; prints one log density per line.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    header: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitMethod {
    Mle,
    Mom,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    beta: Vec<f64>,
    #[arg(long, value_enum, default_value = "mle")]
    method: FitMethod,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CdfChoice {
    Sov,
    #[value(alias = "plain_mc")]
    Mc,
}

#[derive(Args, Debug)]
struct CdfArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    q: Vec<f64>,
    #[arg(long, value_enum, default_value = "sov")]
    method: CdfChoice,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BandwidthChoice {
    AmiseFull,
    AmiseIso,
    LcvFull,
    LcvIso,
    Lscv,
    NormalRef,
}

impl BandwidthChoice {
    fn method(self) -> SelectionMethod {
        match self {
            Self::AmiseFull => SelectionMethod::AmiseFull,
            Self::AmiseIso => SelectionMethod::AmiseIso,
            Self::LcvFull => SelectionMethod::LcvFull,
            Self::LcvIso => SelectionMethod::LcvIso,
            Self::Lscv => SelectionMethod::Lscv,
            Self::NormalRef => SelectionMethod::NormalRef,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PluginChoice {
    MigMle,
    MigMoments,
    TruncGaussian,
}

impl PluginChoice {
    fn kind(self) -> PluginKind {
        match self {
            Self::MigMle => PluginKind::MigMle,
            Self::MigMoments => PluginKind::MigMoments,
            Self::TruncGaussian => PluginKind::TruncGaussian,
        }
    }
}

#[derive(Args, Debug)]
struct KdeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    beta: Vec<f64>,
    #[arg(long, value_enum, default_value = "normal-ref")]
    bandwidth: BandwidthChoice,
    #[arg(long, value_enum, default_value = "mig-mle")]
    plugin: PluginChoice,
    #[arg(long, default_value_t = 10_000)]
    plugin_draws: usize,
    /// CSV of evaluation points.
    #[arg(long)]
    at: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LltArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    dim: u8,
    /// Base scale matrix for --dim 2, row-major.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "2,1,1,2")]
    omega0: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.5,0.5")]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,1")]
    xi0: Vec<f64>,
    /// Smallest mean; the grid is the powers of two in [mu-min, mu-max].
    #[arg(long, default_value_t = 4.0)]
    mu_min: f64,
    #[arg(long, default_value_t = 1024.0)]
    mu_max: f64,
    #[arg(long, default_value_t = 10_000)]
    grid_points: usize,
    #[arg(long, default_value_t = MultivariateBase::DEFAULT_WINDOW)]
    window: f64,
    /// CSV of mu,E1,E2,E3; slopes go to standard output as JSON.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "2")]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "F4")]
    targets: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "B1,B2,B3,B4,B6")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "250")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 10_000)]
    plugin_draws: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// JSON manifest with configuration, conventions and timings.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let env = match std::env::var("MIG_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("MIG_THREADS={v} is not a thread count")))?,
        ),
        Err(_) => None,
    };
    let n = env.or(flag).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Compute(format!("thread pool: {e}")))
}

fn sample(a: &SampleArgs, seed: u64) -> CliResult<()> {
    let p = a.params.build()?;
    let batch = MigSampler::try_new(&p)?.sample(a.n, &RngStream::new(seed, 0))?;
    let mut w = csv_writer(output(a.out.as_ref())?);
    if a.header {
        w.write_record((1..=p.dim()).map(|i| format!("x{i}")))?;
    }
    for row in batch.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PointDensity {
    x: Vec<f64>,
    log_density: f64,
    density: f64,
    gradient: Option<Vec<f64>>,
    /// Row-major Hessian of the log density.
    hessian: Option<Vec<f64>>,
}

fn density(a: &DensityArgs) -> CliResult<()> {
    let p = a.params.build()?;
    let mut out = output(a.out.as_ref())?;
    if let Some(path) = &a.data {
        let rows = read_rows(path)?;
        let mut w = csv_writer(out);
        if a.header {
            w.write_record(["log_density"])?;
        }
        for r in rows {
            w.serialize([p.log_density(&r)?])?;
        }
        w.flush()?;
        return Ok(());
    }
    if a.x.is_empty() {
        return Err(Failure::Usage("give --x POINT or --data FILE".into()));
    }
    let ld = p.log_density(&a.x)?;
    let inside = p.halfspace().contains(&a.x);
    let gradient = inside
        .then(|| p.grad_log_density(&a.x))
        .transpose()?
        .map(|g| g.iter().copied().collect());
    let hessian = inside
        .then(|| p.hessian_log_density(&a.x))
        .transpose()?
        .map(|h| h.transpose().iter().copied().collect());
    let v = PointDensity {
        x: a.x.clone(),
        log_density: ld,
        density: ld.exp(),
        gradient,
        hessian,
    };
    write_json(&mut out, &v)
}

#[derive(Serialize)]
struct FitOutput {
    #[serde(flatten)]
    params: ParamsFile,
    method: &'static str,
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let s = read_samples(&a.data, &a.beta)?;
    let (p, method) = match a.method {
        FitMethod::Mle => (mle(&s)?, "mle"),
        FitMethod::Mom => (method_of_moments(&s)?, "mom"),
    };
    let v = FitOutput {
        params: ParamsFile::from_params(&p),
        method,
    };
    write_json(&mut output(a.out.as_ref())?, &v)
}

fn cdf_cmd(a: &CdfArgs, seed: u64) -> CliResult<()> {
    let p = a.params.build()?;
    let method = match a.method {
        CdfChoice::Sov => CdfMethod::Sov,
        CdfChoice::Mc => CdfMethod::PlainMc,
    };
    let est = cdf(&p, &a.q, method, a.draws, &RngStream::new(seed, 0))?;
    write_json(&mut output(a.out.as_ref())?, &est)
}

#[derive(Serialize)]
struct KdeOutput {
    method: &'static str,
    plugin: PluginKind,
    n: usize,
    d: usize,
    /// Row-major bandwidth matrix.
    bandwidth: Vec<f64>,
    criterion_value: f64,
    points: Vec<Vec<f64>>,
    density: Vec<f64>,
}

fn kde(a: &KdeArgs, seed: u64) -> CliResult<()> {
    let s = read_samples(&a.data, &a.beta)?;
    let plugin = a.plugin.kind();
    let bw = select_bandwidth(&s, a.bandwidth.method(), plugin, a.plugin_draws, &RngStream::new(seed, 0))?;
    let fitted = MigKde::new(&s, &bw.h)?;
    let points = match &a.at {
        Some(p) => read_rows(p)?,
        None => Vec::new(),
    };
    let density = fitted.eval_many(&points)?;
    let h = bw.h.matrix();
    let v = KdeOutput {
        method: bw.method.as_str(),
        plugin,
        n: s.len(),
        d: s.dim(),
        bandwidth: h.transpose().iter().copied().collect(),
        criterion_value: bw.criterion_value,
        points,
        density,
    };
    write_json(&mut output(a.out.as_ref())?, &v)
}

#[derive(Serialize)]
struct LltOutput {
    dim: u8,
    window: Option<f64>,
    tau: f64,
    grid_points: usize,
    mu_values: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    e3: Vec<f64>,
    slopes: [f64; 3],
}

fn llt_check(a: &LltArgs) -> CliResult<()> {
    if !(a.mu_min > 0.0 && a.mu_max >= a.mu_min) {
        return Err(Failure::Usage("need 0 < mu-min <= mu-max".into()));
    }
    let lo = a.mu_min.log2().ceil() as i32;
    let hi = a.mu_max.log2().floor() as i32;
    if hi - lo < 1 {
        return Err(Failure::Usage("the grid needs at least two powers of two".into()));
    }
    let grid = mig::llt::dyadic_grid(lo, hi);
    let model = if a.dim == 1 {
        LltModel::Univariate
    } else {
        let o = SpdMatrix::from_row_major(2, &a.omega0)?;
        LltModel::Multivariate(MultivariateBase::new(&a.beta, &a.xi0, o)?.with_window(a.window)?)
    };
    let bulk = BulkSpec {
        tau: 1.0,
        grid_points: a.grid_points,
    };
    let curve = bulk_sup_errors(&model, &bulk, &grid)?;
    if let Some(path) = &a.out {
        let mut w = csv_writer(output(Some(path))?);
        w.write_record(["mu", "E1", "E2", "E3"])?;
        for (i, mu) in curve.mu_values.iter().enumerate() {
            w.serialize((mu, curve.e_n[0][i], curve.e_n[1][i], curve.e_n[2][i]))?;
        }
        w.flush()?;
    }
    let [e1, e2, e3] = curve.e_n;
    let v = LltOutput {
        dim: a.dim,
        window: (a.dim == 2).then_some(a.window),
        tau: bulk.tau,
        grid_points: bulk.grid_points,
        mu_values: curve.mu_values,
        e1,
        e2,
        e3,
        slopes: curve.slopes,
    };
    write_json(&mut output(None)?, &v)
}

fn study(a: &StudyArgs, seed: u64) -> CliResult<()> {
    let targets = a
        .targets
        .iter()
        .map(|t| TargetKind::parse(t).ok_or_else(|| Failure::Usage(format!("unknown target {t}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let methods = a
        .methods
        .iter()
        .map(|m| StudyMethod::parse(m).ok_or_else(|| Failure::Usage(format!("unknown method {m}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let config = StudyConfig {
        dims: a.dims.clone(),
        targets,
        methods,
        sample_sizes: a.sizes.clone(),
        replications: a.replications,
        seed,
        mc_draws: a.mc_draws,
        plugin_draws: a.plugin_draws,
    };
    let report = run_study(&config)?;
    let mut w = csv_writer(output(a.out.as_ref())?);
    w.write_record([
        "d",
        "target",
        "n",
        "method",
        "metric",
        "median",
        "iqr",
        "n_replications",
        "n_failures",
    ])?;
    for row in report.summary_rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    if let Some(path) = &a.manifest {
        write_json(&mut output(Some(path))?, &report.manifest(&config))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Sample(a) => sample(a, cli.seed),
        Command::Density(a) => density(a),
        Command::Fit(a) => fit(a),
        Command::Cdf(a) => cdf_cmd(a, cli.seed),
        Command::Kde(a) => kde(a, cli.seed),
        Command::LltCheck(a) => llt_check(a),
        Command::Study(a) => study(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
