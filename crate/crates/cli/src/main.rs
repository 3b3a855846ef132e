use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rectiscope::generators::{generate, GeneratorKind, GeneratorSpec};
use rectiscope::multiscale::{analyze, classify, ClassifyParams, ScaleGrid, Tally};
use rectiscope::verify::{run_verify, Sabotage, VerifyConfig};
use rectiscope::{Error, Exponent, FitOptions, WeightedCloud};

mod plot;

/// Multiscale C^{1,alpha} rectifiability diagnostics for weighted point clouds.
#[derive(Parser)]
#[command(name = "rectiscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic cloud.
    Generate(GenerateArgs),
    /// Per-point profiles, beta statistics, Hölder fits and plane stabilization.
    Analyze(RunArgs),
    /// Evaluate every criterion at the query points.
    Classify(RunArgs),
    /// Run the numerical checks of the constructive lemmas.
    Verify(VerifyArgs),
    /// Turn an analysis or classification report into tab-separated plot data.
    Report(ReportArgs),
    /// Print the JSON schema of a report.
    Schema {
        #[arg(value_enum)]
        which: SchemaKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    AffinePlane,
    Circle,
    Sphere,
    C1alpha,
    C1beta,
    Cantor,
    Snowflake,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, required_unless_present = "spec")]
    kind: Option<Kind>,
    /// JSON generator spec; replaces every other sampling flag.
    #[arg(long, conflicts_with = "kind")]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Intrinsic dimension of an affine plane.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Ambient dimension; defaults to the smallest the kind allows.
    #[arg(long)]
    ambient: Option<usize>,
    #[arg(long, default_value_t = 4096)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hölder exponent of the lacunary graphs (c1alpha, c1beta).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    base: f64,
    #[arg(long, default_value_t = 12)]
    terms: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Cantor generations or snowflake generations.
    #[arg(long, default_value_t = 5)]
    depth: u32,
    /// Snowflake angle scale: generation m turns by amplitude / sqrt(m).
    #[arg(long, default_value_t = 0.5)]
    amplitude: f64,
    /// Gaussian noise added to every coordinate.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args)]
struct InputArgs {
    /// Cloud as .json or .csv (header x1..xn[,w]).
    #[arg(long)]
    input: PathBuf,
    /// Intrinsic dimension; required for CSV.
    #[arg(long)]
    k: Option<usize>,
    /// Total mass spread evenly over an unweighted CSV.
    #[arg(long)]
    mass: Option<f64>,
}

#[derive(Args)]
struct CriteriaArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Lower density bound.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Upper density bound.
    #[arg(long = "M", default_value_t = 4.0)]
    upper: f64,
    /// Exponent of a beta number; repeatable, `inf` allowed. Default: 2 and inf.
    #[arg(long = "p")]
    p: Vec<Exponent>,
    #[arg(long, default_value_t = 0.5)]
    r0: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Number of halvings J; the grid has J + 1 radii.
    #[arg(long, default_value_t = 6)]
    scales: usize,
    /// Number of finest valid scales the verdicts look at.
    #[arg(long, default_value_t = 5)]
    tail: usize,
    /// Every stride-th point is a query point.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mass fraction, lightest points first, that beta_inf ignores; in [0, 1).
    #[arg(long)]
    quantile_esssup: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    criteria: CriteriaArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    sabotage: Option<Sabotage>,
}

#[derive(Args)]
struct ReportArgs {
    /// An analysis or classification report.
    #[arg(long)]
    input: PathBuf,
    /// Directory for the plot files; created when missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Classify,
    Analyze,
    Verify,
    Cloud,
}

/// Exit status with a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Json(_) | Error::Io(_) => 1,
            _ => 2,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => run_generate(&args),
        Command::Analyze(args) => run_analyze(&args),
        Command::Classify(args) => run_classify(&args),
        Command::Verify(args) => run_verify_command(&args),
        Command::Report(args) => run_report(&args),
        Command::Schema { which } => {
            print!("{}", schema_text(which));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rectiscope: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn schema_text(which: SchemaKind) -> &'static str {
    match which {
        SchemaKind::Classify => include_str!("../schema/classify.schema.json"),
        SchemaKind::Analyze => include_str!("../schema/analyze.schema.json"),
        SchemaKind::Verify => include_str!("../schema/verify.schema.json"),
        SchemaKind::Cloud => include_str!("../schema/cloud.schema.json"),
    }
}

fn generator_spec(args: &GenerateArgs) -> Result<GeneratorSpec, Failure> {
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())));
    }
    let kind = match args.kind.expect("clap requires --kind without --spec") {
        Kind::AffinePlane => GeneratorKind::AffinePlane { k: args.k },
        Kind::Circle => GeneratorKind::Circle { radius: args.radius },
        Kind::Sphere => GeneratorKind::Sphere { radius: args.radius },
        Kind::C1alpha => {
            GeneratorKind::C1alphaGraph { alpha: args.alpha.unwrap_or(0.5), base: args.base, terms: args.terms }
        }
        Kind::C1beta => GeneratorKind::C1betaGraph { beta: args.alpha.unwrap_or(0.25), base: args.base, terms: args.terms },
        Kind::Cantor => GeneratorKind::FourCornerCantor { depth: args.depth },
        Kind::Snowflake => GeneratorKind::inverse_sqrt_snowflake(args.amplitude, args.depth as usize),
    };
    let kind = match args.sigma {
        Some(sigma) => GeneratorKind::Noisy { base: Box::new(kind), sigma },
        None => kind,
    };
    let min = kind.min_ambient_dim();
    Ok(GeneratorSpec::new(kind, args.ambient.unwrap_or(min), args.count, args.seed))
}

fn run_generate(args: &GenerateArgs) -> Outcome {
    let spec = generator_spec(args)?;
    let cloud = generate(&spec)?;
    cloud.write_path(&args.out)?;
    println!(
        "wrote {} points (k = {}, n = {}, mass {}) to {}",
        cloud.len(),
        cloud.intrinsic_dim(),
        cloud.ambient_dim(),
        cloud.total_mass(),
        args.out.display()
    );
    Ok(())
}

fn load_cloud(input: &InputArgs, out: Option<&Path>) -> Result<WeightedCloud, Failure> {
    if out.is_some_and(|o| o == input.input) {
        return Err(Failure::new(2, "input and output paths must differ"));
    }
    if !input.input.exists() {
        return Err(Failure::new(1, format!("{}: no such file", input.input.display())));
    }
    WeightedCloud::read_path(&input.input, input.k, input.mass)
        .map_err(|e| Failure { message: format!("{}: {e}", input.input.display()), ..Failure::from(e) })
}

fn classify_params(c: &CriteriaArgs) -> Result<ClassifyParams, Failure> {
    let mut params = ClassifyParams::new(ScaleGrid::new(c.r0, c.rho, c.scales)?);
    params.alpha = c.alpha;
    params.lambda = c.lambda;
    params.delta = c.delta;
    params.upper = c.upper;
    if !c.p.is_empty() {
        params.p_list = c.p.clone();
    }
    params.m_tail = c.tail;
    params.stride = c.stride;
    params.fit = FitOptions { seed: c.seed, ..params.fit };
    if let Some(q) = c.quantile_esssup {
        params.fit.esssup_quantile = q;
    }
    params.validate()?;
    Ok(params)
}

/// Where a report came from, echoed next to the parameters.
#[derive(Serialize)]
struct InputEcho {
    path: String,
    points: usize,
    n: usize,
    k: usize,
    total_mass: f64,
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    version: &'static str,
    input: InputEcho,
    #[serde(flatten)]
    report: &'a R,
}

fn write_json<R: Serialize>(out: Option<&Path>, input: &InputArgs, cloud: &WeightedCloud, report: &R) -> Outcome {
    let envelope = Envelope {
        version: env!("CARGO_PKG_VERSION"),
        input: InputEcho {
            path: input.input.display().to_string(),
            points: cloud.len(),
            n: cloud.ambient_dim(),
            k: cloud.intrinsic_dim(),
            total_mass: cloud.total_mass(),
        },
        report,
    };
    write_value(out, &envelope)
}

fn write_value<T: Serialize>(out: Option<&Path>, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::new(1, e.to_string())),
    }
}

fn all_indeterminate() -> Failure {
    Failure::new(3, "no query point has a valid scale; every verdict is indeterminate")
}

fn run_analyze(args: &RunArgs) -> Outcome {
    let cloud = load_cloud(&args.input, args.out.as_deref())?;
    let params = classify_params(&args.criteria)?;
    let report = analyze(&cloud, &params)?;
    write_json(args.out.as_deref(), &args.input, &cloud, &report)?;
    if report.per_point.iter().all(|p| p.profile.valid_indices().is_empty()) {
        return Err(all_indeterminate());
    }
    Ok(())
}

fn tally_line(name: &str, t: &Tally) -> String {
    let fraction = t.pass_fraction.map_or("-".to_string(), |f| format!("{f:.3}"));
    format!("{name:<22} pass {:>6}  fail {:>6}  indeterminate {:>6}  pass fraction {fraction}", t.pass, t.fail, t.indeterminate)
}

fn run_classify(args: &RunArgs) -> Outcome {
    let cloud = load_cloud(&args.input, args.out.as_deref())?;
    let params = classify_params(&args.criteria)?;
    let report = classify(&cloud, &params)?;
    write_json(args.out.as_deref(), &args.input, &cloud, &report)?;
    if args.out.is_some() {
        let a = &report.aggregate;
        println!("{} query points", a.query_points);
        println!("{}", tally_line("fixed paraboloid", &a.fixed_paraboloid));
        println!("{}", tally_line("rotating cylinder", &a.rotating_cylinder));
        for (p, t) in &a.beta_bound {
            println!("{}", tally_line(&format!("beta bound p={p}"), t));
        }
        println!("{}", tally_line("jones sum", &a.jones_finite));
        println!("{}", tally_line("beta_inf square sum", &a.ghinassi_finite));
        println!("uniform subset: {} points, single-graph regime: {}", a.uniform_count, a.single_graph_regime);
    }
    if report.aggregate.all_indeterminate {
        return Err(all_indeterminate());
    }
    Ok(())
}

fn run_verify_command(args: &VerifyArgs) -> Outcome {
    let report = run_verify(&VerifyConfig { seed: args.seed, sabotage: args.sabotage })?;
    for c in &report.checks {
        println!(
            "{} {:<22} samples {:>8}  violations {:>5}  worst margin {:e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.samples,
            c.violations,
            c.worst_margin
        );
    }
    if let Some(out) = &args.out {
        write_value(Some(out), &report)?;
    }
    match &report.first_failure {
        None => Ok(()),
        Some(name) => {
            let check = report.checks.iter().find(|c| &c.name == name).expect("failure names a check");
            Err(Failure::new(4, format!("check {name} failed: {}", check.statement)))
        }
    }
}

fn run_report(args: &ReportArgs) -> Outcome {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::new(1, format!("{}: {e}", args.input.display())))?;
    let report: plot::Loaded =
        serde_json::from_str(&text).map_err(|e| Failure::new(1, format!("{}: {e}", args.input.display())))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::new(1, format!("{}: {e}", args.out.display())))?;
    for path in plot::write_all(&report, &args.out).map_err(|e| Failure::new(1, e.to_string()))? {
        println!("{}", path.display());
    }
    Ok(())
}
