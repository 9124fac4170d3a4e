//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audit::{audit, AuditOptions};
use crate::bounds::{
    kernel_ball_delta, kernel_norm_bound_b, mf_generalization_delta, pacf_sample_complexity, rho_kernel,
    rho_linear, BoundReport, RademacherModel, SampleComplexitySpec, BOUND_REPORT_SCHEMA,
};
use crate::data::{build_matching, ExampleSource, LabeledDataset, MatchingStrategy};
use crate::error::{invalid, PacfError, Result};
use crate::hardness::{run_hardness_experiment, HardnessExperiment, HardnessMetricHandle, HardnessMode};
use crate::learners::{train, KernelNorm, LearnerKind, TrainConfig};
use crate::metric::{validate_metric, DistanceMatrix, SimilarityMetric, ValidationReport};
use crate::predictor::{KernelSpec, Predictor};
use crate::synth::{generate_dataset, Generator, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const SEED_ENV: &str = "PACF_SEED";

#[derive(Parser, Debug)]
#[command(name = "pacf", version, about = "Approximate metric-fairness toolkit")]
struct Cli {
    /// Worker threads for data-parallel loops (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the generation timestamp from reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset as CSV.
    GenData(GenDataArgs),
    /// Train a fairness-constrained predictor.
    Train(TrainArgs),
    /// Audit a predictor's fairness on a dataset.
    Audit(AuditArgs),
    /// Evaluate generalization and sample-complexity formulas.
    Bounds(BoundsArgs),
    /// Run the hardness construction experiment.
    HardnessDemo(HardnessArgs),
    /// Check the pseudometric axioms on sampled triples.
    ValidateMetric(ValidateArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Random seed; falls back to the PACF_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Err(invalid(format!("a seed is required: pass --seed or set {SEED_ENV}"))),
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GeneratorArg {
    Uniform,
    Separable,
    HardnessU,
    HardnessV,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    generator: GeneratorArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    seed: SeedArg,
    /// Dataset CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the metric handle of a hardness dataset.
    #[arg(long)]
    handle_out: Option<PathBuf>,
    /// Report path (stdout if absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LearnerArg {
    Linear,
    Kernel,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// constant:<c> | euclidean:<scale> | matrix:<path> | hardness:<handle.json>
    #[arg(long)]
    metric: String,
    /// JSON training configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    learner: Option<LearnerArg>,
    /// Squared RKHS-norm bound for the kernel learner.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed of the random matching (overrides the config).
    #[command(flatten)]
    seed: SeedArg,
    /// Trained model path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MatchingArg {
    Consecutive,
    Random,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    metric: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = MatchingArg::Random)]
    matching: MatchingArg,
    /// Comma-separated alpha2 values for the group-fairness profile.
    #[arg(long, value_delimiter = ',')]
    alpha2_grid: Vec<f64>,
    /// Monte-Carlo pairs for the population estimate (0 disables it).
    #[arg(long, default_value_t = 0)]
    population_pairs: usize,
    /// JSON synthetic spec to sample population pairs from; defaults to
    /// resampling the dataset.
    #[arg(long)]
    population_spec: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Formula {
    DeltaM,
    KernelBall,
    RhoLinear,
    RhoKernel,
    LinAccuracy,
    SigmoidAccuracy,
    InfPacf,
    BStar,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_enum, required = true)]
    formula: Vec<Formula>,
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    rhat: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Kernel supremum M.
    #[arg(long = "big-m", default_value_t = 1.0)]
    big_m: f64,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    eps_alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eps_gamma: f64,
    #[arg(long, default_value_t = 3.0)]
    l: f64,
    #[arg(long)]
    eps_star: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    m_pac: f64,
    /// Rademacher model `scale / sqrt(k)` for inf-pacf.
    #[arg(long, default_value_t = 1.0)]
    rademacher_scale: f64,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    U,
    V,
    Both,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DemoLearnerArg {
    Kernel,
    Linear,
    None,
}

#[derive(Args, Debug)]
struct HardnessArgs {
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long, default_value_t = 100)]
    train_pairs: usize,
    #[arg(long, value_enum, default_value_t = DemoLearnerArg::Kernel)]
    learner: DemoLearnerArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 1e4)]
    b: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    metric: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    triples: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `constant:<c>`, `euclidean:<scale>`, `matrix:<path>` (index file
/// at `<path>.index`) or `hardness:<handle.json>`.
pub fn parse_metric(spec: &str) -> Result<SimilarityMetric> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| invalid(format!("metric spec {spec:?} must look like kind:value")))?;
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("bad number {s:?} in metric spec")))
    };
    match kind {
        "constant" => SimilarityMetric::constant(number(arg)?),
        "euclidean" => SimilarityMetric::euclidean(number(arg)?),
        "matrix" => {
            let path = Path::new(arg);
            let index = PathBuf::from(format!("{arg}.index"));
            Ok(SimilarityMetric::PrecomputedMatrix(DistanceMatrix::load(path, &index)?))
        }
        "hardness" => {
            let handle: HardnessMetricHandle = serde_json::from_str(&fs::read_to_string(arg)?)?;
            handle.validate()?;
            Ok(SimilarityMetric::Hardness(handle))
        }
        _ => Err(invalid(format!("unknown metric kind {kind:?}"))),
    }
}

/// `{:.6}`, switching to scientific notation for very large or small values.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && v.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    #[serde(flatten)]
    report: &'a T,
}

struct Ctx {
    timestamp: bool,
}

impl Ctx {
    fn emit<T: Serialize>(&self, command: &str, report: &T, out: Option<&Path>) -> Result<()> {
        let generated_at_unix = self.timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        let env = Envelope {
            command,
            generated_at_unix,
            report,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        match out {
            Some(p) => fs::write(p, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct GenDataReport {
    schema_version: u32,
    spec: SyntheticSpec,
    path: String,
    m: usize,
    n: usize,
    hidden_direction: Option<Vec<f64>>,
}

fn gen_data(ctx: &Ctx, a: &GenDataArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    let generator = match a.generator {
        GeneratorArg::Uniform => Generator::UnitBallUniform,
        GeneratorArg::Separable => Generator::SeparableWithMargin {
            margin: a.margin,
            noise_rate: a.noise,
        },
        GeneratorArg::HardnessU => Generator::HardnessPairs { mode: HardnessMode::U },
        GeneratorArg::HardnessV => Generator::HardnessPairs { mode: HardnessMode::V },
    };
    let spec = SyntheticSpec {
        generator,
        n: a.n,
        m: a.m,
        seed,
    };
    let ds = generate_dataset(&spec)?;
    ds.save(&a.out)?;
    let hidden_direction = match generator {
        Generator::HardnessPairs { mode } => {
            if let Some(p) = &a.handle_out {
                let (_, handle) = crate::hardness::sample_hardness_distribution(a.n, 1, mode, seed)?;
                write_json(p, &handle)?;
            }
            None
        }
        _ => Some(spec.hidden_direction()),
    };
    let report = GenDataReport {
        schema_version: 1,
        spec,
        path: a.out.display().to_string(),
        m: ds.len(),
        n: ds.dim(),
        hidden_direction,
    };
    ctx.emit("gen-data", &report, a.report.as_deref())
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<TrainConfig>(&fs::read_to_string(p)?)?,
        None => TrainConfig::linear(a.alpha.unwrap_or(0.2), a.gamma.unwrap_or(0.3)),
    };
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if a.tau.is_some() {
        cfg.tau = a.tau;
    }
    match a.learner {
        Some(LearnerArg::Linear) => cfg.learner = LearnerKind::Linear,
        Some(LearnerArg::Kernel) => {
            cfg.learner = LearnerKind::Kernel {
                kernel: KernelSpec::VovkHalf,
                norm: KernelNorm::Explicit { b: a.b.unwrap_or(1e4) },
            }
        }
        None => {}
    }
    if let (Some(b), LearnerKind::Kernel { norm, .. }) = (a.b, &mut cfg.learner) {
        *norm = KernelNorm::Explicit { b };
    }
    if let Some(it) = a.max_iters {
        cfg.solver.max_iters = it;
    }
    if let Ok(seed) = a.seed.resolve() {
        cfg.matching = MatchingStrategy::RandomPermutation { seed };
        cfg.solver.seed = seed;
    }
    let ds = LabeledDataset::load(&a.data)?;
    let metric = parse_metric(&a.metric)?;
    let model = train(&ds, &metric, &cfg)?;
    write_json(&a.out, &model)?;
    ctx.emit("train", &model.report, a.report.as_deref())
}

fn audit_cmd(ctx: &Ctx, a: &AuditArgs) -> Result<()> {
    let predictor: Predictor = serde_json::from_str(&fs::read_to_string(&a.predictor)?)?;
    let ds = LabeledDataset::load(&a.data)?;
    let metric = parse_metric(&a.metric)?;
    let needs_seed = matches!(a.matching, MatchingArg::Random) || a.population_pairs > 0;
    let seed = if needs_seed { a.seed.resolve()? } else { a.seed.resolve().unwrap_or(0) };
    let strategy = match a.matching {
        MatchingArg::Consecutive => MatchingStrategy::Consecutive,
        MatchingArg::Random => MatchingStrategy::RandomPermutation { seed },
    };
    let matching = build_matching(&ds, strategy)?;
    let synthetic = match &a.population_spec {
        Some(p) => Some(serde_json::from_str::<SyntheticSpec>(&fs::read_to_string(p)?)?.source()?),
        None => None,
    };
    let source: &dyn ExampleSource = match &synthetic {
        Some(s) => s,
        None => &ds,
    };
    let options = AuditOptions {
        gamma: a.gamma,
        alpha2_grid: a.alpha2_grid.clone(),
        population: (a.population_pairs > 0).then_some((source, a.population_pairs, crate::rng::derive_seed(seed, 1))),
    };
    let report = audit(&predictor, &ds, &matching, &metric, &options)?;
    ctx.emit("audit", &report, a.out.as_deref())
}

fn bounds_cmd(ctx: &Ctx, a: &BoundsArgs) -> Result<()> {
    let need_m = || a.m.ok_or_else(|| invalid("this formula needs --m"));
    let mut report = BoundReport {
        schema_version: BOUND_REPORT_SCHEMA,
        ..Default::default()
    };
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut input = |k: &str, v: f64| {
        report.inputs.insert(k.to_string(), v);
    };
    input("g", a.g);
    input("delta", a.delta);
    if let Some(m) = a.m {
        input("m", m);
    }
    let mut formulas = a.formula.clone();
    formulas.dedup();
    for f in formulas {
        match f {
            Formula::DeltaM => {
                report.inputs.insert("rhat".into(), a.rhat);
                let v = mf_generalization_delta(a.g, a.delta, need_m()?, a.rhat)?;
                report.delta_m = Some(v);
                rows.push(("delta-m".into(), format_number(v)));
            }
            Formula::KernelBall => {
                report.inputs.insert("c".into(), a.c);
                report.inputs.insert("big_m".into(), a.big_m);
                let v = kernel_ball_delta(a.g, a.delta, need_m()?, a.c, a.big_m)?;
                report.delta_m.get_or_insert(v);
                rows.push(("kernel-ball".into(), format_number(v)));
                report.inputs.insert("kernel_ball_delta_m".into(), v);
            }
            Formula::RhoLinear => {
                let v = rho_linear(a.g, a.delta, need_m()?)?;
                report.inputs.insert("rho_linear".into(), v);
                rows.push(("rho-linear".into(), format_number(v)));
            }
            Formula::RhoKernel => {
                let b = a.b.ok_or_else(|| invalid("rho-kernel needs --b"))?;
                let v = rho_kernel(a.g, a.delta, need_m()?, b)?;
                report.inputs.insert("b".into(), b);
                report.inputs.insert("rho_kernel".into(), v);
                rows.push(("rho-kernel".into(), format_number(v)));
            }
            Formula::LinAccuracy | Formula::SigmoidAccuracy | Formula::InfPacf => {
                let (name, spec) = match f {
                    Formula::LinAccuracy => (
                        "lin-accuracy",
                        SampleComplexitySpec::LinAccuracy {
                            alpha: a.alpha,
                            eps: a.eps,
                            eps_alpha: a.eps_alpha,
                            eps_gamma: a.eps_gamma,
                            delta: a.delta,
                        },
                    ),
                    Formula::SigmoidAccuracy => (
                        "sigmoid-accuracy",
                        SampleComplexitySpec::SigmoidAccuracy {
                            alpha: a.alpha,
                            eps: a.eps,
                            eps_alpha: a.eps_alpha,
                            eps_gamma: a.eps_gamma,
                            delta: a.delta,
                            l: a.l,
                        },
                    ),
                    _ => (
                        "inf-pacf",
                        SampleComplexitySpec::InfPacf {
                            m_pac: a.m_pac,
                            eps_alpha: a.eps_alpha,
                            eps_gamma: a.eps_gamma,
                            delta: a.delta,
                            rademacher: RademacherModel::InverseSqrt {
                                scale: a.rademacher_scale,
                            },
                        },
                    ),
                };
                let sc = pacf_sample_complexity(&spec)?;
                let branches: Vec<String> = sc.branches.iter().map(|&b| format_number(b)).collect();
                rows.push((name.into(), format!("{} (branches: {})", format_number(sc.m), branches.join(", "))));
                report.sample_complexities.insert(name.into(), sc);
            }
            Formula::BStar => {
                let eps_star = a.eps_star.unwrap_or_else(|| a.eps.min(a.eps_alpha).min(a.eps_gamma / 2.0));
                report.inputs.insert("l".into(), a.l);
                report.inputs.insert("eps_star".into(), eps_star);
                let v = kernel_norm_bound_b(a.l, eps_star)?;
                report.kernel_norm_bound = Some(v);
                rows.push(("b-star".into(), format_number(v)));
            }
        }
    }
    if a.json {
        ctx.emit("bounds", &report, None)?;
    } else {
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = std::io::stdout().lock();
        for (name, value) in &rows {
            writeln!(out, "{name:<width$}  {value}")?;
        }
    }
    if let Some(p) = &a.out {
        ctx.emit("bounds", &report, Some(p))?;
    }
    Ok(())
}

fn hardness_cmd(ctx: &Ctx, a: &HardnessArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    let mut exp = HardnessExperiment::new(a.n, a.pairs, seed);
    exp.train_pairs = a.train_pairs;
    exp.modes = match a.mode {
        ModeArg::U => vec![HardnessMode::U],
        ModeArg::V => vec![HardnessMode::V],
        ModeArg::Both => vec![HardnessMode::U, HardnessMode::V],
    };
    exp.trainer = match a.learner {
        DemoLearnerArg::None => None,
        DemoLearnerArg::Linear => Some(TrainConfig::linear(a.alpha, a.gamma)),
        DemoLearnerArg::Kernel => Some(TrainConfig::kernel(
            a.alpha,
            a.gamma,
            KernelSpec::VovkHalf,
            KernelNorm::Explicit { b: a.b },
        )),
    };
    let report = run_hardness_experiment(&exp)?;
    ctx.emit("hardness-demo", &report, a.out.as_deref())
}

#[derive(Serialize)]
struct ValidateMetricReport {
    schema_version: u32,
    clean: bool,
    #[serde(flatten)]
    report: ValidationReport,
}

fn validate_cmd(ctx: &Ctx, a: &ValidateArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    let metric = parse_metric(&a.metric)?;
    let ds = LabeledDataset::load(&a.data)?;
    let report = validate_metric(&metric, &ds, a.triples, seed)?;
    let out = ValidateMetricReport {
        schema_version: 1,
        clean: report.is_clean(),
        report,
    };
    ctx.emit("validate-metric", &out, a.out.as_deref())
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        timestamp: !cli.no_timestamp,
    };
    match &cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Audit(a) => audit_cmd(&ctx, a),
        Command::Bounds(a) => bounds_cmd(&ctx, a),
        Command::HardnessDemo(a) => hardness_cmd(&ctx, a),
        Command::ValidateMetric(a) => validate_cmd(&ctx, a),
    }
}

/// Parse `argv` (including the program name), run the command and return
/// the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = cli.threads;
    let run = move || execute(cli);
    let result = match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(invalid(format!("cannot start thread pool: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PacfError::InvalidInput(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}
