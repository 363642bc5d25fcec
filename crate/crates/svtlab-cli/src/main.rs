//! `svtlab` — command-line front end for SVT mechanisms, privacy audits,
//! and top-c selection benchmarks.
//!
//! Every run prints its effective seed on stderr and is bit-reproducible
//! for a fixed argument vector. Exit codes: 0 success (and, for audits, a
//! claimed bound that held), 1 data errors, 2 usage errors, 3 a privacy
//! claim that was violated or unbounded.

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use svtlab::audit::{
    adversarial_family, audit_csv_row, make_counterexample, prob_output_montecarlo,
    prob_output_quadrature, verify_dp_bound, AuditError, AuditMethod, AuditReport,
    CounterexampleId, CounterexampleSpec, NeighborInstance, Side, Verdict, AUDIT_CSV_HEADER,
};
use svtlab::bench::{
    gen_zipf, ingest_transactions, run_bench, write_summary_csv, write_trials_csv, BenchError,
    BenchMethod, BenchPlan, BenchResult, ItemHistogram,
};
use svtlab::mechanisms::utility_bounds;
use svtlab::svt::{optimize_split, BudgetSplit, SvtConfig, SvtError, Thresholds, Variant};

#[derive(Parser)]
#[command(name = "svtlab", version, about = "sparse vector technique laboratory")]
struct Cli {
    /// Seed for all randomness (default: $SVTLAB_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a variant's privacy loss on a counterexample, an adversarial
    /// family, or an instance file
    Audit(AuditArgs),
    /// Run the top-c selection benchmark and write trial/summary CSVs
    Bench(BenchArgs),
    /// Generate a Zipf-distributed item histogram CSV
    GenZipf(GenZipfArgs),
    /// Print the variance-minimizing budget split
    Split(SplitArgs),
    /// Print the selection accuracy bounds for SVT and EM
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// Variant under audit: alg1..alg7 (alg6 doubles as gptt)
    #[arg(long)]
    variant: String,
    /// Total privacy budget of the audited configuration
    #[arg(long)]
    eps: f64,
    /// Published counterexample: thm2, appendixA1, appendixA2
    #[arg(long)]
    counterexample: Option<String>,
    /// Construction size for appendixA1 / appendixA2
    #[arg(long)]
    m: Option<usize>,
    /// Instance family: adversarial (exhaustive patterns up to --len)
    #[arg(long)]
    family: Option<String>,
    /// Maximum pattern length for --family
    #[arg(long)]
    len: Option<usize>,
    /// Cutoff c of the audited configuration
    #[arg(long, default_value_t = 1)]
    c: usize,
    /// JSON file holding a NeighborInstance
    #[arg(long)]
    instance_file: Option<PathBuf>,
    /// quadrature (exact) or montecarlo
    #[arg(long, default_value = "quadrature")]
    method: String,
    /// Monte Carlo sample count
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// Claimed bound on the log-ratio (defaults to --eps)
    #[arg(long)]
    claim: Option<f64>,
    /// Budget split overrides for alg6/alg7
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    eps3: Option<f64>,
    /// Write the report CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Zipf dataset as ITEMS:RECORDS
    #[arg(long)]
    zipf: Option<String>,
    /// Transaction file (one transaction per line)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Histogram CSV (item,count with header)
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Comma-separated cutoff list, e.g. 25,50
    #[arg(long)]
    c: String,
    /// Privacy budget per run
    #[arg(long)]
    eps: f64,
    /// Comma-separated methods, e.g. em,svt-dpbook,svt-s:1:c23,svt-retr:1:c23:3D
    #[arg(long)]
    methods: String,
    /// Trials per (method, c) cell
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Directory for trials.csv and summary.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenZipfArgs {
    #[arg(long)]
    items: usize,
    #[arg(long)]
    records: u64,
    /// Write the histogram CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    c: usize,
    /// Use the monotonic-query allocation 1:c^(2/3)
    #[arg(long)]
    monotonic: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    k: u64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    eps: f64,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<SvtError> for CliError {
    fn from(e: SvtError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::InvalidInstance(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io(_) | BenchError::InvalidData(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli
        .seed
        .or_else(|| std::env::var("SVTLAB_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    eprintln!("seed: {seed}");
    let result = match cli.command {
        Command::Audit(args) => cmd_audit(args, seed),
        Command::Bench(args) => cmd_bench(args, seed),
        Command::GenZipf(args) => cmd_gen_zipf(args, seed),
        Command::Split(args) => cmd_split(args),
        Command::Bounds(args) => cmd_bounds(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Six significant digits.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

fn write_out(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, contents)?,
        None => {
            let stdout = std::io::stdout();
            stdout.lock().write_all(contents.as_bytes())?;
        }
    }
    Ok(())
}

fn audit_config(args: &AuditArgs, variant: Variant) -> Result<SvtConfig, CliError> {
    let thresholds = Thresholds::Scalar(0.0);
    let config = match variant {
        Variant::Alg6 | Variant::Alg7 => {
            let eps3 = args.eps3.unwrap_or(0.0);
            let split = match (args.eps1, args.eps2) {
                (Some(e1), Some(e2)) => BudgetSplit::with_total(e1, e2, eps3, args.eps)?,
                (None, None) => {
                    let half = (args.eps - eps3) / 2.0;
                    BudgetSplit::new(half, half, eps3)?
                }
                _ => {
                    return Err(CliError::Usage(
                        "--eps1 and --eps2 must be given together".into(),
                    ))
                }
            };
            SvtConfig::with_split(variant, split, args.c, thresholds)?
        }
        _ => {
            if args.eps1.is_some() || args.eps2.is_some() || args.eps3.is_some() {
                return Err(CliError::Usage(format!(
                    "{} has a fixed budget split; --eps1/--eps2/--eps3 apply to alg6 and alg7",
                    variant.name()
                )));
            }
            SvtConfig::new(variant, args.eps, args.c, thresholds)?
        }
    };
    Ok(config)
}

fn audit_instance_report(
    config: &SvtConfig,
    inst: &NeighborInstance,
    method: AuditMethod,
    samples: u64,
    claim: f64,
    seed: u64,
) -> Result<AuditReport, CliError> {
    let report = match method {
        AuditMethod::Quadrature => {
            let log_d = prob_output_quadrature(config, inst, Side::D)?;
            let log_dp = prob_output_quadrature(config, inst, Side::DPrime)?;
            AuditReport::from_log_probs(log_d, log_dp, method, 0.0, Some(claim))
        }
        AuditMethod::MonteCarlo => {
            let mut rng = svtlab::rng::root(seed);
            let est_d = prob_output_montecarlo(config, inst, Side::D, samples, &mut rng)?;
            let est_dp = prob_output_montecarlo(config, inst, Side::DPrime, samples, &mut rng)?;
            AuditReport::from_log_probs(
                est_d.ln_p(),
                est_dp.ln_p(),
                method,
                est_d.ci_halfwidth.max(est_dp.ci_halfwidth),
                Some(claim),
            )
        }
    };
    Ok(report)
}

fn cmd_audit(args: AuditArgs, seed: u64) -> Result<u8, CliError> {
    let variant: Variant = args.variant.parse()?;
    let method = match args.method.as_str() {
        "quadrature" => AuditMethod::Quadrature,
        "montecarlo" => AuditMethod::MonteCarlo,
        other => {
            return Err(CliError::Usage(format!(
                "unknown method {other:?} (expected quadrature or montecarlo)"
            )))
        }
    };
    let claim = args.claim.unwrap_or(args.eps);
    let modes = [
        args.counterexample.is_some(),
        args.family.is_some(),
        args.instance_file.is_some(),
    ];
    if modes.iter().filter(|m| **m).count() != 1 {
        return Err(CliError::Usage(
            "give exactly one of --counterexample, --family, --instance-file".into(),
        ));
    }

    let mut rows = vec![AUDIT_CSV_HEADER.to_string()];
    let verdict;
    if let Some(name) = &args.counterexample {
        let id: CounterexampleId = name.parse()?;
        if id.variant() != variant {
            return Err(CliError::Usage(format!(
                "counterexample {name} targets {}, not {}",
                id.variant().name(),
                variant.name()
            )));
        }
        let m = match (id, args.m) {
            (CounterexampleId::Alg5Thm2, _) => 1,
            (_, Some(m)) => m,
            (_, None) => {
                return Err(CliError::Usage(format!("--m is required for {name}")));
            }
        };
        let ce = make_counterexample(&CounterexampleSpec {
            id,
            size_m: m,
            epsilon: args.eps,
        })?;
        let report =
            audit_instance_report(&ce.config, &ce.instance, method, args.samples, claim, seed)?;
        rows.push(audit_csv_row(variant, id.name(), Some(m), &report));
        verdict = report.verdict;
    } else if let Some(family) = &args.family {
        if family != "adversarial" {
            return Err(CliError::Usage(format!(
                "unknown family {family:?} (expected adversarial)"
            )));
        }
        if method != AuditMethod::Quadrature {
            return Err(CliError::Usage(
                "family audits are exhaustive; use --method quadrature".into(),
            ));
        }
        let len = args
            .len
            .ok_or_else(|| CliError::Usage("--len is required for --family".into()))?;
        if len == 0 || len > 6 {
            return Err(CliError::Usage("--len must be between 1 and 6".into()));
        }
        let config = audit_config(&args, variant)?;
        let instances = adversarial_family(len, args.c, 1.0, variant.aborts());
        let report = verify_dp_bound(&config, &instances, claim)?;
        rows.push(audit_csv_row(variant, "adversarial", None, &report));
        verdict = report.verdict;
    } else {
        let path = args.instance_file.as_ref().expect("mode checked");
        let text = std::fs::read_to_string(path)?;
        let inst: NeighborInstance = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("bad instance file: {e}")))?;
        inst.validate()?;
        let config = audit_config(&args, variant)?;
        let report = audit_instance_report(&config, &inst, method, args.samples, claim, seed)?;
        rows.push(audit_csv_row(variant, "file", None, &report));
        verdict = report.verdict;
    }

    let mut csv = rows.join("\n");
    csv.push('\n');
    write_out(&args.out, &csv)?;
    Ok(match verdict {
        Verdict::WithinBound => 0,
        Verdict::ViolatesBound | Verdict::Unbounded => 3,
    })
}

fn bench_histogram(args: &BenchArgs, seed: u64) -> Result<ItemHistogram, CliError> {
    let sources = [args.zipf.is_some(), args.data.is_some(), args.hist.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(CliError::Usage(
            "give exactly one of --zipf, --data, --hist".into(),
        ));
    }
    if let Some(spec) = &args.zipf {
        let (items, records) = spec
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| {
                CliError::Usage(format!("--zipf wants ITEMS:RECORDS, got {spec:?}"))
            })?;
        return Ok(gen_zipf(items, records, seed)?);
    }
    if let Some(path) = &args.data {
        return Ok(ingest_transactions(path)?);
    }
    Ok(ItemHistogram::read_csv(args.hist.as_ref().expect("source checked"))?)
}

fn cmd_bench(args: BenchArgs, seed: u64) -> Result<u8, CliError> {
    let cs: Vec<usize> = args
        .c
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad cutoff {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let methods: Vec<BenchMethod> = args
        .methods
        .split(',')
        .map(|t| t.trim().parse::<BenchMethod>().map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    if cs.is_empty() || methods.is_empty() {
        return Err(CliError::Usage("need at least one cutoff and one method".into()));
    }
    let hist = bench_histogram(&args, seed)?;

    let mut runs: Vec<(BenchPlan, BenchResult)> = Vec::new();
    for method in &methods {
        for &c in &cs {
            let plan = BenchPlan {
                method: *method,
                c,
                epsilon: args.eps,
                trials: args.trials,
                seed,
            };
            let result = run_bench(&plan, &hist)?;
            runs.push((plan, result));
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let mut trials_buf = Vec::new();
    write_trials_csv(&mut trials_buf, &runs)?;
    std::fs::write(args.out.join("trials.csv"), &trials_buf)?;
    let mut summary_buf = Vec::new();
    write_summary_csv(&mut summary_buf, &runs)?;
    std::fs::write(args.out.join("summary.csv"), &summary_buf)?;

    let stdout = std::io::stdout();
    stdout.lock().write_all(&summary_buf)?;
    Ok(0)
}

fn cmd_gen_zipf(args: GenZipfArgs, seed: u64) -> Result<u8, CliError> {
    let hist = gen_zipf(args.items, args.records, seed)?;
    let mut buf = Vec::new();
    hist.write_csv(&mut buf)?;
    write_out(&args.out, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    Ok(0)
}

fn cmd_split(args: SplitArgs) -> Result<u8, CliError> {
    let split = optimize_split(args.eps, args.c, args.monotonic)?;
    println!("eps1/eps2 = {} / {}", sig6(split.eps1), sig6(split.eps2));
    Ok(0)
}

fn cmd_bounds(args: BoundsArgs) -> Result<u8, CliError> {
    let (alpha_svt, alpha_em) =
        utility_bounds(args.k, args.beta, args.eps).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("alpha_svt = {}", sig6(alpha_svt));
    println!("alpha_em = {}", sig6(alpha_em));
    Ok(0)
}
