//! The `debias` command line: ingest scored CSVs, fit post-processing
//! models, apply and audit them, and run the verification oracles.

pub mod calibrate;
pub mod errors;
pub mod ingest;
pub mod model_file;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use debias_core::{
    decide, fit, impossibility_bound, qp_oracle, sample, suboptimality_bound, synthesize,
    BiasReport, Cohort, Criterion, DiscreteInstance, ImpossibilityInput, LearningRate, SgdConfig,
    SmoothedObjective, SynthGroup, SynthSpec,
};

use calibrate::calibrate;
use errors::{CliError, CliResult};
use ingest::{ingest, parse_bool, ClampPolicy, Ingested, Schema};
use model_file::{FitMeta, ModelFile};

#[derive(Parser)]
#[command(
    name = "debias",
    version,
    about = "Remove group bias from binary classifier scores by learned randomized thresholding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a post-processing model on a scored CSV
    Fit(FitArgs),
    /// Apply a fitted model: write decision probabilities and sampled labels
    Apply(ApplyArgs),
    /// Audit bias of the raw scores or of a fitted model
    Audit(AuditArgs),
    /// Compare the SGD fit against the exact solver and the convergence bound
    OracleCheck(OracleCheckArgs),
    /// Evaluate the accuracy-fairness lower bound on a discrete instance
    Bound(BoundArgs),
    /// Generate a synthetic scored cohort
    Synth(SynthArgs),
    /// Split a CSV into seeded parts (train/calibration/test style)
    Split(SplitArgs),
    /// Fit a logistic calibration map on raw margins
    Calibrate(CalibrateArgs),
}

#[derive(Args, Clone)]
struct ColumnArgs {
    /// Score column name
    #[arg(long, default_value = "score")]
    score_col: String,
    /// Group column name
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Sensitive-flag column name
    #[arg(long, default_value = "sensitive")]
    sensitive_col: String,
    /// Label column name
    #[arg(long, default_value = "label")]
    label_col: String,
}

impl ColumnArgs {
    fn schema(&self) -> Schema {
        Schema {
            score: self.score_col.clone(),
            group: self.group_col.clone(),
            sensitive: self.sensitive_col.clone(),
            label: self.label_col.clone(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    /// Conditional statistical parity within each group
    Parity,
    /// Equal positive rate across groups
    Equality,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    criterion: CriterionArg,
    /// Target positive rate under equality (default: empirical rate of the
    /// unadjusted hard classifier)
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    /// Learning rate: "auto" or a positive number
    #[arg(long, default_value = "auto")]
    lr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model output path; the trace CSV lands next to it unless --trace-out
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000)]
    trace_every: usize,
    /// Reject out-of-range scores instead of clamping them
    #[arg(long)]
    strict_scores: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for sampling the hard labels
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict_scores: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    input: PathBuf,
    /// Audit this fitted model; without it the unadjusted hard classifier
    /// 1{score > 0} is audited
    #[arg(long)]
    model: Option<PathBuf>,
    /// Key-value report destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-group CSV report
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Audit seeded hard labels instead of exact decision probabilities
    #[arg(long)]
    sampled: bool,
    /// Seed for --sampled
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict_scores: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args)]
struct OracleCheckArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    criterion: CriterionArg,
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value = "auto")]
    lr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict_scores: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args)]
struct BoundArgs {
    /// Discrete instance file: one `mass eta gamma_x group` line per point
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML population spec (one [[group]] table per group)
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated positive shares, e.g. 60,20,20
    #[arg(long, default_value = "60,20,20")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; parts land at <prefix>-<part>.csv
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "margin")]
    margin_col: String,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Rewrite the input with an appended calibrated score column
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fitted parameters as a key-value file
    #[arg(long)]
    params_out: Option<PathBuf>,
}

/// Parses and dispatches; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Audit(args) => cmd_audit(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Split(args) => cmd_split(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    }
}

fn parse_lr(raw: &str) -> CliResult<LearningRate> {
    if raw == "auto" {
        return Ok(LearningRate::Auto);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| CliError::usage(format!("--lr must be 'auto' or a number, got '{raw}'")))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(CliError::usage("--lr must be positive"));
    }
    Ok(LearningRate::Fixed(value))
}

fn policy(strict: bool) -> ClampPolicy {
    if strict {
        ClampPolicy::Strict
    } else {
        ClampPolicy::Clamp
    }
}

fn resolve_criterion(
    arg: CriterionArg,
    target_rate: Option<f64>,
    cohort: &Cohort,
) -> CliResult<Criterion> {
    match arg {
        CriterionArg::Parity => {
            if target_rate.is_some() {
                return Err(CliError::usage(
                    "--target-rate only applies to --criterion equality",
                ));
            }
            Ok(Criterion::ConditionalStatisticalParity)
        }
        CriterionArg::Equality => {
            let rate = target_rate.unwrap_or_else(|| cohort.positive_rate());
            Criterion::predictive_equality(rate).map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let lr = parse_lr(&args.lr)?;
    let schema = args.columns.schema();
    let sensitive_required = args.criterion == CriterionArg::Parity;
    let data = ingest(
        &args.input,
        &schema,
        policy(args.strict_scores),
        sensitive_required,
        None,
    )?;
    let criterion = resolve_criterion(args.criterion, args.target_rate, &data.cohort)?;
    let config = SgdConfig {
        steps: args.steps,
        learning_rate: lr,
        seed: args.seed,
        projection_bound: None,
        trace_every: args.trace_every,
        sampling: debias_core::Sampling::WithReplacement,
    };
    let (model, trace) = fit(&data.cohort, &criterion, args.gamma, &config)?;
    let alpha = lr.resolve(
        data.cohort.group_count(),
        args.steps,
        args.gamma,
        criterion.offset(),
    )?;
    let meta = FitMeta {
        n: data.cohort.len(),
        steps: args.steps,
        learning_rate: alpha,
        seed: args.seed,
    };
    let file = ModelFile::new(model, data.report.group_labels.clone(), meta)?;
    file.save(&args.out)?;
    let trace_path = args.trace_out.unwrap_or_else(|| trace_sibling(&args.out));
    std::fs::write(&trace_path, trace.to_csv())?;

    print!("{}", data.report.summary());
    let last = trace.rows.last().expect("trace has rows");
    println!("criterion = {}", criterion_name(&criterion));
    println!("learning_rate = {alpha:?}");
    println!("final_objective = {:?}", last.objective);
    println!("model = {}", args.out.display());
    println!("trace = {}", trace_path.display());
    Ok(())
}

fn trace_sibling(model_path: &Path) -> PathBuf {
    let mut name = model_path.as_os_str().to_os_string();
    name.push(".trace.csv");
    PathBuf::from(name)
}

fn criterion_name(criterion: &Criterion) -> String {
    match criterion {
        Criterion::ConditionalStatisticalParity => "conditional-statistical-parity".into(),
        Criterion::PredictiveEquality { target_rate } => {
            format!("predictive-equality (target_rate {target_rate:?})")
        }
    }
}

fn ingest_for_model(
    input: &Path,
    columns: &ColumnArgs,
    strict: bool,
    file: &ModelFile,
) -> CliResult<Ingested> {
    let sensitive_required = matches!(
        file.model.criterion(),
        Criterion::ConditionalStatisticalParity
    );
    ingest(
        input,
        &columns.schema(),
        policy(strict),
        sensitive_required,
        Some(&file.group_labels),
    )
}

fn cmd_apply(args: ApplyArgs) -> CliResult<()> {
    let file = ModelFile::load(&args.model)?;
    let data = ingest_for_model(&args.input, &args.columns, args.strict_scores, &file)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let mut writer = csv::Writer::from_path(&args.out)?;
    let mut headers: Vec<String> = data.headers.iter().map(|h| h.to_string()).collect();
    headers.push("q".into());
    headers.push("sampled_label".into());
    writer.write_record(&headers)?;
    let mut positive_mass = 0.0;
    for (ex, raw) in data.cohort.examples().iter().zip(data.raw_rows.iter()) {
        let q = decide(ex, &file.model)?;
        positive_mass += q.value();
        let hard = sample(q, &mut rng);
        let mut record: Vec<String> = raw.iter().map(|f| f.to_string()).collect();
        record.push(format!("{:?}", q.value()));
        record.push(if hard { "1".into() } else { "0".into() });
        writer.write_record(&record)?;
    }
    writer.flush()?;
    println!(
        "applied {} to {} rows (mean q {:?}) -> {}",
        args.model.display(),
        data.cohort.len(),
        positive_mass / data.cohort.len() as f64,
        args.out.display()
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> CliResult<()> {
    let file = match &args.model {
        Some(path) => Some(ModelFile::load(path)?),
        None => None,
    };
    let data = match &file {
        Some(f) => ingest_for_model(&args.input, &args.columns, args.strict_scores, f)?,
        None => ingest(
            &args.input,
            &args.columns.schema(),
            policy(args.strict_scores),
            true,
            None,
        )?,
    };
    let mut q: Vec<f64> = match &file {
        Some(f) => data
            .cohort
            .examples()
            .iter()
            .map(|ex| decide(ex, &f.model).map(|d| d.value()))
            .collect::<Result<_, _>>()?,
        None => data
            .cohort
            .examples()
            .iter()
            .map(|ex| if ex.score > 0.0 { 1.0 } else { 0.0 })
            .collect(),
    };
    if args.sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        for value in q.iter_mut() {
            let drawn = sample(debias_core::DecisionProbability::new(*value)?, &mut rng);
            *value = if drawn { 1.0 } else { 0.0 };
        }
    }
    let report = BiasReport::compute(&data.cohort, &q, file.as_ref().map(|f| &f.model))?;
    let rendered = report.to_key_value();
    match &args.out {
        Some(path) => std::fs::write(path, &rendered)?,
        None => print!("{rendered}"),
    }
    if let Some(path) = &args.csv_out {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(())
}

fn cmd_oracle_check(args: OracleCheckArgs) -> CliResult<()> {
    let lr = parse_lr(&args.lr)?;
    let sensitive_required = args.criterion == CriterionArg::Parity;
    let data = ingest(
        &args.input,
        &args.columns.schema(),
        policy(args.strict_scores),
        sensitive_required,
        None,
    )?;
    let criterion = resolve_criterion(args.criterion, args.target_rate, &data.cohort)?;
    let config = SgdConfig {
        steps: args.steps,
        learning_rate: lr,
        seed: args.seed,
        projection_bound: None,
        trace_every: args.steps,
        sampling: debias_core::Sampling::WithReplacement,
    };
    let (model, _) = fit(&data.cohort, &criterion, args.gamma, &config)?;
    let oracle = qp_oracle(&data.cohort, &criterion, args.gamma)?;
    let objective = SmoothedObjective::new(&data.cohort, &criterion, args.gamma)?;
    let fitted = objective.value(model.mu());
    let optimal = objective.value(&oracle.mu);
    let gap = fitted - optimal;
    let bound = suboptimality_bound(
        data.cohort.group_count(),
        args.steps,
        args.gamma,
        criterion.offset(),
    );
    println!("objective_fitted = {fitted:?}");
    println!("objective_oracle = {optimal:?}");
    println!("gap = {gap:?}");
    println!("bound = {bound:?}");
    println!("within_bound = {}", if gap <= bound { "yes" } else { "no" });
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.instance)
        .map_err(|e| CliError::data(format!("{}: {e}", args.instance.display())))?;
    let instance = DiscreteInstance::parse(&text).map_err(|e| CliError::data(e.to_string()))?;
    // The bound takes a hard predictor; use the Bayes rule of the instance.
    let mass: Vec<f64> = instance.points().iter().map(|p| p.mass).collect();
    let gamma_x: Vec<f64> = instance.points().iter().map(|p| p.gamma_x).collect();
    let predictor: Vec<bool> = instance.points().iter().map(|p| p.eta > 0.5).collect();
    let input = ImpossibilityInput::new(mass, gamma_x, predictor)
        .map_err(|e| CliError::data(e.to_string()))?;
    let out = impossibility_bound(&input);
    println!("lower_bound = {:?}", out.lower_bound);
    println!("witness_lhs = {:?}", out.witness_lhs);
    let membership: String = out
        .witness
        .iter()
        .map(|&w| if w { '1' } else { '0' })
        .collect();
    println!("witness = {membership}");
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFile {
    #[serde(rename = "group")]
    groups: Vec<SynthGroupFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthGroupFile {
    weight: f64,
    eta_alpha: f64,
    eta_beta: f64,
    sensitive_base: f64,
    sensitive_slope: f64,
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CliError::data(format!("{}: {e}", args.spec.display())))?;
    let parsed: SynthFile =
        toml::from_str(&text).map_err(|e| CliError::data(format!("synth spec: {e}")))?;
    let spec = SynthSpec {
        groups: parsed
            .groups
            .into_iter()
            .map(|g| SynthGroup {
                weight: g.weight,
                eta_alpha: g.eta_alpha,
                eta_beta: g.eta_beta,
                sensitive_base: g.sensitive_base,
                sensitive_slope: g.sensitive_slope,
            })
            .collect(),
    };
    let cohort = synthesize(&spec, args.n, args.seed)?;
    let mut writer = csv::Writer::from_path(&args.out)?;
    writer.write_record(["score", "group", "sensitive", "label"])?;
    for ex in cohort.examples() {
        writer.write_record(&[
            format!("{:?}", ex.score),
            ex.group_id.to_string(),
            if ex.sensitive { "1".into() } else { "0".to_string() },
            match ex.label {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => String::new(),
            },
        ])?;
    }
    writer.flush()?;
    println!(
        "wrote {} rows across {} groups -> {}",
        cohort.len(),
        cohort.group_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> CliResult<()> {
    let shares: Vec<f64> = args
        .ratios
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .ok_or_else(|| {
                    CliError::usage(format!("--ratios must be positive numbers, got '{s}'"))
                })
        })
        .collect::<CliResult<_>>()?;
    if shares.len() < 2 {
        return Err(CliError::usage("--ratios needs at least two parts"));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&args.input)
        .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
    let headers = reader.headers()?.clone();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(CliError::data("no data rows to split"));
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let total: f64 = shares.iter().sum();
    let names: Vec<String> = match shares.len() {
        2 => vec!["train".into(), "test".into()],
        3 => vec!["train".into(), "cal".into(), "test".into()],
        n => (0..n).map(|i| format!("part{i}")).collect(),
    };
    let mut start = 0usize;
    let mut cumulative = 0.0;
    for (i, (share, name)) in shares.iter().zip(names.iter()).enumerate() {
        cumulative += share;
        let end = if i + 1 == shares.len() {
            rows.len()
        } else {
            ((cumulative / total) * rows.len() as f64).round() as usize
        }
        .min(rows.len());
        let path = PathBuf::from(format!("{}-{name}.csv", args.out_prefix));
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(&headers)?;
        for &index in &order[start..end] {
            writer.write_record(&rows[index])?;
        }
        writer.flush()?;
        println!("{name}: {} rows -> {}", end - start, path.display());
        start = end;
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> CliResult<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&args.input)
        .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
    let headers = reader.headers()?.clone();
    let margin_col = headers
        .iter()
        .position(|h| h == args.margin_col)
        .ok_or_else(|| CliError::data(format!("missing margin column '{}'", args.margin_col)))?;
    let label_col = headers
        .iter()
        .position(|h| h == args.label_col)
        .ok_or_else(|| CliError::data(format!("missing label column '{}'", args.label_col)))?;

    let mut margins = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let raw = record.get(margin_col).unwrap_or("").trim();
        let margin: f64 = raw
            .parse()
            .map_err(|_| CliError::data(format!("row {}: non-numeric margin '{raw}'", i + 2)))?;
        let flag = record.get(label_col).unwrap_or("").trim();
        let label = parse_bool(flag).ok_or_else(|| {
            CliError::data(format!("row {}: unknown boolean encoding '{flag}'", i + 2))
        })?;
        margins.push(margin);
        labels.push(label);
        rows.push(record);
    }
    let params = calibrate(&margins, &labels)?;
    println!("a = {:?}", params.a);
    println!("b = {:?}", params.b);
    println!("iterations = {}", params.iterations);
    if params.separation_warning {
        eprintln!("warning: margins are separable; calibration hit the iteration cap");
    }
    if let Some(path) = &args.params_out {
        std::fs::write(
            path,
            format!(
                "a = {:?}\nb = {:?}\nseparation_warning = {}\n",
                params.a, params.b, params.separation_warning
            ),
        )?;
    }
    if let Some(path) = &args.out {
        let mut writer = csv::Writer::from_path(path)?;
        let mut out_headers: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        out_headers.push("score".into());
        writer.write_record(&out_headers)?;
        for (record, &margin) in rows.iter().zip(margins.iter()) {
            let mut fields: Vec<String> = record.iter().map(|f| f.to_string()).collect();
            fields.push(format!("{:?}", params.score(margin)));
            writer.write_record(&fields)?;
        }
        writer.flush()?;
        println!("scored = {}", path.display());
    }
    Ok(())
}
