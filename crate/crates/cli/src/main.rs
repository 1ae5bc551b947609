//! `qcascade` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qcascade::io::{
    load_policy, load_policy_template, load_questions, parse_logs, parse_records, read_curve_csv,
    read_json, write_curve_csv, write_outcomes, write_output, write_records,
};
use qcascade::{
    accuracy, auc, baseline_heuristic, baseline_random, baseline_random_sampled, build_curve_k1,
    calibration_report, cost_at_accuracy, generate, run_live, run_offline, stage_anchors,
    sweep_multi, AccuracyCostCurve, CascadeOutcome, CascadePolicy, ConfidenceMethod,
    CurveReduction, Grid, HttpBackend, LiveOptions, StageBackend, StageKind, SynthConfig,
};

/// Reports divide raw FLOPs by this.
const REPORT_UNIT: f64 = 1e11;

#[derive(Parser)]
#[command(name = "qcascade", version, about = "Confidence-cascaded QA inference and accuracy/cost evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a fixed-threshold policy over prediction logs.
    Eval(EvalArgs),
    /// Sweep thresholds and emit an accuracy/cost curve CSV.
    Sweep(SweepArgs),
    /// Cost-normalized area under a curve CSV.
    Auc(AucArgs),
    /// Lowest cost at which a curve reaches a target accuracy.
    Intersect(IntersectArgs),
    /// Random or question-length baseline curve CSV.
    Baseline(BaselineArgs),
    /// Generate synthetic prediction logs.
    Synth(SynthArgs),
    /// Run a policy against live stage backends.
    Live(LiveArgs),
    /// Check a policy and/or logs without evaluating anything.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct LogInputs {
    /// Prediction log (JSONL); repeat for several files.
    #[arg(long = "logs", required = true)]
    logs: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    inputs: LogInputs,
    /// Write per-question outcomes as JSONL.
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
enum GridArg {
    Quantiles(usize),
    All,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(GridArg::All);
        }
        match s.parse::<usize>() {
            Ok(g) if g >= 2 => Ok(GridArg::Quantiles(g)),
            _ => Err(format!("expected `all` or an integer >= 2, got {s:?}")),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Policy supplying stages, method and costs; thresholds are ignored.
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    inputs: LogInputs,
    /// Per-stage candidate grid: quantile count or `all`. Default: exhaustive
    /// for one iteration, 50 quantiles otherwise.
    #[arg(long)]
    grid: Option<GridArg>,
    /// Keep dominated points (deduplicated by cost only).
    #[arg(long)]
    raw: bool,
    /// Output CSV path; `-` or absent writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AucArgs {
    /// Curve CSV.
    curve: PathBuf,
    /// Cost range `LO,HI` in FLOPs.
    #[arg(long, value_parser = parse_range)]
    range: Option<(f64, f64)>,
}

#[derive(Args)]
struct IntersectArgs {
    curve: PathBuf,
    /// Target accuracy as a fraction.
    #[arg(long)]
    target: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Random,
    Heuristic,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    inputs: LogInputs,
    /// Escalation fractions per leg for the random baseline.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Sample per-question coin flips with this seed instead of using the
    /// expected curve.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a calibration report using this confidence method.
    #[arg(long)]
    report: Option<ConfidenceMethod>,
}

#[derive(Args)]
struct LiveArgs {
    #[arg(long)]
    policy: PathBuf,
    /// Backend base URL, one per stage in policy order.
    #[arg(long = "backend", required = true)]
    backends: Vec<String>,
    /// Questions with passages (JSONL).
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, default_value_t = 32)]
    max_new_tokens: u32,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long = "logs")]
    logs: Vec<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err("range needs finite LO < HI".into());
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCASCADE_LOG_LEVEL", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Auc(a) => auc_cmd(a),
        Command::Intersect(a) => intersect(a),
        Command::Baseline(a) => baseline(a),
        Command::Synth(a) => synth(a),
        Command::Live(a) => live(a),
        Command::Validate(a) => validate(a),
    }
}

fn load_logs(inputs: &LogInputs) -> anyhow::Result<qcascade::PredictionLog> {
    let log = parse_logs(&inputs.logs)?;
    log::info!("loaded {} records across {} stages", log.len(), log.stage_names().count());
    Ok(log)
}

fn summary(policy: &CascadePolicy, outcomes: &[CascadeOutcome]) -> anyhow::Result<String> {
    let mut out = String::new();
    writeln!(out, "questions: {}", outcomes.len())?;
    if outcomes.is_empty() {
        return Ok(out);
    }
    match accuracy(outcomes) {
        Ok(a) => writeln!(out, "accuracy: {a}")?,
        Err(_) => writeln!(out, "accuracy: n/a (missing gold answers)")?,
    }
    let costs: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    let mean = qcascade::dataset_cost(&costs)?;
    writeln!(out, "mean cost: {mean} FLOPs ({:.4} x 1e11)", mean / REPORT_UNIT)?;
    writeln!(out, "exit stages:")?;
    for (k, stage) in policy.stages.iter().enumerate() {
        let n = outcomes.iter().filter(|o| o.exit_stage == k).count();
        writeln!(out, "  {}: {n}", stage.name)?;
    }
    Ok(out)
}

fn save_outcomes(path: &Path, outcomes: &[CascadeOutcome]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_outcomes(&mut buf, outcomes)?;
    write_output(Some(path), &buf)?;
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let policy = load_policy(&a.policy)?;
    let log = load_logs(&a.inputs)?;
    let outcomes = run_offline(&log, &policy)?;
    print!("{}", summary(&policy, &outcomes)?);
    if let Some(path) = &a.outcomes {
        save_outcomes(path, &outcomes)?;
    }
    Ok(())
}

fn reduction(raw: bool) -> CurveReduction {
    if raw {
        CurveReduction::Raw
    } else {
        CurveReduction::Pareto
    }
}

fn emit_curve(out: Option<&Path>, curve: &AccuracyCostCurve) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, curve.points())?;
    write_output(out, &buf)?;
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let template = load_policy_template(&a.policy)?;
    let log = load_logs(&a.inputs)?;
    let reduction = reduction(a.raw);
    let curve = match (a.grid, template.iterations()) {
        (None, 1) => build_curve_k1(&log, &template, reduction)?,
        (grid, _) => {
            let grid = match grid {
                Some(GridArg::All) => Grid::AllDistinct,
                Some(GridArg::Quantiles(g)) => Grid::Quantiles(g),
                None => Grid::Quantiles(50),
            };
            sweep_multi(&log, &template, grid, reduction)?
        }
    };
    log::info!("curve has {} points", curve.len());
    emit_curve(a.out.as_deref(), &curve)
}

fn load_curve(path: &Path) -> anyhow::Result<AccuracyCostCurve> {
    let points = read_curve_csv(path)?;
    AccuracyCostCurve::from_points(points).with_context(|| format!("curve {}", path.display()))
}

fn auc_cmd(a: AucArgs) -> anyhow::Result<()> {
    let curve = load_curve(&a.curve)?;
    println!("{}", auc(&curve, a.range)?);
    Ok(())
}

fn intersect(a: IntersectArgs) -> anyhow::Result<()> {
    let curve = load_curve(&a.curve)?;
    let cost = cost_at_accuracy(&curve, a.target)?;
    println!("{cost:e} FLOPs ({:.4} x 1e11)", cost / REPORT_UNIT);
    Ok(())
}

fn baseline(a: BaselineArgs) -> anyhow::Result<()> {
    let template = load_policy_template(&a.policy)?;
    let log = load_logs(&a.inputs)?;
    let curve = match (a.kind, a.seed) {
        (BaselineKind::Random, None) => {
            baseline_random(&stage_anchors(&log, &template)?, a.steps)?
        }
        (BaselineKind::Random, Some(seed)) => {
            baseline_random_sampled(&log, &template, a.steps, seed)?
        }
        (BaselineKind::Heuristic, _) => baseline_heuristic(&log, &template, reduction(a.raw))?,
    };
    emit_curve(a.out.as_deref(), &curve)
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let config: SynthConfig = read_json(&a.config)?;
    let log = generate(&config)?;
    let mut buf = Vec::new();
    write_records(&mut buf, log.records())?;
    write_output(a.out.as_deref(), &buf)?;
    if let Some(method) = a.report {
        let report = calibration_report(&log, method)?;
        // Keep stdout clean when the logs themselves go there.
        match a.out.as_deref() {
            Some(p) if p != Path::new("-") => print!("{report}"),
            _ => eprint!("{report}"),
        }
    }
    Ok(())
}

fn live(a: LiveArgs) -> anyhow::Result<()> {
    let policy = load_policy(&a.policy)?;
    if a.backends.len() != policy.stages.len() {
        bail!(
            "policy has {} stages but {} backends were given",
            policy.stages.len(),
            a.backends.len()
        );
    }
    if a.concurrency == 0 {
        bail!("--concurrency must be at least 1");
    }
    let timeout = Duration::from_secs(a.timeout);
    let http = a
        .backends
        .iter()
        .map(|url| HttpBackend::new(url, timeout))
        .collect::<Result<Vec<_>, _>>()?;
    let backends: Vec<&dyn StageBackend> = http.iter().map(|b| b as &dyn StageBackend).collect();
    let questions = load_questions(&a.questions)?;
    let options = LiveOptions {
        max_new_tokens: a.max_new_tokens,
        concurrency: a.concurrency,
    };
    let mut outcomes = Vec::new();
    let mut failures = 0usize;
    for (q, result) in questions.iter().zip(run_live(&backends, &policy, &questions, options)?) {
        match result {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                failures += 1;
                log::error!("question {}: {e}", q.qid);
            }
        }
    }
    print!("{}", summary(&policy, &outcomes)?);
    if let Some(path) = &a.outcomes {
        save_outcomes(path, &outcomes)?;
    }
    if failures > 0 {
        bail!("{failures} of {} questions failed", questions.len());
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> anyhow::Result<()> {
    if a.policy.is_none() && a.logs.is_empty() {
        bail!("nothing to validate: pass --policy and/or --logs");
    }
    let policy = a.policy.as_deref().map(load_policy).transpose()?;
    if a.logs.is_empty() {
        println!("ok: policy");
        return Ok(());
    }
    // Duplicates and schema errors across the whole file set.
    let log = parse_logs(&a.logs)?;
    let expected: Option<BTreeMap<&str, (StageKind, u32)>> = policy.as_ref().map(|p| {
        p.stages
            .iter()
            .map(|s| (s.name.as_str(), (s.kind, s.passages)))
            .collect()
    });
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    let mut problems = Vec::new();
    for path in &a.logs {
        let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        for (line, r) in parse_records(file, path)? {
            let at = format!("{}:{line}", path.display());
            match expected.as_ref().map(|m| m.get(r.stage.as_str())) {
                Some(None) => problems.push(format!("{at}: stage {:?} is not in the policy", r.stage)),
                Some(Some(&(StageKind::ClosedBook, _))) if r.n_passages != 0 => problems.push(format!(
                    "{at}: closed-book stage {:?} record has n_passages {}",
                    r.stage, r.n_passages
                )),
                Some(Some(&(StageKind::OpenBook, s))) if r.n_passages != s => problems.push(format!(
                    "{at}: stage {:?} expects {s} passages, record has {}",
                    r.stage, r.n_passages
                )),
                _ => {}
            }
            match seen.get(&r.stage) {
                Some(&n) if n != r.n_passages => problems.push(format!(
                    "{at}: stage {:?} mixes n_passages {n} and {}",
                    r.stage, r.n_passages
                )),
                Some(_) => {}
                None => {
                    seen.insert(r.stage.clone(), r.n_passages);
                }
            }
        }
    }
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        bail!("{} violation(s)", problems.len());
    }
    println!("ok: {} records across {} stages", log.len(), log.stage_names().count());
    Ok(())
}
