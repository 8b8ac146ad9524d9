//! `flowdelta`: train, evaluate and gradient-check the flow models, and
//! generate or score SCONE-style episodes.
//!
//! Reports go to standard output, diagnostics to standard error. Exit
//! codes: 0 success, 1 usage, 2 data, 3 numeric failure.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};
use flowdelta::flow::FlowMode;
use flowdelta::harness::gradsuite::{run_suite, SUITE_TOL};
use flowdelta::harness::pipeline::{synthetic_split, train_on_dialogues, Split, CONTEXT_TOKENS, TURNS};
use flowdelta::harness::{evaluate, generate_synthetic_qa, load_dialogues, write_dialogues};
use flowdelta::model::{Checkpoint, ModelConfig, ModelKind};
use flowdelta::Rng;
use flowdelta_scone::{generate_episodes, load_episodes, parse_predictions, score, write_episodes, Domain};

#[derive(Parser)]
#[command(name = "flowdelta", version, about = "Flow and FlowDelta conversational reading comprehension")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint and prints the per-epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint; prints a key=value report.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite over every layer and model.
    Gradcheck,
    /// Generate synthetic conversational QA dialogues as JSONL.
    GenQa(GenQaArgs),
    /// Generate SCONE-style episodes as JSONL.
    SconeGen(SconeGenArgs),
    /// Score predicted action sequences against episodes.
    SconeEval(SconeEvalArgs),
    /// Summarize a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ModelFlags {
    /// Model config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the flow variant: delta, skipdelta, doubledelta, hadamard, flow or none.
    #[arg(long)]
    variant: Option<FlowMode>,
    /// Overrides the model family.
    #[arg(long)]
    model: Option<ModelKind>,
}

impl ModelFlags {
    fn resolve(&self) -> anyhow::Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(p) => ModelConfig::load(p)?,
            None => ModelConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Training dialogues (JSONL); the synthetic training split for the seed when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dev dialogues used to pick the best epoch; the last epoch is kept when omitted.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dialogues (JSONL); the synthetic held-out split for the checkpoint seed when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Writes the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenQaArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = *CONTEXT_TOKENS.start())]
    min_context: usize,
    #[arg(long, default_value_t = *CONTEXT_TOKENS.end())]
    max_context: usize,
    #[arg(long, default_value_t = *TURNS.start())]
    min_turns: usize,
    #[arg(long, default_value_t = *TURNS.end())]
    max_turns: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SconeGenArgs {
    #[arg(long)]
    domain: Domain,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Instructions per episode.
    #[arg(long, default_value_t = flowdelta_scone::DEFAULT_TURNS)]
    turns: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SconeEvalArgs {
    /// Episodes (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Predicted actions, one `{"actions": [[op, pos1, pos2(, prop)], ...]}` line per episode.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

/// Standard output, or a file when `path` is given.
fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = args.model.resolve()?;
    let train_set = match &args.data {
        Some(p) => load_dialogues(p).with_context(|| format!("reading {}", p.display()))?,
        None => synthetic_split(cfg.seed, Split::Train, Split::Train.default_count())?,
    };
    let dev = match &args.dev {
        Some(p) => load_dialogues(p).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let trained = train_on_dialogues(&cfg, &train_set, &dev)?;
    trained.checkpoint.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let mut out = sink(None)?;
    out.write_all(trained.log_text().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let model = ck.model()?;
    let data = match &args.data {
        Some(p) => load_dialogues(p).with_context(|| format!("reading {}", p.display()))?,
        None => synthetic_split(ck.config.seed, Split::HeldOut, Split::HeldOut.default_count())?,
    };
    let report = evaluate(&model, &ck.params, &ck.vocab, &data, &ck.config)?;
    log::info!("evaluated {} dialogues in {:.2}s", report.dialogues, report.runtime_seconds);
    let mut out = sink(args.out.as_deref())?;
    out.write_all(report.to_text().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn gradcheck() -> anyhow::Result<()> {
    let started = std::time::Instant::now();
    let entries = run_suite()?;
    let mut out = sink(None)?;
    writeln!(out, "{:<20} {:>10} {:>14}  status", "layer", "elements", "max_rel_error")?;
    for e in &entries {
        let status = if e.passed() { "ok" } else { "FAIL" };
        writeln!(out, "{:<20} {:>10} {:>14.3e}  {status}", e.name, e.report.elements_checked, e.report.max_rel_error)?;
    }
    out.flush()?;
    log::info!("gradient suite finished in {:.1}s", started.elapsed().as_secs_f64());
    let failed: Vec<&str> = entries.iter().filter(|e| !e.passed()).map(|e| e.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(flowdelta::Error::Numeric(format!("gradient check above {SUITE_TOL:e}: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn gen_qa(args: GenQaArgs) -> anyhow::Result<()> {
    let ds = generate_synthetic_qa(
        &mut Rng::new(args.seed),
        args.count,
        args.min_context..=args.max_context,
        args.min_turns..=args.max_turns,
    )?;
    let mut out = sink(args.out.as_deref())?;
    write_dialogues(&mut out, &ds)?;
    out.flush()?;
    Ok(())
}

fn scone_gen(args: SconeGenArgs) -> anyhow::Result<()> {
    if args.count == 0 {
        bail!(flowdelta_scone::Error::Usage("--count must be at least 1".into()));
    }
    let eps = generate_episodes(args.domain, &mut Rng::new(args.seed), args.count, args.turns)?;
    let mut out = sink(args.out.as_deref())?;
    write_episodes(&mut out, &eps)?;
    out.flush()?;
    Ok(())
}

fn scone_eval(args: SconeEvalArgs) -> anyhow::Result<()> {
    let eps = load_episodes(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let file = File::open(&args.predictions).with_context(|| format!("opening {}", args.predictions.display()))?;
    let preds = parse_predictions(BufReader::new(file)).with_context(|| format!("reading {}", args.predictions.display()))?;
    let s = score(&preds, &eps)?;
    let mut out = sink(args.out.as_deref())?;
    out.write_all(s.to_text().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn inspect(args: InspectArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::load(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    ck.model()?;
    let mut out = sink(None)?;
    writeln!(out, "model={}", ck.config.model)?;
    writeln!(out, "variant={}", ck.config.variant)?;
    writeln!(out, "seed={}", ck.config.seed)?;
    writeln!(out, "vocab={}", ck.vocab.len())?;
    writeln!(out, "tensors={}", ck.params.len())?;
    writeln!(out, "parameters={}", ck.params.total_elements())?;
    for (_, name, t) in ck.params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(out, "tensor.{name}={}", dims.join("x"))?;
    }
    out.flush()?;
    Ok(())
}

/// Maps the first typed error in the chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<flowdelta::Error>() {
            return match e {
                flowdelta::Error::Usage(_) => 1,
                flowdelta::Error::Data(_) | flowdelta::Error::Io(_) => 2,
                flowdelta::Error::Numeric(_) | flowdelta::Error::Dim { .. } => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<flowdelta_scone::Error>() {
            return match e {
                flowdelta_scone::Error::Usage(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck => gradcheck(),
        Command::GenQa(a) => gen_qa(a),
        Command::SconeGen(a) => scone_gen(a),
        Command::SconeEval(a) => scone_eval(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
