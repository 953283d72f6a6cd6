use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use absenteeism_core::experiment::{
    evaluate_records, importance_ranking, run_benchmark, train_bundle, train_on_all_rows, ExperimentConfig, RunManifest,
    TrainTarget,
};
use absenteeism_core::ingest::{load_hire_time, ParseConfig};
use absenteeism_core::numerics::RngStream;
use absenteeism_core::persistence::{load_bundle_file, save_bundle_file};
use absenteeism_core::{HireTimeRecord, ModelKind};
use absenteeism_service::PredictionService;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "absenteeism", version, about = "Train, evaluate and serve absenteeism-class models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset file (overrides the config file).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Model bundle to read or write.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset field delimiter (overrides the config file).
    #[arg(long, global = true)]
    delimiter: Option<char>,
    /// Only print results and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save it as a bundle.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Evaluate,
    /// Rank encoded features by random-forest impurity importance.
    Importance {
        /// Number of rows to print (all when omitted).
        #[arg(long)]
        top: Option<usize>,
    },
    /// Predict one candidate from a JSON document.
    Predict {
        /// Input document; standard input when omitted or `-`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the HTTP prediction service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Output bundle path (defaults to --model, then `model.absmodel`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model to train.
    #[arg(long, value_parser = parse_kind, default_value = "mlr", conflicts_with = "select_best")]
    kind: ModelKind,
    /// Train all four models and keep the one chosen by the selection rule.
    #[arg(long)]
    select_best: bool,
    /// Fit on every row with no hold-out.
    #[arg(long, conflicts_with = "select_best")]
    all_rows: bool,
    /// Run the repeated benchmark first and print its table.
    #[arg(long)]
    benchmark: bool,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::from_tag(s).ok_or_else(|| format!("unknown model kind `{s}` (expected mlr, svm, ann or rf)"))
}

impl Global {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_toml_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(d) = self.delimiter {
            cfg.delimiter = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn model_path(&self) -> Result<&Path> {
        self.model.as_deref().context("--model is required")
    }
}

fn load_records(cfg: &ExperimentConfig) -> Result<Vec<HireTimeRecord>> {
    let path = cfg.data.as_deref().context("no dataset given (use --data or `data` in the config)")?;
    let parse = ParseConfig {
        delimiter: cfg.delimiter as u8,
        ..ParseConfig::default()
    };
    let records = load_hire_time(path, parse).with_context(|| format!("reading dataset {}", path.display()))?;
    log::info!("{} records from {}", records.len(), path.display());
    Ok(records)
}

fn train(global: &Global, args: &TrainArgs) -> Result<()> {
    let cfg = global.config()?;
    let records = load_records(&cfg)?;
    let out = args
        .out
        .clone()
        .or_else(|| global.model.clone())
        .unwrap_or_else(|| PathBuf::from("model.absmodel"));
    if args.benchmark {
        let table = run_benchmark(&records, &cfg)?;
        print!("{}", table.to_text());
        let selection = table.select_best().ok();
        if let Some(s) = &selection {
            println!("selected: {} (f1 {:.3}, screen {})", s.kind, s.f1, if s.passed_screen { "passed" } else { "failed" });
        }
        let leaks: Vec<&String> = table.repetitions.iter().flat_map(|r| &r.audit.violations).collect();
        if !leaks.is_empty() {
            bail!("leakage audit failed: {leaks:?}");
        }
        let manifest = RunManifest {
            config: cfg.clone(),
            rng: RngStream::ALGORITHM.to_string(),
            schema_width: absenteeism_core::experiment::encode_dataset(&records)?.cols(),
            table,
            selection,
        };
        let path = out.with_extension("benchmark.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
        log::info!("benchmark manifest written to {}", path.display());
    }
    let bundle = if args.all_rows {
        train_on_all_rows(&records, &cfg, args.kind)?
    } else {
        let target = if args.select_best {
            TrainTarget::SelectBest
        } else {
            TrainTarget::Kind(args.kind)
        };
        let outcome = train_bundle(&records, &cfg, target)?;
        let manifest_path = out.with_extension("manifest.json");
        std::fs::write(&manifest_path, serde_json::to_vec_pretty(&outcome.manifest)?)
            .with_context(|| format!("writing {}", manifest_path.display()))?;
        outcome.bundle
    };
    let n = save_bundle_file(&bundle, &out)?;
    log::info!("wrote {} ({n} bytes)", out.display());
    println!("{} model saved to {}", bundle.kind(), out.display());
    if let Some(m) = &bundle.metrics {
        print!("{}", m.to_kv_text());
    }
    Ok(())
}

fn evaluate(global: &Global) -> Result<()> {
    let cfg = global.config()?;
    let bundle = load_bundle_file::<f64>(global.model_path()?)?;
    let records = load_records(&cfg)?;
    let (metrics, cm) = evaluate_records(&bundle.model, &records)?;
    println!("model = {}", bundle.kind());
    println!("rows = {}", records.len());
    print!("{}", metrics.to_kv_text());
    println!("confusion (rows = truth, columns = predicted):");
    println!("      {:>6} {:>6} {:>6}", "A+", "B+", "C+");
    for (label, row) in ["A+", "B+", "C+"].iter().zip(cm.counts()) {
        println!("  {label:<3} {:>6} {:>6} {:>6}", row[0], row[1], row[2]);
    }
    Ok(())
}

fn importance(global: &Global, top: Option<usize>) -> Result<()> {
    let cfg = global.config()?;
    let records = load_records(&cfg)?;
    let (report, _) = importance_ranking(&records, &cfg)?;
    let k = top.unwrap_or(report.ranking.len());
    println!("{:>4}  {:<40} {:>8}", "rank", "feature", "score");
    for (i, (name, score)) in report.top(k).into_iter().enumerate() {
        println!("{:>4}  {name:<40} {score:>8.4}", i + 1);
    }
    Ok(())
}

fn predict(global: &Global, input: Option<&Path>) -> Result<()> {
    let service = PredictionService::from_file(global.model_path()?)?;
    let mut body = Vec::new();
    match input {
        Some(p) if p != Path::new("-") => {
            body = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        }
        _ => {
            std::io::stdin().read_to_end(&mut body)?;
        }
    }
    match service.predict_bytes(&body) {
        Ok(resp) => {
            println!("{}", serde_json::to_string_pretty(&resp)?);
            Ok(())
        }
        Err(f) => bail!("{} ({}): {}", f.code, f.fields.join(", "), f.message),
    }
}

fn serve(global: &Global, bind: SocketAddr, static_dir: Option<PathBuf>) -> Result<()> {
    let service = match &global.model {
        Some(p) => PredictionService::from_file(p)?,
        None => {
            log::warn!("no --model given; prediction endpoints will answer 503");
            PredictionService::empty()
        }
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(absenteeism_service::serve(Arc::new(service), bind, static_dir))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Train(args) => train(g, &args),
        Command::Evaluate => evaluate(g),
        Command::Importance { top } => importance(g, top),
        Command::Predict { input } => predict(g, input.as_deref()),
        Command::Serve { bind, static_dir } => serve(g, bind, static_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
