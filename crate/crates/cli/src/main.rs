use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use infogain_cli::{dataset, factory, metrics_table, play, session_config, BackendSpec, FileConfig, Overrides};
use infogain_core::backend::mix_seed;
use infogain_core::controller::StrategyKind;
use infogain_core::harness::{run_ablation, run_benchmark};
use infogain_core::types::QuestionKind;
use infogain_service::Service;

#[derive(Parser)]
#[command(name = "infogain", version, about = "Question asking by expected information gain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one game in the terminal; you hold the target and answer.
    Play {
        #[command(flatten)]
        common: Common,
        /// Write the game record here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one game per dataset entry and write transcripts and metrics.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "runs/bench")]
        out: PathBuf,
    },
    /// Run several strategies on the same dataset with the same seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategies; defaults to all of them.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<StrategyKind>,
        #[arg(long, default_value = "runs/ablation")]
        out: PathBuf,
    },
    /// Serve the HTTP session API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where session state is persisted.
        #[arg(long, default_value = "runs/sessions")]
        run_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Binary,
    MultipleChoice,
}

#[derive(Args)]
struct Common {
    /// TOML file with `[session]`, `[questioner]` and `[answerer]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<StrategyKind>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset file, one target per line (`name | alternative | ...`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `tabular`, `tabular:<model.json>` or `remote`.
    #[arg(long, default_value = "tabular")]
    backend: BackendSpec,
    /// Games played concurrently.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

struct Resolved {
    file: FileConfig,
    cfg: infogain_core::controller::SessionConfig,
    dataset: Vec<infogain_core::harness::TargetEntry>,
}

fn resolve(common: &Common) -> anyhow::Result<Resolved> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        strategy: common.strategy,
        kind: common.kind.map(|k| match k {
            KindArg::Binary => QuestionKind::Binary,
            KindArg::MultipleChoice => QuestionKind::MultipleChoice,
        }),
        seed: common.seed,
    };
    let cfg = session_config(&file, &overrides)?;
    let dataset = dataset(common.dataset.as_deref(), cfg.kind)?;
    Ok(Resolved { file, cfg, dataset })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Play { common, out } => {
            let r = resolve(&common)?;
            let factory = factory(&common.backend, &r.file, &r.cfg, &r.dataset)?;
            let questioner = factory.questioner(mix_seed(&[r.cfg.seed, 1]))?;
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout();
            let record = play(&r.cfg, questioner.as_ref(), &mut stdin.lock(), &mut stdout)?;
            stdout.flush()?;
            if let Some(path) = out {
                write_json(&path, &record)?;
            }
        }
        Command::Bench { common, out } => {
            let r = resolve(&common)?;
            let factory = factory(&common.backend, &r.file, &r.cfg, &r.dataset)?;
            let summary = run_benchmark(&r.dataset, &r.cfg, factory.as_ref(), common.parallelism, &out)?;
            log::info!(
                "{} games played, {} resumed, {} quarantined",
                summary.executed,
                summary.resumed,
                summary.quarantined.len()
            );
            print!("{}", metrics_table(std::slice::from_ref(&summary.metrics)));
        }
        Command::Ablate { common, strategies, out } => {
            let r = resolve(&common)?;
            let strategies = if strategies.is_empty() { StrategyKind::ALL.to_vec() } else { strategies };
            let factory = factory(&common.backend, &r.file, &r.cfg, &r.dataset)?;
            let summaries = run_ablation(&r.dataset, &r.cfg, &strategies, factory.as_ref(), common.parallelism, &out)?;
            let runs: Vec<_> = summaries.into_iter().map(|s| s.metrics).collect();
            print!("{}", metrics_table(&runs));
        }
        Command::Serve { common, addr, run_dir } => {
            let r = resolve(&common)?;
            // Built before the runtime starts: remote backends own blocking
            // HTTP clients.
            let factory = factory(&common.backend, &r.file, &r.cfg, &r.dataset)?;
            let service = Service::new(run_dir, factory)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(infogain_service::serve(service, addr))?;
        }
    }
    Ok(())
}
