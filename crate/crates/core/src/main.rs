use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use tlgkit::backend::{ApiStyle, Backend, BackendConfig, HttpBackend};
use tlgkit::dmlt::{self, DmltOptions};
use tlgkit::metrics::ScoreReport;
use tlgkit::mock::{self, MockBackend, MockProfile};
use tlgkit::orchestrator::{self, GenerationRecord};
use tlgkit::report::{self, TableFormat, TargetTable};
use tlgkit::{dataset, template};

#[derive(Parser)]
#[command(name = "tlgkit", version, about = "Target-length generation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Prompt,
    Forced,
    NonTlg,
    Multi,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a target-length evaluation set from a question file.
    BuildTlg {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tag instruction/answer pairs with meta length tokens.
    BuildDmlt {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = dmlt::DEFAULT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shuffle the pooled pairs with `--seed` before applying the cap.
        #[arg(long)]
        shuffle: bool,
        #[arg(long)]
        out: PathBuf,
        /// Histogram summary, defaults to `<out>.summary.json`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Generate responses for a dataset and store them as records.
    Run {
        #[arg(long, value_enum)]
        mode: RunMode,
        /// TLG file for prompt/forced, question file for non-tlg/multi.
        #[arg(long)]
        dataset: PathBuf,
        /// Backend TOML file, or `mock:<profile>` for the in-process mock.
        #[arg(long)]
        backend: String,
        #[arg(long)]
        template: String,
        /// Template definitions to use instead of the built-in set.
        #[arg(long)]
        templates_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the score report as JSON.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Score a record file; writes JSON, or CSV when `--out` ends in `.csv`.
    Score {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render result tables from score files or record files.
    Report {
        /// Score JSON, or a record file (`.jsonl`).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(long, default_value = "model")]
        label: String,
        /// Table kind: levels, targets, or distribution (record files only).
        #[arg(long, default_value = "levels")]
        table: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the mock backend until interrupted.
    ServeMock {
        /// exact, offset:<k>, mlt-aware, self-mlt:<target>, no-mlt
        #[arg(long, conflicts_with = "config")]
        profile: Option<String>,
        /// Profile TOML file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "127.0.0.1:8000")]
        bind: SocketAddr,
    },
    /// List the built-in chat templates.
    Templates,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::BuildTlg { questions, n, seed, out } => {
            let qs = dataset::read_questions(&questions)?;
            let entries = dataset::build_tlg(&qs, n, seed)?;
            dataset::save_tlg(&entries, &out)?;
            eprintln!("wrote {} entries to {}", entries.len(), out.display());
        }
        Command::BuildDmlt { inputs, cap, seed, shuffle, out, summary } => {
            let pairs = dmlt::load_sources(&inputs)?;
            let build = dmlt::build_dmlt(pairs, DmltOptions { cap, seed, shuffle })?;
            dmlt::save_triples(&build.triples, &out)?;
            let summary_path = summary.unwrap_or_else(|| with_suffix(&out, ".summary.json"));
            fs::write(&summary_path, serde_json::to_string_pretty(&build.summary)?)?;
            eprintln!("wrote {} triples to {}", build.triples.len(), out.display());
        }
        Command::Run { mode, dataset: data, backend, template: name, templates_file, out, scores } => {
            let registry = match templates_file {
                Some(path) => template::TemplateRegistry::from_toml_file(path)?,
                None => template::TemplateRegistry::builtin(),
            };
            let template = registry.get(&name)?.clone();
            let backend = open_backend(&backend)?;
            let records = match mode {
                RunMode::Prompt => {
                    orchestrator::run_prompt_tlg(&dataset::load_tlg(&data)?, backend.as_ref(), &template).await?
                }
                RunMode::Forced => {
                    orchestrator::run_forced_mlt(&dataset::load_tlg(&data)?, backend.as_ref(), &template).await?
                }
                RunMode::NonTlg => {
                    let qs = dataset::read_questions(&data)?;
                    orchestrator::run_non_tlg(&qs, backend.as_ref(), &template).await?
                }
                RunMode::Multi => {
                    let qs = dataset::read_questions(&data)?;
                    orchestrator::run_multi_mlt(&qs, backend.as_ref(), &template).await?
                }
            };
            orchestrator::save_records(&records, &out)?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            eprintln!("wrote {} records ({failed} failed) to {}", records.len(), out.display());
            if let Some(path) = scores {
                let scored = orchestrator::score_records(&records)?;
                fs::write(path, scored.report.to_json_pretty()?)?;
            }
        }
        Command::Score { records, out } => {
            let records = orchestrator::load_records(&records)?;
            let scored = orchestrator::score_records(&records)?;
            if out.extension().is_some_and(|e| e == "csv") {
                scored.report.write_csv(fs::File::create(&out)?)?;
            } else {
                fs::write(&out, scored.report.to_json_pretty()?)?;
            }
            eprintln!(
                "scored {} records ({} failed, {} without target)",
                scored.scored, scored.failed, scored.unparsed
            );
        }
        Command::Report { scores, baseline, format, label, table, out } => {
            let format: TableFormat = format.parse()?;
            let rendered = match table.as_str() {
                "levels" => {
                    let treated = load_scores(&scores)?;
                    let base = baseline.as_deref().map(load_scores).transpose()?;
                    let row = report::tabulate_levels(&label, &treated, base.as_ref())?;
                    report::render_levels(&[row], format)
                }
                "targets" => {
                    let table = match load_records_if_jsonl(&scores)? {
                        Some(records) => report::tabulate_targets(&records),
                        None => TargetTable::from_report(&load_scores(&scores)?),
                    };
                    report::render_targets(&[(label, table)], format)
                }
                "distribution" => {
                    let Some(records) = load_records_if_jsonl(&scores)? else {
                        bail!("the distribution table needs a record file");
                    };
                    report::render_distribution(&report::mlt_distribution(&records)?, format)
                }
                other => bail!("unknown table kind {other:?}"),
            };
            match out {
                Some(path) => fs::write(path, rendered)?,
                None => print!("{rendered}"),
            }
        }
        Command::ServeMock { profile, config, seed, bind } => {
            let mut profile = match (profile, config) {
                (_, Some(path)) => MockProfile::from_toml_file(path)?,
                (Some(p), None) => p.parse()?,
                (None, None) => MockProfile::new(mock::MockBehavior::Exact),
            };
            if let Some(seed) = seed {
                profile = profile.with_seed(seed);
            }
            let server = mock::serve(profile, bind).await?;
            eprintln!("mock backend ({profile}) at {}", server.endpoint_url());
            tokio::signal::ctrl_c().await?;
            server.shutdown().await?;
        }
        Command::Templates => {
            for t in template::TemplateRegistry::builtin().iter() {
                println!("{}\t{}", t.name, t.primary_eos());
            }
        }
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn open_backend(arg: &str) -> anyhow::Result<Box<dyn Backend>> {
    if let Some(profile) = arg.strip_prefix("mock:") {
        return Ok(Box::new(MockBackend::new(profile.parse()?, ApiStyle::Completion)));
    }
    let config = BackendConfig::from_toml_file(arg).with_context(|| format!("loading backend config {arg}"))?;
    Ok(Box::new(HttpBackend::new(config)?))
}

fn load_scores(path: &Path) -> anyhow::Result<ScoreReport> {
    if let Some(records) = load_records_if_jsonl(path)? {
        return Ok(orchestrator::score_records(&records)?.report);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScoreReport::from_json(&text)?)
}

fn load_records_if_jsonl(path: &Path) -> anyhow::Result<Option<Vec<GenerationRecord>>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(Some(orchestrator::load_records(path)?))
    } else {
        Ok(None)
    }
}
