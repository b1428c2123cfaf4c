//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2
//! configuration or usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::evalharness::{
    compute_metrics, read_ledger, run_batch, write_ledger, Agent, AlwaysAbstain, EpisodeRecord, HttpAgent,
    HttpAgentConfig, OracleReplay, RandomGuess, ReferenceAgent, VariantSelection,
};
use crate::materializer::export_repository;
use crate::qaengine::{certify_unanswerable, generate_batch, paraphrase_batch, read_batch, write_batch, NotPossibleReason, QAItem, TableCache};
use crate::repospec::{build_repository_spec, Repository};
use crate::toolserver::{mcp, wire};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "reposim", version, about = "Synthetic data repositories, questions and agent evaluation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Taxonomy JSON, overriding the configuration.
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Http,
    Reference,
    Abstain,
    Oracle,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one repository and print a summary or its full spec.
    GenRepo {
        seed: u64,
        /// Write every file under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the full spec as JSON instead of a summary.
        #[arg(long)]
        spec: bool,
    },
    /// Generate a question batch over a seed range.
    GenQuestions {
        /// `A..B` (exclusive), `A..=B` or a single seed.
        #[arg(long, value_parser = parse_seeds)]
        seeds: RangeInclusive<u64>,
        #[arg(long)]
        per_repo: Option<usize>,
        /// Items to keep after sampling; 0 keeps all.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add paraphrases from every configured paraphraser.
    Paraphrase {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the deterministic stub backend instead of configured paraphrasers.
        #[arg(long)]
        stub: bool,
    },
    /// Serve the tools over length-prefixed TCP frames.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Serve the tools over MCP on stdin and stdout.
    Mcp,
    /// Run an agent over a batch and write the episode ledger.
    Eval {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, value_enum, default_value = "http")]
        agent: AgentKind,
        #[arg(long)]
        agent_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Also run every paraphrase.
        #[arg(long)]
        all_variants: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-grade a ledger against a batch and print the report.
    Grade {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        /// Where to write the re-graded ledger; defaults to rewriting `ledger`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check certificates: every unanswerable item must certify and no
    /// answerable item may.
    Certify {
        #[arg(long)]
        batch: PathBuf,
    },
}

/// Parse `A..B`, `A..=B` or `A` into an inclusive range.
pub fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
    let r = if let Some((a, b)) = s.split_once("..=") {
        num(a)?..=num(b)?
    } else if let Some((a, b)) = s.split_once("..") {
        let b = num(b)?;
        if b == 0 {
            return Err("empty seed range".into());
        }
        num(a)?..=b - 1
    } else {
        let a = num(s)?;
        a..=a
    };
    if r.is_empty() {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(r)
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(t) = &cli.taxonomy {
        cfg.taxonomy = Some(t.clone());
    }
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(runtime)?;
    writeln!(out).map_err(runtime)
}

fn build_repos(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<Repository>, CliError> {
    let taxonomy = cfg.taxonomy()?;
    let generator = cfg.generator();
    seeds
        .par_iter()
        .map(|&s| {
            build_repository_spec(s, &taxonomy, &cfg.build, &generator)
                .map(Repository::new)
                .map_err(|e| CliError::Runtime(format!("repository {s}: {e}")))
        })
        .collect()
}

fn repos_for(cfg: &RunConfig, items: &[QAItem]) -> Result<Vec<Repository>, CliError> {
    let mut seeds: Vec<u64> = items.iter().map(|i| i.repo_seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    build_repos(cfg, &seeds)
}

/// Category and type counts for a batch.
pub fn batch_summary(items: &[QAItem]) -> serde_json::Value {
    let mut by_category: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_qtype: BTreeMap<&str, usize> = BTreeMap::new();
    for i in items {
        *by_category.entry(i.category.as_str()).or_default() += 1;
        *by_qtype.entry(i.qtype.as_str()).or_default() += 1;
    }
    json!({
        "items": items.len(),
        "answerable": items.iter().filter(|i| i.ground_truth.is_answerable()).count(),
        "by_category": by_category,
        "by_qtype": by_qtype,
    })
}

fn make_agent(cfg: &RunConfig, kind: AgentKind, url: Option<String>, model: Option<String>, seed: u64) -> Result<Box<dyn Agent>, CliError> {
    Ok(match kind {
        AgentKind::Reference => Box::new(ReferenceAgent),
        AgentKind::Abstain => Box::new(AlwaysAbstain),
        AgentKind::Oracle => Box::new(OracleReplay),
        AgentKind::Random => Box::new(RandomGuess { seed }),
        AgentKind::Http => {
            let mut c = cfg.harness.agent.clone().unwrap_or(HttpAgentConfig {
                base_url: String::new(),
                model: String::new(),
                api_key_env: None,
                temperature: 0.0,
                timeout_secs: 120,
            });
            if let Some(u) = url {
                c.base_url = u;
            }
            if let Some(m) = model {
                c.model = m;
            }
            if c.base_url.is_empty() || c.model.is_empty() {
                return Err(CliError::Config("an HTTP agent needs --agent-url and --model (or harness.agent)".into()));
            }
            Box::new(HttpAgent::new(c))
        }
    })
}

/// Certification outcome for a batch.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct CertifyReport {
    pub unanswerable: usize,
    pub certified: usize,
    pub failures: Vec<String>,
    pub answerable: usize,
    /// Answerable items that certified under some relabelling.
    pub false_certificates: Vec<String>,
}

const REASONS: [NotPossibleReason; 4] = [
    NotPossibleReason::EmptyFileSet,
    NotPossibleReason::EmptyRowSet,
    NotPossibleReason::InvalidOperation,
    NotPossibleReason::ReadmeAbsent,
];

/// Certify unanswerable items and try every reason on answerable ones.
pub fn certify_batch(items: &[QAItem], repos: &[Repository]) -> CertifyReport {
    let mut report = CertifyReport::default();
    for repo in repos {
        let cache = TableCache::new(repo);
        for item in items.iter().filter(|i| i.repo_seed == repo.spec().master_seed) {
            if item.ground_truth.is_answerable() {
                report.answerable += 1;
                for reason in REASONS {
                    let mut relabelled = item.clone();
                    relabelled.ground_truth = crate::qaengine::GroundTruth::NotPossible { reason, detail: None };
                    if certify_unanswerable(&cache, &relabelled).is_ok() {
                        report.false_certificates.push(format!("{} as {}", item.id, reason.as_str()));
                    }
                }
            } else {
                report.unanswerable += 1;
                match certify_unanswerable(&cache, item) {
                    Ok(_) => report.certified += 1,
                    Err(e) => report.failures.push(e.to_string()),
                }
            }
        }
    }
    report
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    // Fail on a bad taxonomy before doing any work.
    cfg.taxonomy()?;
    match cli.command {
        Command::GenRepo { seed, out, spec } => {
            let repo = build_repos(&cfg, &[seed])?.pop().expect("one seed");
            let exported = match &out {
                Some(dir) => Some(export_repository(&repo, dir).map_err(runtime)?),
                None => None,
            };
            if spec {
                return print_json(stdout, repo.spec());
            }
            let s = repo.spec();
            print_json(
                stdout,
                &json!({
                    "seed": s.master_seed,
                    "title": s.project.title,
                    "field": s.context,
                    "readme_present": s.readme_present,
                    "data_files": s.paths.len(),
                    "cross_product_size": s.cross_product_size,
                    "variables": s.variables.iter().map(|v| &v.name).collect::<Vec<_>>(),
                    "exported_files": exported,
                }),
            )
        }
        Command::GenQuestions {
            seeds,
            per_repo,
            sample,
            out,
        } => {
            let mut qcfg = cfg.questions.clone();
            if let Some(p) = per_repo {
                qcfg.per_repo = p;
            }
            if let Some(s) = sample {
                qcfg.sample_size = s;
            }
            qcfg.validate().map_err(CliError::Config)?;
            let seeds: Vec<u64> = seeds.collect();
            let repos = build_repos(&cfg, &seeds)?;
            let items = generate_batch(&repos, &qcfg).map_err(runtime)?;
            let mut w = create(&out)?;
            write_batch(&items, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            print_json(stdout, &batch_summary(&items))
        }
        Command::Paraphrase { batch, out, stub } => {
            let generators = if stub {
                vec![crate::genmodel::Generator::stub()]
            } else {
                cfg.paraphrase_generators()
            };
            if generators.is_empty() {
                return Err(CliError::Config("no paraphrasers configured".into()));
            }
            let mut items = read_batch(open(&batch)?).map_err(runtime)?;
            let repos = repos_for(&cfg, &items)?;
            paraphrase_batch(&mut items, &repos, &generators).map_err(runtime)?;
            let mut w = create(&out)?;
            write_batch(&items, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            print_json(stdout, &json!({"items": items.len(), "paraphrasers": generators.len()}))
        }
        Command::Serve { port } => {
            let service = Arc::new(cfg.tool_service()?);
            let port = port.unwrap_or(cfg.server.port);
            let handle = wire::serve(service, (cfg.server.host.as_str(), port)).map_err(runtime)?;
            writeln!(stdout, "listening on {}", handle.local_addr()).map_err(runtime)?;
            stdout.flush().map_err(runtime)?;
            handle.wait();
            Ok(())
        }
        Command::Mcp => {
            let service = cfg.tool_service()?;
            mcp::run(&service, io::stdin().lock(), io::stdout().lock()).map_err(runtime)
        }
        Command::Eval {
            batch,
            ledger,
            agent,
            agent_url,
            model,
            all_variants,
            seed,
        } => {
            let agent = make_agent(&cfg, agent, agent_url, model, seed)?;
            let items = read_batch(open(&batch)?).map_err(runtime)?;
            let service = cfg.tool_service()?;
            let selection = if all_variants {
                VariantSelection::All
            } else {
                cfg.harness.variants
            };
            let records = run_batch(agent.as_ref(), &items, &service, &cfg.harness.limits, selection, cfg.harness.parallelism)
                .map_err(runtime)?;
            let mut w = create(&ledger)?;
            write_ledger(&records, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            print_json(stdout, &compute_metrics(&records))
        }
        Command::Grade { batch, ledger, out } => {
            let items = read_batch(open(&batch)?).map_err(runtime)?;
            let records = read_ledger(open(&ledger)?).map_err(runtime)?;
            let regraded = regrade(&items, records)?;
            let mut w = create(out.as_deref().unwrap_or(&ledger))?;
            write_ledger(&regraded, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            print_json(stdout, &compute_metrics(&regraded))
        }
        Command::Certify { batch } => {
            let items = read_batch(open(&batch)?).map_err(runtime)?;
            let repos = repos_for(&cfg, &items)?;
            let report = certify_batch(&items, &repos);
            print_json(stdout, &report)?;
            if report.failures.is_empty() && report.false_certificates.is_empty() {
                Ok(())
            } else {
                Err(CliError::Runtime("certification found problems".into()))
            }
        }
    }
}

/// Re-grade every record against its item. Idempotent.
pub fn regrade(items: &[QAItem], mut records: Vec<EpisodeRecord>) -> Result<Vec<EpisodeRecord>, CliError> {
    let by_id: BTreeMap<&str, &QAItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    for r in &mut records {
        let item = by_id
            .get(r.question_id.as_str())
            .ok_or_else(|| CliError::Runtime(format!("ledger references unknown question {}", r.question_id)))?;
        r.regrade(item);
    }
    Ok(records)
}

/// Parse `args` and run, writing command output to `stdout` and errors to
/// stderr. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("reposim: {e}");
            e.exit_code()
        }
    }
}
