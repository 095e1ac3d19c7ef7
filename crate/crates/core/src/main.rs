use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use autoiad::bench::fixtures::{bundled_fixture, fixtures_check, parse_fixture, render_fixtures_check, BUNDLED};
use autoiad::bench::{aggregate, emit_report, ReportFormat, TaskReport};
use autoiad::gateway::HttpConfig;
use autoiad::manager::{RunLimits, DEFAULT_MAX_STEPS};
use autoiad::suite::{run_suite, BackendConfig, SuiteConfig, TaskSpec};
use autoiad::synth::synth_dataset;

#[derive(Parser)]
#[command(name = "autoiad", version, about = "Multi-agent anomaly-detection model building, scripted or live")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic categories in MVTec layout.
    Synth {
        /// Category names (repeat or comma-separate).
        #[arg(long = "category", value_delimiter = ',', required = true)]
        categories: Vec<String>,
        #[arg(long, default_value_t = 20)]
        n_train: usize,
        #[arg(long, default_value_t = 10)]
        n_test_good: usize,
        #[arg(long, default_value_t = 10)]
        n_test_defect: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one task.
    Run {
        /// Task card JSON.
        #[arg(long, conflicts_with = "category")]
        card: Option<PathBuf>,
        /// Category directory under --data.
        #[arg(long)]
        category: Option<String>,
        #[command(flatten)]
        common: RunArgs,
    },
    /// Run several tasks, one workspace each.
    Suite {
        #[arg(long = "category", value_delimiter = ',')]
        categories: Vec<String>,
        #[arg(long = "card")]
        cards: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        common: RunArgs,
    },
    /// Render reports from report JSON files or fixture CSVs.
    Report {
        /// `report.json`, `reports.json` (array) or fixture-format CSV.
        inputs: Vec<PathBuf>,
        /// A bundled fixture by name.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Re-derive the published summary rows from the bundled fixtures.
    FixturesCheck,
}

#[derive(Args)]
struct RunArgs {
    /// `scripted` or `live`.
    #[arg(long, default_value = "scripted")]
    backend: String,
    /// Transcript file or directory (scripted backend).
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Knowledge base directory; the bundled one is used otherwise.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Seconds.
    #[arg(long)]
    time_cap: Option<f64>,
    /// Dispatches per stage before the run halts; 0 disables the cap.
    #[arg(long, default_value_t = autoiad::manager::DEFAULT_ATTEMPT_CAP)]
    attempt_cap: u32,
    #[arg(long)]
    no_manager: bool,
    #[arg(long)]
    no_knowledge: bool,
    /// Directory holding the category datasets.
    #[arg(long, default_value = ".")]
    data: PathBuf,
    /// Model named in generated task cards.
    #[arg(long, default_value = "autoencoder")]
    model: String,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Live backend: OpenAI-compatible base URL.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    /// Live backend: model id sent to the API.
    #[arg(long, default_value = "gpt-4o-mini")]
    llm: String,
    /// Live backend: environment variable holding the API key.
    #[arg(long, default_value = "AUTOIAD_API_KEY")]
    api_key_env: String,
    #[arg(long)]
    python: Option<PathBuf>,
}

impl RunArgs {
    fn suite_config(&self, tasks: Vec<TaskSpec>, workers: usize) -> Result<SuiteConfig, String> {
        let backend = match self.backend.as_str() {
            "scripted" => BackendConfig::Scripted {
                transcripts: self.transcripts.clone().ok_or("the scripted backend requires --transcripts")?,
            },
            "live" => BackendConfig::Live(HttpConfig {
                base_url: self.base_url.clone(),
                model: self.llm.clone(),
                api_key_env: self.api_key_env.clone(),
                timeout_s: 120,
            }),
            other => return Err(format!("unknown backend `{other}` (scripted, live)")),
        };
        let limits = if self.max_steps.is_some() || self.time_cap.is_some() {
            let base = RunLimits::for_backend(&backend.id());
            let time_cap = match self.time_cap {
                Some(t) if t.is_finite() && t >= 0.0 => Duration::from_secs_f64(t),
                Some(t) => return Err(format!("--time-cap must be a non-negative number, got {t}")),
                None => base.time_cap,
            };
            Some(RunLimits { max_steps: self.max_steps.unwrap_or(DEFAULT_MAX_STEPS), time_cap })
        } else {
            None
        };
        let mut cfg = SuiteConfig::new(tasks, backend, &self.out);
        cfg.dataset_root = self.data.clone();
        cfg.model = self.model.clone();
        cfg.limits = limits;
        cfg.kb_dir = self.kb.clone();
        cfg.no_manager = self.no_manager;
        cfg.no_knowledge = self.no_knowledge;
        cfg.workers = workers;
        cfg.attempt_cap = (self.attempt_cap > 0).then_some(self.attempt_cap);
        cfg.python = self.python.clone();
        Ok(cfg)
    }
}

fn read_reports(path: &Path) -> Result<Vec<TaskReport>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path.extension().is_some_and(|e| e == "csv") {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return parse_fixture(&name, &text).map(|f| f.reports).map_err(|e| format!("{}: {e}", path.display()));
    }
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = if v.is_array() { serde_json::from_value(v) } else { serde_json::from_value(v).map(|r| vec![r]) };
    parsed.map_err(|e| format!("{}: {e}", path.display()))
}

fn run_tasks(tasks: Vec<TaskSpec>, workers: usize, common: &RunArgs) -> Result<ExitCode, String> {
    let cfg = common.suite_config(tasks, workers)?;
    let outcome = run_suite(&cfg).map_err(|e| e.to_string())?;
    let reports = outcome.reports();
    let json = serde_json::to_string_pretty(&reports).map_err(|e| e.to_string())?;
    std::fs::write(cfg.output_dir.join("reports.json"), json).map_err(|e| e.to_string())?;
    for o in &outcome.outcomes {
        match (&o.workspace, &o.error) {
            (Some(ws), _) => eprintln!("{}: workspace {}", o.task, ws.display()),
            (None, Some(e)) => eprintln!("{}: error: {e}", o.task),
            _ => {}
        }
    }
    print!("{}", emit_report(&reports, common.format));
    Ok(if outcome.has_errors() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn real_main(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Synth { categories, n_train, n_test_good, n_test_defect, seed, out } => {
            for c in &categories {
                let s = synth_dataset(c, n_train, n_test_good, n_test_defect, seed, &out).map_err(|e| e.to_string())?;
                println!("{}: {} images, {} masks", s.root.display(), s.images(), s.masks);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { card, category, common } => {
            let task = match (card, category) {
                (Some(p), None) => TaskSpec::Card(p),
                (None, Some(c)) => TaskSpec::Category(c),
                _ => return Err("give exactly one of --card or --category".into()),
            };
            run_tasks(vec![task], 1, &common)
        }
        Command::Suite { categories, cards, workers, common } => {
            let mut tasks: Vec<TaskSpec> = cards.into_iter().map(TaskSpec::Card).collect();
            tasks.extend(categories.into_iter().map(TaskSpec::Category));
            run_tasks(tasks, workers, &common)
        }
        Command::Report { inputs, fixture, format } => {
            let mut reports = Vec::new();
            if let Some(name) = fixture {
                let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
                let fx = bundled_fixture(&name)
                    .ok_or_else(|| format!("no bundled fixture `{name}` (have: {})", names.join(", ")))?;
                reports.extend(fx.reports);
            }
            for p in &inputs {
                reports.extend(read_reports(p)?);
            }
            if reports.is_empty() {
                return Err("no reports given".into());
            }
            print!("{}", emit_report(&reports, format));
            if let Ok(s) = aggregate(&reports) {
                eprintln!("{}", serde_json::to_string(&s).map_err(|e| e.to_string())?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FixturesCheck => {
            let checks = fixtures_check();
            print!("{}", render_fixtures_check(&checks));
            Ok(if checks.iter().all(|c| c.ok()) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
