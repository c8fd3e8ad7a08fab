//! `cryptohalal`: dataset validation, training, evaluation, one-shot
//! classification and the HTTP service.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or I/O failure.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use cryptohalal_core::corpus::{self, synthesize_fixture, DatasetError};
use cryptohalal_core::eval::{self, EvaluationReport};
use cryptohalal_core::learners::{save_model, train, Hyperparams, ModelKind};
use cryptohalal_core::market::{ClientConfig, MarketClient, Mode};
use cryptohalal_core::pipeline::PipelineError;
use cryptohalal_core::rulestore::{RuleStore, StoreOptions};
use cryptohalal_core::{Dataset, Label};
use cryptohalal_service::{Config, Resources, Server};

#[derive(Parser)]
#[command(name = "cryptohalal", version, about = "Halal/Haram screening of cryptocurrencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a labeled dataset against the feature constraints
    ValidateDataset {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Train a classifier and save it
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hp: HyperparamArgs,
    },
    /// Stratified k-fold cross-validation
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = eval::DEFAULT_FOLDS as u64, value_parser = clap::value_parser!(u64).range(2..))]
        folds: u64,
        #[arg(long, default_value_t = eval::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModelChoice::All)]
        model: ModelChoice,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one coin by name or ticker
    Classify {
        query: String,
        #[arg(long)]
        model: PathBuf,
        /// Use recorded fixtures instead of the network
        #[arg(long, requires = "fixtures")]
        offline: bool,
        #[arg(long, requires = "offline")]
        fixtures: Option<PathBuf>,
        /// Ruling store; without it nothing is looked up or cached
        #[arg(long)]
        store: Option<PathBuf>,
        /// Scholar accounts file; defaults to `<store>.accounts`
        #[arg(long, requires = "store")]
        accounts: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = NonZeroUsize::MIN)]
        min_count: NonZeroUsize,
        #[arg(long)]
        api_base: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the HTTP service until interrupted
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Serve every classification from the configured fixtures
        #[arg(long)]
        offline: bool,
    },
    /// Write a synthetic labeled dataset that satisfies the constraints
    Synthesize {
        #[arg(long, default_value_t = 56)]
        halal: usize,
        #[arg(long, default_value_t = 50)]
        haram: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Register a scholar account; the password is read from stdin
    AddScholar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Nb,
    Lr,
    Svm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Nb => ModelKind::Nb,
            ModelArg::Lr => ModelKind::Lr,
            ModelArg::Svm => ModelKind::Svm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    All,
    Nb,
    Lr,
    Svm,
}

#[derive(clap::Args)]
struct HyperparamArgs {
    /// NB smoothing
    #[arg(long)]
    alpha: Option<f64>,
    /// LR ridge penalty
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// SVM box constraint
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl HyperparamArgs {
    fn apply(&self, kind: ModelKind) -> Result<Hyperparams, Failure> {
        let foreign = |names: &[(&str, bool)]| -> Result<(), Failure> {
            match names.iter().find(|(_, set)| *set) {
                Some((n, _)) => Err(Failure::Usage(format!("--{n} does not apply to {}", kind.display_name()))),
                None => Ok(()),
            }
        };
        let mut hp = kind.default_hyperparams();
        match &mut hp {
            Hyperparams::Nb { alpha } => {
                foreign(&self.except(&["alpha"]))?;
                *alpha = self.alpha.unwrap_or(*alpha);
            }
            Hyperparams::Lr { lambda, max_iter, tol } => {
                foreign(&self.except(&["lambda", "max-iter", "tol"]))?;
                *lambda = self.lambda.unwrap_or(*lambda);
                *max_iter = self.max_iter.unwrap_or(*max_iter);
                *tol = self.tol.unwrap_or(*tol);
            }
            Hyperparams::Svm { c, epochs, seed } => {
                foreign(&self.except(&["c", "epochs", "seed"]))?;
                *c = self.c.unwrap_or(*c);
                *epochs = self.epochs.unwrap_or(*epochs);
                *seed = self.seed.unwrap_or(*seed);
            }
        }
        Ok(hp)
    }

    /// Flags outside `own`, with whether each was given.
    fn except(&self, own: &[&str]) -> Vec<(&'static str, bool)> {
        [
            ("alpha", self.alpha.is_some()),
            ("lambda", self.lambda.is_some()),
            ("max-iter", self.max_iter.is_some()),
            ("tol", self.tol.is_some()),
            ("c", self.c.is_some()),
            ("epochs", self.epochs.is_some()),
            ("seed", self.seed.is_some()),
        ]
        .into_iter()
        .filter(|(n, _)| !own.contains(n))
        .collect()
    }
}

#[derive(Debug)]
enum Failure {
    /// The input was understood but the answer is negative or impossible.
    Domain(String),
    /// Bad invocation or unreadable/unwritable files.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).map_err(|e| match e {
        DatasetError::Io(_) => Failure::Usage(format!("{}: {e}", path.display())),
        e => Failure::Domain(format!("{}: {e}", path.display())),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("writing {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Usage(format!("writing output: {e}")))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn validate_dataset(path: &Path, format: Format) -> Result<(), Failure> {
    let d = load_dataset(path)?;
    let report = corpus::validate_constraints(&d);
    let text = match format {
        Format::Text => format!(
            "{} records ({} Halal, {} Haram)\n{report}",
            d.len(),
            d.count(Label::Halal),
            d.count(Label::Haram)
        ),
        Format::Json => to_json(&report),
    };
    emit(&text, None)?;
    if report.structural_ok() {
        Ok(())
    } else {
        Err(Failure::Domain("dataset violates the feature constraints".into()))
    }
}

fn train_cmd(kind: ModelKind, data: &Path, out: &Path, hp: &HyperparamArgs) -> Result<(), Failure> {
    let hp = hp.apply(kind)?;
    let d = load_dataset(data)?;
    let model = train(&d, hp).map_err(|e| Failure::Domain(e.to_string()))?;
    save_model(&model, out).map_err(|e| Failure::Usage(format!("saving {}: {e}", out.display())))?;
    let m = &model.meta;
    let mut text = String::new();
    writeln!(text, "model       {} ({})", kind.display_name(), m.hyperparams).unwrap();
    writeln!(text, "dataset     {} records ({} Halal, {} Haram)", m.n_records, m.n_halal, m.n_haram).unwrap();
    writeln!(text, "sha256      {}", m.dataset_hash).unwrap();
    writeln!(
        text,
        "optimizer   {} after {} iterations",
        if m.converged { "converged" } else { "stopped at its limit" },
        m.iterations
    )
    .unwrap();
    writeln!(text, "saved       {}", out.display()).unwrap();
    emit(&text, None)
}

fn evaluate_cmd(
    data: &Path,
    folds: usize,
    seed: u64,
    choice: ModelChoice,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let d = load_dataset(data)?;
    let kinds: Vec<ModelKind> = match choice {
        ModelChoice::All => ModelKind::ALL.to_vec(),
        ModelChoice::Nb => vec![ModelKind::Nb],
        ModelChoice::Lr => vec![ModelKind::Lr],
        ModelChoice::Svm => vec![ModelKind::Svm],
    };
    let reports = kinds
        .iter()
        .map(|k| eval::cross_validate(&d, k.default_hyperparams(), folds, seed))
        .collect::<Result<Vec<EvaluationReport>, _>>()
        .map_err(|e| Failure::Domain(e.to_string()))?;
    if reports[0].folds < folds {
        log::warn!("fold count lowered from {folds} to {} (smallest class size)", reports[0].folds);
    }
    let text = match (format, reports.len()) {
        (Format::Json, 1) => to_json(&reports[0]),
        (Format::Text, 1) => reports[0].to_string(),
        (format, _) => {
            let cmp = eval::compare_report(&reports).map_err(|e| Failure::Domain(e.to_string()))?;
            match format {
                Format::Json => to_json(&serde_json::json!({ "reports": reports, "comparison": cmp })),
                Format::Text => comparison_text(&d, &reports, &cmp),
            }
        }
    };
    emit(&text, out)
}

fn comparison_text(d: &Dataset, reports: &[EvaluationReport], cmp: &eval::Comparison) -> String {
    let r0 = &reports[0];
    let mut s = String::new();
    writeln!(
        s,
        "{}-fold stratified cross-validation, seed {}, {} records ({} Halal, {} Haram)",
        r0.folds,
        r0.seed,
        d.len(),
        d.count(Label::Halal),
        d.count(Label::Haram)
    )
    .unwrap();
    writeln!(s, "dataset sha256 {}", r0.dataset_hash).unwrap();
    writeln!(s).unwrap();
    write!(s, "{}", cmp.metric_table()).unwrap();
    writeln!(s).unwrap();
    write!(s, "{cmp}").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "misclassified").unwrap();
    for r in reports {
        let items: Vec<String> = r
            .misclassified
            .iter()
            .map(|m| format!("{} ({} predicted {}, fold {})", m.ticker, m.actual, m.predicted, m.fold + 1))
            .collect();
        let list = if items.is_empty() { "none".to_owned() } else { items.join(", ") };
        writeln!(s, "  {:<4} {list}", r.model.display_name()).unwrap();
    }
    s
}

struct ClassifyArgs {
    query: String,
    model: PathBuf,
    fixtures: Option<PathBuf>,
    store: Option<PathBuf>,
    accounts: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    min_count: NonZeroUsize,
    api_base: Option<String>,
    format: Format,
}

fn classify_cmd(a: ClassifyArgs) -> Result<(), Failure> {
    let res = Resources::load(&a.model, a.lexicon.as_deref(), a.stopwords.as_deref(), a.min_count)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    // without --store, rulings go to a throwaway directory
    let scratch = tempfile::tempdir().map_err(|e| Failure::Usage(format!("temp dir: {e}")))?;
    let store_path = a.store.clone().unwrap_or_else(|| scratch.path().join("rulings.jsonl"));
    let accounts = a.accounts.clone().unwrap_or_else(|| {
        let mut p = store_path.clone().into_os_string();
        p.push(".accounts");
        PathBuf::from(p)
    });
    let store = RuleStore::open(&store_path, &accounts, StoreOptions::default())
        .map_err(|e| Failure::Usage(format!("opening store: {e}")))?;
    let mut config = ClientConfig::default();
    if let Some(base) = a.api_base {
        config.api_base = base;
    }
    let mode = match a.fixtures {
        Some(dir) => Mode::Fixture { dir },
        None => Mode::live_from_env(),
    };
    let pipeline = res.pipeline(MarketClient::new(mode, config), Arc::new(store));
    let resp = pipeline.classify(&a.query).map_err(|e| match e {
        PipelineError::Config(_) | PipelineError::Store(_) => Failure::Usage(e.to_string()),
        e => Failure::Domain(e.to_string()),
    })?;
    drop(pipeline);
    let text = match a.format {
        Format::Text => resp.to_string(),
        Format::Json => to_json(&resp),
    };
    emit(&text, None)
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn serve_cmd(config: &Path, offline: bool) -> Result<(), Failure> {
    let config = load_config(config)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Usage(format!("starting runtime: {e}")))?;
    rt.block_on(async {
        let server = Server::bind(&config, offline).await.map_err(|e| Failure::Usage(e.to_string()))?;
        let addr = server.local_addr().map_err(|e| Failure::Usage(e.to_string()))?;
        emit(&format!("listening on http://{addr}\n"), None)?;
        server
            .run(cryptohalal_service::shutdown_signal())
            .await
            .map_err(|e| Failure::Usage(e.to_string()))?;
        emit("store flushed, stopped\n", None)
    })
}

fn synthesize_cmd(halal: usize, haram: usize, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let d = synthesize_fixture(halal, haram, seed).map_err(|e| Failure::Domain(e.to_string()))?;
    emit(&d.to_csv_string(), out)
}

fn add_scholar_cmd(config: &Path, id: &str, name: &str) -> Result<(), Failure> {
    let config = load_config(config)?;
    let mut password = String::new();
    std::io::stdin()
        .lock()
        .read_line(&mut password)
        .map_err(|e| Failure::Usage(format!("reading password: {e}")))?;
    let password = password.trim_end_matches(['\r', '\n']);
    let opts = StoreOptions {
        hash_params: config.auth.argon2.unwrap_or_default(),
        ..StoreOptions::default()
    };
    let store = RuleStore::open(&config.paths.store, &config.paths.accounts, opts)
        .map_err(|e| Failure::Usage(format!("opening store: {e}")))?;
    let account = store.add_account(id, name, password).map_err(|e| Failure::Domain(e.to_string()))?;
    emit(&format!("added scholar {} ({})\n", account.id, account.display_name), None)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ValidateDataset { path, format } => validate_dataset(&path, format),
        Command::Train { model, data, out, hp } => train_cmd(model.into(), &data, &out, &hp),
        Command::Evaluate {
            data,
            folds,
            seed,
            model,
            format,
            out,
        } => evaluate_cmd(&data, folds as usize, seed, model, format, out.as_deref()),
        Command::Classify {
            query,
            model,
            offline: _,
            fixtures,
            store,
            accounts,
            lexicon,
            stopwords,
            min_count,
            api_base,
            format,
        } => classify_cmd(ClassifyArgs {
            query,
            model,
            fixtures,
            store,
            accounts,
            lexicon,
            stopwords,
            min_count,
            api_base,
            format,
        }),
        Command::Serve { config, offline } => serve_cmd(&config, offline),
        Command::Synthesize { halal, haram, seed, out } => synthesize_cmd(halal, haram, seed, out.as_deref()),
        Command::AddScholar { config, id, name } => add_scholar_cmd(&config, &id, &name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Domain(msg) | Failure::Usage(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
