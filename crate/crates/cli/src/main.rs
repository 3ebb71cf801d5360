use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use enrich_client::Client;
use enrich_core::analysis::{cross_tab, export_table, TableFormat};
use enrich_core::annotation::{apply_gold, Adjudication, AdjudicationPolicy, AgreementReport, AnnotationStore};
use enrich_core::config::{PipelineConfig, ProviderKind};
use enrich_core::corpus::LabelSource;
use enrich_core::enrichment::EnrichOptions;
use enrich_core::evaluation::CvConfig;
use enrich_core::pipeline::{self, build_provider, load, name_db, parse_refs, save};
use enrich_core::sampling::SamplingMode;
use enrich_core::synthetic::{generate, SynthConfig};
use enrich_server::{serve, AppState};

/// Sample, annotate, model, enrich and tabulate a comment corpus.
#[derive(Parser)]
#[command(name = "enrich-corpus", version)]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling and cross-validation folds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the annotation subsample from a raw corpus.
    Sample(SampleArgs),
    /// Remove spam-like records.
    Spamfilter(SpamArgs),
    /// Run the annotation service (and the UI if a directory is given).
    Serve(ServeArgs),
    /// Inter-annotator agreement for one attribute.
    Agreement(AgreementArgs),
    /// Derive gold labels from annotator votes.
    Adjudicate(AdjudicateArgs),
    /// Cross-validate and fit one classifier per attribute.
    Train(TrainArgs),
    /// Label a corpus with trained models.
    Predict(PredictArgs),
    /// Attach name-derived gender and ethnicity.
    Enrich(EnrichArgs),
    /// Write label-count and distribution tables.
    Analyze(AnalyzeArgs),
    /// train, predict, enrich and analyze in sequence.
    Pipeline(PipelineArgs),
    /// Write a seeded synthetic dataset and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// random, stratified or top-k
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Grouping attribute for stratified and top-k modes.
    #[arg(long)]
    group: Option<String>,
    /// Also apply the spam rules to the sample.
    #[arg(long)]
    spam: bool,
}

#[derive(Args)]
struct SpamArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_tokens: Option<usize>,
    #[arg(long)]
    max_url_fraction: Option<f64>,
    #[arg(long)]
    keep_duplicates: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Corpus of items to annotate.
    #[arg(long)]
    items: Option<PathBuf>,
    /// JSONL event log, replayed on start and appended to.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// Directory of static UI files.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Args)]
struct StoreSource {
    /// Query a running service instead of reading the log.
    #[arg(long)]
    server: Option<String>,
    #[arg(long)]
    items: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct AgreementArgs {
    #[arg(long)]
    attr: String,
    #[arg(long, requires = "b")]
    a: Option<String>,
    #[arg(long, requires = "a")]
    b: Option<String>,
    #[command(flatten)]
    source: StoreSource,
}

#[derive(Args)]
struct AdjudicateArgs {
    #[arg(long)]
    attr: String,
    /// majority or strict_unanimous
    #[arg(long, default_value = "majority")]
    policy: String,
    #[command(flatten)]
    source: StoreSource,
    /// Write the items corpus with the adjudicated gold labels applied.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Attribute to train; repeatable. Defaults to every schema attribute.
    #[arg(long = "attr")]
    attrs: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated L2 strengths.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Models directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for evaluation reports.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnrichArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Name frequency CSV (`name,F|M,count`).
    #[arg(long)]
    names: Option<PathBuf>,
    /// none, remote or local
    #[arg(long)]
    provider: Option<String>,
    /// Remote endpoint; `{name}` marks the encoded name.
    #[arg(long)]
    endpoint: Option<String>,
    /// `name,category` file to train the local provider from.
    #[arg(long)]
    local_training: Option<PathBuf>,
    #[arg(long)]
    local_model: Option<PathBuf>,
    /// JSONL ethnicity cache, keyed by name hash.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Share of one sex needed to call a name Male or Female, in (0.5, 1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Directory for the enrichment summary table.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Row attribute(s), e.g. enriched.gender; repeatable.
    #[arg(long)]
    rows: Vec<String>,
    /// Column attribute(s); repeatable.
    #[arg(long)]
    cols: Vec<String>,
    /// gold or predicted
    #[arg(long)]
    which: Option<String>,
    /// csv, markdown or json
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Gold-labeled sample for an extra label-count column.
    #[arg(long)]
    sampled: Option<PathBuf>,
    /// Write every table in every configured format here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.enrichment.apply_env();
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn pick(flag: Option<PathBuf>, configured: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.cloned())
        .with_context(|| format!("no {what} given (flag or config)"))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Sample(a) => cmd_sample(cfg, a),
        Command::Spamfilter(a) => cmd_spamfilter(cfg, a),
        Command::Serve(a) => cmd_serve(cfg, a),
        Command::Agreement(a) => cmd_agreement(cfg, a),
        Command::Adjudicate(a) => cmd_adjudicate(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Predict(a) => cmd_predict(cfg, a),
        Command::Enrich(a) => cmd_enrich(cfg, a),
        Command::Analyze(a) => cmd_analyze(cfg, a),
        Command::Pipeline(a) => cmd_pipeline(cfg, a),
        Command::Synth(a) => cmd_synth(cli.seed, a),
    }
}

fn cmd_sample(mut cfg: PipelineConfig, a: SampleArgs) -> Result<()> {
    let input = pick(a.input, cfg.paths.raw_corpus.as_ref(), "input corpus")?;
    let plan = &mut cfg.sampling;
    if let Some(m) = a.mode {
        plan.mode = m.parse::<SamplingMode>()?;
    }
    if let Some(f) = a.fraction {
        plan.fraction = f;
    }
    if let Some(k) = a.k {
        plan.k = k;
    }
    if a.group.is_some() {
        plan.group_attr = a.group;
    }
    let report = pipeline::run_sample(&input, &a.out, plan)?;
    let mut kept = load(&a.out)?.len();
    if a.spam {
        let outcome = pipeline::run_spamfilter(&a.out, &a.out, &cfg.spam)?;
        kept = outcome.kept.len();
        eprintln!("spam filter removed {}", outcome.removed.len());
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprintln!("wrote {kept} records to {}", a.out.display());
    Ok(())
}

fn cmd_spamfilter(mut cfg: PipelineConfig, a: SpamArgs) -> Result<()> {
    if let Some(n) = a.min_tokens {
        cfg.spam.min_tokens = n;
    }
    if let Some(f) = a.max_url_fraction {
        cfg.spam.max_url_fraction = f;
    }
    if a.keep_duplicates {
        cfg.spam.drop_exact_duplicates = false;
    }
    let outcome = pipeline::run_spamfilter(&a.input, &a.out, &cfg.spam)?;
    for (id, reasons) in &outcome.reasons {
        println!("{id}\t{}", serde_json::to_string(reasons)?);
    }
    eprintln!("kept {}, removed {}", outcome.kept.len(), outcome.removed.len());
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn cmd_serve(cfg: PipelineConfig, a: ServeArgs) -> Result<()> {
    let items_path = pick(a.items, cfg.paths.sampled_corpus.as_ref(), "items corpus")?;
    let items = load(&items_path)?;
    let store = match a.log.or(cfg.paths.annotation_log.clone()) {
        Some(log) => AnnotationStore::open(items, &log)?,
        None => {
            log::warn!("no annotation log configured; labels will not be persisted");
            AnnotationStore::new(items)
        }
    };
    let bind = a.bind.unwrap_or(cfg.server.bind);
    let port = a.port.unwrap_or(cfg.server.port);
    let ui = a.ui.or(cfg.paths.ui_dir);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
            .await
            .with_context(|| format!("binding {bind}:{port}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, AppState::new(store), ui, async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await?;
        Ok(())
    })
}

fn local_store(cfg: &PipelineConfig, src: &StoreSource) -> Result<AnnotationStore> {
    let items = pick(src.items.clone(), cfg.paths.sampled_corpus.as_ref(), "items corpus")?;
    let log = pick(src.log.clone(), cfg.paths.annotation_log.as_ref(), "annotation log")?;
    if !log.exists() {
        bail!("annotation log not found: {}", log.display());
    }
    Ok(AnnotationStore::replay(load(&items)?, &log)?)
}

fn cmd_agreement(cfg: PipelineConfig, a: AgreementArgs) -> Result<()> {
    let pair = a.a.as_deref().zip(a.b.as_deref());
    let report: AgreementReport = match &a.source.server {
        Some(url) => runtime()?.block_on(Client::new(url).agreement(&a.attr, pair))?,
        None => {
            let store = local_store(&cfg, &a.source)?;
            match pair {
                Some(p) => store.pair_report(&a.attr, p)?,
                None => store.agreement(&a.attr)?,
            }
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_adjudicate(cfg: PipelineConfig, a: AdjudicateArgs) -> Result<()> {
    let adjudication: Adjudication = match &a.source.server {
        Some(url) => runtime()?.block_on(Client::new(url).adjudication(&a.attr, &a.policy))?,
        None => {
            let policy: AdjudicationPolicy = a.policy.parse()?;
            local_store(&cfg, &a.source)?.adjudicate(&a.attr, policy)?
        }
    };
    if let Some(out) = &a.out {
        let items = pick(a.source.items.clone(), cfg.paths.sampled_corpus.as_ref(), "items corpus")?;
        let corpus = apply_gold(&load(&items)?, &adjudication);
        save(&corpus, out)?;
        eprintln!("wrote {} gold labels to {}", adjudication.gold.len(), out.display());
    }
    println!("{}", serde_json::to_string_pretty(&adjudication)?);
    Ok(())
}

fn cmd_train(mut cfg: PipelineConfig, a: TrainArgs) -> Result<()> {
    let input = pick(a.input, cfg.paths.sampled_corpus.as_ref(), "training corpus")?;
    if let Some(k) = a.k {
        cfg.cv.k = k;
    }
    if let Some(grid) = a.grid {
        cfg.cv = CvConfig::with_lambdas(cfg.cv.k, cfg.cv.seed, &grid);
    }
    cfg.check()?;
    let attrs = if a.attrs.is_empty() { cfg.attributes.clone() } else { a.attrs };
    let models = a.out.unwrap_or(cfg.paths.models_dir);
    let reports_dir = a.reports.unwrap_or_else(|| models.clone());
    let reports = pipeline::run_train(
        &input,
        &attrs,
        &cfg.cv,
        &cfg.features,
        &models,
        &reports_dir,
        &cfg.analysis.formats,
    )?;
    print!(
        "{}",
        export_table(&enrich_core::analysis::eval_table(&reports), TableFormat::Markdown)
    );
    Ok(())
}

fn cmd_predict(cfg: PipelineConfig, a: PredictArgs) -> Result<()> {
    let input = pick(a.input, cfg.paths.raw_corpus.as_ref(), "input corpus")?;
    let models = a.models.unwrap_or(cfg.paths.models_dir);
    let labeled = pipeline::run_predict(&models, &input, &a.out)?;
    eprintln!("labeled {} records into {}", labeled.len(), a.out.display());
    Ok(())
}

fn cmd_enrich(mut cfg: PipelineConfig, a: EnrichArgs) -> Result<()> {
    let e = &mut cfg.enrichment;
    if let Some(p) = a.provider {
        e.provider = match p.as_str() {
            "none" => ProviderKind::None,
            "remote" => ProviderKind::Remote,
            "local" => ProviderKind::Local,
            other => bail!("unknown provider {other:?} (none, remote, local)"),
        };
    }
    if a.endpoint.is_some() {
        e.endpoint_template = a.endpoint;
    }
    if a.local_training.is_some() {
        e.local_training = a.local_training;
    }
    if a.local_model.is_some() {
        e.local_model = a.local_model;
    }
    if a.cache.is_some() {
        e.cache_path = a.cache;
    }
    if let Some(t) = a.threshold {
        e.gender_threshold = t;
    }
    if let Some(n) = a.max_in_flight {
        e.max_in_flight = n;
    }
    cfg.check()?;
    let db = name_db(a.names.as_ref().or(cfg.paths.name_db.as_ref()))?;
    let provider = build_provider(&cfg.enrichment)?;
    let opts = EnrichOptions {
        gender_threshold: cfg.enrichment.gender_threshold,
        max_in_flight: cfg.enrichment.max_in_flight,
    };
    let reports = a
        .reports
        .unwrap_or_else(|| a.out.parent().map(Path::to_path_buf).unwrap_or_default());
    let summary = pipeline::run_enrich(
        &a.input,
        &a.out,
        &db,
        provider.as_ref(),
        &opts,
        &reports,
        &cfg.analysis.formats,
    )?;
    for (label, n) in summary.rows() {
        println!("{label} {n}");
    }
    Ok(())
}

fn cmd_analyze(cfg: PipelineConfig, a: AnalyzeArgs) -> Result<()> {
    let input = pick(a.input, None, "input corpus")?;
    let format: TableFormat = a.format.parse()?;
    let which: LabelSource = match a.which {
        Some(w) => w.parse()?,
        None => cfg.analysis.which,
    };
    let rows = parse_refs(if a.rows.is_empty() { &cfg.analysis.rows } else { &a.rows })?;
    let cols = parse_refs(if a.cols.is_empty() { &cfg.analysis.cols } else { &a.cols })?;
    if let Some(out) = &a.out {
        let written = pipeline::run_analyze(
            &input,
            a.sampled.as_deref(),
            &rows,
            &cols,
            which,
            out,
            &cfg.analysis.formats,
        )?;
        for f in written.files {
            eprintln!("wrote {}", f.display());
        }
    }
    let corpus = load(&input)?;
    if let ([row], [col]) = (rows.as_slice(), cols.as_slice()) {
        let tab = cross_tab(&corpus, row, col, which)?;
        let keep = enrich_core::analysis::distribution_columns(&corpus, col)?;
        print!("{}", export_table(&tab.restrict_cols(&keep).to_table(true), format));
    } else {
        let (table, _) = enrich_core::analysis::distribution_table(&corpus, &rows, &cols, which)?;
        print!("{}", export_table(&table, format));
    }
    Ok(())
}

fn cmd_pipeline(mut cfg: PipelineConfig, a: PipelineArgs) -> Result<()> {
    if let Some(out) = a.out {
        cfg.paths.output_dir = out;
    }
    let outputs = pipeline::run_pipeline(&cfg)?;
    for t in &outputs.tables {
        println!("{}", t.display());
    }
    Ok(())
}

fn cmd_synth(seed: Option<u64>, a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_records: a.n,
        per_source_k: a.k,
        seed: seed.unwrap_or(SynthConfig::default().seed),
    };
    let written = generate(&cfg)?.write(&a.out)?;
    println!("{}", written.config.display());
    Ok(())
}
