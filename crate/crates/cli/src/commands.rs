use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use vulnlab_core::classifier::{
    load_model, save_model, split_dataset, train, vectorize_dataset, ClassifierError, Sample,
};
use vulnlab_core::embeddings::{EmbeddingError, EmbeddingModel, ProviderRegistry};
use vulnlab_core::evaluator::{
    emit_report, kfold, per_category_report, read_report_json, sweep, write_report_rows, EvalError, ProviderData,
};
use vulnlab_core::jsonl::{read_jsonl, write_jsonl, JsonlError};
use vulnlab_core::labeler::{label_commits, LabelError, LabeledSnippet};
use vulnlab_core::miner::{
    search_candidate_commits, CommitRecord, CommitSource, FixtureSource, GithubSource, KeywordTable, MineError,
};
use vulnlab_core::pytokenizer::{build_corpus, read_corpus, write_corpus, CorpusFileError, LexMode};

use crate::config::{require_file, PipelineConfig, SourceKind};
use crate::{CliError, Command};

impl From<MineError> for CliError {
    fn from(e: MineError) -> Self {
        CliError::domain(e.kind(), e)
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        CliError::domain(e.kind(), e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::UnknownMethod(name) => CliError::Config(format!("unknown provider {name:?}")),
            EmbeddingError::InvalidConfig(msg) => CliError::Config(msg),
            e => CliError::domain(e.kind(), e),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidHyper(msg) => CliError::Config(format!("invalid hyperparameters: {msg}")),
            e => CliError::domain(e.kind(), e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Classifier(c) => c.into(),
            e => CliError::domain(e.kind(), e),
        }
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        CliError::domain("JsonlError", e)
    }
}

impl From<CorpusFileError> for CliError {
    fn from(e: CorpusFileError) -> Self {
        CliError::domain("CorpusFileError", e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::domain("IoError", e)
    }
}

pub fn run(command: Command, cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), CliError> {
    let registry = ProviderRegistry::default();
    registry.get(&cfg.provider)?;
    match command {
        Command::Mine { .. } => mine(cfg, out.unwrap_or(&cfg.commits_path)),
        Command::Label => label(cfg, out.unwrap_or(&cfg.dataset_path)),
        Command::Tokenize => tokenize(cfg, out.unwrap_or(&cfg.corpus_path)),
        Command::TrainEmbedding => train_embedding(cfg, &registry, out),
        Command::Train => train_classifier(cfg, &registry, out.unwrap_or(&cfg.model_path)),
        Command::Evaluate => evaluate(cfg, &registry, out.unwrap_or(&cfg.report_path)),
        Command::Sweep => run_sweep(cfg, &registry, out.unwrap_or(&cfg.report_path)),
        Command::Report => report(cfg, out),
    }
}

fn keyword_table(cfg: &PipelineConfig) -> Result<KeywordTable, CliError> {
    match &cfg.keyword_table_path {
        Some(path) => {
            require_file(path, "keyword table")?;
            Ok(KeywordTable::load(path)?)
        }
        None => Ok(KeywordTable::default()),
    }
}

fn commit_source(cfg: &PipelineConfig) -> Result<Box<dyn CommitSource>, CliError> {
    match cfg.source {
        SourceKind::Fixture => {
            let dir = cfg
                .fixture_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("fixture source requires fixture_dir".into()))?;
            if !dir.is_dir() {
                return Err(CliError::Config(format!("fixture_dir {} does not exist", dir.display())));
            }
            Ok(Box::new(FixtureSource::new(dir)?))
        }
        SourceKind::Live => Ok(Box::new(GithubSource::from_env()?)),
    }
}

fn mine(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let table = keyword_table(cfg)?;
    let source = commit_source(cfg)?;
    let commits = search_candidate_commits(source.as_ref(), &table, cfg.limit.unwrap_or(usize::MAX))?;
    write_jsonl(out, &commits)?;
    println!("mined {} commits -> {}", commits.len(), out.display());
    Ok(())
}

fn label(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    require_file(&cfg.commits_path, "commits file")?;
    let source = commit_source(cfg)?;
    let commits: Vec<CommitRecord> = read_jsonl(&cfg.commits_path)?;
    let run = label_commits(source.as_ref(), &commits, cfg.context_radius);
    write_jsonl(out, &run.snippets)?;
    println!(
        "labeled {} snippets ({} before dedup, {} commits failed) -> {}",
        run.snippets.len(),
        run.raw_count,
        run.failed_commits,
        out.display()
    );
    Ok(())
}

fn read_dataset(cfg: &PipelineConfig) -> Result<Vec<LabeledSnippet>, CliError> {
    require_file(&cfg.dataset_path, "dataset")?;
    Ok(read_jsonl(&cfg.dataset_path)?)
}

fn tokenize(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let snippets = read_dataset(cfg)?;
    let corpus = build_corpus(snippets.iter().map(|s| (s.id.clone(), s.code.as_str())));
    let mut writer = BufWriter::new(File::create(out)?);
    write_corpus(&corpus, &mut writer)?;
    writer.flush()?;
    println!(
        "tokenized {} snippets ({} skipped) -> {}",
        corpus.streams.len(),
        corpus.skipped,
        out.display()
    );
    Ok(())
}

fn train_embedding(cfg: &PipelineConfig, registry: &ProviderRegistry, out: Option<&Path>) -> Result<(), CliError> {
    let method = registry.get(&cfg.provider)?;
    require_file(&cfg.corpus_path, "corpus")?;
    let sentences = read_corpus(BufReader::new(File::open(&cfg.corpus_path)?))?;
    let model = method.train(&sentences, &cfg.embedding)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.embedding_file(&cfg.provider)?,
    };
    let mut writer = BufWriter::new(File::create(&path)?);
    model.save(&mut writer)?;
    writer.flush()?;
    println!(
        "trained {} embeddings for {} tokens -> {}",
        cfg.provider,
        model.known_tokens().len(),
        path.display()
    );
    Ok(())
}

fn load_provider(
    cfg: &PipelineConfig,
    registry: &ProviderRegistry,
    provider: &str,
) -> Result<Box<dyn EmbeddingModel>, CliError> {
    let method = registry.get(provider)?;
    let path = cfg.embedding_file(provider)?;
    require_file(&path, &format!("{provider} embedding file"))?;
    Ok(method.load(&mut BufReader::new(File::open(&path)?))?)
}

fn lex_mode(cfg: &PipelineConfig) -> LexMode {
    if cfg.strict_lexing {
        LexMode::Strict
    } else {
        LexMode::Lenient
    }
}

fn vectorize(
    cfg: &PipelineConfig,
    snippets: &[LabeledSnippet],
    provider: &dyn EmbeddingModel,
    max_seq_len: Option<usize>,
) -> Result<Vec<Sample>, CliError> {
    let samples = vectorize_dataset(snippets, provider, max_seq_len, lex_mode(cfg))?;
    info!("vectorized {} snippets", samples.len());
    Ok(samples)
}

fn train_classifier(cfg: &PipelineConfig, registry: &ProviderRegistry, out: &Path) -> Result<(), CliError> {
    cfg.hyper.validate()?;
    let snippets = read_dataset(cfg)?;
    let provider = load_provider(cfg, registry, &cfg.provider)?;
    let samples = vectorize(cfg, &snippets, provider.as_ref(), cfg.hyper.max_seq_len)?;
    let (train_set, val_set, _) = split_dataset(&samples, cfg.split_ratios(), cfg.module_seed("split"))?;
    let model = train(&train_set, &val_set, &cfg.hyper, &cfg.provider)?;
    let mut writer = BufWriter::new(File::create(out)?);
    save_model(&model, &mut writer)?;
    writer.flush()?;
    let last = model.history.last();
    println!(
        "trained classifier on {} samples (final train loss {}) -> {}",
        train_set.len(),
        last.map_or("n/a".to_string(), |s| format!("{:.6}", s.train_loss)),
        out.display()
    );
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, registry: &ProviderRegistry, out: &Path) -> Result<(), CliError> {
    let snippets = read_dataset(cfg)?;
    let provider = load_provider(cfg, registry, &cfg.provider)?;
    let rows = match cfg.kfold {
        Some(k) => {
            cfg.hyper.validate()?;
            let samples = vectorize(cfg, &snippets, provider.as_ref(), cfg.hyper.max_seq_len)?;
            kfold(&samples, k, cfg.module_seed("kfold"), &cfg.hyper, &cfg.provider)?
        }
        None => {
            require_file(&cfg.model_path, "classifier model")?;
            let model = load_model(&mut BufReader::new(File::open(&cfg.model_path)?), provider.dim())?;
            if model.provider_id != cfg.provider {
                return Err(CliError::Config(format!(
                    "model was trained with provider {}, not {}",
                    model.provider_id, cfg.provider
                )));
            }
            let samples = vectorize(cfg, &snippets, provider.as_ref(), Some(model.seq_len))?;
            let (_, _, test_set) = split_dataset(&samples, cfg.split_ratios(), cfg.module_seed("split"))?;
            per_category_report(&model, &test_set)?
        }
    };
    emit_report(&rows, cfg.format, out)?;
    println!("wrote {} report rows -> {}", rows.len(), out.display());
    Ok(())
}

fn run_sweep(cfg: &PipelineConfig, registry: &ProviderRegistry, out: &Path) -> Result<(), CliError> {
    let snippets = read_dataset(cfg)?;
    let names = cfg.sweep_providers();
    let mut datasets = Vec::with_capacity(names.len());
    for name in &names {
        let provider = load_provider(cfg, registry, name)?;
        datasets.push(vectorize(cfg, &snippets, provider.as_ref(), cfg.hyper.max_seq_len)?);
    }
    let providers: Vec<ProviderData> = names
        .iter()
        .zip(&datasets)
        .map(|(name, samples)| ProviderData { provider: name, samples })
        .collect();
    let rows = sweep(&cfg.sweep.grid, &cfg.hyper, &providers, cfg.sweep.protocol, cfg.module_seed("sweep"))?;
    emit_report(&rows, cfg.format, out)?;
    let failed = rows.iter().filter(|r| r.is_failed()).count();
    println!("wrote {} sweep rows ({failed} failed) -> {}", rows.len(), out.display());
    Ok(())
}

fn report(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), CliError> {
    require_file(&cfg.report_path, "JSON report")?;
    let rows = read_report_json(BufReader::new(File::open(&cfg.report_path)?))?;
    match out {
        Some(path) => write_report_rows(&rows, cfg.format, BufWriter::new(File::create(path)?))?,
        None => write_report_rows(&rows, cfg.format, io::stdout().lock())?,
    }
    Ok(())
}
