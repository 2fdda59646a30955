use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use modguard_core::augmentation::{
    balance_corpus, rephrase_many, Augmenter, LlmClient, LlmClientConfig, StubAugmenter,
};
use modguard_core::classifiers::{
    load_model, predict_batch, save_model, train_knn, train_logistic, train_svm, update_incremental, ClassifierModel,
    Label, TrainConfig,
};
use modguard_core::corpus::{
    fetch_images, from_hate_speech_csv, from_redcaps_annotations, from_review_manifest, load_corpus, save_corpus,
    split, split_indices, write_review_manifest, Corpus, FetchOptions, GoogleImageSearch, ImageSearch,
    LabeledExample, QueryKind, SplitSpec, StubImageSearch,
};
use modguard_core::embedding::{
    decode_image, embed_images, embed_texts, meta_path, read_meta, read_store, write_store, EmbeddingBackend,
    EmbeddingStore, EmbeddingVector, Modality, DEFAULT_BATCH_SIZE,
};
use modguard_core::metrics::{evaluate, EvaluationReport};
use modguard_core::projection::{pca, trustworthiness, umap, Projection, ProjectionConfig};
use modguard_core::textprep::clean_text;

use crate::backend::build_backend;
use crate::cli::{Algo, BackendArgs, BackendKind, Cli, Command, IngestFormat, LlmArgs, Method, ModalityArg, TrainArgs};
use crate::config::FileConfig;
use crate::service::{self, AppState, ServiceConfig, DEFAULT_MAX_BODY_BYTES};

/// Shared settings resolved from flags, environment and config file.
pub struct Ctx {
    pub file: FileConfig,
    pub seed: u64,
}

impl Ctx {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        Ok(Self { file, seed })
    }

    fn backend(&self, args: &BackendArgs, alias: Option<&Path>) -> Result<(Arc<dyn EmbeddingBackend>, usize)> {
        let kind = match (args.backend, self.file.backend.as_deref()) {
            (Some(k), _) => k,
            (None, Some("mock")) | (None, None) => BackendKind::Mock,
            (None, Some("model")) => BackendKind::Model,
            (None, Some(other)) => bail!("config: unknown backend `{other}` (mock or model)"),
        };
        let model_file = args.model_file.as_deref().or(alias).or(self.file.model_file.as_deref());
        let backend = build_backend(kind, model_file, args.dim.or(self.file.dim))?;
        let batch = args.batch_size.or(self.file.batch_size).unwrap_or(DEFAULT_BATCH_SIZE);
        Ok((backend, batch))
    }

    fn train_config(&self, args: &TrainArgs) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: args.lr.unwrap_or(d.learning_rate),
            l2: args.l2.unwrap_or(d.l2),
            epochs: args.epochs.unwrap_or(d.epochs),
            batch: args.batch.unwrap_or(d.batch),
            seed: self.seed,
            class_weighting: args.class_weighting,
        }
    }

    fn augmenter(&self, args: &LlmArgs) -> Result<(Box<dyn Augmenter>, usize)> {
        let f = &self.file;
        let d = LlmClientConfig::from_env();
        let cfg = LlmClientConfig {
            endpoint_url: args.llm_url.clone().or_else(|| f.llm_url.clone()).unwrap_or(d.endpoint_url),
            model_name: args.llm_model.clone().or_else(|| f.llm_model.clone()).unwrap_or(d.model_name),
            temperature: args.temperature.or(f.temperature).unwrap_or(d.temperature),
            timeout_s: args.timeout_s.or(f.timeout_s).unwrap_or(d.timeout_s),
            max_retries: args.max_retries.or(f.max_retries).unwrap_or(d.max_retries),
            max_concurrency: args.max_concurrency.or(f.max_concurrency).unwrap_or(d.max_concurrency),
            api_key: d.api_key,
        };
        let conc = cfg.max_concurrency;
        if args.stub {
            return Ok((Box::new(StubAugmenter::new(self.seed)), conc));
        }
        Ok((Box::new(LlmClient::new(cfg).context("augmentation")?), conc))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::from_cli(&cli)?;
    match cli.command {
        Command::Preprocess { input, out } => {
            let (kept, dropped) = preprocess(&input, &out)?;
            eprintln!("kept {kept}, dropped {dropped} empty");
            Ok(())
        }
        Command::Embed { input, out, modality, model, backend } => {
            let (backend, batch) = ctx.backend(&backend, model.as_deref())?;
            let n = embed_file(backend.as_ref(), batch, &input, &out, modality)?;
            eprintln!("embedded {n} records into {}", out.display());
            Ok(())
        }
        Command::Train { algo, store, labels, out, k, grid, train } => {
            let (store, labels) = load_labelled(&store, labels.as_deref())?;
            let cfg = ctx.train_config(&train);
            let model = if grid {
                let (model, best) = train_grid(algo, &store, &labels, &cfg, k)?;
                eprintln!("grid: lr={} l2={} (held-out F1 {:.4})", model_lr(&model), model_l2(&model), best);
                model
            } else {
                train_one(algo, &store, &labels, &cfg, k)?
            };
            save_model(&model, &out).context("classifiers")?;
            Ok(())
        }
        Command::Update { model, new, replay, out, train } => {
            let m = load_model(&model).context("classifiers")?;
            let (new_store, new_labels) = load_labelled(&new, None)?;
            let (replay_store, replay_labels) = load_labelled(&replay, None)?;
            let mut cfg = m.metadata.cfg.clone().unwrap_or_default();
            let given = ctx.train_config(&train);
            cfg.seed = ctx.seed;
            if train.lr.is_some() {
                cfg.learning_rate = given.learning_rate;
            }
            if train.l2.is_some() {
                cfg.l2 = given.l2;
            }
            if train.epochs.is_some() {
                cfg.epochs = given.epochs;
            }
            if train.batch.is_some() {
                cfg.batch = given.batch;
            }
            let updated = update_incremental(&m, &new_store, &new_labels, &replay_store, &replay_labels, &cfg)
                .context("classifiers")?;
            save_model(&updated, &out).context("classifiers")?;
            Ok(())
        }
        Command::Predict { model, store, out } => {
            let m = load_model(&model).context("classifiers")?;
            let store = read_store(&store).context("embedding")?;
            write_predictions(&m, &store, &out)
        }
        Command::Eval { model, store, labels, report, roc_csv } => {
            let m = load_model(&model).context("classifiers")?;
            let (store, labels) = load_labelled(&store, labels.as_deref())?;
            let r = evaluate(&m, &store, &labels).context("metrics")?;
            write_report(&r, &report, roc_csv.as_deref())?;
            println!("{}", summary_line(&r));
            Ok(())
        }
        Command::Reduce { store, method, dim, out, n_neighbors, min_dist, epochs, highlight, trust_k } => {
            let s = read_store(&store).context("embedding")?;
            let cfg = ProjectionConfig { target_dim: dim, n_neighbors, min_dist, epochs, seed: ctx.seed };
            let proj = reduce(&s, method, &cfg)?;
            let labels = optional_labels(&store)?;
            let hl = highlight.as_deref().map(read_id_set).transpose()?;
            let mut w = BufWriter::new(create(&out)?);
            proj.write_csv(&mut w, labels.as_deref(), hl.as_ref()).context("projection")?;
            w.flush()?;
            if let Some(k) = trust_k {
                let t = trustworthiness(&s, &proj, k).context("projection")?;
                println!("{}", serde_json::json!({ "trustworthiness": t, "k": k }));
            }
            Ok(())
        }
        Command::Augment { input, out, n, label, balance, llm } => {
            let corpus = load_corpus(&input).context("corpus")?;
            let (aug, conc) = ctx.augmenter(&llm)?;
            let result = match balance {
                Some(ratio) => balance_corpus(&corpus, aug.as_ref(), ratio).context("augmentation")?,
                None => augment_all(&corpus, aug.as_ref(), n, label, conc)?,
            };
            eprintln!("{} -> {} examples", corpus.len(), result.len());
            save_corpus(&result, &out).context("corpus")?;
            Ok(())
        }
        Command::Keywords { input, out, llm } => {
            let (aug, _) = ctx.augmenter(&llm)?;
            keywords(aug.as_ref(), &input, &out)
        }
        Command::Ingest { format, input, out, images_dir } => {
            let f = File::open(&input).with_context(|| format!("corpus: opening {}", input.display()))?;
            let (corpus, report) = match format {
                IngestFormat::HateSpeechCsv => from_hate_speech_csv(f),
                IngestFormat::Redcaps => from_redcaps_annotations(f, &images_dir),
                IngestFormat::Manifest => from_review_manifest(f),
            }
            .context("corpus")?;
            save_corpus(&corpus, &out).context("corpus")?;
            eprintln!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Split { input, train, test, fraction, no_stratify } => {
            let corpus = load_corpus(&input).context("corpus")?;
            let spec = SplitSpec { train_fraction: fraction, seed: ctx.seed, stratified: !no_stratify };
            let (a, b) = split(&corpus, &spec).context("corpus")?;
            save_corpus(&a, &train).context("corpus")?;
            save_corpus(&b, &test).context("corpus")?;
            eprintln!("train {}, test {}", a.len(), b.len());
            Ok(())
        }
        Command::Stats { input } => {
            let corpus = load_corpus(&input).context("corpus")?;
            println!("{}", serde_json::to_string(&corpus.stats())?);
            Ok(())
        }
        Command::FetchImages { queries, urls, dir, manifest, limit, search_fixture, max_hosts, delay_ms } => {
            let requests = match (queries, urls) {
                (Some(q), None) => {
                    let search: Box<dyn ImageSearch> = match search_fixture {
                        Some(p) => Box::new(StubImageSearch::load(&p).context("corpus")?),
                        None => Box::new(GoogleImageSearch::from_env().context("corpus")?),
                    };
                    search_requests(search.as_ref(), &q, limit)?
                }
                (None, Some(u)) => read_url_list(&u)?,
                _ => bail!("corpus: give exactly one of --queries or --urls"),
            };
            let opts = FetchOptions {
                max_hosts,
                per_host_delay: Duration::from_millis(delay_ms),
                ..FetchOptions::default()
            };
            let report = fetch_images(&requests, &dir, &opts).context("corpus")?;
            write_review_manifest(&report.fetched, create(&manifest)?).context("corpus")?;
            for f in &report.failures {
                log::warn!("fetch failed for {}: {}", f.url, f.reason);
            }
            eprintln!("fetched {}, failed {}", report.fetched.len(), report.failures.len());
            Ok(())
        }
        Command::Pipeline { input, work, algo, fraction, backend, train } => {
            let (backend, batch) = ctx.backend(&backend, None)?;
            let cfg = ctx.train_config(&train);
            let r = pipeline(backend.as_ref(), batch, &input, &work, algo, fraction, &cfg, ctx.seed)?;
            println!("{}", summary_line(&r));
            Ok(())
        }
        Command::Serve { model, bind, max_body_bytes, threshold_override, workers, backend } => {
            let f = &ctx.file;
            let Some(model_path) = model.or_else(|| f.model.clone()) else {
                bail!("serve: --model is required");
            };
            let (backend, _) = ctx.backend(&backend, None)?;
            let cfg = ServiceConfig {
                model_path,
                max_body_bytes: max_body_bytes.or(f.max_body_bytes).unwrap_or(DEFAULT_MAX_BODY_BYTES),
                threshold_override: threshold_override.or(f.threshold_override),
                workers: workers.or(f.workers).unwrap_or(4),
            };
            let bind = bind.or_else(|| f.bind.clone()).unwrap_or_else(|| "127.0.0.1:8080".into());
            let state = AppState::new(&cfg, backend).context("serve")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(&bind, state, cfg.max_body_bytes))
        }
    }
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Generic input record. Unknown fields are carried through by `preprocess`.
#[derive(Debug, Clone, Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    image_path: Option<String>,
    #[serde(default)]
    modality: Option<Modality>,
    #[serde(default)]
    label: Option<Label>,
    #[serde(default)]
    keywords: Option<Vec<String>>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(v);
    }
    Ok(out)
}

/// Cleans the `text` field of each record in place; records whose text
/// cleans to nothing are dropped.
pub fn preprocess(input: &Path, out: &Path) -> Result<(usize, usize)> {
    let rows: Vec<Map<String, Value>> = read_jsonl(input).context("textprep")?;
    let mut w = BufWriter::new(create(out)?);
    let (mut kept, mut dropped) = (0, 0);
    for (i, mut row) in rows.into_iter().enumerate() {
        if !row.get("id").is_some_and(Value::is_string) {
            bail!("textprep: record {} has no string `id`", i + 1);
        }
        let Some(Value::String(text)) = row.get("text") else {
            bail!("textprep: record {} has no string `text`", i + 1);
        };
        let cleaned = clean_text(text);
        if cleaned.is_empty() {
            dropped += 1;
            continue;
        }
        row.insert("text".into(), Value::String(cleaned.into_string()));
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
        kept += 1;
    }
    w.flush()?;
    Ok((kept, dropped))
}

fn record_modality(r: &Record) -> Modality {
    r.modality.unwrap_or(if r.image_path.is_some() && r.text.is_none() { Modality::Image } else { Modality::Text })
}

/// Embeds records in input order. Text is cleaned before embedding; image
/// paths are resolved against `base`.
fn embed_records(
    backend: &dyn EmbeddingBackend,
    batch: usize,
    records: &[Record],
    base: &Path,
) -> Result<EmbeddingStore> {
    let mut vectors: Vec<Option<EmbeddingVector>> = vec![None; records.len()];
    let (mut text_idx, mut texts) = (Vec::new(), Vec::new());
    let (mut image_idx, mut images) = (Vec::new(), Vec::new());
    for (i, r) in records.iter().enumerate() {
        match record_modality(r) {
            Modality::Text => {
                let t = r.text.as_deref().ok_or_else(|| anyhow!("embedding: record `{}` has no text", r.id))?;
                text_idx.push(i);
                texts.push(clean_text(t));
            }
            Modality::Image => {
                let p = r
                    .image_path
                    .as_deref()
                    .ok_or_else(|| anyhow!("embedding: record `{}` has no image_path", r.id))?;
                let path = base.join(p);
                let bytes = std::fs::read(&path).with_context(|| format!("embedding: reading {}", path.display()))?;
                let img = decode_image(&bytes).with_context(|| format!("embedding: decoding {}", path.display()))?;
                image_idx.push(i);
                images.push(img);
            }
        }
    }
    if !texts.is_empty() {
        for (i, v) in text_idx.into_iter().zip(embed_texts(backend, &texts, batch).context("embedding")?) {
            vectors[i] = Some(v);
        }
    }
    if !images.is_empty() {
        for (i, v) in image_idx.into_iter().zip(embed_images(backend, &images, batch).context("embedding")?) {
            vectors[i] = Some(v);
        }
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let vectors: Vec<EmbeddingVector> = vectors.into_iter().map(|v| v.expect("every record embedded")).collect();
    EmbeddingStore::from_vectors(ids, &vectors).context("embedding")
}

fn all_labels(records: &[Record]) -> Option<Vec<Label>> {
    records.iter().map(|r| r.label).collect()
}

/// Embeds the records of one modality from a JSONL file and writes the store.
/// Labels go to the sidecar when every selected record has one.
pub fn embed_file(
    backend: &dyn EmbeddingBackend,
    batch: usize,
    input: &Path,
    out: &Path,
    modality: ModalityArg,
) -> Result<usize> {
    let want = match modality {
        ModalityArg::Text => Modality::Text,
        ModalityArg::Image => Modality::Image,
    };
    let records: Vec<Record> = read_jsonl(input).context("embedding")?;
    let selected: Vec<Record> = records.into_iter().filter(|r| record_modality(r) == want).collect();
    if selected.is_empty() {
        bail!("embedding: no {want} records in {}", input.display());
    }
    let base = input.parent().unwrap_or(Path::new("."));
    let store = embed_records(backend, batch, &selected, base)?;
    let labels = all_labels(&selected);
    write_store(out, &store, labels.as_deref()).context("embedding")?;
    Ok(store.count())
}

/// Reads a store with labels from `labels` or the store's own sidecar.
pub fn load_labelled(store: &Path, labels: Option<&Path>) -> Result<(EmbeddingStore, Vec<Label>)> {
    let s = read_store(store).context("embedding")?;
    let meta_file = labels.map(Path::to_path_buf).unwrap_or_else(|| meta_path(store));
    let meta = read_meta(&meta_file).context("embedding")?;
    if meta.len() != s.count() {
        bail!("embedding: {} has {} rows, store has {}", meta_file.display(), meta.len(), s.count());
    }
    let mut out = Vec::with_capacity(meta.len());
    for (i, m) in meta.iter().enumerate() {
        if m.id != s.ids()[i] {
            bail!("embedding: sidecar row {i} is `{}`, store row is `{}`", m.id, s.ids()[i]);
        }
        out.push(m.label.ok_or_else(|| anyhow!("embedding: row `{}` has no label", m.id))?);
    }
    Ok((s, out))
}

fn optional_labels(store: &Path) -> Result<Option<Vec<Label>>> {
    let p = meta_path(store);
    if !p.exists() {
        return Ok(None);
    }
    let meta = read_meta(&p).context("embedding")?;
    Ok(meta.iter().map(|m| m.label).collect())
}

fn train_one(algo: Algo, store: &EmbeddingStore, labels: &[Label], cfg: &TrainConfig, k: usize) -> Result<ClassifierModel> {
    match algo {
        Algo::Logreg => train_logistic(store, labels, cfg),
        Algo::Svm => train_svm(store, labels, cfg),
        Algo::Knn => train_knn(store, labels, k),
    }
    .context("classifiers")
}

/// Picks learning rate and l2 by F1 on a stratified held-out fifth, then
/// refits on everything. Ties keep the earlier grid point.
fn train_grid(
    algo: Algo,
    store: &EmbeddingStore,
    labels: &[Label],
    base: &TrainConfig,
    k: usize,
) -> Result<(ClassifierModel, f64)> {
    if algo == Algo::Knn {
        bail!("classifiers: --grid applies to logreg and svm only");
    }
    let spec = SplitSpec { train_fraction: 0.8, seed: base.seed, stratified: true };
    let (tr, va) = split_indices(labels, &spec).context("corpus")?;
    let pick = |idx: &[usize]| (store.select(idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (tr_s, tr_l) = pick(&tr);
    let (va_s, va_l) = pick(&va);
    let mut best: Option<(TrainConfig, f64)> = None;
    for cfg in TrainConfig::grid(base) {
        let m = train_one(algo, &tr_s, &tr_l, &cfg, k)?;
        let f1 = evaluate(&m, &va_s, &va_l).context("metrics")?.f1;
        log::info!("grid lr={} l2={} f1={f1:.4}", cfg.learning_rate, cfg.l2);
        if best.as_ref().is_none_or(|(_, b)| f1 > *b) {
            best = Some((cfg, f1));
        }
    }
    let (cfg, f1) = best.expect("grid is non-empty");
    Ok((train_one(algo, store, labels, &cfg, k)?, f1))
}

fn model_lr(m: &ClassifierModel) -> f64 {
    m.metadata.cfg.as_ref().map_or(f64::NAN, |c| c.learning_rate)
}

fn model_l2(m: &ClassifierModel) -> f64 {
    m.metadata.cfg.as_ref().map_or(f64::NAN, |c| c.l2)
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    label: Label,
    score: f64,
}

fn write_predictions(model: &ClassifierModel, store: &EmbeddingStore, out: &Path) -> Result<()> {
    let preds = predict_batch(model, store).context("classifiers")?;
    let mut w = BufWriter::new(create(out)?);
    for (id, p) in store.ids().iter().zip(&preds) {
        serde_json::to_writer(&mut w, &PredictionRow { id, label: p.label, score: p.score })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(r: &EvaluationReport, report: &Path, roc_csv: Option<&Path>) -> Result<()> {
    let mut w = BufWriter::new(create(report)?);
    serde_json::to_writer_pretty(&mut w, r)?;
    w.write_all(b"\n")?;
    w.flush()?;
    if let Some(p) = roc_csv {
        let mut w = BufWriter::new(create(p)?);
        r.write_roc_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn summary_line(r: &EvaluationReport) -> String {
    serde_json::json!({
        "precision": r.precision,
        "recall": r.recall,
        "f1": r.f1,
        "accuracy": r.accuracy,
        "auc": r.auc,
    })
    .to_string()
}

fn reduce(store: &EmbeddingStore, method: Method, cfg: &ProjectionConfig) -> Result<Projection> {
    match method {
        Method::Pca => {
            cfg.validate().context("projection")?;
            pca(store, cfg.target_dim)
        }
        Method::Umap => umap(store, cfg),
    }
    .context("projection")
}

fn read_id_set(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Paraphrases every text example (or those with `label`) `n` times and
/// appends the variants as synthetic examples.
fn augment_all(corpus: &Corpus, aug: &dyn Augmenter, n: usize, label: Option<Label>, conc: usize) -> Result<Corpus> {
    let originals: Vec<&LabeledExample> = corpus
        .iter()
        .filter(|e| e.modality == Modality::Text && !e.synthetic && label.is_none_or(|l| e.label == l))
        .collect();
    let texts: Vec<_> = originals.iter().map(|e| clean_text(e.text.as_deref().unwrap_or(""))).collect();
    let results = rephrase_many(aug, &texts, n, conc);
    let mut ids: HashSet<String> = corpus.iter().map(|e| e.id.clone()).collect();
    let mut examples = corpus.examples().to_vec();
    for (orig, res) in originals.iter().zip(results) {
        let res = res.with_context(|| format!("augmentation: rephrasing `{}`", orig.id))?;
        let mut k = 0;
        for v in res.variants {
            let cleaned = clean_text(&v);
            if cleaned.is_empty() {
                continue;
            }
            let id = loop {
                let c = format!("{}-syn{k}", orig.id);
                k += 1;
                if ids.insert(c.clone()) {
                    break c;
                }
            };
            examples.push(LabeledExample {
                synthetic: true,
                source: orig.id.clone(),
                ..LabeledExample::text(id, cleaned.into_string(), orig.label, "")
            });
        }
    }
    Corpus::new(examples).context("corpus")
}

#[derive(Serialize)]
struct KeywordRow<'a> {
    id: &'a str,
    keywords: Vec<String>,
}

fn keywords(aug: &dyn Augmenter, input: &Path, out: &Path) -> Result<()> {
    let records: Vec<Record> = read_jsonl(input).context("augmentation")?;
    let mut w = BufWriter::new(create(out)?);
    for r in &records {
        let Some(text) = r.text.as_deref() else { continue };
        let kw = aug
            .extract_keywords(&clean_text(text))
            .with_context(|| format!("augmentation: keywords for `{}`", r.id))?;
        serde_json::to_writer(&mut w, &KeywordRow { id: &r.id, keywords: kw })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Searches each record's text and keywords; returns `(url, query)` pairs in
/// record order, first occurrence of each url only.
fn search_requests(search: &dyn ImageSearch, queries: &Path, limit: usize) -> Result<Vec<(String, String)>> {
    let records: Vec<Record> = read_jsonl(queries).context("corpus")?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in &records {
        let mut qs = Vec::new();
        if let Some(t) = r.text.as_deref() {
            qs.push((clean_text(t).into_string(), QueryKind::Comment));
        }
        if let Some(k) = r.keywords.as_ref().filter(|k| !k.is_empty()) {
            qs.push((k.join(" "), QueryKind::Keywords));
        }
        for (q, kind) in qs {
            if q.is_empty() {
                continue;
            }
            for hit in search.search_logged(&q, kind, limit).context("corpus")? {
                if seen.insert(hit.url.clone()) {
                    out.push((hit.url, q.clone()));
                }
            }
        }
    }
    Ok(out)
}

fn read_url_list(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| match l.split_once('\t') {
            Some((u, q)) => (u.trim().to_string(), q.trim().to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect())
}

fn corpus_records(corpus: &Corpus) -> Vec<Record> {
    corpus
        .iter()
        .map(|e| Record {
            id: e.id.clone(),
            text: e.text.clone(),
            image_path: e.image_path.clone(),
            modality: Some(e.modality),
            label: Some(e.label),
            keywords: None,
        })
        .collect()
}

/// End-to-end run over a labelled corpus. Writes every intermediate into
/// `work` and returns the test-split report.
#[allow(clippy::too_many_arguments)]
pub fn pipeline(
    backend: &dyn EmbeddingBackend,
    batch: usize,
    input: &Path,
    work: &Path,
    algo: Algo,
    fraction: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    std::fs::create_dir_all(work).with_context(|| format!("creating {}", work.display()))?;
    let at = |name: &str| -> PathBuf { work.join(name) };

    let corpus = load_corpus(input).context("corpus")?;
    let mut cleaned = Vec::with_capacity(corpus.len());
    for mut e in corpus.into_examples() {
        if let Some(t) = e.text.as_deref() {
            let c = clean_text(t);
            if c.is_empty() && e.modality == Modality::Text {
                continue;
            }
            e.text = Some(c.into_string());
        }
        cleaned.push(e);
    }
    let corpus = Corpus::new(cleaned).context("corpus")?;
    save_corpus(&corpus, &at("clean.jsonl")).context("corpus")?;

    let spec = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let (train_idx, test_idx) = split_indices(&corpus.labels(), &spec).context("corpus")?;
    save_corpus(&corpus.select(&train_idx), &at("train.jsonl")).context("corpus")?;
    save_corpus(&corpus.select(&test_idx), &at("test.jsonl")).context("corpus")?;

    let base = input.parent().unwrap_or(Path::new("."));
    let all = embed_records(backend, batch, &corpus_records(&corpus), base)?;
    let labels = corpus.labels();
    write_store(&at("all.emb"), &all, Some(&labels)).context("embedding")?;
    let pick = |idx: &[usize]| (all.select(idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (train_s, train_l) = pick(&train_idx);
    let (test_s, test_l) = pick(&test_idx);
    write_store(&at("train.emb"), &train_s, Some(&train_l)).context("embedding")?;
    write_store(&at("test.emb"), &test_s, Some(&test_l)).context("embedding")?;

    let model = train_one(algo, &train_s, &train_l, cfg, 5)?;
    save_model(&model, &at("model.json")).context("classifiers")?;
    let report = evaluate(&model, &test_s, &test_l).context("metrics")?;
    write_report(&report, &at("report.json"), Some(&at("roc.csv")))?;
    write_predictions(&model, &test_s, &at("predictions.jsonl"))?;

    let n = all.count();
    let method = if n > 3 { Method::Umap } else { Method::Pca };
    let pcfg = ProjectionConfig { n_neighbors: 15.min(n.saturating_sub(2)).max(1), seed, ..ProjectionConfig::default() };
    let proj = reduce(&all, method, &pcfg)?;
    let mut w = BufWriter::new(create(&at("projection.csv"))?);
    proj.write_csv(&mut w, Some(&labels), None).context("projection")?;
    w.flush()?;
    Ok(report)
}
