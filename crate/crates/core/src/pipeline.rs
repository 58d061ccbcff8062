//! Run configuration and stage orchestration.
//!
//! A run writes everything below one data directory:
//!
//! ```text
//! DATA/bios/bios.tsv, manifest.json          synth or extract
//! DATA/corpus/...                            corpus split
//! DATA/model/embeddings.{txt,bin} + sidecars train
//! DATA/finetune/...                          finetune_data
//! DATA/eval/predict_{main,general}.json      eval_predict
//! DATA/eval/dimension.json                   eval_dimension
//! DATA/run.json                              config, hashes of every artifact
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::files::{self as corpus_files, CorpusManifest};
use crate::corpus::{build_cooccurrence, split_corpus, SplitConfig, SplitKind};
use crate::dimension::{
    dimensions_hash, evaluate_dimensions, read_survey, synthetic_dimensions, write_survey, DimensionConfig,
    DimensionFile, DEFAULT_DIMENSIONS,
};
use crate::embed::{parse_header, train_split, FileFormat, TrainConfig};
use crate::extraction::{
    extract_all, generate_synthetic, read_bios, read_raw_bios, write_bios, SyntheticSpec, TwitterExtractor,
    WikipediaExtractor,
};
use crate::finetune::export_datasets;
use crate::io::{file_sha256, sha256_hex, FormatError};
use crate::predict::{write_results_tsv, PredictConfig, Predictor};
use crate::store::{Denominator, EmbeddingProvider};
use crate::Scalar;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "ENTVEC_DATA_DIR";
pub const CONFIG_VERSION: &str = "1";

pub const BIOS_DIR: &str = "bios";
pub const BIOS_FILE: &str = "bios.tsv";
pub const CORPUS_DIR: &str = "corpus";
pub const MODEL_DIR: &str = "model";
pub const FINETUNE_DIR: &str = "finetune";
pub const EVAL_DIR: &str = "eval";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Extract,
    Corpus,
    Train,
    FinetuneData,
    EvalPredict,
    EvalDimension,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("stage is a string"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractStage {
    /// Raw `id, source, text` TSV.
    pub input: Option<PathBuf>,
    pub max_tokens: usize,
}

impl Default for ExtractStage {
    fn default() -> Self {
        ExtractStage {
            input: None,
            max_tokens: crate::extraction::DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusStage {
    /// Extracted bios; defaults to the bios written by this run.
    pub input: Option<PathBuf>,
    pub test_fraction: f64,
    pub min_doc_freq: u64,
    pub seed: u64,
    pub instances_per_bio: usize,
}

impl Default for CorpusStage {
    fn default() -> Self {
        let d = SplitConfig::default();
        CorpusStage {
            input: None,
            test_fraction: d.test_fraction,
            min_doc_freq: d.min_doc_freq,
            seed: d.seed,
            instances_per_bio: d.instances_per_bio,
        }
    }
}

impl CorpusStage {
    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            test_fraction: self.test_fraction,
            min_doc_freq: self.min_doc_freq,
            seed: self.seed,
            instances_per_bio: self.instances_per_bio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainStage {
    #[serde(flatten)]
    pub config: TrainConfig,
    pub format: Option<FileFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FinetuneStage {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictStage {
    #[serde(flatten)]
    pub config: PredictConfig,
    /// Vocabulary embeddings; defaults to the model trained by this run.
    pub embeddings: Option<PathBuf>,
    pub instance_embeddings: Option<PathBuf>,
    pub denominator: Denominator,
    pub splits: Vec<SplitKind>,
    pub dump_instances: bool,
}

impl Default for PredictStage {
    fn default() -> Self {
        PredictStage {
            config: PredictConfig::default(),
            embeddings: None,
            instance_embeddings: None,
            denominator: Denominator::default(),
            splits: vec![SplitKind::Main, SplitKind::General],
            dump_instances: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionStage {
    #[serde(flatten)]
    pub config: DimensionConfig,
    pub embeddings: Option<PathBuf>,
    /// Seed-pair file; the shipped lists when absent.
    pub dims: Option<PathBuf>,
    /// Survey TSV. Without one, dimensions and survey are planted on the
    /// synthetic corpus of this run.
    pub survey: Option<PathBuf>,
    pub synthetic_names: Vec<String>,
}

impl Default for DimensionStage {
    fn default() -> Self {
        DimensionStage {
            config: DimensionConfig::default(),
            embeddings: None,
            dims: None,
            survey: None,
            synthetic_names: ["axis:0", "axis:1", "race:a", "race:b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Every stage parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub synth: Option<SyntheticSpec>,
    #[serde(default)]
    pub extract: ExtractStage,
    #[serde(default)]
    pub corpus: CorpusStage,
    #[serde(default)]
    pub train: TrainStage,
    #[serde(default)]
    pub finetune_data: FinetuneStage,
    #[serde(default)]
    pub eval_predict: PredictStage,
    #[serde(default)]
    pub eval_dimension: DimensionStage,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

fn fail(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

impl RunConfig {
    /// Configuration of the end-to-end synthetic smoke run.
    pub fn smoke() -> RunConfig {
        RunConfig {
            version: CONFIG_VERSION.into(),
            stages: vec![
                Stage::Synth,
                Stage::Corpus,
                Stage::Train,
                Stage::FinetuneData,
                Stage::EvalPredict,
                Stage::EvalDimension,
            ],
            data_dir: None,
            precision: Precision::F32,
            synth: Some(SyntheticSpec {
                n_communities: 10,
                identities_per_community: 50,
                n_bios: 50_000,
                identities_per_bio: crate::extraction::SizeRange { min: 3, max: 6 },
                noise_rate: 0.1,
                seed: 7,
                popularity_exponent: 1.0,
            }),
            extract: ExtractStage::default(),
            corpus: CorpusStage {
                min_doc_freq: 5,
                ..CorpusStage::default()
            },
            train: TrainStage {
                config: TrainConfig {
                    dim: 64,
                    epochs: 30,
                    subsample_threshold: 1e-3,
                    ..TrainConfig::default()
                },
                format: None,
            },
            finetune_data: FinetuneStage::default(),
            eval_predict: PredictStage::default(),
            eval_dimension: DimensionStage::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)?;
        let base = path
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::parse(&text, &base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form. Comments, layout and the output
    /// location do not count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.data_dir = None;
        sha256_hex(
            serde_json::to_string(&canonical)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Output root: the configured directory, else `$ENTVEC_DATA_DIR`, else
    /// `entvec-data` next to the config.
    pub fn data_dir(&self) -> PathBuf {
        match &self.data_dir {
            Some(d) => self.resolve(d),
            None => match std::env::var_os(DATA_DIR_ENV) {
                Some(d) => PathBuf::from(d),
                None => self.base_dir.join("entvec-data"),
            },
        }
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    fn model_path(&self) -> PathBuf {
        let ext = match self.train.format {
            Some(FileFormat::Binary) => "bin",
            _ => "txt",
        };
        self.data_dir().join(MODEL_DIR).join(format!("embeddings.{ext}"))
    }

    fn bios_path(&self) -> PathBuf {
        match &self.corpus.input {
            Some(p) if !self.runs(Stage::Synth) && !self.runs(Stage::Extract) => self.resolve(p),
            _ => self.data_dir().join(BIOS_DIR).join(BIOS_FILE),
        }
    }

    fn predict_embeddings(&self) -> PathBuf {
        self.eval_predict
            .embeddings
            .as_ref()
            .map_or_else(|| self.model_path(), |p| self.resolve(p))
    }

    fn dimension_embeddings(&self) -> PathBuf {
        self.eval_dimension
            .embeddings
            .as_ref()
            .map_or_else(|| self.model_path(), |p| self.resolve(p))
    }
}

fn header_dim(path: &Path) -> Result<usize, FormatError> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(parse_header(&line)?.1)
}

/// Every detectable problem, without side effects.
pub fn validate_config(config: &RunConfig) -> Vec<String> {
    let mut problems = Vec::new();
    if config.version != CONFIG_VERSION {
        problems.push(format!("unsupported config version {:?}", config.version));
    }
    if config.stages.is_empty() {
        problems.push("no stages requested".into());
    }
    if config.runs(Stage::Synth) && config.runs(Stage::Extract) {
        problems.push("synth and extract both produce bios; pick one".into());
    }
    let must_exist = |problems: &mut Vec<String>, what: &str, path: &Path| {
        if !path.exists() {
            problems.push(format!("{what} {} does not exist", path.display()));
        }
    };

    if config.runs(Stage::Synth) {
        match &config.synth {
            None => problems.push("synth stage requires a [synth] section".into()),
            Some(spec) => {
                if let Err(e) = spec.validate() {
                    problems.push(format!("synth: {e}"));
                }
            }
        }
    }
    if config.runs(Stage::Extract) {
        match &config.extract.input {
            None => problems.push("extract stage requires extract.input".into()),
            Some(p) => must_exist(&mut problems, "extract.input", &config.resolve(p)),
        }
        if config.extract.max_tokens == 0 {
            problems.push("extract.max_tokens must be at least 1".into());
        }
    }

    let c = &config.corpus;
    if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
        problems.push(format!(
            "corpus.test_fraction must lie in (0, 1), got {}",
            c.test_fraction
        ));
    }
    if c.min_doc_freq == 0 {
        problems.push("corpus.min_doc_freq must be at least 1".into());
    }
    if c.instances_per_bio == 0 {
        problems.push("corpus.instances_per_bio must be at least 1".into());
    }
    if config.runs(Stage::Corpus) && !config.runs(Stage::Synth) && !config.runs(Stage::Extract) {
        match &c.input {
            None => problems.push("corpus stage needs synth, extract or corpus.input".into()),
            Some(p) => must_exist(&mut problems, "corpus.input", &config.resolve(p)),
        }
    }

    let corpus_dir = config.data_dir().join(CORPUS_DIR);
    let needs_corpus = [Stage::Train, Stage::FinetuneData, Stage::EvalPredict]
        .iter()
        .any(|&s| config.runs(s));
    if needs_corpus && !config.runs(Stage::Corpus) {
        must_exist(
            &mut problems,
            "corpus manifest",
            &corpus_dir.join(corpus_files::MANIFEST_FILE),
        );
    }

    for p in config.train.config.validate() {
        problems.push(format!("train: {p}"));
    }
    for p in config.eval_predict.config.validate() {
        problems.push(format!("eval_predict: {p}"));
    }
    let conf = config.eval_dimension.config.confidence;
    if !(conf > 0.0 && conf < 1.0) {
        problems.push(format!(
            "eval_dimension.confidence must lie in (0, 1), got {conf}"
        ));
    }

    if config.runs(Stage::EvalPredict) {
        let ep = &config.eval_predict;
        let vocab_path = config.predict_embeddings();
        if ep.embeddings.is_none() && !config.runs(Stage::Train) {
            must_exist(&mut problems, "eval_predict embeddings", &vocab_path);
        }
        if let Some(p) = &ep.embeddings {
            must_exist(&mut problems, "eval_predict.embeddings", &config.resolve(p));
        }
        if let Some(inst) = &ep.instance_embeddings {
            let inst = config.resolve(inst);
            must_exist(&mut problems, "eval_predict.instance_embeddings", &inst);
            let vocab_dim = if ep.embeddings.is_none() && config.runs(Stage::Train) {
                Some(config.train.config.dim)
            } else {
                header_dim(&vocab_path).ok()
            };
            if let (Some(v), Ok(i)) = (vocab_dim, header_dim(&inst)) {
                if v != i {
                    problems.push(format!(
                        "embedding dim {v} differs from instance embedding dim {i}"
                    ));
                }
            }
        }
    }
    if config.runs(Stage::EvalDimension) {
        let ed = &config.eval_dimension;
        if let Some(p) = &ed.embeddings {
            must_exist(&mut problems, "eval_dimension.embeddings", &config.resolve(p));
        } else if !config.runs(Stage::Train) {
            must_exist(
                &mut problems,
                "eval_dimension embeddings",
                &config.dimension_embeddings(),
            );
        }
        match &ed.survey {
            Some(p) => must_exist(&mut problems, "eval_dimension.survey", &config.resolve(p)),
            None if config.synth.is_none() => {
                problems.push("eval_dimension needs a survey file or a [synth] section".into())
            }
            None => {}
        }
        if let Some(p) = &ed.dims {
            let p = config.resolve(p);
            must_exist(&mut problems, "eval_dimension.dims", &p);
            if let Ok(text) = fs::read_to_string(&p) {
                if let Err(e) = DimensionFile::parse(&text) {
                    problems.push(format!("eval_dimension.dims: {e}"));
                }
            }
        }
    }
    problems
}

/// Artifact wrapper recording where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config_hash: String,
    /// Input name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub report: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiosManifest {
    pub config_hash: String,
    pub input_hash: Option<String>,
    pub n_bios: usize,
    pub extract: Option<crate::extraction::ExtractStats>,
    pub bios_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub config: RunConfig,
    pub stages: Vec<Stage>,
    /// Path relative to the data directory to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), FormatError>,
) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn hashes(paths: &[(&str, &Path)]) -> Result<BTreeMap<String, String>, FormatError> {
    paths
        .iter()
        .map(|(name, p)| Ok((name.to_string(), file_sha256(p)?)))
        .collect()
}

fn collect_artifacts(root: &Path) -> Result<BTreeMap<String, String>, FormatError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != RUN_FILE) {
                let rel = path.strip_prefix(root).expect("below root");
                out.insert(rel.to_string_lossy().replace('\\', "/"), file_sha256(&path)?);
            }
        }
    }
    Ok(out)
}

/// Runs the requested stages in dependency order.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let problems = validate_config(config);
    if !problems.is_empty() {
        return Err(PipelineError {
            stage: "validate".into(),
            message: problems.join("; "),
        });
    }
    match config.precision {
        Precision::F32 => run_typed::<f32>(config),
        Precision::F64 => run_typed::<f64>(config),
    }
}

fn run_typed<F: Scalar>(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let hash = config.hash();
    let root = config.data_dir();
    fs::create_dir_all(&root).map_err(|e| PipelineError {
        stage: "setup".into(),
        message: e.to_string(),
    })?;
    let mut stages: Vec<Stage> = config.stages.clone();
    stages.sort();
    stages.dedup();

    for &stage in &stages {
        let err = fail(stage);
        match stage {
            Stage::Synth => {
                let spec = config.synth.as_ref().expect("validated");
                let bios = generate_synthetic(spec).map_err(|e| err(&e))?;
                write_bios_stage(config, &hash, &bios, None, None).map_err(|e| err(&e))?;
            }
            Stage::Extract => {
                let input = config.resolve(config.extract.input.as_ref().expect("validated"));
                let raws = File::open(&input)
                    .map_err(FormatError::from)
                    .and_then(|f| read_raw_bios(BufReader::new(f)))
                    .map_err(|e| err(&e))?;
                let twitter = TwitterExtractor {
                    max_tokens: config.extract.max_tokens,
                };
                let mut wikipedia = WikipediaExtractor::default();
                wikipedia.max_tokens = config.extract.max_tokens;
                let (bios, stats) = extract_all(&raws, &twitter, &wikipedia);
                let input_hash = file_sha256(&input).map_err(|e| err(&e))?;
                write_bios_stage(config, &hash, &bios, Some(input_hash), Some(stats)).map_err(|e| err(&e))?;
            }
            Stage::Corpus => {
                let input = config.bios_path();
                let bios = File::open(&input)
                    .map_err(FormatError::from)
                    .and_then(|f| read_bios(BufReader::new(f)))
                    .map_err(|e| err(&e))?;
                let split_config = config.corpus.split_config();
                let split = split_corpus(&bios, &split_config).map_err(|e| err(&e))?;
                let input_hash = file_sha256(&input).map_err(|e| err(&e))?;
                corpus_files::write_split(&root.join(CORPUS_DIR), &split, &split_config, &hash, &input_hash)
                    .map_err(|e| err(&e))?;
            }
            Stage::Train => {
                let (split, _) = read_corpus(&root).map_err(|e| err(&e))?;
                let (mut table, _) = train_split::<F>(&split, &config.train.config).map_err(|e| err(&e))?;
                table.provenance.run_config_hash = Some(hash.clone());
                table.provenance.corpus_hash = corpus_manifest_hash(&root).map_err(|e| err(&e))?;
                let path = config.model_path();
                fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| err(&e))?;
                table.save(&path).map_err(|e| err(&e))?;
            }
            Stage::FinetuneData => {
                let (split, _) = read_corpus(&root).map_err(|e| err(&e))?;
                let view = split.train_view();
                let index = build_cooccurrence(&view, &split.vocabulary);
                let corpus_hash = corpus_manifest_hash(&root).map_err(|e| err(&e))?;
                export_datasets(
                    &view,
                    &index,
                    &split.vocabulary,
                    config.finetune_data.seed,
                    &root.join(FINETUNE_DIR),
                    &hash,
                    &corpus_hash,
                )
                .map_err(|e| err(&e))?;
            }
            Stage::EvalPredict => run_predict::<F>(config, &hash, &root).map_err(|e| err(&e))?,
            Stage::EvalDimension => run_dimension::<F>(config, &hash, &root).map_err(|e| err(&e))?,
        }
    }

    let summary_error = |e: FormatError| PipelineError {
        stage: "summary".into(),
        message: e.to_string(),
    };
    let mut recorded = config.clone();
    recorded.data_dir = None;
    let summary = RunSummary {
        config_hash: hash,
        config: recorded,
        stages,
        artifacts: collect_artifacts(&root).map_err(summary_error)?,
    };
    write_json(&root.join(RUN_FILE), &summary).map_err(summary_error)?;
    Ok(summary)
}

fn write_bios_stage(
    config: &RunConfig,
    hash: &str,
    bios: &[crate::extraction::Bio],
    input_hash: Option<String>,
    stats: Option<crate::extraction::ExtractStats>,
) -> Result<(), FormatError> {
    let dir = config.data_dir().join(BIOS_DIR);
    fs::create_dir_all(&dir)?;
    let path = dir.join(BIOS_FILE);
    write_with(&path, |w| write_bios(w, bios))?;
    write_json(
        &dir.join("manifest.json"),
        &BiosManifest {
            config_hash: hash.to_string(),
            input_hash,
            n_bios: bios.len(),
            extract: stats,
            bios_hash: file_sha256(&path)?,
        },
    )
}

fn read_corpus(root: &Path) -> Result<(crate::corpus::SplitCorpus, CorpusManifest), FormatError> {
    corpus_files::read_split(&root.join(CORPUS_DIR))
}

fn corpus_manifest_hash(root: &Path) -> Result<String, FormatError> {
    Ok(file_sha256(
        &root.join(CORPUS_DIR).join(corpus_files::MANIFEST_FILE),
    )?)
}

#[derive(Debug, Error)]
enum StageError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Predict(#[from] crate::predict::PredictError),
    #[error(transparent)]
    Dimension(#[from] crate::dimension::DimensionError),
}

fn run_predict<F: Scalar>(config: &RunConfig, hash: &str, root: &Path) -> Result<(), StageError> {
    let ep = &config.eval_predict;
    let (split, _) = read_corpus(root)?;
    let vocab_path = config.predict_embeddings();
    let inst_path = ep.instance_embeddings.as_ref().map(|p| config.resolve(p));
    let mut provider = EmbeddingProvider::<F>::load(&vocab_path, inst_path.as_deref())?;
    provider.denominator = ep.denominator;
    let predictor = Predictor::new(&provider, &split.vocabulary, ep.config.clone())?;
    let out = root.join(EVAL_DIR);
    fs::create_dir_all(&out).map_err(FormatError::from)?;

    let mut inputs = hashes(&[
        ("embeddings", &vocab_path),
        (
            "corpus_manifest",
            &root.join(CORPUS_DIR).join(corpus_files::MANIFEST_FILE),
        ),
    ])?;
    if let Some(p) = &inst_path {
        inputs.insert(
            "instance_embeddings".into(),
            file_sha256(p).map_err(FormatError::from)?,
        );
    }
    for kind in &ep.splits {
        let instances = match kind {
            SplitKind::Main => &split.test_main,
            SplitKind::General => &split.test_general,
        };
        let (report, results) = predictor.evaluate(instances)?;
        write_json(
            &out.join(format!("predict_{kind}.json")),
            &Envelope {
                config_hash: hash.to_string(),
                inputs: inputs.clone(),
                report,
            },
        )?;
        if ep.dump_instances {
            write_with(&out.join(format!("predictions_{kind}.tsv")), |w| {
                write_results_tsv(w, &results)
            })?;
        }
    }
    Ok(())
}

fn run_dimension<F: Scalar>(config: &RunConfig, hash: &str, root: &Path) -> Result<(), StageError> {
    let ed = &config.eval_dimension;
    let out = root.join(EVAL_DIR);
    fs::create_dir_all(&out).map_err(FormatError::from)?;
    let embeddings = config.dimension_embeddings();
    let provider = EmbeddingProvider::<F>::load(&embeddings, None)?;

    let (dims_text, survey_path) = match &ed.survey {
        Some(survey) => {
            let text = match &ed.dims {
                Some(p) => fs::read_to_string(config.resolve(p)).map_err(FormatError::from)?,
                None => DEFAULT_DIMENSIONS.to_string(),
            };
            (text, config.resolve(survey))
        }
        None => {
            let spec = config.synth.as_ref().expect("validated");
            let names: Vec<&str> = ed.synthetic_names.iter().map(String::as_str).collect();
            let (dims, survey) = synthetic_dimensions(spec, &names, ed.config.seed);
            let text = dims.to_toml();
            fs::write(out.join("synthetic_dimensions.toml"), &text).map_err(FormatError::from)?;
            let path = out.join("synthetic_survey.tsv");
            write_with(&path, |w| write_survey(w, &survey))?;
            (text, path)
        }
    };
    let dims = DimensionFile::parse(&dims_text)?;
    let survey = read_survey(BufReader::new(
        File::open(&survey_path).map_err(FormatError::from)?,
    ))?;
    let report = evaluate_dimensions(
        &provider,
        &dims,
        &dimensions_hash(&dims_text),
        &survey,
        &ed.config,
        true,
    )?;
    let inputs = hashes(&[("embeddings", &embeddings), ("survey", &survey_path)])?;
    write_json(
        &out.join("dimension.json"),
        &Envelope {
            config_hash: hash.to_string(),
            inputs,
            report,
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut c = RunConfig::smoke();
        c.data_dir = Some(dir.to_path_buf());
        c.synth.as_mut().unwrap().n_bios = 2_000;
        c.train.config.dim = 8;
        c.train.config.epochs = 2;
        c.eval_dimension.config.bootstrap_resamples = 50;
        c
    }

    #[test]
    fn smoke_config_round_trips_through_toml() {
        let c = RunConfig::smoke();
        let text = c.to_toml();
        let back = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert!(RunConfig::parse("version = \"1\"\nstages = []\nbogus = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn validation_reports_problems() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny(dir.path());
        assert_eq!(validate_config(&c), Vec::<String>::new());

        let mut bad = c.clone();
        bad.corpus.test_fraction = 1.2;
        assert!(validate_config(&bad).iter().any(|p| p.contains("test_fraction")));

        let mut missing = c.clone();
        missing.stages = vec![Stage::EvalPredict];
        missing.eval_predict.embeddings = Some(dir.path().join("nope.txt"));
        assert!(validate_config(&missing).iter().any(|p| p.contains("nope.txt")));

        let vecs = dir.path().join("v.txt");
        let inst = dir.path().join("i.txt");
        fs::write(&vecs, "1 3\na 0 0 0\n").unwrap();
        fs::write(&inst, "1 4\nb#0 0 0 0 0\n").unwrap();
        let mut mismatch = c.clone();
        mismatch.stages = vec![Stage::Synth, Stage::Corpus, Stage::EvalPredict];
        mismatch.eval_predict.embeddings = Some(vecs);
        mismatch.eval_predict.instance_embeddings = Some(inst);
        assert!(validate_config(&mismatch).iter().any(|p| p.contains("differs")));
    }

    #[test]
    fn stage_gating_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let mut c = tiny(a.path());
        c.stages = vec![Stage::Corpus, Stage::Synth];
        let s = run_pipeline(&c).unwrap();
        assert_eq!(s.stages, vec![Stage::Synth, Stage::Corpus]);
        assert!(a.path().join("corpus/manifest.json").exists());
        assert!(!a.path().join("model").exists());

        let b = tempfile::tempdir().unwrap();
        let mut c2 = c.clone();
        c2.data_dir = Some(b.path().to_path_buf());
        let s2 = run_pipeline(&c2).unwrap();
        assert_eq!(s.artifacts, s2.artifacts);
    }
}
