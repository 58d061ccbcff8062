use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use entvec::corpus::files::{self as corpus_files, read_instances_file, read_vocabulary_file};
use entvec::corpus::{build_cooccurrence, split_corpus, SplitConfig};
use entvec::dimension::{
    dimensions_hash, evaluate_dimensions, read_survey, DimensionConfig, DimensionFile, Exclusion, Projection,
    DEFAULT_DIMENSIONS,
};
use entvec::embed::{train_split, Mode, TrainConfig};
use entvec::extraction::{
    extract_all, generate_synthetic, read_bios, read_raw_bios, write_bios, SizeRange, SyntheticSpec,
    TwitterExtractor, WikipediaExtractor, DEFAULT_MAX_TOKENS,
};
use entvec::finetune::export_datasets;
use entvec::io::{file_sha256, sha256_hex};
use entvec::pipeline::{self, run_pipeline, validate_config, Envelope, RunConfig};
use entvec::predict::{write_results_tsv, PredictConfig, Predictor};
use entvec::store::{Denominator, EmbeddingProvider};
use entvec::Scalar;

#[derive(Parser)]
#[command(name = "entvec", version, about = "Entity-centric identity embeddings")]
struct Cli {
    /// Root for default input and output locations [default: entvec-data].
    #[arg(long, global = true, env = pipeline::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract identities from tab-separated `id source text` records.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
    },
    /// Generate a planted-community corpus.
    Synth(SynthArgs),
    /// Build vocabulary, split and evaluation instances.
    Corpus {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        outdir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 100)]
        min_doc_freq: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        instances_per_bio: usize,
    },
    /// Train entity-only embeddings on a corpus directory.
    Train(TrainArgs),
    /// Export triplet, pair and masked-identity datasets.
    FinetuneData {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Nearest vocabulary neighbors of a phrase.
    Neighbors {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        phrase: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Evaluate embeddings.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the stages listed in a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report problems in a run config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the synthetic smoke-run config.
    SmokeConfig,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec; overrides the individual flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    communities: usize,
    #[arg(long, default_value_t = 50)]
    per_community: usize,
    #[arg(long, default_value_t = 50_000)]
    bios: usize,
    #[arg(long, default_value_t = 3)]
    min_size: usize,
    #[arg(long, default_value_t = 6)]
    max_size: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    popularity_exponent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output vectors; `.bin` selects the binary format.
    #[arg(long)]
    output: Option<PathBuf>,
    /// TOML train config; replaces the hyperparameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    window: usize,
    #[arg(long, default_value = "skipgram")]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 0.025)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    min_learning_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    subsample: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lock-free multi-threaded updates; output is not reproducible.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionArg,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Held-out identity prediction.
    Predict(PredictArgs),
    /// Ranking agreement with survey ratings along seed-pair dimensions.
    Dimension(DimensionArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorArg {
    AllPhrases,
    KnownOnly,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    instance_embeddings: Option<PathBuf>,
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-instance TSV dump.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all-phrases")]
    denominator: DenominatorArg,
    #[arg(long, default_value_t = 0.01)]
    top_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    standardize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Cosine,
    Dot,
}

#[derive(Args)]
struct DimensionArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    survey: PathBuf,
    /// Seed-pair TOML; the shipped lists when absent.
    #[arg(long)]
    dims: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cosine")]
    projection: ProjectionArg,
    #[arg(long, default_value = "max")]
    exclusion: Exclusion,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip dimensions that cannot be scored instead of failing.
    #[arg(long)]
    skip_failures: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let explicit = cli.data_dir;
    let data = explicit.clone().unwrap_or_else(|| PathBuf::from("entvec-data"));
    match cli.command {
        Command::Extract {
            input,
            output,
            max_tokens,
        } => extract(&data, &input, output, max_tokens),
        Command::Synth(args) => synth(&data, args),
        Command::Corpus {
            input,
            outdir,
            test_fraction,
            min_doc_freq,
            seed,
            instances_per_bio,
        } => corpus(
            &data,
            input,
            outdir,
            SplitConfig {
                test_fraction,
                min_doc_freq,
                seed,
                instances_per_bio,
            },
        ),
        Command::Train(args) => match args.precision {
            PrecisionArg::F32 => train::<f32>(&data, args),
            PrecisionArg::F64 => train::<f64>(&data, args),
        },
        Command::FinetuneData { corpus, seed, outdir } => finetune_data(&data, corpus, seed, outdir),
        Command::Neighbors {
            embeddings,
            phrase,
            k,
        } => neighbors(&data, embeddings, &phrase, k),
        Command::Eval(EvalCommand::Predict(args)) => eval_predict(&data, args),
        Command::Eval(EvalCommand::Dimension(args)) => eval_dimension(&data, args),
        Command::Run { config } => run(&config, explicit),
        Command::Validate { config } => validate(&config, explicit),
        Command::SmokeConfig => {
            print!("{}", RunConfig::smoke().to_toml());
            Ok(())
        }
    }
}

fn default_bios(data: &Path) -> PathBuf {
    data.join(pipeline::BIOS_DIR).join(pipeline::BIOS_FILE)
}

fn default_corpus(data: &Path) -> PathBuf {
    data.join(pipeline::CORPUS_DIR)
}

fn default_model(data: &Path) -> PathBuf {
    data.join(pipeline::MODEL_DIR).join("embeddings.txt")
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn options_hash(options: &serde_json::Value) -> String {
    sha256_hex(options.to_string().as_bytes())
}

fn input_hashes(inputs: &[(&str, &Path)]) -> Result<BTreeMap<String, String>> {
    inputs
        .iter()
        .map(|(name, p)| {
            Ok((
                name.to_string(),
                file_sha256(p).with_context(|| format!("hashing {}", p.display()))?,
            ))
        })
        .collect()
}

fn save_bios(path: &Path, bios: &[entvec::extraction::Bio]) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_bios(&mut w, bios)?;
    w.flush()?;
    Ok(())
}

fn load_bios(path: &Path) -> Result<Vec<entvec::extraction::Bio>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_bios(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn extract(data: &Path, input: &Path, output: Option<PathBuf>, max_tokens: usize) -> Result<()> {
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let raws = read_raw_bios(BufReader::new(f)).context("extract")?;
    let mut wikipedia = WikipediaExtractor::default();
    wikipedia.max_tokens = max_tokens;
    let (bios, stats) = extract_all(&raws, &TwitterExtractor { max_tokens }, &wikipedia);
    let output = output.unwrap_or_else(|| default_bios(data));
    save_bios(&output, &bios)?;
    eprintln!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn synth(data: &Path, args: SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).context("parsing synth spec")?
        }
        None => SyntheticSpec {
            n_communities: args.communities,
            identities_per_community: args.per_community,
            n_bios: args.bios,
            identities_per_bio: SizeRange {
                min: args.min_size,
                max: args.max_size,
            },
            noise_rate: args.noise,
            seed: args.seed,
            popularity_exponent: args.popularity_exponent,
        },
    };
    let bios = generate_synthetic(&spec).context("synth")?;
    let output = args.output.unwrap_or_else(|| default_bios(data));
    save_bios(&output, &bios)?;
    eprintln!("wrote {} bios to {}", bios.len(), output.display());
    Ok(())
}

fn corpus(data: &Path, input: Option<PathBuf>, outdir: Option<PathBuf>, config: SplitConfig) -> Result<()> {
    let input = input.unwrap_or_else(|| default_bios(data));
    let outdir = outdir.unwrap_or_else(|| default_corpus(data));
    let bios = load_bios(&input)?;
    let split = split_corpus(&bios, &config).context("corpus")?;
    let hash = options_hash(&json!({ "corpus": config }));
    let input_hash = file_sha256(&input)?;
    let manifest =
        corpus_files::write_split(&outdir, &split, &config, &hash, &input_hash).context("corpus")?;
    println!("{}", serde_json::to_string_pretty(&manifest.stats)?);
    Ok(())
}

fn train<F: Scalar>(data: &Path, args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).context("parsing train config")?
        }
        None => TrainConfig {
            dim: args.dim,
            epochs: args.epochs,
            window: args.window,
            mode: args.mode,
            negatives_per_positive: args.negatives,
            learning_rate: args.learning_rate,
            min_learning_rate: args.min_learning_rate,
            subsample_threshold: args.subsample,
            seed: args.seed,
            deterministic: !args.parallel,
            threads: args.threads,
            ..TrainConfig::default()
        },
    };
    let corpus_dir = args.corpus.unwrap_or_else(|| default_corpus(data));
    let (split, _) = corpus_files::read_split(&corpus_dir)
        .with_context(|| format!("reading corpus {}", corpus_dir.display()))?;
    let (mut table, report) = train_split::<F>(&split, &config).context("train")?;
    table.provenance.corpus_hash = file_sha256(&corpus_dir.join(corpus_files::MANIFEST_FILE))?;
    let output = args.output.unwrap_or_else(|| default_model(data));
    create_parent(&output)?;
    table.save(&output).context("saving embeddings")?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
    }
    Ok(())
}

fn finetune_data(data: &Path, corpus: Option<PathBuf>, seed: u64, outdir: Option<PathBuf>) -> Result<()> {
    let corpus_dir = corpus.unwrap_or_else(|| default_corpus(data));
    let outdir = outdir.unwrap_or_else(|| data.join(pipeline::FINETUNE_DIR));
    let (split, _) = corpus_files::read_split(&corpus_dir)
        .with_context(|| format!("reading corpus {}", corpus_dir.display()))?;
    let view = split.train_view();
    let index = build_cooccurrence(&view, &split.vocabulary);
    let corpus_hash = file_sha256(&corpus_dir.join(corpus_files::MANIFEST_FILE))?;
    let hash = options_hash(&json!({ "finetune_data": { "seed": seed } }));
    let manifest = export_datasets(
        &view,
        &index,
        &split.vocabulary,
        seed,
        &outdir,
        &hash,
        &corpus_hash,
    )
    .context("finetune-data")?;
    println!(
        "{} triplets, {} masked records, {} skipped (no valid negative)",
        manifest.n_triplets, manifest.n_masked, manifest.triplet_skips.no_valid_negative
    );
    Ok(())
}

fn neighbors(data: &Path, embeddings: Option<PathBuf>, phrase: &str, k: usize) -> Result<()> {
    let path = embeddings.unwrap_or_else(|| default_model(data));
    let provider =
        EmbeddingProvider::<f64>::load(&path, None).with_context(|| format!("loading {}", path.display()))?;
    for (rank, (p, sim)) in provider.nearest_neighbors(phrase, k)?.iter().enumerate() {
        println!("{:>3}  {sim:.4}  {p}", rank + 1);
    }
    Ok(())
}

fn eval_predict(data: &Path, args: PredictArgs) -> Result<()> {
    let corpus_dir = default_corpus(data);
    let embeddings = args.embeddings.unwrap_or_else(|| default_model(data));
    let instances_path = args
        .instances
        .unwrap_or_else(|| corpus_dir.join(corpus_files::MAIN_INSTANCES_FILE));
    let vocab_path = args
        .vocab
        .unwrap_or_else(|| corpus_dir.join(corpus_files::VOCAB_FILE));
    let out = args
        .out
        .unwrap_or_else(|| data.join(pipeline::EVAL_DIR).join("predict.json"));

    let mut provider = EmbeddingProvider::<f64>::load(&embeddings, args.instance_embeddings.as_deref())
        .context("loading embeddings")?;
    provider.denominator = match args.denominator {
        DenominatorArg::AllPhrases => Denominator::AllPhrases,
        DenominatorArg::KnownOnly => Denominator::KnownOnly,
    };
    let vocabulary = read_vocabulary_file(&vocab_path).context("reading vocabulary")?;
    let instances = read_instances_file(&instances_path).context("reading instances")?;
    let config = PredictConfig {
        top_fraction: args.top_fraction,
        temperature: args.temperature,
        standardize: args.standardize,
        ..PredictConfig::default()
    };
    let predictor = Predictor::new(&provider, &vocabulary, config.clone())?;
    let (report, results) = predictor.evaluate(&instances)?;

    let mut inputs = input_hashes(&[
        ("embeddings", &embeddings),
        ("instances", &instances_path),
        ("vocab", &vocab_path),
    ])?;
    if let Some(p) = &args.instance_embeddings {
        inputs.insert("instance_embeddings".into(), file_sha256(p)?);
    }
    let hash = options_hash(&json!({
        "eval_predict": config,
        "denominator": provider.denominator,
    }));
    print!("{}", report.to_table());
    write_json(
        &out,
        &Envelope {
            config_hash: hash,
            inputs,
            report,
        },
    )?;
    if let Some(dump) = args.dump {
        create_parent(&dump)?;
        let mut w = BufWriter::new(File::create(&dump)?);
        write_results_tsv(&mut w, &results)?;
        w.flush()?;
    }
    Ok(())
}

fn eval_dimension(data: &Path, args: DimensionArgs) -> Result<()> {
    let embeddings = args.embeddings.unwrap_or_else(|| default_model(data));
    let out = args
        .out
        .unwrap_or_else(|| data.join(pipeline::EVAL_DIR).join("dimension.json"));
    let provider = EmbeddingProvider::<f64>::load(&embeddings, None).context("loading embeddings")?;
    let dims_text = match &args.dims {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_DIMENSIONS.to_string(),
    };
    let dims = DimensionFile::parse(&dims_text)?;
    let survey = read_survey(BufReader::new(
        File::open(&args.survey).with_context(|| format!("opening {}", args.survey.display()))?,
    ))?;
    let config = DimensionConfig {
        projection: match args.projection {
            ProjectionArg::Cosine => Projection::Cosine,
            ProjectionArg::Dot => Projection::Dot,
        },
        exclusion: args.exclusion,
        bootstrap_resamples: args.bootstrap,
        seed: args.seed,
        ..DimensionConfig::default()
    };
    let report = evaluate_dimensions(
        &provider,
        &dims,
        &dimensions_hash(&dims_text),
        &survey,
        &config,
        args.skip_failures,
    )?;
    print!("{}", report.to_table());
    let inputs = input_hashes(&[("embeddings", &embeddings), ("survey", &args.survey)])?;
    write_json(
        &out,
        &Envelope {
            config_hash: options_hash(&json!({ "eval_dimension": config })),
            inputs,
            report,
        },
    )
}

/// The config file's data dir wins over `--data-dir`, which wins over the
/// default next to the config file.
fn load_run_config(path: &Path, data: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if config.data_dir.is_none() {
        config.data_dir = data.map(std::path::absolute).transpose()?;
    }
    Ok(config)
}

fn run(path: &Path, data: Option<PathBuf>) -> Result<()> {
    let config = load_run_config(path, data)?;
    let summary = run_pipeline(&config)?;
    println!("config {}", summary.config_hash);
    for (artifact, hash) in &summary.artifacts {
        println!("{hash}  {artifact}");
    }
    Ok(())
}

fn validate(path: &Path, data: Option<PathBuf>) -> Result<()> {
    let config = load_run_config(path, data)?;
    let problems = validate_config(&config);
    if problems.is_empty() {
        println!("ok");
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    bail!("{} problem(s) in {}", problems.len(), path.display())
}
