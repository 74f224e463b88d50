//! Command-line interface.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 failure while
//! computing.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyses::{
    cross_dataset_transfer, load_layers, run_sweep, Battery, BootstrapSettings, ControlKind, SweepArtifacts,
    SweepOptions, SweepReport,
};
use crate::config::{CrossDatasetConfig, RunConfig, Threads};
use crate::dataio::{read_embeddings, read_targets, write_embeddings, write_targets, EmbeddingMatrix, TargetTable};
use crate::error::{Error, Result};
use crate::pca::{fit_pca, project};
use crate::probes::AlphaGrid;
use crate::report::{read_report, write_report_dir, write_tables, Meta};
use crate::synth::{generate, generate_two_corpora, PersonDirs, SecondCorpus, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "idioprobe", version, about = "Per-participant ridge probes of word representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Person and population probes with a paired comparison.
    Probe(RunArgs),
    /// Every (layer, PCA dim, feature) cell with bootstrap intervals and any
    /// enabled analyses.
    Sweep(RunArgs),
    /// Participant-by-participant transfer matrix and weight geometry.
    Transfer(RunArgs),
    /// Cosine of probes fit on the two halves of each session.
    Splithalf(RunArgs),
    /// Person probes scored on what the population probe leaves unexplained.
    Residual(RunArgs),
    /// Probes rerun after regressing confounds out of the targets.
    Confounds(RunArgs),
    /// Shuffle, random-projection, random-embedding, static-embedding and
    /// negative-feature controls.
    Controls(RunArgs),
    /// Population probes trained on one corpus and scored on another.
    Crossdataset(RunArgs),
    /// Write a synthetic data set with planted directions.
    Synth(SynthArgs),
    /// Regenerate tables/*.csv from an existing report.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// TOML config file, or a meta.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// EMB1 path pattern with a {layer} placeholder.
    #[arg(long)]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<u32>>,
    #[arg(long = "pca-dim", value_delimiter = ',')]
    pub pca_dim: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub feature: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub participants: Option<Vec<String>>,
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long = "k-folds")]
    pub k_folds: Option<usize>,
    #[arg(long = "alpha-grid", value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long = "seed-folds")]
    pub seed_folds: Option<u64>,
    #[arg(long = "seed-bootstrap")]
    pub seed_bootstrap: Option<u64>,
    #[arg(long = "seed-controls")]
    pub seed_controls: Option<u64>,
    #[arg(long = "bootstrap-resamples")]
    pub bootstrap_resamples: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Worker count or "auto"; IDIOPROBE_THREADS overrides it.
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long = "static-embeddings")]
    pub static_embeddings: Option<PathBuf>,
    #[arg(long = "negative-feature")]
    pub negative_feature: Option<String>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Control kinds, e.g. shuffle,random_projection.
    #[arg(long, value_delimiter = ',')]
    pub controls: Option<Vec<String>>,
    /// Also refit person probes on residual targets.
    #[arg(long)]
    pub retrain: bool,
    #[arg(long = "train-corpus")]
    pub train_corpus: Option<String>,
    #[arg(long = "test-corpus")]
    pub test_corpus: Option<String>,
    /// Enable the transfer matrix and weight geometry in `sweep`.
    #[arg(long)]
    pub transfer: bool,
    /// Enable split-half stability in `sweep`.
    #[arg(long = "split-half")]
    pub split_half: bool,
    /// Enable residual independence in `sweep`.
    #[arg(long)]
    pub residual: bool,
    /// Enable confound residualization in `sweep`.
    #[arg(long = "confound-control")]
    pub confound_control: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Reference,
    Tiny,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirsArg {
    RandomUnit,
    Orthogonal,
    Shared,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SecondCorpusArg {
    Same,
    Disjoint,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "reference")]
    pub preset: Preset,
    #[arg(long = "n-participants")]
    pub n_participants: Option<usize>,
    #[arg(long = "n-sentences")]
    pub n_sentences: Option<usize>,
    #[arg(long = "words-per-sentence")]
    pub words_per_sentence: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "pop-strength")]
    pub pop_strength: Option<f64>,
    #[arg(long = "person-strength")]
    pub person_strength: Option<f64>,
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    #[arg(long = "person-dirs", value_enum)]
    pub person_dirs: Option<DirsArg>,
    #[arg(long = "missing-rate")]
    pub missing_rate: Option<f64>,
    #[arg(long = "confound-coupling")]
    pub confound_coupling: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub layer: Option<u32>,
    /// Add a second corpus sharing the embedding space.
    #[arg(long = "second-corpus", value_enum)]
    pub second_corpus: Option<SecondCorpusArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report directory holding report.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Analysis selected by a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Probe,
    Sweep,
    Transfer,
    SplitHalf,
    Residual,
    Confounds,
    Controls,
    CrossDataset,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Probe => "probe",
            Mode::Sweep => "sweep",
            Mode::Transfer => "transfer",
            Mode::SplitHalf => "splithalf",
            Mode::Residual => "residual",
            Mode::Confounds => "confounds",
            Mode::Controls => "controls",
            Mode::CrossDataset => "crossdataset",
        }
    }
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.embeddings {
        c.paths.embeddings = Some(v.clone());
    }
    if let Some(v) = &args.targets {
        c.paths.targets = Some(v.clone());
    }
    if let Some(v) = &args.out {
        c.paths.out = Some(v.clone());
    }
    if let Some(v) = &args.static_embeddings {
        c.paths.static_embeddings = Some(v.clone());
    }
    if let Some(v) = &args.layers {
        c.layers = v.clone();
    }
    if let Some(v) = &args.pca_dim {
        c.pca_dims = v.clone();
    }
    if let Some(v) = &args.feature {
        c.features = Some(v.clone());
    }
    if let Some(v) = &args.participants {
        c.participants = Some(v.clone());
    }
    if let Some(v) = &args.corpus {
        c.corpus = Some(v.clone());
    }
    if let Some(v) = args.k_folds {
        c.k_folds = v;
    }
    if let Some(v) = &args.alpha_grid {
        c.alpha_grid = AlphaGrid::new(v.clone())?;
    }
    if let Some(v) = args.seed_folds {
        c.seeds.folds = v;
    }
    if let Some(v) = args.seed_bootstrap {
        c.seeds.bootstrap = v;
    }
    if let Some(v) = args.seed_controls {
        c.seeds.controls = v;
    }
    if let Some(v) = args.bootstrap_resamples {
        c.bootstrap.resamples = v;
    }
    if let Some(v) = args.confidence {
        c.bootstrap.confidence = v;
    }
    if let Some(v) = &args.threads {
        c.threads = Threads::parse(v)?;
    }
    if let Some(v) = &args.negative_feature {
        c.controls.negative_feature = Some(v.clone());
    }
    if let Some(v) = args.permutations {
        c.controls.n_permutations = v;
    }
    if let Some(v) = &args.controls {
        c.analyses.controls = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    if args.retrain {
        c.analyses.residual_retrain = true;
    }
    if args.transfer {
        c.analyses.transfer = true;
        c.analyses.geometry = true;
    }
    if args.split_half {
        c.analyses.split_half = true;
    }
    if args.residual {
        c.analyses.residual = true;
    }
    if args.confound_control {
        c.analyses.confounds = true;
    }
    match (&args.train_corpus, &args.test_corpus) {
        (Some(a), Some(b)) => {
            c.cross_dataset = Some(CrossDatasetConfig {
                train_corpus: a.clone(),
                test_corpus: b.clone(),
            })
        }
        (None, None) => {}
        _ => return Err(Error::ConfigError("--train-corpus and --test-corpus go together".into())),
    }
    Ok(c)
}

/// Sets the analyses a subcommand runs.
pub fn prepare(mode: Mode, mut c: RunConfig) -> Result<RunConfig> {
    let keep_retrain = c.analyses.residual_retrain;
    let configured_controls = std::mem::take(&mut c.analyses.controls);
    match mode {
        Mode::Sweep => c.analyses.controls = configured_controls,
        Mode::Probe | Mode::CrossDataset => c.analyses = Battery::default(),
        Mode::Transfer => {
            c.analyses = Battery {
                transfer: true,
                geometry: true,
                ..Battery::default()
            }
        }
        Mode::SplitHalf => {
            c.analyses = Battery {
                split_half: true,
                ..Battery::default()
            }
        }
        Mode::Residual => {
            c.analyses = Battery {
                residual: true,
                residual_retrain: keep_retrain,
                ..Battery::default()
            }
        }
        Mode::Confounds => {
            c.analyses = Battery {
                confounds: true,
                ..Battery::default()
            }
        }
        Mode::Controls => {
            let kinds = if configured_controls.is_empty() {
                let mut k = vec![ControlKind::Shuffle, ControlKind::RandomProjection, ControlKind::RandomEmbedding];
                if c.paths.static_embeddings.is_some() {
                    k.push(ControlKind::StaticEmbedding);
                }
                if c.controls.negative_feature.is_some() {
                    k.push(ControlKind::NegativeFeature);
                }
                k
            } else {
                configured_controls
            };
            c.analyses = Battery {
                controls: kinds,
                ..Battery::default()
            };
        }
    }
    if mode == Mode::CrossDataset && c.cross_dataset.is_none() {
        return Err(Error::ConfigError("crossdataset needs --train-corpus and --test-corpus".into()));
    }
    Ok(c)
}

fn select_tables(c: &RunConfig, tables: Vec<TargetTable>, corpus: Option<&str>) -> Result<Vec<TargetTable>> {
    let mut tables = tables;
    if let Some(ids) = &c.participants {
        let unknown: Vec<&String> = ids.iter().filter(|id| !tables.iter().any(|t| &t.participant_id == *id)).collect();
        if !unknown.is_empty() {
            return Err(Error::ConfigError(format!("unknown participants: {unknown:?}")));
        }
        tables.retain(|t| ids.contains(&t.participant_id));
    }
    if let Some(corpus) = corpus {
        tables.retain(|t| t.corpus_id == corpus);
        if tables.is_empty() {
            return Err(Error::CorpusMissing(corpus.to_owned()));
        }
    }
    Ok(tables)
}

fn corpora(tables: &[TargetTable]) -> Vec<String> {
    let mut c: Vec<String> = tables.iter().map(|t| t.corpus_id.clone()).collect();
    c.sort();
    c.dedup();
    c
}

fn restrict(emb: &EmbeddingMatrix, corpus: &str) -> Result<EmbeddingMatrix> {
    if emb.corpora().len() == 1 && emb.corpora()[0] == corpus {
        Ok(emb.clone())
    } else {
        emb.filter_corpus(corpus)
    }
}

/// Runs the analysis for a validated config. Output depends only on the
/// config, not on the size of the surrounding thread pool.
pub fn run_config(mode: Mode, c: &RunConfig) -> Result<(SweepReport, SweepArtifacts)> {
    let all_tables = read_targets(c.targets_path()?)?;
    let all_tables = select_tables(c, all_tables, None)?;
    let cell_corpus = match (&c.cross_dataset, &c.corpus) {
        (Some(x), _) if mode == Mode::CrossDataset => Some(x.test_corpus.clone()),
        (_, Some(corpus)) => Some(corpus.clone()),
        _ => {
            let cs = corpora(&all_tables);
            if cs.len() > 1 {
                return Err(Error::ConfigError(format!(
                    "targets span corpora {cs:?}; choose one with --corpus"
                )));
            }
            cs.into_iter().next()
        }
    };
    let tables = select_tables(c, all_tables.clone(), cell_corpus.as_deref())?;
    let features = match &c.features {
        Some(f) => f.clone(),
        None => tables.first().map(|t| t.features().to_vec()).unwrap_or_default(),
    };
    let mut layer_list = c.layers.clone();
    layer_list.sort_unstable();
    let raw_layers = load_layers(c.embeddings_pattern()?, &layer_list)?;
    let layers = match &cell_corpus {
        Some(corpus) => raw_layers.iter().map(|e| restrict(e, corpus)).collect::<Result<Vec<_>>>()?,
        None => raw_layers.clone(),
    };
    let static_emb = match &c.paths.static_embeddings {
        Some(p) if c.analyses.controls.contains(&ControlKind::StaticEmbedding) => {
            let e = read_embeddings(p)?;
            Some(match &cell_corpus {
                Some(corpus) => restrict(&e, corpus)?,
                None => e,
            })
        }
        _ => None,
    };
    let bootstrap = (mode == Mode::Sweep).then_some(BootstrapSettings {
        resamples: c.bootstrap.resamples,
        confidence: c.bootstrap.confidence,
        seed: c.seeds.bootstrap,
    });
    let opts = SweepOptions {
        pca_dims: c.pca_dims.clone(),
        features: features.clone(),
        k_folds: c.k_folds,
        fold_seed: c.seeds.folds,
        grid: c.alpha_grid.clone(),
        bootstrap,
        battery: c.analyses.clone(),
        control_seed: c.seeds.controls,
        n_permutations: c.controls.n_permutations,
        static_embeddings: static_emb.as_ref(),
        negative_feature: c.controls.negative_feature.clone(),
    };
    let (mut report, artifacts) = run_sweep(&layers, &tables, &opts)?;

    if mode == Mode::CrossDataset {
        let x = c.cross_dataset.as_ref().expect("checked in prepare");
        let pair = [x.train_corpus.clone(), x.test_corpus.clone()];
        let both: Vec<TargetTable> = all_tables.into_iter().filter(|t| pair.contains(&t.corpus_id)).collect();
        for emb in &raw_layers {
            for &d in &c.pca_dims {
                let model = fit_pca(emb.values(), d)?;
                let reduced = emb.with_values(project(&model, emb.values())?)?;
                for f in &features {
                    report.cross_dataset.push(cross_dataset_transfer(
                        &reduced,
                        &both,
                        &x.train_corpus,
                        &x.test_corpus,
                        f,
                        c.k_folds,
                        c.seeds.folds,
                        &c.alpha_grid,
                    )?);
                }
            }
        }
    }
    Ok((report, artifacts))
}

fn build_pool(threads: Threads) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.count().unwrap_or(0))
        .build()
        .map_err(|e| Error::ConfigError(format!("cannot start worker pool: {e}")))
}

fn run_command(mode: Mode, args: &RunArgs) -> Result<()> {
    let c = prepare(mode, resolve_config(args)?)?;
    c.validate()?;
    let pool = build_pool(c.effective_threads()?)?;
    let (report, artifacts) = pool.install(|| run_config(mode, &c))?;
    let meta = Meta::new(mode.name(), pool.current_num_threads(), c.clone());
    let out = c.out_dir()?;
    write_report_dir(out, &report, Some(&artifacts), &meta)?;
    eprintln!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn synth_config(args: &SynthArgs) -> SynthConfig {
    let mut c = match args.preset {
        Preset::Reference => SynthConfig::reference(),
        Preset::Tiny => SynthConfig::tiny(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { c.$field = v; } )* };
    }
    set!(n_participants, n_sentences, words_per_sentence, dim, pop_strength, person_strength, noise_sd, missing_rate,
        confound_coupling, seed, layer);
    if let Some(d) = args.person_dirs {
        c.person_dirs = match d {
            DirsArg::RandomUnit => PersonDirs::RandomUnit,
            DirsArg::Orthogonal => PersonDirs::Orthogonal,
            DirsArg::Shared => PersonDirs::Shared,
        };
    }
    c
}

/// Quotes a path for a TOML basic string.
fn toml_str(p: &Path) -> String {
    toml::Value::String(p.to_string_lossy().into_owned()).to_string()
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let cfg = synth_config(args);
    let data = match args.second_corpus {
        None => generate(&cfg)?,
        Some(m) => {
            let mode = match m {
                SecondCorpusArg::Same => SecondCorpus::Same,
                SecondCorpusArg::Disjoint => SecondCorpus::Disjoint,
            };
            generate_two_corpora(&cfg, &format!("{}_b", cfg.corpus_id), mode)?
        }
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    // run.toml should work from any working directory.
    let out = &std::fs::canonicalize(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let emb_dir = out.join("emb");
    std::fs::create_dir_all(&emb_dir).map_err(|e| Error::io(&emb_dir, e))?;
    write_embeddings(&data.embeddings, emb_dir.join(format!("layer_{}.emb", cfg.layer)))?;
    let targets = out.join("targets.csv");
    write_targets(&targets, &data.tables)?;

    let info = serde_json::json!({
        "config": cfg,
        "second_corpus": args.second_corpus.map(|m| format!("{m:?}").to_lowercase()),
        "population_direction": data.directions.population,
        "person_directions": data.directions.person,
    });
    let info_path = out.join("synth.json");
    let text = serde_json::to_string_pretty(&info).map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(&info_path, text + "\n").map_err(|e| Error::io(&info_path, e))?;

    let pattern = emb_dir.join("layer_{layer}.emb");
    let mut run = format!(
        "layers = [{}]\npca_dims = [{}]\n",
        cfg.layer,
        cfg.dim.min(50)
    );
    if args.second_corpus.is_some() {
        run.push_str(&format!("corpus = {}\n", toml::Value::String(cfg.corpus_id.clone())));
    }
    run.push_str(&format!(
        "\n[paths]\nembeddings = {}\ntargets = {}\nout = {}\n",
        toml_str(&pattern),
        toml_str(&targets),
        toml_str(&out.join("report"))
    ));
    let run_path = out.join("run.toml");
    std::fs::write(&run_path, run).map_err(|e| Error::io(&run_path, e))?;
    eprintln!("wrote {} and {}", targets.display(), run_path.display());
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let report = read_report(args.out.join("report.json"))?;
    write_tables(&args.out, &report)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Probe(a) => run_command(Mode::Probe, a),
        Command::Sweep(a) => run_command(Mode::Sweep, a),
        Command::Transfer(a) => run_command(Mode::Transfer, a),
        Command::Splithalf(a) => run_command(Mode::SplitHalf, a),
        Command::Residual(a) => run_command(Mode::Residual, a),
        Command::Confounds(a) => run_command(Mode::Confounds, a),
        Command::Controls(a) => run_command(Mode::Controls, a),
        Command::Crossdataset(a) => run_command(Mode::CrossDataset, a),
        Command::Synth(a) => run_synth(a),
        Command::Report(a) => run_report(a),
    }
}

pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

/// Parses arguments, runs, prints any error, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = execute(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
        let mut src = std::error::Error::source(e);
        while let Some(s) = src {
            eprintln!("  caused by: {s}");
            src = s.source();
        }
    }
    exit_code(&result)
}
