use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use contrastshap::pipeline::config::ReferenceSource;
use contrastshap::pipeline::io::write_json;
use contrastshap::pipeline::{cmd_agreement, cmd_report, cmd_shapley, cmd_uncertainty, write_metric_table_csv, RunConfig};
use contrastshap::ranking::clinical_standard;
use contrastshap::stats::ResampleMode;
use contrastshap::synth::{
    generate, planted_agreement_cohort, planted_variance_cohort, AgreementPlanting, FlipMode, PlantedSubject,
    PlantedUncertainty, SynthConfig, VariancePlanting,
};
use contrastshap::{Error, ErrorClass, MetricRange};

const OUT_DIR_ENV: &str = "CONTRASTSHAP_OUT_DIR";
const SYNTH_SCHEMA: &str = "contrastshap/synth-planted/v1";

/// Contrast-level Shapley attribution with rank agreement and interfold
/// rank variance analyses.
#[derive(Parser)]
#[command(name = "contrastshap", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shapley values per subject, fold and region.
    Shapley(RunArgs),
    /// Normalized Spearman footrule against reference rankings, grouped by Dice bin.
    Agreement(RunArgs),
    /// Interfold rank variance and its correlation with Dice.
    Uncertainty(RunArgs),
    /// Consolidated JSON report and text summary.
    Report {
        #[command(flatten)]
        run: RunArgs,
        /// Read stage outputs from this directory instead of recomputing.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Write a synthetic metric table with planted ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metric table (CSV, or JSON by extension).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Comma-separated contrast names, in table order.
    #[arg(long, value_delimiter = ',')]
    contrasts: Option<Vec<String>>,
    /// `clinical` or `file:PATH`; repeat for several references.
    #[arg(long = "reference")]
    references: Vec<ReferenceSource>,
    /// Annotator ranking CSV (`subject_id,annotator,contrast,rank`).
    #[arg(long)]
    annotators: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap iterations.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    variance_threshold: Option<f64>,
    /// Stratification percentile for the bootstrap.
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long, value_enum)]
    resample: Option<Resample>,
    /// Attributions closer than this are tied when ranking.
    #[arg(long)]
    tie_epsilon: Option<f64>,
    /// Accept any finite metric instead of requiring [0, 1].
    #[arg(long)]
    any_metric: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Resample {
    Plain,
    Stratified,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.input {
            config.input = Some(v);
        }
        if let Some(v) = self.out {
            config.output_dir = v;
        }
        if let Some(v) = self.contrasts {
            config.contrasts = v;
        }
        if !self.references.is_empty() {
            config.references = self.references;
        }
        if let Some(v) = self.annotators {
            config.annotators = Some(v);
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.iterations {
            config.bootstrap_iterations = v;
        }
        if let Some(v) = self.variance_threshold {
            config.variance_threshold = v;
        }
        if let Some(v) = self.percentile {
            config.percentile = v;
        }
        if let Some(v) = self.resample {
            config.resample = match v {
                Resample::Plain => ResampleMode::Plain,
                Resample::Stratified => ResampleMode::Stratified,
            };
        }
        if let Some(v) = self.tie_epsilon {
            config.tie_epsilon = v;
        }
        if self.any_metric {
            config.metric_range = MetricRange::AnyFinite;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Scenario {
    /// Noise-free additive games (plus optional interaction and fold noise).
    Additive,
    /// Subjects planted as agreeing or disagreeing with the clinical ranking.
    Agreement,
    /// Fold noise driven by a latent uncertainty that lowers Dice.
    Variance,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "additive")]
    scenario: Scenario,
    #[arg(long, env = OUT_DIR_ENV, default_value = "synth")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    subjects: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated planted contributions, one per contrast.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Comma-separated region labels.
    #[arg(long, value_delimiter = ',')]
    regions: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.0)]
    baseline: f64,
    #[arg(long, default_value_t = 0.0)]
    interaction: f64,
    /// Fold noise for the additive scenario.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Share of disagreeing subjects in the agreement scenario.
    #[arg(long, default_value_t = 0.5)]
    flip_fraction: f64,
    /// Shuffle flipped subjects instead of reversing them.
    #[arg(long)]
    shuffle: bool,
    /// Decouple Dice from uncertainty in the variance scenario.
    #[arg(long)]
    null: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
enum PlantedSubjects {
    Agreement(Vec<PlantedSubject>),
    Variance(Vec<PlantedUncertainty>),
    None(Vec<()>),
}

#[derive(Serialize)]
struct SynthManifest {
    schema: &'static str,
    library_version: &'static str,
    scenario: Scenario,
    config: SynthConfig,
    clip_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_mean_nsf: Option<f64>,
    subjects: PlantedSubjects,
}

fn run_synth(args: SynthArgs) -> Result<(), Error> {
    let mut config = SynthConfig {
        n_subjects: args.subjects,
        n_folds: args.folds,
        seed: args.seed,
        baseline: args.baseline,
        interaction_strength: args.interaction,
        fold_noise_sigma: args.sigma,
        ..SynthConfig::default()
    };
    if let Some(w) = args.weights {
        config.additive_weights = w;
    }
    if let Some(r) = args.regions {
        config.regions = r;
    }
    let (table, clip_events, expected_mean_nsf, subjects) = match args.scenario {
        Scenario::Additive => {
            let out = generate(&config)?;
            (out.table, out.clip_events, None, PlantedSubjects::None(Vec::new()))
        }
        Scenario::Agreement => {
            let contrasts = config.validate()?;
            let target = clinical_standard(&contrasts)?.ranks;
            let mut planting = AgreementPlanting::new(args.flip_fraction);
            if args.shuffle {
                planting.flip_mode = FlipMode::Shuffle;
            }
            let out = planted_agreement_cohort(&config, &target, &planting)?;
            let mean = out.expected_mean_nsf();
            (out.table, out.clip_events, Some(mean), PlantedSubjects::Agreement(out.subjects))
        }
        Scenario::Variance => {
            let planting = VariancePlanting {
                coupled: !args.null,
                ..VariancePlanting::default()
            };
            let out = planted_variance_cohort(&config, &planting)?;
            (out.table, out.clip_events, None, PlantedSubjects::Variance(out.subjects))
        }
    };
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    write_metric_table_csv(&table, &args.out.join("metric_table.csv"))?;
    write_json(
        &args.out.join("planted.json"),
        &SynthManifest {
            schema: SYNTH_SCHEMA,
            library_version: contrastshap::VERSION,
            scenario: args.scenario,
            config,
            clip_events,
            expected_mean_nsf,
            subjects,
        },
    )
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Shapley(args) => cmd_shapley(&args.resolve()?).map(drop),
        Command::Agreement(args) => cmd_agreement(&args.resolve()?).map(drop),
        Command::Uncertainty(args) => cmd_uncertainty(&args.resolve()?).map(drop),
        Command::Report { run, from } => {
            let report = cmd_report(&run.resolve()?, from.as_deref())?;
            print!("{}", report.summary_text());
            Ok(())
        }
        Command::Synth(args) => run_synth(args),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 3,
        ErrorClass::Computation => 4,
        ErrorClass::Io => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
