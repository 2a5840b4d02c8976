//! refexp: referring-expression generation over symbolic scene graphs.
//!
//! Two-step use: extract symbolic knowledge into a scene file (outside this
//! tool), then `refexp generate` an expression for the annotated target.
//! Also ships comprehension, dataset evaluation, LM training, and a
//! synthetic-scene generator.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use refexp_core::eval;
use refexp_core::ngram::{LanguageModel, NgramModel, DEFAULT_ORDER, DEFAULT_SMOOTHING_K};
use refexp_core::prep;
use refexp_core::rsa::{self, Mode};
use refexp_core::scene::{self, ObjectId};
use refexp_core::semantics::{self, Descriptor, DescriptorKind};
use refexp_core::synth::{self, Guarantee, SynthParams};
use refexp_core::{Config, Lm, Prior, Scalar, Space, Thresholds};

#[derive(Parser)]
#[command(name = "refexp", version, about = "Iterative RSA referring-expression engine")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a referring expression for the scene's target
    Generate {
        /// Scene JSON file
        scene: PathBuf,
        /// Write the per-step generation trace to this JSON file
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Resolve an expression against a scene and classify the outcome
    Comprehend {
        /// Scene JSON file
        scene: PathBuf,
        /// The expression to comprehend, e.g. "right train"
        expression: String,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Run the full pipeline over a JSONL dataset and write a metrics report
    Evaluate {
        /// Dataset file: one {"scene": path, "references": [...]} per line
        dataset: PathBuf,
        /// Report output path
        #[arg(long, default_value = "eval-report.json")]
        out: PathBuf,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Train the count-based n-gram language model on a text corpus
    #[command(name = "train-lm")]
    TrainLm {
        /// Corpus file: one expression per line
        #[arg(long)]
        corpus: PathBuf,
        /// N-gram order
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        /// Add-k smoothing constant
        #[arg(long, default_value_t = DEFAULT_SMOOTHING_K)]
        smoothing_k: f64,
        /// Model output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate seeded synthetic scenes with a discriminability guarantee
    Synth {
        /// Number of scenes
        #[arg(long)]
        count: usize,
        /// Base seed; scene i uses seed + i
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Discriminability guarantee
        #[arg(long, value_enum, default_value_t = GuaranteeArg::UniqueType)]
        guarantee: GuaranteeArg,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

/// Engine knobs shared by generate/comprehend/evaluate. Flags override
/// config-file values, which override defaults.
#[derive(Args, Clone, Default)]
struct EngineOpts {
    /// Type-score threshold (default 0.3)
    #[arg(long)]
    theta_type: Option<Scalar>,
    /// Attribute-score threshold (default 0.3)
    #[arg(long)]
    theta_attr: Option<Scalar>,
    /// Relation-score threshold (default 0.5)
    #[arg(long)]
    theta_rel: Option<Scalar>,
    /// Speaker rationality (default 1.0)
    #[arg(long)]
    alpha: Option<Scalar>,
    /// Maximum descriptors per expression (default 4)
    #[arg(long)]
    max_len: Option<usize>,
    /// Entropy stop threshold in bits (default 0.1)
    #[arg(long)]
    entropy_stop: Option<Scalar>,
    /// Brevity pressure: cost(u) = -beta * word_count(u) (default 0)
    #[arg(long)]
    beta: Option<Scalar>,
    /// Descriptor choice: greedy or sample (default greedy)
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for sample mode (default 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Trained language-model file; omitted = LM off
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Flat JSON config file mirroring these flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GuaranteeArg {
    UniqueType,
    UniqueAttribute,
    RelationOnly,
    Ambiguous,
}

impl From<GuaranteeArg> for Guarantee {
    fn from(g: GuaranteeArg) -> Self {
        match g {
            GuaranteeArg::UniqueType => Guarantee::UniqueType,
            GuaranteeArg::UniqueAttribute => Guarantee::UniqueAttribute,
            GuaranteeArg::RelationOnly => Guarantee::RelationOnly,
            GuaranteeArg::Ambiguous => Guarantee::Ambiguous,
        }
    }
}

/// A command failure with its exit code; rendered as JSON on stderr.
struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: "config",
            message: message.into(),
            code: 1,
        }
    }

    fn parse(message: impl Into<String>) -> Self {
        Failure {
            kind: "parse",
            message: message.into(),
            code: 1,
        }
    }

    fn generation(message: impl Into<String>) -> Self {
        Failure {
            kind: "generation",
            message: message.into(),
            code: 2,
        }
    }
}

/// Resolved engine settings after merging flags, config file, defaults.
struct Settings {
    thresholds: Thresholds,
    config: Config,
    lm_path: Option<PathBuf>,
}

impl Settings {
    fn resolve(opts: &EngineOpts) -> Result<Settings, Failure> {
        let file = match &opts.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };

        let thresholds = Thresholds {
            theta_type: opts.theta_type.or(file.theta_type).unwrap_or(0.3),
            theta_attr: opts.theta_attr.or(file.theta_attr).unwrap_or(0.3),
            theta_rel: opts.theta_rel.or(file.theta_rel).unwrap_or(0.5),
        };
        let defaults = Config::default();
        let mode = opts
            .mode
            .map(|m| match m {
                ModeArg::Greedy => Mode::Greedy,
                ModeArg::Sample => Mode::Sample,
            })
            .or(file.mode)
            .unwrap_or(defaults.mode);
        let config = Config {
            alpha: opts.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            max_len: opts.max_len.or(file.max_len).unwrap_or(defaults.max_len),
            entropy_stop: opts
                .entropy_stop
                .or(file.entropy_stop)
                .unwrap_or(defaults.entropy_stop),
            cost_weight: opts.beta.or(file.beta).unwrap_or(defaults.cost_weight),
            mode,
            seed: opts.seed.or(file.seed).unwrap_or(defaults.seed),
            lm_weight: defaults.lm_weight,
        };
        thresholds
            .validate()
            .map_err(|e| Failure::usage(e.to_string()))?;
        config
            .validate()
            .map_err(|e| Failure::usage(e.to_string()))?;
        Ok(Settings {
            thresholds,
            config,
            lm_path: opts.lm.clone().or(file.lm),
        })
    }

    fn load_lm(&self) -> Result<Lm, Failure> {
        match &self.lm_path {
            None => Ok(LanguageModel::Off),
            Some(path) => {
                let bytes = fs::read(path)
                    .map_err(|e| Failure::parse(format!("cannot read {}: {e}", path.display())))?;
                let model = NgramModel::from_json(&bytes)
                    .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
                Ok(LanguageModel::Ngram(model))
            }
        }
    }
}

/// Flat key-value config document; keys mirror the CLI flags.
#[derive(Default)]
struct ConfigFile {
    theta_type: Option<Scalar>,
    theta_attr: Option<Scalar>,
    theta_rel: Option<Scalar>,
    alpha: Option<Scalar>,
    max_len: Option<usize>,
    entropy_stop: Option<Scalar>,
    beta: Option<Scalar>,
    mode: Option<Mode>,
    seed: Option<u64>,
    lm: Option<PathBuf>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<ConfigFile, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;

        let mut file = ConfigFile::default();
        for (key, value) in map {
            match key.as_str() {
                "theta.type" => file.theta_type = Some(number(&key, &value)?),
                "theta.attr" => file.theta_attr = Some(number(&key, &value)?),
                "theta.rel" => file.theta_rel = Some(number(&key, &value)?),
                "alpha" => file.alpha = Some(number(&key, &value)?),
                "max_len" => file.max_len = Some(integer(&key, &value)? as usize),
                "entropy_stop" => file.entropy_stop = Some(number(&key, &value)?),
                "beta" => file.beta = Some(number(&key, &value)?),
                "seed" => file.seed = Some(integer(&key, &value)?),
                "mode" => {
                    let s = value.as_str().ok_or_else(|| {
                        Failure::usage(format!("config key {key} must be a string"))
                    })?;
                    file.mode = Some(match s {
                        "greedy" => Mode::Greedy,
                        "sample" => Mode::Sample,
                        other => {
                            return Err(Failure::usage(format!(
                                "config key mode has unknown value {other:?}"
                            )))
                        }
                    });
                }
                "lm" => {
                    let s = value.as_str().ok_or_else(|| {
                        Failure::usage(format!("config key {key} must be a string"))
                    })?;
                    file.lm = Some(PathBuf::from(s));
                }
                other => {
                    return Err(Failure::usage(format!("unknown config key {other:?}")));
                }
            }
        }
        Ok(file)
    }
}

fn number(key: &str, value: &serde_json::Value) -> Result<Scalar, Failure> {
    value
        .as_f64()
        .ok_or_else(|| Failure::usage(format!("config key {key} must be a number")))
}

fn integer(key: &str, value: &serde_json::Value) -> Result<u64, Failure> {
    value
        .as_u64()
        .ok_or_else(|| Failure::usage(format!("config key {key} must be a non-negative integer")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!(
                "{}",
                json!({"kind": failure.kind, "message": failure.message})
            );
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { scene, trace, opts } => cmd_generate(&scene, trace.as_deref(), &opts),
        Command::Comprehend {
            scene,
            expression,
            opts,
        } => cmd_comprehend(&scene, &expression, &opts),
        Command::Evaluate { dataset, out, opts } => cmd_evaluate(&dataset, &out, &opts),
        Command::TrainLm {
            corpus,
            order,
            smoothing_k,
            out,
        } => cmd_train_lm(&corpus, order, smoothing_k, &out),
        Command::Synth {
            count,
            seed,
            guarantee,
            out,
        } => cmd_synth(count, seed, guarantee.into(), &out),
    }
}

/// Parse scene -> align -> ordinals -> descriptor space + salience prior.
fn load_pipeline(
    scene_path: &Path,
    settings: &Settings,
) -> Result<(prep::PreparedScene<Scalar>, Space, Prior), Failure> {
    let bytes = fs::read(scene_path)
        .map_err(|e| Failure::parse(format!("cannot read {}: {e}", scene_path.display())))?;
    let scene = scene::parse_scene::<Scalar>(&bytes)
        .map_err(|e| Failure::parse(format!("{}: {e}", scene_path.display())))?;
    let prepared = prep::prepare(scene).map_err(|e| Failure::parse(e.to_string()))?;
    let space = semantics::categorize(&prepared, &settings.thresholds)
        .map_err(|e| Failure::generation(e.to_string()))?;
    let prior = semantics::salience_prior(&prepared.scene)
        .map_err(|e| Failure::generation(e.to_string()))?;
    Ok((prepared, space, prior))
}

fn cmd_generate(
    scene_path: &Path,
    trace_path: Option<&Path>,
    opts: &EngineOpts,
) -> Result<(), Failure> {
    let settings = Settings::resolve(opts)?;
    let lm = settings.load_lm()?;
    let (prepared, space, prior) = load_pipeline(scene_path, &settings)?;
    let target = prepared.alignment.target_id.clone();

    let (expression, trace) = rsa::generate(&space, &target, &prior, &lm, &settings.config)
        .map_err(|e| Failure::generation(e.to_string()))?;

    println!("{}", expression.text());

    if let Some(path) = trace_path {
        let report = json!({
            "scene": scene_path.display().to_string(),
            "target": target,
            "expression": expression,
            "trace": trace,
        });
        let text = serde_json::to_string_pretty(&report).expect("trace serializes");
        fs::write(path, text)
            .map_err(|e| Failure::generation(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_comprehend(scene_path: &Path, expression: &str, opts: &EngineOpts) -> Result<(), Failure> {
    let settings = Settings::resolve(opts)?;
    let lm = settings.load_lm()?;
    let (prepared, space, prior) = load_pipeline(scene_path, &settings)?;
    let target = prepared.alignment.target_id.clone();

    let lowered = expression.to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let resolved = space.resolve_words(&words);
    if !resolved.unresolved.is_empty() {
        log::warn!("unresolved words: {}", resolved.unresolved.join(", "));
    }

    // Unresolved words become never-true descriptors so the classification
    // reflects that nothing in the scene matches them.
    let mut descriptors: Vec<Descriptor> =
        resolved.descriptors.iter().map(|d| (*d).clone()).collect();
    let resolved_count = descriptors.len();
    for word in &resolved.unresolved {
        descriptors.push(Descriptor {
            kind: DescriptorKind::Type,
            surface: word.clone(),
            extension: Default::default(),
        });
    }
    if descriptors.is_empty() {
        return Err(Failure::generation(
            "no resolvable descriptor in expression".to_owned(),
        ));
    }

    let outcome = eval::classify(&descriptors, &target, &prepared.alignment);

    let resolved_only = &descriptors[..resolved_count];
    let posterior = if resolved_only.is_empty() {
        None
    } else {
        rsa::pragmatic_listener(resolved_only, &prior, &space, &lm, &settings.config).ok()
    };

    match &posterior {
        Some(posterior) => {
            let mut rows: Vec<(&ObjectId, Scalar)> = posterior.iter().collect();
            rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
            for (id, p) in rows {
                println!("p({id}) = {p:.4}");
            }
        }
        None => println!("posterior: unavailable"),
    }
    println!("outcome: {outcome}");

    if resolved_count == 0 {
        return Err(Failure::generation(format!(
            "no resolvable descriptor in expression (unresolved: {})",
            resolved.unresolved.join(", ")
        )));
    }
    Ok(())
}

fn cmd_evaluate(dataset_path: &Path, out: &Path, opts: &EngineOpts) -> Result<(), Failure> {
    let settings = Settings::resolve(opts)?;
    let lm = settings.load_lm()?;
    let entries = eval::load_dataset(dataset_path).map_err(|e| Failure::parse(e.to_string()))?;
    let run = eval::evaluate_dataset(&entries, &settings.config, &settings.thresholds, &lm)
        .map_err(|e| Failure::generation(e.to_string()))?;

    let text = serde_json::to_string_pretty(&run).expect("report serializes");
    fs::write(out, text)
        .map_err(|e| Failure::generation(format!("cannot write {}: {e}", out.display())))?;

    let r = &run.report;
    println!("instances: {}", r.n_instances);
    println!(
        "outcomes: true={} false={} under_informative={} no_match={} not_highlighted={}",
        r.counts.true_,
        r.counts.false_,
        r.counts.under_informative,
        r.counts.no_match,
        r.counts.not_highlighted
    );
    println!("raw_accuracy: {:.4}", r.raw_accuracy);
    match r.adjusted_accuracy {
        Some(a) => println!("adjusted_accuracy: {a:.4}"),
        None => println!("adjusted_accuracy: n/a"),
    }
    println!(
        "bleu: {:.4}  rouge_l: {:.4}  meteor: {:.4}  (scored {} instances)",
        r.bleu, r.rouge_l, r.meteor, r.n_scored
    );
    println!("listener_accuracy: {:.4}", r.listener_accuracy);
    println!("report: {}", out.display());
    Ok(())
}

fn cmd_train_lm(corpus: &Path, order: usize, smoothing_k: f64, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(corpus)
        .map_err(|e| Failure::parse(format!("cannot read {}: {e}", corpus.display())))?;
    let lines: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect();
    let model = NgramModel::<Scalar>::train_with_smoothing(&lines, order, smoothing_k)
        .map_err(|e| Failure::parse(e.to_string()))?;
    fs::write(out, model.to_json())
        .map_err(|e| Failure::generation(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "trained order-{order} model on {} lines ({} word vocabulary) -> {}",
        lines.iter().filter(|l| !l.is_empty()).count(),
        model.vocab().len(),
        out.display()
    );
    Ok(())
}

fn cmd_synth(count: usize, seed: u64, guarantee: Guarantee, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .map_err(|e| Failure::generation(format!("cannot create {}: {e}", out.display())))?;
    for i in 0..count {
        let params = SynthParams {
            guarantee,
            seed: seed.wrapping_add(i as u64),
            ..SynthParams::default()
        };
        let synth = synth::generate_scene::<Scalar>(&params)
            .map_err(|e| Failure::generation(e.to_string()))?;
        let path = out.join(format!("scene_{i:04}.json"));
        fs::write(&path, scene::serialize_scene_pretty(&synth.scene))
            .map_err(|e| Failure::generation(format!("cannot write {}: {e}", path.display())))?;
    }
    println!("wrote {count} scenes to {}", out.display());
    Ok(())
}
