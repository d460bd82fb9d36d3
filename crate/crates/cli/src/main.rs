use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use capvqa::dataset::{
    decontaminate, index_generated_captions, join_examples, load_annotations, load_captions,
    load_questions, read_image_ids, select_gold_captions, write_image_ids, GoldCaptionPolicy,
    ImageId, Split,
};
use capvqa::fusion::fuse_dumps;
use capvqa::harness::run::predict_distributions;
use capvqa::harness::{
    data_root, read_predictions, run_experiment, select_training_steps, write_predictions,
    Predictions, RunConfig, PRESETS,
};
use capvqa::metrics::{evaluate_predictions, write_report, AccuracyMode};
use capvqa::modeling::adapters::DistributionDump;
use capvqa::modeling::multimodal::load_region_dir;
use capvqa::modeling::toy::{classifier_inputs, RegionMap, ToyModel};
use capvqa::vocab::{
    answer_frequencies, build_answer_vocab, select_generative_targets, soft_label, VocabCutoff,
};
use capvqa::{AnswerVocab, ErrorKind};

#[derive(Parser)]
#[command(name = "capvqa", version, about = "Caption-based VQA: vocabularies, training, scoring and fusion")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect an answer vocabulary.
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// Score a prediction file against annotations.
    Score(ScoreArgs),
    /// Train and evaluate every seed of a run config.
    Train(ConfigArgs),
    /// Predict with a saved toy model.
    Eval(EvalArgs),
    /// Late-fuse two per-question distribution dumps.
    Fuse(FuseArgs),
    /// Pick the number of training steps on a validation split.
    SelectSteps(SelectStepsArgs),
    /// Remove reserved images from a caption-training image list.
    Decontaminate(DecontaminateArgs),
    /// Count questions without an agreed generation target.
    Targets(TargetsArgs),
    /// Print a run config template for a preset.
    InitConfig(InitConfigArgs),
}

#[derive(Subcommand)]
enum VocabCommand {
    Build(VocabBuildArgs),
    Inspect(VocabInspectArgs),
}

#[derive(Args)]
struct VocabBuildArgs {
    /// Annotation files to count answers over.
    #[arg(long = "annotations", required = true)]
    annotations: Vec<PathBuf>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VocabInspectArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Report label coverage on these annotations.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Print the first N answers.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Average over leave-one-annotator-out subsets like the official evaluator.
    #[arg(long)]
    subset_averaged: bool,
    /// Write the per-question report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory under which the run directory is created.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Needed to join examples and to print a score.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Draw one gold caption per image with this seed instead of using
    /// generated captions.
    #[arg(long)]
    gold_seed: Option<u64>,
    #[arg(long)]
    regions_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also dump per-question distributions for late fusion.
    #[arg(long)]
    distributions: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectStepsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    max_steps: usize,
}

#[derive(Args)]
struct DecontaminateArgs {
    /// Image ids used to train the captioner, one per line.
    #[arg(long)]
    caption_train: PathBuf,
    /// Reserved image ids, one per line.
    #[arg(long)]
    reserved: Vec<PathBuf>,
    /// Question files whose images are reserved.
    #[arg(long)]
    reserved_questions: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TargetsArgs {
    #[arg(long = "annotations", required = true)]
    annotations: Vec<PathBuf>,
}

#[derive(Args)]
struct InitConfigArgs {
    #[arg(long, default_value = "toy")]
    preset: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<capvqa::Error>()).map(|e| e.kind()) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        _ => 4,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Vocab(VocabCommand::Build(a)) => vocab_build(a),
        Command::Vocab(VocabCommand::Inspect(a)) => vocab_inspect(a),
        Command::Score(a) => score(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Fuse(a) => fuse(a),
        Command::SelectSteps(a) => select_steps(a),
        Command::Decontaminate(a) => decontaminate_cmd(a),
        Command::Targets(a) => targets(a),
        Command::InitConfig(a) => {
            let mut c = RunConfig::preset(&a.preset)
                .with_context(|| format!("known presets: {}", PRESETS.join(", ")))?;
            let d = &mut c.data;
            d.train_questions = "train_questions.json".into();
            d.train_annotations = "train_annotations.json".into();
            d.eval_questions = "eval_questions.json".into();
            d.eval_annotations = "eval_annotations.json".into();
            d.train_captions = Some("train_captions.json".into());
            d.eval_captions = Some("eval_captions.json".into());
            d.vocab_max_size = Some(3129);
            print!("{}", c.to_toml());
            Ok(())
        }
    }
}

fn load_all_annotations(paths: &[PathBuf]) -> Result<Vec<capvqa::AnnotationRecord>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_annotations(p)?);
    }
    Ok(all)
}

fn vocab_build(a: VocabBuildArgs) -> Result<()> {
    let cutoff = VocabCutoff::from_options(a.min_count, a.max_size)?;
    let anns = load_all_annotations(&a.annotations)?;
    let vocab = build_answer_vocab(&anns, cutoff)?;
    vocab.save(&a.out)?;
    println!("{} answers from {} questions -> {}", vocab.n_label(), anns.len(), a.out.display());
    Ok(())
}

fn vocab_inspect(a: VocabInspectArgs) -> Result<()> {
    let vocab = AnswerVocab::load(&a.vocab)?;
    println!("answers: {}", vocab.n_label());
    for (i, ans) in vocab.answers().iter().take(a.top).enumerate() {
        println!("{i:>6}  {ans}");
    }
    if let Some(path) = a.annotations {
        let anns = load_annotations(&path)?;
        let oov = anns.iter().filter(|r| soft_label(r, &vocab).fully_oov).count();
        let freqs = answer_frequencies(&anns);
        let total: usize = freqs.iter().map(|(_, c)| c).sum();
        let covered: usize = freqs
            .iter()
            .filter(|(ans, _)| vocab.index_of(ans).is_some())
            .map(|(_, c)| c)
            .sum();
        println!(
            "questions: {}, fully out of vocabulary: {}, answer coverage: {:.4}",
            anns.len(),
            oov,
            covered as f64 / total.max(1) as f64
        );
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let preds = read_predictions(&a.predictions)?;
    let anns = load_annotations(&a.annotations)?;
    let mode = if a.subset_averaged {
        AccuracyMode::SubsetAveraged
    } else {
        AccuracyMode::Literal
    };
    let report = evaluate_predictions(&preds, &anns, mode)?;
    if let Some(path) = &a.report {
        write_report(path, &report)?;
    }
    println!("VQA score {:.4} over {} questions ({} unanswered)", report.mean_score, report.n, report.unanswered.len());
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let config = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(config.resolved(&data_root(base)))
}

fn train(a: ConfigArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let art = run_experiment(&config, &a.out)?;
    for r in &art.runs {
        match r.eval_caption_seed {
            Some(c) => println!("seed {} captions {}: {:.4}", r.seed, c, r.report.mean_score),
            None => println!("seed {}: {:.4}", r.seed, r.report.mean_score),
        }
    }
    println!("VQA score {}", art.aggregate);
    println!("run directory: {}", art.run_dir.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = ToyModel::load(&a.checkpoint)?;
    let questions = load_questions(&a.questions)?;
    let anns = load_annotations(&a.annotations)?;
    let captions = match (&a.captions, model.mode.uses_caption()) {
        (Some(p), true) => {
            let recs = load_captions(p)?;
            match a.gold_seed {
                Some(seed) => select_gold_captions(&recs, seed, GoldCaptionPolicy::RequireFive)?,
                None => index_generated_captions(&recs)?,
            }
        }
        (None, true) => anyhow::bail!(capvqa::Error::Config(format!(
            "the model reads captions ({:?} mode); pass --captions",
            model.mode
        ))),
        _ => Default::default(),
    };
    let set = join_examples(&questions, &anns, &captions, model.mode, Split::Test)?;
    let regions: RegionMap = match (&a.regions_dir, model.mode.uses_regions()) {
        (Some(dir), true) => load_region_dir(dir, &set.image_ids())?
            .into_iter()
            .map(|(k, v)| (k, std::sync::Arc::new(v)))
            .collect(),
        (None, true) => anyhow::bail!(capvqa::Error::Config("the model reads region features; pass --regions-dir".into())),
        _ => RegionMap::new(),
    };
    let inputs = classifier_inputs(&set, &regions)?;
    let dump = predict_distributions(&model, &inputs)?;
    let preds: Predictions = dump
        .distributions
        .iter()
        .map(|d| (d.question_id, model.vocab.answer(d.probs.argmax()).unwrap_or_default().to_string()))
        .collect();
    write_predictions(&preds, &a.out)?;
    if let Some(p) = &a.distributions {
        dump.save(p)?;
    }
    let report = evaluate_predictions(&preds, &anns, AccuracyMode::Literal)?;
    println!("VQA score {:.4} over {} questions", report.mean_score, report.n);
    Ok(())
}

fn fuse(a: FuseArgs) -> Result<()> {
    let vocab = AnswerVocab::load(&a.vocab)?;
    let da = DistributionDump::load(&a.a)?;
    let db = DistributionDump::load(&a.b)?;
    let preds = fuse_dumps(&da, &db, &vocab)?;
    write_predictions(&preds, &a.out)?;
    println!("fused {} and {} over {} questions -> {}", da.model, db.model, preds.len(), a.out.display());
    Ok(())
}

fn select_steps(a: SelectStepsArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let sel = select_training_steps(&config, a.max_steps)?;
    for b in &sel.per_seed {
        println!("seed {}: best step {} (score {:.4})", b.seed, b.step, b.score);
    }
    println!("selected steps: {}", sel.selected);
    Ok(())
}

fn decontaminate_cmd(a: DecontaminateArgs) -> Result<()> {
    let train = read_image_ids(&a.caption_train)?;
    let mut reserved: BTreeSet<ImageId> = BTreeSet::new();
    for p in &a.reserved {
        reserved.extend(read_image_ids(p)?);
    }
    for p in &a.reserved_questions {
        reserved.extend(load_questions(p)?.iter().map(|q| q.image_id));
    }
    let kept = decontaminate(&train, &reserved);
    write_image_ids(&a.out, &kept)?;
    let overlap = kept.intersection(&reserved).count();
    println!(
        "kept {} of {} images, removed {}, overlap with reserved: {}",
        kept.len(),
        train.len(),
        train.len() - kept.len(),
        overlap
    );
    Ok(())
}

fn targets(a: TargetsArgs) -> Result<()> {
    let anns = load_all_annotations(&a.annotations)?;
    let discarded: Vec<_> = anns
        .iter()
        .map(select_generative_targets)
        .filter(|p| p.discarded)
        .map(|p| p.question_id)
        .collect();
    println!("questions: {}, discarded (no answer from two annotators): {}", anns.len(), discarded.len());
    Ok(())
}
