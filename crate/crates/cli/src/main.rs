use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use latentkd::alignment::{classify_intent, PosLexicon};
use latentkd::data::{
    generate_synthetic, load_transcripts, load_walkthroughs, make_samples, save_transcripts, save_walkthroughs,
    split_by_transcript, Corpus, Sample, ScorePatterns, SynthGameSpec,
};
use latentkd::eval::{
    cdf_csv, corpus_stats, eval_csv, eval_recall_at_1, eval_validation_9neg, t_test, walkthrough_transcript,
    ActionScorer, EvalResult, PosteriorTeacherScorer, StudentScorer,
};
use latentkd::models::{checkpoint_kind, ModelKind, Student, Teacher};
use latentkd::numcore::ParamSet;
use latentkd::pipeline::{
    append_report, check_gradients, run_stage1_student_pretrain, run_stage2_teacher_pretrain,
    run_stage3_teacher_finetune, run_stage4_distill, run_student_finetune, StageReport, TrainConfig,
    HELD_OUT_GAME_FRACTION, TRANSCRIPT_VALIDATION_FRACTION,
};

/// Latent-variable teacher distillation for text-game action selection.
#[derive(Parser)]
#[command(name = "latentkd", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Input samples (JSON lines).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Run log that receives the stage report as a JSON line.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: transcripts, validation transcripts,
    /// training and held-out walkthroughs.
    GenSynth {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics as JSON; optional CDF table.
    Stats {
        /// Transcripts file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Walkthroughs file, summarised alongside.
        #[arg(long)]
        walkthroughs: Option<PathBuf>,
        /// Extra score patterns, one regex per line.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Normalised-score CDF as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage 1: student pre-training on transcripts.
    PretrainStudent(StageArgs),
    /// Stage 2: teacher pre-training on transcripts.
    PretrainTeacher(StageArgs),
    /// Stage 3: teacher fine-tuning on walkthroughs.
    FinetuneTeacher {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Stage 4: distil the teacher into the pre-trained student.
    Distill {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        student: PathBuf,
    },
    /// Hard-label fine-tuning of the pre-trained student, without a teacher.
    FinetuneStudent {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        student: PathBuf,
    },
    /// Recall@1 over valid actions; EvalResult JSON on stdout.
    Eval {
        /// Walkthroughs file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Student or teacher checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Per-game CSV table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall@1 against nine random gold actions from the same file.
    #[command(name = "validate-9neg")]
    Validate9neg {
        #[command(flatten)]
        common: Common,
        /// Transcripts file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Welch t-test on the per-sample correctness of two EvalResult files.
    TTest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Tag actions (one per line) with their intent.
    IntentTag {
        /// Actions file; standard input when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Directory with the lexicon word lists.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients of every objective against central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn train_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn transcript_samples(path: &Path) -> Result<Vec<Sample>> {
    let t = load_transcripts(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(make_samples(Corpus::Transcripts(&t))?)
}

fn walkthrough_samples(path: &Path) -> Result<Vec<Sample>> {
    let w = load_walkthroughs(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(make_samples(Corpus::Walkthroughs(&w))?)
}

fn load_student(path: &Path) -> Result<Student> {
    Student::load(path).with_context(|| format!("loading student {}", path.display()))
}

fn load_teacher(path: &Path) -> Result<Teacher> {
    Teacher::load(path).with_context(|| format!("loading teacher {}", path.display()))
}

fn finish_stage(report: StageReport, args: &StageArgs) -> Result<()> {
    let report = StageReport {
        checkpoint: Some(args.out.clone()),
        ..report
    };
    if let Some(log) = &args.log {
        append_report(log, &report)?;
    }
    emit_line(serde_json::to_string(&report)?)?;
    Ok(())
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit_line(line: impl std::fmt::Display) -> Result<()> {
    emit(&format!("{line}\n"))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(text),
    }
}

fn gen_synth(common: &Common, out: &Path) -> Result<()> {
    let mut spec = match &common.config {
        Some(p) => SynthGameSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SynthGameSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    let (train, validation) = split_by_transcript(&corpus.transcripts, TRANSCRIPT_VALIDATION_FRACTION, spec.seed)?;
    let (walk, held_out) = split_by_transcript(&corpus.walkthroughs, HELD_OUT_GAME_FRACTION, spec.seed)?;
    std::fs::create_dir_all(out)?;
    save_transcripts(&out.join("transcripts.jsonl"), &train)?;
    save_transcripts(&out.join("validation.jsonl"), &validation)?;
    save_walkthroughs(&out.join("walkthroughs.jsonl"), &walk)?;
    save_walkthroughs(&out.join("held_out.jsonl"), &held_out)?;
    eprintln!(
        "{} transcripts, {} validation, {} walkthroughs, {} held out",
        train.len(),
        validation.len(),
        walk.len(),
        held_out.len()
    );
    Ok(())
}

fn stats(input: &Path, walkthroughs: Option<&Path>, patterns: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let patterns = match patterns {
        Some(p) => ScorePatterns::with_extra_file(p)?,
        None => ScorePatterns::default(),
    };
    let transcripts = load_transcripts(input).with_context(|| format!("loading {}", input.display()))?;
    let report = corpus_stats(&transcripts, &patterns);
    let mut record = serde_json::json!({ "transcripts": report });
    if let Some(w) = walkthroughs {
        let walks = load_walkthroughs(w).with_context(|| format!("loading {}", w.display()))?;
        let as_transcripts: Vec<_> = walks.iter().map(|w| walkthrough_transcript(w, &patterns)).collect();
        record["walkthroughs"] = serde_json::to_value(corpus_stats(&as_transcripts, &patterns))?;
    }
    emit_line(serde_json::to_string_pretty(&record)?)?;
    if let Some(p) = out {
        write_output(Some(p), &cdf_csv(&report.score_cdf))?;
    }
    Ok(())
}

fn with_scorer<T>(model: &Path, f: impl FnOnce(&mut dyn ActionScorer) -> Result<T>) -> Result<T> {
    let params = ParamSet::load(model).with_context(|| format!("loading {}", model.display()))?;
    match checkpoint_kind(&params)? {
        ModelKind::Student => f(&mut StudentScorer::new(&Student::from_checkpoint(params)?)),
        ModelKind::Teacher => f(&mut PosteriorTeacherScorer::new(&Teacher::from_checkpoint(params)?)),
    }
}

fn load_eval(path: &Path) -> Result<EvalResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn intent_tag(input: Option<&Path>, lexicon: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let lexicon = match lexicon {
        Some(dir) => PosLexicon::load_dir(dir)?,
        None => PosLexicon::bundled(),
    };
    let lines: Vec<String> = match input {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .lines()
            .map(str::to_string)
            .collect(),
        None => std::io::stdin().lock().lines().collect::<std::io::Result<_>>()?,
    };
    let mut text = String::new();
    for action in lines.iter().filter(|l| !l.trim().is_empty()) {
        text.push_str(&format!("{action}\t{}\n", classify_intent(action, &lexicon).as_str()));
    }
    write_output(out, &text)
}

fn gradcheck(common: &Common) -> Result<()> {
    let mut worst: f64 = 0.0;
    for (name, r) in check_gradients(common.seed.unwrap_or(0))? {
        emit_line(serde_json::json!({
            "objective": name,
            "max_relative_error": r.max_relative_error,
            "worst_parameter": r.worst_parameter,
            "coordinates": r.coordinates,
        }))?;
        worst = worst.max(r.max_relative_error);
    }
    if worst >= 1e-4 {
        bail!("gradient check failed: max relative error {worst:e}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { common, out } => gen_synth(&common, &out),
        Command::Stats {
            input,
            walkthroughs,
            patterns,
            out,
        } => stats(&input, walkthroughs.as_deref(), patterns.as_deref(), out.as_deref()),
        Command::PretrainStudent(args) => {
            let cfg = train_config(&args.common)?;
            let (student, report) = run_stage1_student_pretrain(&cfg, &transcript_samples(&args.input)?)?;
            student.save(&args.out)?;
            finish_stage(report, &args)
        }
        Command::PretrainTeacher(args) => {
            let cfg = train_config(&args.common)?;
            let (teacher, report) = run_stage2_teacher_pretrain(&cfg, &transcript_samples(&args.input)?)?;
            teacher.save(&args.out)?;
            finish_stage(report, &args)
        }
        Command::FinetuneTeacher { stage, teacher } => {
            let cfg = train_config(&stage.common)?;
            let samples = walkthrough_samples(&stage.input)?;
            let (teacher, report) = run_stage3_teacher_finetune(&cfg, &samples, load_teacher(&teacher)?)?;
            teacher.save(&stage.out)?;
            finish_stage(report, &stage)
        }
        Command::Distill {
            stage,
            teacher,
            student,
        } => {
            let cfg = train_config(&stage.common)?;
            let samples = walkthrough_samples(&stage.input)?;
            let teacher = load_teacher(&teacher)?;
            let (student, report) = run_stage4_distill(&cfg, &samples, &teacher, load_student(&student)?)?;
            student.save(&stage.out)?;
            finish_stage(report, &stage)
        }
        Command::FinetuneStudent { stage, student } => {
            let cfg = train_config(&stage.common)?;
            let samples = walkthrough_samples(&stage.input)?;
            let (student, report) = run_student_finetune(&cfg, &samples, load_student(&student)?)?;
            student.save(&stage.out)?;
            finish_stage(report, &stage)
        }
        Command::Eval { input, model, out } => {
            let samples = walkthrough_samples(&input)?;
            let result = with_scorer(&model, |s| Ok(eval_recall_at_1(s, &samples)?))?;
            if let Some(p) = out {
                write_output(Some(&p), &eval_csv(&result))?;
            }
            eprintln!("recall@1 {:.4} over {} samples", result.overall, result.correct.len());
            emit_line(serde_json::to_string(&result)?)?;
            Ok(())
        }
        Command::Validate9neg { common, input, model } => {
            let samples = transcript_samples(&input)?;
            let seed = train_config(&common)?.seed;
            let recall = with_scorer(&model, |s| Ok(eval_validation_9neg(s, &samples, seed)?))?;
            emit_line(serde_json::json!({ "recall_at_1": recall, "samples": samples.len(), "seed": seed }))?;
            Ok(())
        }
        Command::TTest { a, b } => {
            let report = t_test(&load_eval(&a)?.correct, &load_eval(&b)?.correct)?;
            emit_line(serde_json::to_string(&report)?)?;
            Ok(())
        }
        Command::IntentTag { input, lexicon, out } => intent_tag(input.as_deref(), lexicon.as_deref(), out.as_deref()),
        Command::Gradcheck { common } => gradcheck(&common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
