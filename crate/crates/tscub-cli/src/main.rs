//! Command-line pipeline driver: dataset generation, preprocessing, stream
//! training, evaluation, score fusion, and the self-test suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tscub::data::{self, RunConfig, Split};
use tscub::fusion::{FusionConfig, FusionMethod};
use tscub::pipeline::{self, StreamSpec};

#[derive(Parser)]
#[command(name = "tscub", version, about = "Cross-dataset skeleton action recognition with permutation pretext tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, tscub::Error> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            run.train.seed = seed;
            run.synth.seed = seed;
        }
        Ok(run)
    }
}

#[derive(Args, Clone, Default)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    /// Auxiliary loss trade-off λ for this stream.
    #[arg(long)]
    lambda: Option<f64>,
    /// Ordered-sample ratio p for this stream.
    #[arg(long)]
    ordered_ratio: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Train without any target-domain data.
    #[arg(long)]
    target_free: bool,
}

impl TrainOverrides {
    fn apply(&self, run: &mut RunConfig, stream: StreamSpec) {
        if let Some(v) = self.epochs {
            run.train.epochs = v;
        }
        if let Some(v) = self.lambda {
            match stream {
                StreamSpec::Spatial => run.train.lambda_s = v,
                _ => run.train.lambda_t = v,
            }
        }
        if let Some(v) = self.ordered_ratio {
            match stream {
                StreamSpec::Spatial => run.train.ordered_ratio_s = v,
                _ => run.train.ordered_ratio_t = v,
            }
        }
        if let Some(v) = self.batch_size {
            run.train.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            run.train.learning_rate = v;
        }
        if self.target_free {
            run.train.target_free = true;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-domain benchmark dataset.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        clips_per_class: Option<usize>,
    },
    /// Write a preprocessed copy of a dataset.
    Preprocess {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, name = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable rotation normalization.
        #[arg(long)]
        no_rotate: bool,
        #[arg(long)]
        frames: Option<usize>,
        /// Joint subset preset: full, nj22, nj18 or nj12.
        #[arg(long)]
        subset: Option<String>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
    },
    /// Train the temporal permutation stream.
    TrainTem(TrainCmd),
    /// Train the spatial limb-swap stream.
    TrainSpa(TrainCmd),
    /// Train the source-only supervised baseline.
    TrainBaseline(TrainCmd),
    /// Evaluate a checkpoint on one domain split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse two score files and evaluate the result.
    Fuse {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        scores_a: PathBuf,
        #[arg(long)]
        scores_b: PathBuf,
        /// Dataset directory providing class names.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fusion rule: wam, wrsm, wgm or mp.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        /// Report every fusion rule plus both input streams.
        #[arg(long)]
        all_methods: bool,
    },
    /// Run gradient verification and the permutation property suite.
    Selftest,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint, report, and summary.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: TrainOverrides,
}

fn run_train(cmd: &TrainCmd, stream: StreamSpec) -> Result<(), tscub::Error> {
    let mut run = cmd.config.load()?;
    cmd.overrides.apply(&mut run, stream);
    let outcome = pipeline::train_pipeline(&cmd.data, &run, stream, &cmd.out)?;
    println!(
        "{}: {} epochs x {} steps, final loss {:.4}, source action acc {:.3}{}",
        outcome.summary.stream,
        outcome.summary.epochs,
        outcome.summary.steps_per_epoch,
        outcome.summary.final_j_total,
        outcome.summary.final_action_accuracy_source,
        outcome
            .summary
            .final_ordering_accuracy_target
            .map_or(String::new(), |a| format!(", target ordering acc {a:.3}")),
    );
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    Ok(())
}

fn real_main() -> Result<bool, tscub::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            out,
            classes,
            clips_per_class,
        } => {
            let mut run = config.load()?;
            if let Some(c) = classes {
                run.synth.num_classes = c;
            }
            if let Some(c) = clips_per_class {
                run.synth.clips_per_class = c;
            }
            let manifest = pipeline::generate_pipeline(&run, &out)?;
            let counts: Vec<String> = manifest
                .domains
                .iter()
                .map(|d| {
                    let s = &manifest.splits[&d.name];
                    format!("{}: {} train / {} test", d.name, s.train.len(), s.test.len())
                })
                .collect();
            println!(
                "generated {} classes into {} ({})",
                manifest.classes.len(),
                out.display(),
                counts.join(", ")
            );
        }
        Command::Preprocess {
            config,
            input,
            out,
            no_rotate,
            frames,
            subset,
            noise_sigma,
            noise_seed,
        } => {
            let run = config.load()?;
            let mut pre = run.preprocess.clone();
            if no_rotate {
                pre.rotate = false;
            }
            if let Some(f) = frames {
                pre.frames = f;
            }
            if let Some(s) = subset {
                pre.joint_subset = s;
            }
            if let Some(s) = noise_sigma {
                pre.noise_sigma = s;
            }
            if let Some(s) = noise_seed {
                pre.noise_seed = s;
            }
            pipeline::preprocess_pipeline(&input, &out, &pre)?;
            println!("preprocessed {} -> {}", input.display(), out.display());
        }
        Command::TrainTem(cmd) => run_train(&cmd, StreamSpec::Temporal)?,
        Command::TrainSpa(cmd) => run_train(&cmd, StreamSpec::Spatial)?,
        Command::TrainBaseline(cmd) => run_train(&cmd, StreamSpec::Baseline)?,
        Command::Eval {
            data,
            checkpoint,
            domain,
            split,
            out,
        } => {
            let split = Split::parse(&split)?;
            let outcome = pipeline::eval_pipeline(&data, &checkpoint, &domain, split, &out)?;
            println!(
                "{} on {}/{}: accuracy {:.4} over {} samples (ordering head {:.4})",
                outcome.summary.stream,
                outcome.summary.domain,
                outcome.summary.split,
                outcome.summary.accuracy,
                outcome.summary.num_samples,
                outcome.summary.ordering_accuracy,
            );
            println!("scores: {}", outcome.scores_path.display());
        }
        Command::Fuse {
            config,
            scores_a,
            scores_b,
            data,
            out,
            method,
            lambda1,
            lambda2,
            all_methods,
        } => {
            let run = config.load()?;
            let manifest = data::load_manifest(&data)?;
            let mut fusion = run.fusion;
            if let Some(m) = method {
                fusion.method = FusionMethod::parse(&m)?;
            }
            if let Some(l) = lambda1 {
                fusion.lambda1 = l;
            }
            if let Some(l) = lambda2 {
                fusion.lambda2 = l;
            }
            let fusion = FusionConfig { ..fusion };
            let outcome = pipeline::fuse_pipeline(
                &scores_a,
                &scores_b,
                &fusion,
                all_methods,
                run.hash(),
                vec![run.train.seed],
                manifest.classes.clone(),
                &out,
            )?;
            print!("{}", outcome.report.table());
            println!("report: {}", outcome.report_path.display());
        }
        Command::Selftest => {
            let results = tscub::selftest::run_selftest()?;
            let mut all_pass = true;
            for r in &results {
                println!(
                    "[{}] {} — {}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all_pass &= r.pass;
            }
            return Ok(all_pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
