use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bcresnet::audio::{read_wav, write_featdump, AugmentConfig, MelFrontend};
use bcresnet::block::{CombineMode, ReduceMode};
use bcresnet::dataset::{BatchLoader, DatasetSource, Split, Splits, Version};
use bcresnet::gradcheck::{self, Fault, GradcheckOptions, Stencil};
use bcresnet::model::{
    cost_report, load_checkpoint, load_checkpoint_expecting, ModelConfig, ModelParams,
};
use bcresnet::train::{
    evaluate, train, TrainConfig, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_FILE,
};
use bcresnet::Error;

/// BC-ResNet keyword spotting: cost reports, training, evaluation, gradient checks and
/// feature dumps.
#[derive(Parser)]
#[command(name = "bcresnet", version)]
struct Cli {
    /// Worker threads for intra-op parallelism. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print parameter and multiply counts per layer.
    Count {
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 12)]
        classes: usize,
        #[command(flatten)]
        variant: Variant,
    },
    /// Train a model and write metrics and checkpoints.
    Train(TrainArgs),
    /// Top-1 accuracy of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        data: DataArgs,
        /// Refuse checkpoints built with another tau.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = StencilArg::Five)]
        stencil: StencilArg,
        /// Corrupt a derivative on purpose to exercise the checker.
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Write the log-Mel spectrogram of a WAV file as raw little-endian floats.
    Featdump {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// `micro` or the root of a Speech Commands directory.
    #[arg(long, default_value = "micro")]
    dataset: String,
    #[arg(long = "dataset-version", default_value = "v2")]
    version: Version,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Clone, Copy)]
struct Variant {
    #[arg(long, value_enum, default_value_t = ReduceArg::Avg)]
    reduce: ReduceArg,
    #[arg(long, value_enum, default_value_t = CombineArg::BroadcastAdd)]
    combine: CombineArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    #[command(flatten)]
    variant: Variant,
    /// SpecAugment frequency mask parameter; the default depends on tau.
    #[arg(long)]
    freq_mask: Option<usize>,
    #[arg(long)]
    time_mask: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    /// Record real wall time in the metrics log.
    #[arg(long)]
    wall_time: bool,
}

#[derive(ValueEnum, Clone, Copy)]
enum ReduceArg {
    Avg,
    Max,
}

#[derive(ValueEnum, Clone, Copy)]
enum CombineArg {
    BroadcastAdd,
    SigmoidAttention,
}

#[derive(ValueEnum, Clone, Copy)]
enum StencilArg {
    Three,
    Five,
}

#[derive(ValueEnum, Clone, Copy)]
enum FaultArg {
    Swish,
}

impl Variant {
    fn apply(self, mut cfg: ModelConfig) -> ModelConfig {
        cfg.reduce_mode = match self.reduce {
            ReduceArg::Avg => ReduceMode::Avg,
            ReduceArg::Max => ReduceMode::Max,
        };
        cfg.combine_mode = match self.combine {
            CombineArg::BroadcastAdd => CombineMode::BroadcastAdd,
            CombineArg::SigmoidAttention => CombineMode::SigmoidAttention,
        };
        cfg
    }
}

enum Failure {
    Verification(String),
    Usage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteLoss { .. } => Failure::Verification(e.to_string()),
            e => Failure::Usage(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Count {
            tau,
            frames,
            classes,
            variant,
        } => {
            let cfg = variant.apply(ModelConfig::bc_resnet(tau).with_classes(classes));
            println!("{}", cost_report(&cfg, frames)?);
        }
        Command::Train(args) => cmd_train(args)?,
        Command::Eval {
            checkpoint,
            split,
            data,
            tau,
            batch_size,
        } => {
            let ckpt = match tau {
                Some(t) => {
                    let header = load_checkpoint(&checkpoint)?;
                    let expected = ModelConfig {
                        tau: t,
                        ..header.model.cfg
                    };
                    load_checkpoint_expecting(&checkpoint, &expected)?
                }
                None => load_checkpoint(&checkpoint)?,
            };
            let splits = open(&data)?;
            if splits.n_classes != ckpt.model.cfg.n_classes {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint predicts {} classes, dataset has {}",
                    ckpt.model.cfg.n_classes, splits.n_classes
                ))
                .into());
            }
            let loader =
                BatchLoader::eval(splits.get(split).to_vec(), splits.store.clone(), batch_size);
            let acc = evaluate(&ckpt.model, &loader)?;
            println!("{split} accuracy {acc:.4} ({} examples)", loader.len());
        }
        Command::Gradcheck {
            seed,
            stencil,
            inject_fault,
        } => {
            let opts = GradcheckOptions {
                stencil: match stencil {
                    StencilArg::Three => Stencil::ThreePoint,
                    StencilArg::Five => Stencil::FivePoint,
                },
                fault: inject_fault.map(|FaultArg::Swish| Fault::SwishDerivative),
                ..GradcheckOptions::with_seed(seed)
            };
            let report = gradcheck::run(&opts)?;
            println!("{report}");
            if !report.passed() {
                return Err(Failure::Verification("gradient check failed".into()));
            }
        }
        Command::Featdump { input, output } => {
            let spec = MelFrontend::new().log_mel(&read_wav(&input)?);
            let file = File::create(&output).map_err(Error::from)?;
            write_featdump(&spec, BufWriter::new(file))?;
            println!(
                "{} x {} -> {}",
                spec.n_mels(),
                spec.frames(),
                output.display()
            );
        }
    }
    Ok(())
}

fn open(data: &DataArgs) -> Result<Splits, Error> {
    Splits::open(
        &DatasetSource::parse(&data.dataset, data.version)?,
        data.seed,
    )
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let splits = open(&args.data)?;
    let cfg = args
        .variant
        .apply(ModelConfig::bc_resnet(args.tau).with_classes(splits.n_classes));
    cfg.validate()?;

    let mut augment = if args.no_augment {
        AugmentConfig::none()
    } else {
        AugmentConfig::for_tau(args.tau)
    };
    if let Some(f) = args.freq_mask {
        augment.spec_augment.freq_param = f;
        augment.spec_augment.enabled = true;
    }
    if let Some(t) = args.time_mask {
        augment.spec_augment.time_param = t;
        augment.spec_augment.enabled = true;
    }

    let seed = args.data.seed;
    let store = splits.store.clone();
    let train_data =
        BatchLoader::train(splits.train, store.clone(), augment, args.batch_size, seed);
    let val = BatchLoader::eval(splits.val, store.clone(), args.batch_size);
    let test = BatchLoader::eval(splits.test, store, args.batch_size);

    let model = ModelParams::build(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut tc = TrainConfig::new(args.epochs, seed);
    tc.out_dir = Some(args.out.clone());
    tc.deterministic = !args.wall_time;
    let out = train(model, &train_data, Some(&val), &tc)?;

    if let Some(m) = out.metrics.last() {
        println!(
            "epochs {}  train loss {:.4}  train acc {:.4}",
            m.epoch, m.train_loss, m.train_acc
        );
    } else {
        println!("epochs 0  (initialized model only)");
    }
    if out.best_epoch > 0 {
        println!("best val epoch {}", out.best_epoch);
    }
    if !test.is_empty() && !out.metrics.is_empty() {
        println!("test acc (final) {:.4}", evaluate(&out.model, &test)?);
    }
    for f in [METRICS_FILE, BEST_CHECKPOINT, FINAL_CHECKPOINT] {
        println!("wrote {}", args.out.join(f).display());
    }
    Ok(())
}
