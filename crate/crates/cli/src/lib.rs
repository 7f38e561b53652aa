//! The `iavc` command-line driver.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use iavc::{AblationFlags, BsimOutputSel, Error, Result};

use crate::config::{read_config_file, resolve, RunConfig, SplitSide};

/// Exit status per error class; 0 is success.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidRate(_) | Error::InconsistentFlags(_) => 2,
        Error::Schema(_)
        | Error::DuplicateVideoId(_)
        | Error::MissingSequence { .. }
        | Error::MissingSequences(_)
        | Error::UncoveredGame(_)
        | Error::EmptyCorpus
        | Error::EmptyInput
        | Error::EmptySequence
        | Error::UnknownToken(_)
        | Error::LabelOutOfRange { .. } => 3,
        Error::MissingCheckpoint(_) => 4,
        Error::CorruptFile(_) | Error::VersionMismatch { .. } => 5,
        Error::Alignment(_) => 6,
        Error::Io(_) | Error::Json(_) => 7,
        _ => 8,
    }
}

#[derive(Debug, Parser)]
#[command(name = "iavc", version, about = "Identity-aware sports video captioning")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// desk, paper, g, q-0.5b, q-1.5b, q-3b, l-1b or l-3b.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Annotation file; a synthetic corpus is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FlagArgs {
    #[arg(long)]
    pub no_vclm: bool,
    #[arg(long)]
    pub no_pin: bool,
    #[arg(long)]
    pub no_bsim: bool,
    /// video, player or both.
    #[arg(long)]
    pub bsim_output: Option<String>,
}

impl FlagArgs {
    fn any(&self) -> bool {
        self.no_vclm || self.no_pin || self.no_bsim || self.bsim_output.is_some()
    }

    fn flags(&self) -> Result<AblationFlags> {
        let bsim_output = match self.bsim_output.as_deref() {
            None | Some("both") => BsimOutputSel::Both,
            Some("video") => BsimOutputSel::Video,
            Some("player") => BsimOutputSel::Player,
            Some(other) => return Err(Error::Config(format!("unknown bsim output `{other}`"))),
        };
        Ok(AblationFlags {
            no_vclm: self.no_vclm,
            no_pin: self.no_pin,
            no_bsim: self.no_bsim,
            bsim_output,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the player classifier and write a checkpoint.
    TrainPin {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Train the captioner from a classifier checkpoint.
    TrainCaptioner {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Continue from the checkpoint's optimizer state and epoch count.
        #[arg(long)]
        resume: bool,
        /// Train the classifier jointly instead of freezing it.
        #[arg(long)]
        joint_pin: bool,
        #[command(flatten)]
        flags: FlagArgs,
    },
    /// Caption clips with a trained checkpoint (JSON Lines output).
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, test or all.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
        #[command(flatten)]
        flags: FlagArgs,
    },
    /// Score a captions file against references.
    Eval {
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        /// Adds classifier accuracy over labelled tracker candidates.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and score ablation variants from a classifier checkpoint.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated bottleneck widths.
        #[arg(long, value_delimiter = ',')]
        d_down: Option<Vec<usize>>,
        /// Comma-separated context query counts.
        #[arg(long, value_delimiter = ',')]
        n_q: Option<Vec<usize>>,
    },
    /// Write a synthetic corpus as annotations plus tensor sidecar.
    Synth,
    /// Corpus statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainPin { .. } => "train-pin",
            Command::TrainCaptioner { .. } => "train-captioner",
            Command::Generate { .. } => "generate",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Synth => "synth",
            Command::Stats { .. } => "stats",
        }
    }
}

fn parse_side(s: &str) -> Result<SplitSide> {
    match s {
        "train" => Ok(SplitSide::Train),
        "test" => Ok(SplitSide::Test),
        "all" => Ok(SplitSide::All),
        other => Err(Error::Config(format!("unknown split `{other}`"))),
    }
}

/// Resolves the run configuration for a parsed command line.
pub fn run_config(cli: &Cli) -> Result<RunConfig> {
    let file = cli.common.config.as_deref().map(read_config_file).transpose()?;
    let mut err = None;
    let rc = resolve(cli.command.name(), file, cli.common.preset.as_deref(), |rc| {
        if let Some(s) = cli.common.seed {
            rc.seed = Some(s);
        }
        if let Some(o) = &cli.common.out {
            rc.out = Some(o.clone());
        }
        let apply = |rc: &mut RunConfig| -> Result<()> {
            match &cli.command {
                Command::TrainPin { data, epochs, lr } => {
                    set_data(rc, data);
                    if let Some(e) = epochs {
                        rc.pin.epochs = *e;
                    }
                    if let Some(l) = lr {
                        rc.pin.lr = *l;
                    }
                }
                Command::TrainCaptioner { data, checkpoint, epochs, lr, resume, joint_pin, flags } => {
                    set_data(rc, data);
                    set_checkpoint(rc, checkpoint);
                    if let Some(e) = epochs {
                        rc.captioner.epochs = *e;
                    }
                    if let Some(l) = lr {
                        rc.captioner.lr = *l;
                    }
                    rc.resume |= *resume;
                    if *joint_pin {
                        rc.captioner.freeze_pin = false;
                    }
                    if flags.any() {
                        rc.captioner.flags = flags.flags()?;
                    }
                }
                Command::Generate { data, checkpoint, split, beam, flags } => {
                    set_data(rc, data);
                    set_checkpoint(rc, checkpoint);
                    if let Some(s) = split {
                        rc.generate.split = parse_side(s)?;
                    }
                    if beam.is_some() {
                        rc.generate.beam_size = *beam;
                    }
                    if flags.any() {
                        rc.captioner.flags = flags.flags()?;
                    }
                }
                Command::Eval { candidates, references, checkpoint } => {
                    if candidates.is_some() {
                        rc.eval.candidates = candidates.clone();
                    }
                    if references.is_some() {
                        rc.eval.references = references.clone();
                    }
                    set_checkpoint(rc, checkpoint);
                }
                Command::Ablate { data, checkpoint, epochs, d_down, n_q } => {
                    set_data(rc, data);
                    set_checkpoint(rc, checkpoint);
                    if let Some(e) = epochs {
                        rc.captioner.epochs = *e;
                    }
                    if let Some(d) = d_down {
                        rc.ablate.d_down = d.clone();
                    }
                    if let Some(q) = n_q {
                        rc.ablate.n_q = q.clone();
                    }
                }
                Command::Synth => {}
                Command::Stats { data } => set_data(rc, data),
            }
            Ok(())
        };
        err = apply(rc).err();
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(rc),
    }
}

fn set_data(rc: &mut RunConfig, data: &DataArgs) {
    if data.data.is_some() {
        rc.data = data.data.clone();
    }
}

fn set_checkpoint(rc: &mut RunConfig, checkpoint: &Option<PathBuf>) {
    if checkpoint.is_some() {
        rc.checkpoint = checkpoint.clone();
    }
}

/// Runs one parsed command, printing progress to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let mut rc = run_config(cli)?;
    match cli.command {
        Command::TrainPin { .. } => {
            let run = commands::cmd_train_pin(&mut rc, &mut |e| {
                println!("{}", serde_json::to_string(e).expect("epoch serializes"))
            })?;
            println!("trained classifier in {:.1}s", run.seconds);
        }
        Command::TrainCaptioner { .. } => {
            let run = commands::cmd_train_captioner(&mut rc, &mut |e| {
                println!("{}", serde_json::to_string(e).expect("epoch serializes"))
            })?;
            println!("trained captioner in {:.1}s", run.seconds);
        }
        Command::Generate { .. } => {
            let lines = commands::cmd_generate(&mut rc)?;
            println!("wrote {} captions", lines.len());
        }
        Command::Eval { .. } => {
            let r = commands::cmd_eval(&mut rc)?;
            let c = &r.corpus;
            println!(
                "BLEU-4 {:.4}  ROUGE-L {:.4}  METEOR {:.4}  CIDEr {:.4}",
                c.bleu4, c.rouge_l, c.meteor, c.cider
            );
        }
        Command::Ablate { .. } => {
            println!("{:<24} {:>6} {:>4} {:>8} {:>8}", "variant", "d_down", "n_q", "BLEU-4", "CIDEr");
            commands::cmd_ablate(&mut rc, &mut |r| {
                println!("{:<24} {:>6} {:>4} {:>8.4} {:>8.4}", r.variant, r.d_down, r.n_q, r.bleu4, r.cider)
            })?;
        }
        Command::Synth => {
            let records = commands::cmd_synth(&mut rc)?;
            println!("wrote {} clips", records.len());
        }
        Command::Stats { .. } => {
            commands::cmd_stats(&mut rc)?;
        }
    }
    Ok(())
}
