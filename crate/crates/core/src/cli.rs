//! `dapnet` command-line interface.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{load_dataset, load_results, save_results, Layout, RGBTSequence};
use crate::error::{DapError, Result};
use crate::evaluation::{export, SequenceEval};
use crate::model::{ModelParams, NetConfig};
use crate::tracking::Tracker;
use crate::training::{train_offline, write_log, Variant};

#[derive(Debug, Parser)]
#[command(name = "dapnet", version, about = "RGB-thermal tracking with dense aggregation and channel pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test suite.
    Synth(SynthArgs),
    /// Multi-domain offline training; one fc6 branch per training sequence.
    Train(TrainArgs),
    /// Track every sequence of a dataset from its first ground-truth box.
    Track(TrackArgs),
    /// Precision/success curves, attribute table and summary.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output root; sequences go to `train/` and `test/` below it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "rgbt234")]
    pub layout: Layout,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset root (its `train/` subdirectory is used when present).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint path; the loss log is written next to it as `<out>.log.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "full")]
    pub variant: Variant,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset root or a single sequence directory (`test/` is used when present).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory receiving one `<sequence>.txt` per sequence.
    #[arg(long)]
    pub out: PathBuf,
    /// Feed zero thermal patches.
    #[arg(long)]
    pub zero_thermal: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding `<sequence>.txt` result files.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pr_threshold: Option<f64>,
    /// Label of the summary row.
    #[arg(long, default_value = "full")]
    pub variant: Variant,
}

impl DapError {
    /// Process exit status: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            DapError::Config(_) => 1,
            DapError::NonFiniteLoss { .. }
            | DapError::DegenerateScores
            | DapError::SizeMismatch { .. }
            | DapError::SpatialMismatch { .. }
            | DapError::ChannelMismatch { .. }
            | DapError::Upsample { .. } => 3,
            _ => 2,
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// `root/sub` when it exists, else `root`.
fn subset(root: &Path, sub: &str) -> PathBuf {
    let p = root.join(sub);
    if p.is_dir() {
        p
    } else {
        root.to_path_buf()
    }
}

fn load_nonempty(root: &Path) -> Result<Vec<RGBTSequence>> {
    let seqs = load_dataset(root)?;
    if seqs.is_empty() {
        return Err(DapError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no sequence directories"),
        ));
    }
    Ok(seqs)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = load_config(&args.common.config)?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let suite = cfg.suite(seed)?;
    for (part, seqs) in [("train", suite.train()?), ("test", suite.test()?)] {
        for seq in seqs {
            let dir = args.out.join(part).join(&seq.name);
            seq.save(&dir, args.layout)?;
        }
    }
    log::info!("wrote {} train and {} test sequences to {}", suite.train_sequences, suite.test_sequences, args.out.display());
    Ok(())
}

/// Path of the training log that accompanies a checkpoint.
pub fn log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".log.csv");
    PathBuf::from(s)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(&args.common.config)?;
    let seed = cfg.require_seed(args.common.seed)?;
    let mut tc = cfg.train_config(seed)?;
    tc.pruning = args.variant.pruning();
    let net = NetConfig {
        fusion: args.variant.fusion(),
        ..cfg.net_config()?
    };
    let domains = load_nonempty(&subset(&args.dataset, "train"))?;
    let model = ModelParams::<f32>::init(&net, domains.len(), cfg.init()?, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut rows = Vec::new();
    let model = train_offline(&domains, model, &tc, |row| {
        log::debug!("iteration {} domain {} loss {:.4}", row.iteration, row.domain, row.loss);
        rows.push(row.clone());
    })?;
    let mut ck = Checkpoint::new(model);
    ck.extra.insert("variant".into(), args.variant.name().into());
    ck.extra.insert("seed".into(), seed.to_string());
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DapError::io(dir, e))?;
    }
    ck.save(&args.out)?;
    let lp = log_path(&args.out);
    let file = fs::File::create(&lp).map_err(|e| DapError::io(&lp, e))?;
    write_log(&mut BufWriter::new(file), args.variant, &tc, &rows).map_err(|e| DapError::io(&lp, e))?;
    Ok(())
}

pub fn track(args: &TrackArgs) -> Result<()> {
    let cfg = load_config(&args.common.config)?;
    let seed = cfg.require_seed(args.common.seed)?;
    let mut tc = cfg.tracker_config(seed)?;
    tc.zero_thermal = args.zero_thermal;
    let ck = Checkpoint::<f32>::load(&args.checkpoint)?;
    let seqs = load_nonempty(&subset(&args.dataset, "test"))?;
    fs::create_dir_all(&args.out).map_err(|e| DapError::io(&args.out, e))?;
    for seq in &seqs {
        let reports = Tracker::run(&ck.model, seq, tc.clone())?;
        let boxes: Vec<_> = reports.iter().map(|r| r.bbox).collect();
        save_results(&args.out.join(format!("{}.txt", seq.name)), &boxes)?;
        log::info!("tracked {} ({} frames)", seq.name, seq.len());
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let ec = cfg.eval_config(args.pr_threshold)?;
    let root = subset(&args.dataset, "test");
    let seqs = load_nonempty(&root)?;
    let mut evals = Vec::new();
    for seq in &seqs {
        let path = args.results.join(format!("{}.txt", seq.name));
        if !path.is_file() {
            return Err(DapError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("no result for sequence {}", seq.name)),
            ));
        }
        let res = load_results(&path)?;
        evals.push(SequenceEval::new(&seq.name, seq.attributes.clone(), &res, &seq.gt)?);
    }
    let dataset = args
        .dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    export(&evals, &ec, args.variant.name(), &dataset, &args.out)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
