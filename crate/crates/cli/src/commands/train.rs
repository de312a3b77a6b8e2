use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use myoseg::dataio::load_samples;
use myoseg::model::{save_checkpoint, Checkpoint, LossKind, Network};
use myoseg::optim::{run_epoch, split_cases, AdamState, EpochReport, Sample};
use myoseg::rng::{derive_seed, RngStream};

use super::open_checkpoint;
use crate::config::RunConfig;
use crate::{CliError, CliResult};

/// Stream tag for weight initialisation.
const INIT_TAG: u64 = 0x494e_4954;

pub const RUN_LOG: &str = "run_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub config: PathBuf,
    pub no_bn: bool,
    pub no_residual: bool,
    pub loss: Option<LossKind>,
    pub resume: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub run_log: PathBuf,
    pub final_checkpoint: PathBuf,
    /// Reports of the epochs run by this invocation.
    pub reports: Vec<EpochReport>,
}

pub fn epoch_checkpoint_name(epoch: u64) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

pub fn train(opts: &TrainOptions) -> CliResult<TrainSummary> {
    let mut cfg = RunConfig::load(&opts.config)?;
    if opts.no_bn {
        cfg.network.use_batchnorm = false;
    }
    if opts.no_residual {
        cfg.network.use_residual = false;
    }
    if let Some(l) = opts.loss {
        cfg.network.loss = l;
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    train_run(&cfg, opts.resume.as_deref())
}

fn load_split(cfg: &RunConfig) -> CliResult<(Vec<Sample>, Vec<Sample>)> {
    let load = |p: &Path| load_samples(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())));
    let all = load(&cfg.data.train_manifest)?;
    let (train, val) = match &cfg.data.test_manifest {
        Some(t) => (all, load(t)?),
        None => split_cases(&all, cfg.data.validation_fraction, cfg.train.seed),
    };
    let want = cfg.network.input_size;
    for s in train.iter().chain(&val) {
        let shape = s.image.shape();
        if shape != [want.0, want.1] {
            return Err(CliError::Usage(format!(
                "case {} has {shape:?} slices, network input_size is {want:?}",
                s.case
            )));
        }
        if s.mask.is_none() {
            return Err(CliError::Usage(format!("case {} has no mask", s.case)));
        }
    }
    if train.is_empty() {
        return Err(CliError::Usage("training split is empty".into()));
    }
    Ok((train, val))
}

fn append_line(path: &Path, report: &EpochReport) -> CliResult<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(CliError::runtime)?;
    let line = serde_json::to_string(report).map_err(CliError::runtime)?;
    writeln!(f, "{line}").map_err(CliError::runtime)
}

/// Keep the log lines of epochs up to `epoch`.
fn truncate_log(path: &Path, epoch: u64) -> CliResult<()> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut kept = String::new();
    for line in text.lines() {
        let r: EpochReport = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("unreadable run log {}: {e}", path.display())))?;
        if r.epoch <= epoch {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(CliError::runtime)
}

/// Train with a fully resolved configuration.
pub fn train_run(cfg: &RunConfig, resume: Option<&Path>) -> CliResult<TrainSummary> {
    cfg.validate()?;
    let resumed = resume.map(open_checkpoint).transpose()?;
    if let Some(ck) = &resumed {
        if ck.network.config() != &cfg.network {
            return Err(CliError::Usage("checkpoint network config differs from the run config".into()));
        }
        if ck.seed != cfg.train.seed {
            return Err(CliError::Usage(format!(
                "checkpoint seed {} differs from run seed {}",
                ck.seed, cfg.train.seed
            )));
        }
        if ck.epoch > cfg.train.epochs {
            return Err(CliError::Usage(format!(
                "checkpoint is at epoch {}, beyond the configured {} epochs",
                ck.epoch, cfg.train.epochs
            )));
        }
    }
    let (train, val) = load_split(cfg)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let resolved = serde_json::to_string_pretty(cfg).map_err(CliError::runtime)?;
    fs::write(out.join("run_config.json"), resolved + "\n").map_err(CliError::runtime)?;
    let log = out.join(RUN_LOG);

    let plan = &cfg.train;
    let (mut net, mut state, start) = match resumed {
        Some(ck) => {
            truncate_log(&log, ck.epoch)?;
            (ck.network, ck.optimizer, ck.epoch)
        }
        None => {
            fs::write(&log, "").map_err(CliError::runtime)?;
            let mut rng = RngStream::new(derive_seed(&[plan.seed, INIT_TAG]));
            let net = Network::<f32>::build(&cfg.network, &mut rng).map_err(CliError::usage)?;
            (net, AdamState::new(cfg.optimizer.clone()), 0)
        }
    };

    let mut reports = Vec::new();
    let save = |net: &Network<f32>, state: &AdamState<f32>, epoch: u64, name: &str| {
        let ck = Checkpoint::new(net.clone(), state.clone(), epoch, plan.seed);
        save_checkpoint(&ck, &out.join(name)).map_err(CliError::runtime)
    };
    for epoch in start + 1..=plan.epochs {
        let report = run_epoch(&mut net, &train, &val, plan, &mut state, epoch).map_err(CliError::runtime)?;
        append_line(&log, &report)?;
        eprintln!(
            "epoch {:>3}  loss {:.4}  val dice {}",
            report.epoch,
            report.mean_loss,
            report.val_dice.map_or("-".to_string(), |d| format!("{d:.4}"))
        );
        if plan.checkpoint_every > 0 && epoch % plan.checkpoint_every == 0 {
            save(&net, &state, epoch, &epoch_checkpoint_name(epoch))?;
        }
        reports.push(report);
    }
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    save(&net, &state, plan.epochs, FINAL_CHECKPOINT)?;
    Ok(TrainSummary {
        output_dir: out.clone(),
        run_log: log,
        final_checkpoint,
        reports,
    })
}
