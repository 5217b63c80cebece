//! The training subcommands. Each one runs a single pipeline stage so that
//! full pipelines compose from checkpoints on disk: `train-teacher` feeds
//! `train-dnd`, whose student feeds `train-dndpp`; `train-osd` distills in
//! one step, or trains a plain baseline with `--from-scratch`.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use dnd_core::datagen::{read_features, Dataset};
use dnd_core::distill::{
    train_student, train_teacher, BinaryAttribute, EpochLoss, ManifestStage, PipelineManifest,
    Stage,
};
use dnd_core::model::{EmbeddingNet, NetArch, TrainSpec};

use crate::util::{load_config, need, note, parse_hidden, write_text, Failure};

/// Flags shared by every training command.
#[derive(Args)]
pub struct CommonTrain {
    /// Input feature file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Advantaged attribute category
    #[arg(long)]
    high: Option<String>,
    /// Disadvantaged attribute category
    #[arg(long)]
    low: Option<String>,
    /// Training epochs for this stage
    #[arg(long)]
    epochs: Option<u32>,
    /// Initial learning rate
    #[arg(long)]
    lr0: Option<f64>,
    /// Learning rate decay factor
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Epochs between learning rate decays
    #[arg(long)]
    decay_every: Option<u32>,
    /// Minibatch size
    #[arg(long)]
    batch_size: Option<u32>,
    /// Seed for initialization and shuffling
    #[arg(long)]
    seed: Option<u64>,
    /// Train on only the first N samples of each identity; 0 uses all
    #[arg(long)]
    samples_head: Option<u32>,
    /// Checkpoint output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest output path; defaults next to --out
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Flat TOML config; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Config-file counterpart of [`CommonTrain`] after merging; each command's
/// file type copies these fields so unknown keys stay rejected.
#[derive(Default)]
struct CommonOpts {
    data: Option<PathBuf>,
    high: Option<String>,
    low: Option<String>,
    epochs: Option<u32>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    decay_every: Option<u32>,
    batch_size: Option<u32>,
    seed: Option<u64>,
    samples_head: Option<u32>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
}

/// A fully resolved stage: validated spec, loaded data, output paths.
struct StageSetup {
    data_path: PathBuf,
    train_ds: Dataset,
    attr: BinaryAttribute,
    spec: TrainSpec,
    out: PathBuf,
    manifest: PathBuf,
}

fn resolve(flags: CommonTrain, file: CommonOpts) -> Result<StageSetup, Failure> {
    let data_path = need(flags.data.or(file.data), "data")?;
    let high = need(flags.high.or(file.high), "high")?;
    let low = need(flags.low.or(file.low), "low")?;
    let out = need(flags.out.or(file.out), "out")?;
    let mut spec = TrainSpec::default();
    if let Some(v) = flags.epochs.or(file.epochs) {
        spec.epochs = v;
    }
    if let Some(v) = flags.lr0.or(file.lr0) {
        spec.lr0 = v;
    }
    if let Some(v) = flags.lr_decay.or(file.lr_decay) {
        spec.lr_decay_factor = v;
    }
    if let Some(v) = flags.decay_every.or(file.decay_every) {
        spec.lr_decay_interval_epochs = v;
    }
    if let Some(v) = flags.batch_size.or(file.batch_size) {
        spec.batch_size = v;
    }
    if let Some(v) = flags.seed.or(file.seed) {
        spec.seed = v;
    }
    spec.validate()?;
    let attr = BinaryAttribute::identity("group", &high, &low)?;
    let manifest = flags
        .manifest
        .or(file.manifest)
        .unwrap_or_else(|| out.with_extension("manifest.json"));

    let ds = read_features(&data_path)?;
    let head = flags.samples_head.or(file.samples_head).unwrap_or(0);
    let train_ds = if head > 0 {
        ds.split_head_tail(head as usize).0
    } else {
        ds
    };
    Ok(StageSetup {
        data_path,
        train_ds,
        attr,
        spec,
        out,
        manifest,
    })
}

fn net_arch_of(net: &EmbeddingNet) -> NetArch {
    let layers = net.layers();
    NetArch {
        input_dim: net.input_dim(),
        hidden: layers[..layers.len() - 1]
            .iter()
            .map(|l| l.out_dim())
            .collect(),
        embed_dim: net.embed_dim(),
        num_identities: net.num_identities(),
    }
}

fn write_manifest(
    command: &str,
    setup: &StageSetup,
    arch: &NetArch,
    stage: Stage,
    trace: &[EpochLoss],
) -> Result<(), Failure> {
    let manifest = PipelineManifest {
        command: command.to_string(),
        attribute: setup.attr.clone(),
        arch: arch.clone(),
        spec: setup.spec.clone(),
        data: setup.data_path.display().to_string(),
        stages: vec![ManifestStage {
            name: stage.as_str().to_string(),
            checkpoint: setup.out.display().to_string(),
            loss_trace: trace.to_vec(),
        }],
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Failure::run(format!("manifest: {e}")))?;
    write_text(&setup.manifest, &format!("{json}\n"))
}

fn finish(
    command: &str,
    setup: &StageSetup,
    net: &EmbeddingNet,
    stage: Stage,
    trace: &[EpochLoss],
    trained_on: usize,
) -> Result<(), Failure> {
    net.save(&setup.out)?;
    write_manifest(command, setup, &net_arch_of(net), stage, trace)?;
    note(format!(
        "{command}: {} epochs on {trained_on} samples, checkpoint {}",
        trace.len(),
        setup.out.display()
    ));
    Ok(())
}

#[derive(Args)]
pub struct TeacherArgs {
    #[command(flatten)]
    common: CommonTrain,
    /// Hidden layer widths, comma separated; empty for none
    #[arg(long)]
    hidden: Option<String>,
    /// Embedding dimension
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TeacherFile {
    data: Option<PathBuf>,
    high: Option<String>,
    low: Option<String>,
    epochs: Option<u32>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    decay_every: Option<u32>,
    batch_size: Option<u32>,
    seed: Option<u64>,
    samples_head: Option<u32>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    hidden: Option<String>,
    embed_dim: Option<usize>,
}

impl TeacherFile {
    fn common(self) -> CommonOpts {
        CommonOpts {
            data: self.data,
            high: self.high,
            low: self.low,
            epochs: self.epochs,
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            batch_size: self.batch_size,
            seed: self.seed,
            samples_head: self.samples_head,
            out: self.out,
            manifest: self.manifest,
        }
    }
}

pub fn run_teacher(args: TeacherArgs) -> Result<(), Failure> {
    let file: TeacherFile = load_config(args.common.config.as_deref())?;
    let hidden = args.hidden.or(file.hidden.clone());
    let embed_dim = args.embed_dim.or(file.embed_dim);
    let setup = resolve(args.common, file.common())?;

    let arch = NetArch {
        input_dim: setup.train_ds.input_dim(),
        hidden: parse_hidden(hidden.as_deref().unwrap_or("32"))?,
        embed_dim: embed_dim.unwrap_or(16),
        num_identities: setup.train_ds.num_identities,
    };
    let high_ds = setup.train_ds.filter_by_attribute(&setup.attr.high)?;
    let (net, trace) = train_teacher(&high_ds, &setup.attr, &arch, &setup.spec)?;
    finish("train-teacher", &setup, &net, Stage::Teacher, &trace, high_ds.len())
}

#[derive(Args)]
pub struct DndArgs {
    #[command(flatten)]
    common: CommonTrain,
    /// Teacher checkpoint to distill from
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Distillation weight for the disadvantaged-category stage
    #[arg(long)]
    lambda1: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct DndFile {
    data: Option<PathBuf>,
    high: Option<String>,
    low: Option<String>,
    epochs: Option<u32>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    decay_every: Option<u32>,
    batch_size: Option<u32>,
    seed: Option<u64>,
    samples_head: Option<u32>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    teacher: Option<PathBuf>,
    lambda1: Option<f64>,
}

impl DndFile {
    fn common(self) -> CommonOpts {
        CommonOpts {
            data: self.data,
            high: self.high,
            low: self.low,
            epochs: self.epochs,
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            batch_size: self.batch_size,
            seed: self.seed,
            samples_head: self.samples_head,
            out: self.out,
            manifest: self.manifest,
        }
    }
}

pub fn run_dnd(args: DndArgs) -> Result<(), Failure> {
    let file: DndFile = load_config(args.common.config.as_deref())?;
    let teacher_path = need(args.teacher.or(file.teacher.clone()), "teacher")?;
    let lambda1 = args.lambda1.or(file.lambda1);
    let mut setup = resolve(args.common, file.common())?;
    if let Some(l) = lambda1 {
        setup.spec.lambda1 = l;
    }
    setup.spec.validate()?;

    let teacher = EmbeddingNet::load(&teacher_path)?;
    let low_ds = setup.train_ds.filter_by_attribute(&setup.attr.low)?;
    let (student, trace) = train_student(
        &teacher,
        &low_ds,
        setup.spec.lambda1,
        &setup.spec,
        teacher.clone(),
    )?;
    finish("train-dnd", &setup, &student, Stage::Student, &trace, low_ds.len())
}

#[derive(Args)]
pub struct DndppArgs {
    #[command(flatten)]
    common: CommonTrain,
    /// Distilled student checkpoint to refine
    #[arg(long)]
    student: Option<PathBuf>,
    /// Distillation weight for the full-data refinement stage
    #[arg(long)]
    lambda2: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct DndppFile {
    data: Option<PathBuf>,
    high: Option<String>,
    low: Option<String>,
    epochs: Option<u32>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    decay_every: Option<u32>,
    batch_size: Option<u32>,
    seed: Option<u64>,
    samples_head: Option<u32>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    student: Option<PathBuf>,
    lambda2: Option<f64>,
}

impl DndppFile {
    fn common(self) -> CommonOpts {
        CommonOpts {
            data: self.data,
            high: self.high,
            low: self.low,
            epochs: self.epochs,
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            batch_size: self.batch_size,
            seed: self.seed,
            samples_head: self.samples_head,
            out: self.out,
            manifest: self.manifest,
        }
    }
}

pub fn run_dndpp(args: DndppArgs) -> Result<(), Failure> {
    let file: DndppFile = load_config(args.common.config.as_deref())?;
    let student_path = need(args.student.or(file.student.clone()), "student")?;
    let lambda2 = args.lambda2.or(file.lambda2);
    let mut setup = resolve(args.common, file.common())?;
    if let Some(l) = lambda2 {
        setup.spec.lambda2 = l;
    }
    setup.spec.validate()?;

    // The refinement stage distills the full data from the Step-1 student,
    // starting at that student.
    let student = EmbeddingNet::load(&student_path)?;
    let (refined, trace) = train_student(
        &student,
        &setup.train_ds,
        setup.spec.lambda2,
        &setup.spec,
        student.clone(),
    )?;
    let n = setup.train_ds.len();
    finish("train-dndpp", &setup, &refined, Stage::FinalStudent, &trace, n)
}

#[derive(Args)]
pub struct OsdArgs {
    #[command(flatten)]
    common: CommonTrain,
    /// Teacher checkpoint to distill from
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Train a plain classification baseline without any teacher
    #[arg(long)]
    from_scratch: bool,
    /// Distillation weight; must stay 0 with --from-scratch
    #[arg(long)]
    lambda: Option<f64>,
    /// Hidden layer widths for --from-scratch, comma separated
    #[arg(long)]
    hidden: Option<String>,
    /// Embedding dimension for --from-scratch
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct OsdFile {
    data: Option<PathBuf>,
    high: Option<String>,
    low: Option<String>,
    epochs: Option<u32>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    decay_every: Option<u32>,
    batch_size: Option<u32>,
    seed: Option<u64>,
    samples_head: Option<u32>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    teacher: Option<PathBuf>,
    from_scratch: Option<bool>,
    lambda: Option<f64>,
    hidden: Option<String>,
    embed_dim: Option<usize>,
}

impl OsdFile {
    fn common(self) -> CommonOpts {
        CommonOpts {
            data: self.data,
            high: self.high,
            low: self.low,
            epochs: self.epochs,
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            batch_size: self.batch_size,
            seed: self.seed,
            samples_head: self.samples_head,
            out: self.out,
            manifest: self.manifest,
        }
    }
}

pub fn run_osd(args: OsdArgs) -> Result<(), Failure> {
    let file: OsdFile = load_config(args.common.config.as_deref())?;
    let teacher_path = args.teacher.or(file.teacher.clone());
    let from_scratch = args.from_scratch || file.from_scratch.unwrap_or(false);
    let lambda = args.lambda.or(file.lambda);
    let hidden = args.hidden.or(file.hidden.clone());
    let embed_dim = args.embed_dim.or(file.embed_dim);
    let mut setup = resolve(args.common, file.common())?;

    let (net, trace) = match (teacher_path, from_scratch) {
        (Some(_), true) => {
            return Err(Failure::usage("--teacher and --from-scratch are mutually exclusive"));
        }
        (None, false) => {
            return Err(Failure::usage("need --teacher or --from-scratch"));
        }
        (Some(path), false) => {
            if hidden.is_some() || embed_dim.is_some() {
                return Err(Failure::usage(
                    "--hidden and --embed-dim only apply with --from-scratch",
                ));
            }
            if let Some(l) = lambda {
                setup.spec.lambda_osd = l;
            }
            setup.spec.validate()?;
            let teacher = EmbeddingNet::load(&path)?;
            train_student(
                &teacher,
                &setup.train_ds,
                setup.spec.lambda_osd,
                &setup.spec,
                teacher.clone(),
            )?
        }
        (None, true) => {
            if lambda.is_some_and(|l| l != 0.0) {
                return Err(Failure::usage(
                    "--from-scratch trains without a teacher; lambda must be 0",
                ));
            }
            setup.spec.lambda_osd = 0.0;
            let arch = NetArch {
                input_dim: setup.train_ds.input_dim(),
                hidden: parse_hidden(hidden.as_deref().unwrap_or("32"))?,
                embed_dim: embed_dim.unwrap_or(16),
                num_identities: setup.train_ds.num_identities,
            };
            let init = EmbeddingNet::seeded(&arch, setup.spec.seed)?;
            train_student(&init, &setup.train_ds, 0.0, &setup.spec, init.clone())?
        }
    };
    let n = setup.train_ds.len();
    finish("train-osd", &setup, &net, Stage::Student, &trace, n)
}
