use std::path::{Path, PathBuf};

use harforge_core::config::Toggles;
use harforge_core::data::synthetic::{self, SyntheticConfig};
use harforge_core::data::{
    apply_stats, fit_stats, segment, stack_segments, DatasetManifest, LabelSpace, NormalizationStats, Segment,
    SensorSequence, Split, WindowConfig,
};
use harforge_core::eval::{predict_segments, samplewise_predict, write_predictions, EvalReport};
use harforge_core::model::{export_attention, model_forward, ForwardOptions, ModelParams};
use harforge_core::rng::seeded;
use harforge_core::trainer::{fit, write_history, Checkpoint, DatasetInfo, Trainer, Validation};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::run_config::{apply_toggles, load_manifest, RunConfig};

/// Options shared by every command that reads a run configuration.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub toggles: Vec<(String, bool)>,
}

impl Common {
    /// The configuration file (or defaults) with flags applied on top.
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        apply_toggles(&mut cfg.train.toggles, &self.toggles);
        Ok(cfg)
    }
}

fn require<'a>(value: &'a Option<PathBuf>, what: &str, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::input(format!("no {what} given (pass {flag} or set it in the config)")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.is_file() {
        return Err(CliError::input(format!("checkpoint not found: {}", path.display())));
    }
    Checkpoint::load(path).map_err(CliError::input)
}

fn normalize(seqs: &[SensorSequence], stats: &NormalizationStats) -> CliResult<Vec<SensorSequence>> {
    Ok(seqs.iter().map(|s| apply_stats(s, stats)).collect::<Result<_, _>>()?)
}

fn cut_windows(seqs: &[SensorSequence], cfg: &WindowConfig, labels: &LabelSpace) -> CliResult<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        out.extend(segment(s, i, cfg, labels)?.segments);
    }
    Ok(out)
}

/// Sample-wise predictions and the pooled report over `seqs`.
fn score_sequences(
    params: &ModelParams,
    seqs: &[SensorSequence],
    labels: &LabelSpace,
    include_null_in_fm: bool,
) -> CliResult<(EvalReport, Vec<Vec<usize>>)> {
    let preds: Vec<Vec<usize>> = seqs
        .par_iter()
        .map(|s| samplewise_predict(params, s))
        .collect::<Result<_, _>>()?;
    let reports = seqs
        .iter()
        .zip(&preds)
        .map(|(s, p)| EvalReport::from_streams(s.labels(), p, labels, include_null_in_fm))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((EvalReport::merge(&reports, labels, include_null_in_fm)?, preds))
}

fn write_report(report: &EvalReport, dir: &Path, stem: &str) -> CliResult<()> {
    report.write_json(&dir.join(format!("{stem}_report.json")))?;
    report.write_confusion_csv(&dir.join(format!("{stem}_confusion.csv")))?;
    Ok(())
}

/// Checkpoint, its dataset description and the label space it was trained on.
struct Loaded {
    ckpt: Checkpoint,
    info: DatasetInfo,
    labels: LabelSpace,
}

fn load_trained(path: &Path, requested: &[(String, bool)]) -> CliResult<Loaded> {
    let ckpt = load_checkpoint(path)?;
    let have = ckpt.header.toggles;
    let mut want = have;
    apply_toggles(&mut want, requested);
    if want != have {
        return Err(CliError::input(format!(
            "requested toggles {} do not match the checkpoint's {}",
            describe(&want),
            describe(&have)
        )));
    }
    let info = ckpt
        .header
        .dataset
        .clone()
        .ok_or_else(|| CliError::input(format!("{} carries no dataset description", path.display())))?;
    let labels = info.label_space()?;
    Ok(Loaded { ckpt, info, labels })
}

fn describe(t: &Toggles) -> String {
    let f = |b: bool| if b { "on" } else { "off" };
    format!(
        "(cie={}, age_attention={}, mixup={}, center_loss={})",
        f(t.cie),
        f(t.age_attention),
        f(t.mixup),
        f(t.center_loss)
    )
}

/// Loads a split and brings it into the checkpoint's input space.
fn load_for_model(manifest: &DatasetManifest, split: Split, loaded: &Loaded) -> CliResult<Vec<SensorSequence>> {
    let manifest_labels = manifest.label_space()?;
    if manifest_labels != loaded.labels {
        return Err(CliError::input(format!(
            "manifest labels {:?} differ from the checkpoint's {:?}",
            manifest_labels.names(),
            loaded.labels.names()
        )));
    }
    let seqs = manifest.load_split(split)?;
    if seqs.is_empty() {
        return Err(CliError::input(format!("the manifest has no `{split}` recordings")));
    }
    let d = loaded.ckpt.params.config().channels;
    if let Some(s) = seqs.iter().find(|s| s.channels() != d) {
        return Err(CliError::input(format!(
            "recording `{}` has {} channels, the model expects {d}",
            s.id,
            s.channels()
        )));
    }
    if seqs[0].channel_names != loaded.info.channels {
        log::warn!(
            "channel names {:?} differ from the training channels {:?}",
            seqs[0].channel_names,
            loaded.info.channels
        );
    }
    match &loaded.info.normalization {
        Some(stats) => normalize(&seqs, stats),
        None => Ok(seqs),
    }
}

pub fn train(common: &Common, resume: Option<&Path>, epochs: Option<usize>) -> CliResult<()> {
    let mut cfg = common.resolve()?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.train.validate().map_err(CliError::input)?;
    let manifest_path = require(&cfg.manifest, "dataset manifest", "--manifest")?;
    let out = require(&cfg.out, "output directory", "--out")?.to_path_buf();
    let manifest = load_manifest(manifest_path)?;
    let labels = manifest.label_space()?;
    let raw_train = manifest.load_split(Split::Train)?;
    if raw_train.is_empty() {
        return Err(CliError::input("the manifest has no `train` recordings"));
    }
    let raw_val = manifest.load_split(Split::Val)?;
    let channels = raw_train[0].channels();
    if let Some(s) = raw_val.iter().find(|s| s.channels() != channels) {
        return Err(CliError::input(format!(
            "validation recording `{}` has {} channels, training has {channels}",
            s.id,
            s.channels()
        )));
    }
    let stats = fit_stats(&raw_train)?;
    let train_seqs = normalize(&raw_train, &stats)?;
    let val_seqs = normalize(&raw_val, &stats)?;
    let windows = cut_windows(&train_seqs, &cfg.train.window_config(), &labels)?;
    if windows.is_empty() {
        return Err(CliError::input(format!(
            "no training windows: every recording is shorter than {} samples or filtered out",
            cfg.train.window
        )));
    }
    let info = DatasetInfo {
        labels: labels.names().to_vec(),
        null_label: labels.null_index().map(|n| labels.name(n).to_string()),
        channels: raw_train[0].channel_names.clone(),
        normalization: Some(stats),
    };

    let mut trainer = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.header.dataset.as_ref() != Some(&info) {
                return Err(CliError::input(format!(
                    "{} was trained on different labels, channels or statistics",
                    path.display()
                )));
            }
            let mut t = Trainer::from_checkpoint(ckpt)?;
            let mut expected = t.config().clone();
            expected.epochs = cfg.train.epochs;
            if expected != cfg.train {
                log::warn!("resuming with the checkpoint's training configuration; only `epochs` is taken from this run");
            }
            t.set_epochs(cfg.train.epochs);
            t
        }
        None => Trainer::new(cfg.train.clone(), channels, labels.num_classes())?.with_dataset(info),
    };
    create_dir(&out)?;
    // the output location is left out so that reruns elsewhere match
    let saved = RunConfig {
        manifest: cfg.manifest.clone(),
        out: None,
        train: trainer.config().clone(),
    };
    let text = serde_json::to_string_pretty(&saved).map_err(CliError::runtime)?;
    write_file(&out.join("config.json"), &(text + "\n"))?;
    log::info!(
        "{} training windows from {} recordings, {} parameters",
        windows.len(),
        train_seqs.len(),
        trainer.params().num_parameters()
    );

    let history_path = out.join("history.csv");
    if trainer.epoch() >= trainer.config().epochs {
        trainer.checkpoint(None).save(&out.join("last.ckpt"))?;
        write_history(&history_path, &[])?;
        log::info!("no epochs to run; wrote the current state to {}", out.join("last.ckpt").display());
        return Ok(());
    }
    let val = if val_seqs.is_empty() {
        log::warn!("the manifest has no `val` recordings; selecting the model on the training windows");
        Validation::Windows(&windows)
    } else {
        Validation::Sequences(&val_seqs)
    };
    let mut rows = Vec::new();
    let outcome = fit(&mut trainer, &windows, &val, &labels, |row| {
        rows.push(*row);
        if let Err(e) = write_history(&history_path, &rows) {
            log::warn!("{e}");
        }
    })?;
    write_history(&history_path, &outcome.history)?;
    outcome.best.save(&out.join("best.ckpt"))?;
    outcome.last.save(&out.join("last.ckpt"))?;

    let include_null = trainer.config().include_null_in_fm;
    let best = &outcome.best.params;
    let report = if val_seqs.is_empty() {
        let truth: Vec<usize> = windows.iter().map(Segment::hard_label).collect();
        EvalReport::from_streams(&truth, &predict_segments(best, &windows)?, &labels, include_null)?
    } else {
        score_sequences(best, &val_seqs, &labels, include_null)?.0
    };
    write_report(&report, &out, "val")?;
    print!("{}", report.summary());
    Ok(())
}

pub fn eval(common: &Common, checkpoint: &Path, split: Split) -> CliResult<()> {
    let cfg = common.resolve()?;
    let loaded = load_trained(checkpoint, &common.toggles)?;
    let manifest_path = require(&cfg.manifest, "dataset manifest", "--manifest")?;
    let out = require(&cfg.out, "output directory", "--out")?.to_path_buf();
    let manifest = load_manifest(manifest_path)?;
    let seqs = load_for_model(&manifest, split, &loaded)?;
    let include_null = loaded.ckpt.header.train.include_null_in_fm;
    let (report, preds) = score_sequences(&loaded.ckpt.params, &seqs, &loaded.labels, include_null)?;
    let pred_dir = out.join(format!("{split}_predictions"));
    create_dir(&pred_dir)?;
    for (s, p) in seqs.iter().zip(&preds) {
        write_predictions(&pred_dir.join(format!("{}.csv", s.id)), s.labels(), p, &loaded.labels)?;
    }
    write_report(&report, &out, split.to_string().as_str())?;
    print!("{}", report.summary());
    Ok(())
}

pub fn predict(common: &Common, checkpoint: &Path, split: Split) -> CliResult<()> {
    let cfg = common.resolve()?;
    let loaded = load_trained(checkpoint, &common.toggles)?;
    let manifest_path = require(&cfg.manifest, "dataset manifest", "--manifest")?;
    let out = require(&cfg.out, "output directory", "--out")?.to_path_buf();
    let manifest = load_manifest(manifest_path)?;
    let seqs = load_for_model(&manifest, split, &loaded)?;
    let preds: Vec<Vec<usize>> = seqs
        .par_iter()
        .map(|s| samplewise_predict(&loaded.ckpt.params, s))
        .collect::<Result<_, _>>()?;
    create_dir(&out)?;
    for (s, p) in seqs.iter().zip(&preds) {
        let path = out.join(format!("{}.csv", s.id));
        let mut text = String::from("index,pred\n");
        for (i, &c) in p.iter().enumerate() {
            text += &format!("{i},{}\n", csv_field(loaded.labels.name(c)));
        }
        write_file(&path, &text)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub struct ScoreArgs {
    pub truth: PathBuf,
    pub pred: PathBuf,
    pub labels: Option<String>,
    pub manifest: Option<PathBuf>,
    pub null: Option<String>,
    pub out: Option<PathBuf>,
    pub exclude_null_from_fm: bool,
}

pub fn score(args: &ScoreArgs) -> CliResult<()> {
    let labels = match (&args.labels, &args.manifest) {
        (Some(list), _) => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            LabelSpace::new(names, args.null.as_deref())?
        }
        (None, Some(m)) => {
            let manifest = DatasetManifest::load(m)?;
            match &args.null {
                Some(n) => LabelSpace::new(manifest.labels.clone(), Some(n))?,
                None => manifest.label_space()?,
            }
        }
        (None, None) => return Err(CliError::input("pass the label names with --labels or --manifest")),
    };
    for p in [&args.truth, &args.pred] {
        if !p.is_file() {
            return Err(CliError::input(format!("file not found: {}", p.display())));
        }
    }
    let truth = harforge_core::eval::read_label_column(&args.truth, &["truth", "label"], &labels)?;
    let pred = harforge_core::eval::read_label_column(&args.pred, &["pred", "prediction", "label"], &labels)?;
    let report = EvalReport::from_streams(&truth, &pred, &labels, !args.exclude_null_from_fm)?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_report(&report, out, "score")?;
    }
    print!("{}", report.summary());
    Ok(())
}

pub struct Selector {
    pub split: Split,
    pub sequences: Vec<usize>,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub max: usize,
}

impl Selector {
    fn matches(&self, s: &Segment) -> bool {
        (self.sequences.is_empty() || self.sequences.contains(&s.origin.sequence))
            && self.from.is_none_or(|f| s.origin.start >= f)
            && self.to.is_none_or(|t| s.origin.start <= t)
    }
}

pub fn export(common: &Common, checkpoint: &Path, selector: &Selector) -> CliResult<()> {
    let cfg = common.resolve()?;
    let loaded = load_trained(checkpoint, &common.toggles)?;
    let toggles = loaded.ckpt.header.toggles;
    if !toggles.cie && !toggles.age_attention {
        return Err(CliError::input(
            "this checkpoint was trained with both the cross-channel encoder and recurrent attention off, \
             so it has no attention to export",
        ));
    }
    let manifest_path = require(&cfg.manifest, "dataset manifest", "--manifest")?;
    let out = require(&cfg.out, "output directory", "--out")?.to_path_buf();
    let manifest = load_manifest(manifest_path)?;
    let seqs = load_for_model(&manifest, selector.split, &loaded)?;
    let wc = WindowConfig {
        drop_null: false,
        ..loaded.ckpt.header.train.window_config()
    };
    let windows = cut_windows(&seqs, &wc, &loaded.labels)?;
    let chosen: Vec<&Segment> = windows.iter().filter(|s| selector.matches(s)).take(selector.max).collect();
    if chosen.is_empty() {
        log::warn!("no window matches the selection; nothing exported");
        return Ok(());
    }
    let batch = stack_segments(&chosen)?;
    let fwd = model_forward(
        &loaded.ckpt.params,
        &batch.windows,
        &ForwardOptions::inference(),
        &mut seeded(0),
    )?;
    let selected: Vec<usize> = (0..chosen.len()).collect();
    let files = export_attention(&fwd.trace(), &batch.origins, &selected, &out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

pub struct SyntheticArgs {
    pub out: PathBuf,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub block_len: usize,
    pub classes: usize,
    pub channels: usize,
    pub noise: f64,
}

pub fn generate_synthetic(args: &SyntheticArgs) -> CliResult<()> {
    if args.classes < 2 || args.channels == 0 || args.block_len == 0 {
        return Err(CliError::input("need at least 2 classes, 1 channel and a positive block length"));
    }
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(CliError::input(format!("noise must be a finite value ≥ 0, got {}", args.noise)));
    }
    let cfg = SyntheticConfig {
        classes: args.classes,
        channels: args.channels,
        noise_std: args.noise,
        ..SyntheticConfig::default()
    };
    let splits = [(Split::Train, args.train), (Split::Val, args.val), (Split::Test, args.test)];
    let path = synthetic::write_dataset(&args.out, &cfg, &splits, args.block_len, &mut seeded(args.seed))
        .map_err(CliError::runtime)?;
    println!("{}", path.display());
    Ok(())
}
