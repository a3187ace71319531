//! Command-line front end. Every subcommand reads and writes files only, so
//! a pipeline can be resumed or inspected at any stage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::classic::{self, Algorithm, ClassifierSpec, Hyperparameters, TrainedModel};
use crate::datasetgen::{build_dataset, dataset_stats, DatasetFile, DatasetVariant, Sample};
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, Metric, Protocol, ReportEntry, ResultFile};
use crate::features::{extract_table, FeatureConfig, FeatureSidecar, FeatureTable, HistMode};
use crate::ingest::{best_per_video, parse_detections, read_manifest, BestDetections, VideoMeta};
use crate::neural::{
    evaluate_network, load_checkpoint, load_labeled, save_checkpoint, train_network, write_curves,
    LossKind, NetConfig, NetModel, Reduction, TrainConfig, TrainMode, WeightMode,
};
use crate::splitting::{
    kfold_frame_split, video_level_split, videos_from_samples, FoldAssignment, SplitAssignment,
};
use crate::synth::{generate_corpus, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "weaklabel",
    version,
    about = "Weak-label identification pipeline"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (frames, manifest, detections).
    Synth(SynthArgs),
    /// Validate a manifest and detections and keep the best box per frame.
    Ingest(IngestArgs),
    /// Build one dataset variant.
    Build(BuildArgs),
    /// Video-level train/val/test split or frame-level k-fold assignment.
    Split(SplitArgs),
    /// Extract the handcrafted feature table of a dataset.
    Features(FeaturesArgs),
    /// Train a classic classifier on the train part of a video split.
    Fit(FitArgs),
    /// Frame-level k-fold cross-validation of a classic classifier.
    CrossValidate(CvArgs),
    /// Train the CNN on a video split.
    TrainNn(TrainNnArgs),
    /// Evaluate a saved model.
    Eval(EvalArgs),
    /// Render result files into report.txt and report.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML config; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Output JSON with the best detection of every frame.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Variant selector such as `roi,s0.5` or `noroi,s0`.
    #[arg(long)]
    variant: DatasetVariant,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Output directory; receives dataset.json.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitMode {
    Video,
    Frame,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long, value_enum, default_value = "video")]
    mode: SplitMode,
    /// Manifest whose videos are split (video mode).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// dataset.json whose samples (frame mode) or videos (video mode) are split.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.2, 0.2])]
    ratios: Vec<f64>,
    /// Number of folds (frame mode).
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 8)]
    hist_bins: usize,
    #[arg(long, value_enum, default_value = "joint")]
    hist_mode: HistMode,
    #[arg(long, default_value_t = 32)]
    glcm_levels: usize,
    #[arg(long, default_value_t = 1)]
    glcm_distance: usize,
    /// Store Hu moments as -sign·log10|h|.
    #[arg(long)]
    hu_log: bool,
    /// Output CSV; the sidecar goes to `<out>.json`.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifierArgs {
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    /// JSON object overriding default hyperparameters, e.g. '{"k":1}'.
    #[arg(long)]
    params: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    /// Video split file; without it the model is trained on every row.
    #[arg(long)]
    split: Option<PathBuf>,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Output directory for model.json, result.json and the confusion matrix.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    features: PathBuf,
    /// Fold file from `split --mode frame`; otherwise folds are drawn here.
    #[arg(long)]
    folds: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Seed of the fold assignment when no fold file is given.
    #[arg(long, default_value_t = 0)]
    fold_seed: u64,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainNnArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum, default_value = "fine-tune")]
    mode: TrainMode,
    #[arg(long, value_enum, default_value = "ce")]
    loss: LossKind,
    #[arg(long, value_enum, default_value = "proportional")]
    weight_mode: WeightMode,
    #[arg(long, value_enum, default_value = "sum")]
    reduction: Reduction,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    lr_step: usize,
    #[arg(long, default_value_t = 0.1)]
    lr_gamma: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    #[arg(long, default_value_t = 224)]
    input_size: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the checkpoint, curves.csv and result.json.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// model.json of a classic model or a CNN checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV (classic models).
    #[arg(long)]
    features: Option<PathBuf>,
    /// dataset.json (CNN checkpoints).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Restrict evaluation to one part of this video split.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    part: PartArg,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// result.json files or directories containing one.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for pipeline errors, 2 for usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    let outcome = match cli.threads {
        Some(0) => Err(Error::Usage("--threads must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!(
                "error: module={} kind={} message={}",
                e.module(),
                e.kind(),
                e.to_string().replace('\n', " ")
            );
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => build(a),
        Command::Split(a) => split(a),
        Command::Features(a) => features(a),
        Command::Fit(a) => fit(a),
        Command::CrossValidate(a) => cross_validate(a),
        Command::TrainNn(a) => train_nn(a),
        Command::Eval(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::json(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_inputs(
    manifest: &Path,
    detections: &Path,
) -> Result<(Vec<VideoMeta>, BestDetections, usize)> {
    let file = fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let videos = read_manifest(file)?;
    let records = parse_detections(&read_text(detections)?)?;
    Ok((videos, best_per_video(&records), records.len()))
}

fn synth(a: SynthArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(path) => SynthConfig::from_toml(&read_text(path)?)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = generate_corpus(&cfg, &a.out)?;
    Ok(format!(
        "synth: {} videos, {} frames, {} detections -> {}",
        out.manifest.len(),
        out.manifest.iter().map(|v| v.frame_count).sum::<usize>(),
        out.detections.len(),
        a.out.display()
    ))
}

fn ingest(a: IngestArgs) -> Result<String> {
    let (videos, best, records) = load_inputs(&a.manifest, &a.detections)?;
    let known: std::collections::BTreeSet<&str> =
        videos.iter().map(|v| v.video_id.as_str()).collect();
    if let Some(unknown) = best.keys().find(|v| !known.contains(v.as_str())) {
        return Err(crate::datasetgen::DatasetError::UnknownVideo(unknown.clone()).into());
    }
    let frames: usize = best.values().map(|f| f.len()).sum();
    let best_list: Vec<_> = best.values().flat_map(|f| f.values()).collect();
    write_json(
        &a.out,
        &json!({
            "manifest": a.manifest.display().to_string(),
            "detections": a.detections.display().to_string(),
            "videos": videos,
            "records": records,
            "best": best_list,
        }),
    )?;
    Ok(format!(
        "ingest: {} videos, {records} detections, {frames} frames with a best box -> {}",
        videos.len(),
        a.out.display()
    ))
}

fn build(a: BuildArgs) -> Result<String> {
    let (videos, best, _) = load_inputs(&a.manifest, &a.detections)?;
    let root = a.manifest.parent().unwrap_or(Path::new(""));
    let samples = build_dataset(&videos, &best, a.variant, root)?;
    let file = DatasetFile {
        variant: a.variant,
        manifest: a.manifest.display().to_string(),
        detections: a.detections.display().to_string(),
        stats: dataset_stats(&samples),
        samples,
    };
    let path = a.out.join("dataset.json");
    write_json(&path, &file)?;
    Ok(format!(
        "build: {} -> {} samples in {} classes -> {}",
        a.variant,
        file.samples.len(),
        file.stats.per_class.len(),
        path.display()
    ))
}

fn read_dataset(path: &Path) -> Result<DatasetFile> {
    read_json(path)
}

fn split(a: SplitArgs) -> Result<String> {
    match a.mode {
        SplitMode::Video => {
            let ratios: [f64; 3] = a
                .ratios
                .as_slice()
                .try_into()
                .map_err(|_| Error::Usage("--ratios takes three values".into()))?;
            let videos = match (&a.manifest, &a.dataset) {
                (Some(m), _) => read_manifest(fs::File::open(m).map_err(|e| Error::io(m, e))?)?,
                (None, Some(d)) => videos_from_samples(&read_dataset(d)?.samples),
                (None, None) => {
                    return Err(Error::Usage(
                        "video split needs --manifest or --dataset".into(),
                    ))
                }
            };
            let s = video_level_split(&videos, ratios, a.seed)?;
            write_json(&a.out, &s)?;
            Ok(format!(
                "split: {} train / {} val / {} test videos (seed {}) -> {}",
                s.train.len(),
                s.val.len(),
                s.test.len(),
                a.seed,
                a.out.display()
            ))
        }
        SplitMode::Frame => {
            let Some(d) = &a.dataset else {
                return Err(Error::Usage("frame split needs --dataset".into()));
            };
            let folds = kfold_frame_split(&read_dataset(d)?.samples, a.k, a.seed)?;
            write_json(&a.out, &folds)?;
            Ok(format!(
                "split: {} samples in {} folds (seed {}) -> {}",
                folds.fold_of.len(),
                a.k,
                a.seed,
                a.out.display()
            ))
        }
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn features(a: FeaturesArgs) -> Result<String> {
    let dataset = read_dataset(&a.dataset)?;
    let cfg = FeatureConfig {
        hist_bins: a.hist_bins,
        hist_mode: a.hist_mode,
        glcm_levels: a.glcm_levels,
        glcm_distance: a.glcm_distance,
        hu_signed_log: a.hu_log,
        ..FeatureConfig::default()
    };
    let table = extract_table(&dataset.samples, &cfg)?;
    let mut buf = Vec::new();
    table
        .write_csv(&mut buf)
        .map_err(|e| Error::csv(&a.out, e))?;
    write_text(
        &a.out,
        &String::from_utf8(buf).expect("csv output is utf-8"),
    )?;
    let sidecar = FeatureSidecar::new(cfg, &a.dataset, dataset.variant.to_string(), table.len());
    write_json(&sidecar_path(&a.out), &sidecar)?;
    Ok(format!(
        "features: {} rows x {} features -> {}",
        table.len(),
        cfg.dim(),
        a.out.display()
    ))
}

fn read_features(path: &Path) -> Result<(FeatureTable, FeatureSidecar)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let table = FeatureTable::read_csv(file)?;
    let sidecar: FeatureSidecar = read_json(&sidecar_path(path))?;
    Ok((table, sidecar))
}

/// Default hyperparameters of `algorithm` with the keys of `overrides`
/// replaced.
fn classifier_spec(args: &ClassifierArgs) -> Result<ClassifierSpec> {
    let mut spec = ClassifierSpec::new(args.algorithm, args.seed);
    if let Some(text) = &args.params {
        let overrides: Value = serde_json::from_str(text)
            .map_err(|e| Error::Usage(format!("--params is not JSON: {e}")))?;
        let Value::Object(overrides) = overrides else {
            return Err(Error::Usage("--params must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(spec.params).expect("hyperparameters serialize");
        let obj = merged.as_object_mut().expect("tagged object");
        for (k, v) in overrides {
            if k == "algorithm" || !obj.contains_key(&k) {
                return Err(Error::Usage(format!(
                    "{} has no hyperparameter {k:?}",
                    args.algorithm
                )));
            }
            obj.insert(k, v);
        }
        spec.params = serde_json::from_value::<Hyperparameters>(merged)
            .map_err(|e| Error::Usage(format!("bad --params: {e}")))?;
    }
    spec.params.validate()?;
    Ok(spec)
}

fn write_confusion(dir: &Path, cm: &ConfusionMatrix) -> Result<()> {
    write_text(&dir.join("confusion.csv"), &cm.to_csv())?;
    cm.save_heatmap(dir.join("confusion.png"), 24)?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<String> {
    let (table, sidecar) = read_features(&a.features)?;
    let spec = classifier_spec(&a.classifier)?;
    let split: Option<SplitAssignment> = a.split.as_deref().map(read_json).transpose()?;
    let [train, val, test] = match &split {
        Some(s) => s.rows_by_part(&table.video_ids)?,
        None => [(0..table.len()).collect(), Vec::new(), Vec::new()],
    };
    let tr = table.select(&train);
    let model = classic::fit(&spec, &tr.values, &tr.labels)?;

    let mut metrics = BTreeMap::new();
    let mut confusion = None;
    for (metric, rows) in [
        (Metric::Train, &train),
        (Metric::Val, &val),
        (Metric::Test, &test),
    ] {
        if rows.is_empty() {
            continue;
        }
        let part = table.select(rows);
        let pred = model.predict(&part.values)?;
        metrics.insert(metric, classic::accuracy(&part.labels, &pred));
        if metric == Metric::Test {
            let cm = eval::confusion_matrix(&part.labels, &pred, &model.class_list)?;
            metrics.insert(Metric::AvgT, eval::metrics(&cm)?.mean_class_accuracy);
            confusion = Some(cm);
        }
    }
    create_dir(&a.out)?;
    write_json(&a.out.join("model.json"), &model)?;
    let result = ResultFile {
        model: spec.algorithm().to_string(),
        family: "classic".into(),
        dataset: sidecar.variant.clone(),
        protocol: Protocol::VideoSplit,
        spec: json!({
            "classifier": spec,
            "features": a.features.display().to_string(),
            "feature_config": sidecar.config,
            "split": a.split.as_ref().map(|p| p.display().to_string()),
            "split_seed": split.as_ref().map(|s| s.seed),
            "ratios": split.as_ref().map(|s| s.ratios),
        }),
        seed: spec.seed,
        metrics,
        confusion: confusion.clone(),
        fold_accuracies: Vec::new(),
    };
    write_json(&a.out.join("result.json"), &result)?;
    if let Some(cm) = &confusion {
        write_confusion(&a.out, cm)?;
    }
    Ok(format!(
        "fit: {} on {} {}",
        result.model,
        result.dataset,
        summarize(&result.metrics)
    ))
}

fn summarize(metrics: &BTreeMap<Metric, f64>) -> String {
    metrics
        .iter()
        .map(|(m, v)| format!("{m}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cross_validate(a: CvArgs) -> Result<String> {
    let (table, sidecar) = read_features(&a.features)?;
    let spec = classifier_spec(&a.classifier)?;
    let folds: FoldAssignment = match &a.folds {
        Some(p) => read_json(p)?,
        None => {
            let stubs: Vec<Sample> = (0..table.len())
                .map(|i| Sample {
                    sample_id: table.sample_ids[i].clone(),
                    video_id: table.video_ids[i].clone(),
                    frame_index: 0,
                    label: table.labels[i].clone(),
                    score: 0.0,
                    image_ref: String::new(),
                    crop: None,
                })
                .collect();
            kfold_frame_split(&stubs, a.k, a.fold_seed)?
        }
    };
    let fold_of_row = folds.folds_for(&table.sample_ids)?;
    let outcome =
        classic::cross_validate(&spec, &table.values, &table.labels, &fold_of_row, folds.k)?;
    let class_list = classic::encode_labels(&table.labels).0;
    let cm = eval::confusion_matrix(&table.labels, &outcome.predictions, &class_list)?;
    let result = ResultFile {
        model: spec.algorithm().to_string(),
        family: "classic".into(),
        dataset: sidecar.variant.clone(),
        protocol: Protocol::FrameCv,
        spec: json!({
            "classifier": spec,
            "features": a.features.display().to_string(),
            "feature_config": sidecar.config,
            "k": folds.k,
            "fold_seed": folds.seed,
            "folds": a.folds.as_ref().map(|p| p.display().to_string()),
        }),
        seed: spec.seed,
        metrics: BTreeMap::from([(Metric::Cv, outcome.mean_accuracy)]),
        confusion: Some(cm.clone()),
        fold_accuracies: outcome.fold_accuracies,
    };
    create_dir(&a.out)?;
    write_json(&a.out.join("result.json"), &result)?;
    write_confusion(&a.out, &cm)?;
    Ok(format!(
        "cross-validate: {} on {} {}-fold CV={:.4}",
        result.model, result.dataset, folds.k, outcome.mean_accuracy
    ))
}

fn class_list_of(samples: &[Sample]) -> Vec<String> {
    classic::encode_labels(&samples.iter().map(|s| s.label.clone()).collect::<Vec<_>>()).0
}

fn parts_of(samples: &[Sample], split: &SplitAssignment) -> Result<[Vec<Sample>; 3]> {
    let videos: Vec<String> = samples.iter().map(|s| s.video_id.clone()).collect();
    let rows = split.rows_by_part(&videos)?;
    Ok(rows.map(|r| r.iter().map(|&i| samples[i].clone()).collect()))
}

fn nn_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::FeatureExtractor => "CNN feature-extractor",
        TrainMode::FineTune => "CNN fine-tune",
    }
}

fn train_nn(a: TrainNnArgs) -> Result<String> {
    let dataset = read_dataset(&a.dataset)?;
    let split: SplitAssignment = read_json(&a.split)?;
    let classes = class_list_of(&dataset.samples);
    let [train, val, test] = parts_of(&dataset.samples, &split)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        base_lr: a.lr,
        lr_step: a.lr_step,
        lr_gamma: a.lr_gamma,
        batch_size: a.batch_size,
        reduction: a.reduction,
        mode: a.mode,
        loss: a.loss,
        weight_mode: a.weight_mode,
        momentum: a.momentum,
        seed: a.seed,
        input_size: a.input_size,
    };
    let train_imgs = load_labeled(&train, &classes)?;
    let val_imgs = load_labeled(&val, &classes)?;
    let model = NetModel::new(NetConfig::new(classes.len()), a.seed);
    let net = train_network(model, &classes, &train_imgs, &val_imgs, &cfg)?;

    let mut metrics = BTreeMap::new();
    let mut confusion = None;
    for (metric, part) in [(Metric::Train, &train_imgs), (Metric::Val, &val_imgs)] {
        let images: Vec<_> = part.iter().map(|s| s.image.clone()).collect();
        let pred = evaluate_network(&net.model, &images, cfg.input_size);
        let hits = pred
            .iter()
            .zip(part.iter())
            .filter(|(p, s)| **p == s.label)
            .count();
        metrics.insert(metric, hits as f64 / part.len() as f64);
    }
    if !test.is_empty() {
        let (acc, cm) = score_network(&net.model, &test, &classes, cfg.input_size)?;
        metrics.insert(Metric::Test, acc);
        metrics.insert(Metric::AvgT, eval::metrics(&cm)?.mean_class_accuracy);
        confusion = Some(cm);
    }

    create_dir(&a.out)?;
    save_checkpoint(&a.out, &net)?;
    let mut curves = Vec::new();
    write_curves(&mut curves, &net.log).map_err(|e| Error::io(a.out.join("curves.csv"), e))?;
    write_text(
        &a.out.join("curves.csv"),
        &String::from_utf8(curves).expect("utf-8"),
    )?;
    let result = ResultFile {
        model: nn_name(a.mode).into(),
        family: "neural".into(),
        dataset: dataset.variant.to_string(),
        protocol: Protocol::VideoSplit,
        spec: json!({
            "train": cfg,
            "dataset": a.dataset.display().to_string(),
            "split": a.split.display().to_string(),
            "split_seed": split.seed,
            "ratios": split.ratios,
            "best_epoch": net.best_epoch,
            "class_weights": net.class_weights,
        }),
        seed: a.seed,
        metrics,
        confusion: confusion.clone(),
        fold_accuracies: Vec::new(),
    };
    write_json(&a.out.join("result.json"), &result)?;
    if let Some(cm) = &confusion {
        write_confusion(&a.out, cm)?;
    }
    Ok(format!(
        "train-nn: {} on {} best epoch {} {}",
        result.model,
        result.dataset,
        net.best_epoch,
        summarize(&result.metrics)
    ))
}

fn score_network(
    net: &NetModel,
    samples: &[Sample],
    classes: &[String],
    size: u32,
) -> Result<(f64, ConfusionMatrix)> {
    let labeled = load_labeled(samples, classes)?;
    let images: Vec<_> = labeled.iter().map(|s| s.image.clone()).collect();
    let pred: Vec<String> = evaluate_network(net, &images, size)
        .into_iter()
        .map(|i| classes[i].clone())
        .collect();
    let truth: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    let cm = eval::confusion_matrix(&truth, &pred, classes)?;
    Ok((classic::accuracy(&truth, &pred), cm))
}

fn part_metric(part: PartArg) -> (usize, Metric) {
    match part {
        PartArg::Train => (0, Metric::Train),
        PartArg::Val => (1, Metric::Val),
        PartArg::Test => (2, Metric::Test),
    }
}

fn evaluate(a: EvalArgs) -> Result<String> {
    let split: Option<SplitAssignment> = a.split.as_deref().map(read_json).transpose()?;
    let (index, metric) = part_metric(a.part);
    let (model_name, family, dataset_name, spec, seed, acc, cm) = if a.model.is_dir() {
        let Some(dpath) = &a.dataset else {
            return Err(Error::Usage(
                "evaluating a checkpoint needs --dataset".into(),
            ));
        };
        let net = load_checkpoint(&a.model)?;
        let dataset = read_dataset(dpath)?;
        let samples = match &split {
            Some(s) => parts_of(&dataset.samples, s)?[index].clone(),
            None => dataset.samples.clone(),
        };
        let (acc, cm) =
            score_network(&net.model, &samples, &net.class_list, net.config.input_size)?;
        (
            nn_name(net.config.mode).to_string(),
            "neural",
            dataset.variant.to_string(),
            json!({"train": net.config, "best_epoch": net.best_epoch}),
            net.config.seed,
            acc,
            cm,
        )
    } else {
        let Some(fpath) = &a.features else {
            return Err(Error::Usage(
                "evaluating a classic model needs --features".into(),
            ));
        };
        let model: TrainedModel = read_json(&a.model)?;
        let (table, sidecar) = read_features(fpath)?;
        let part = match &split {
            Some(s) => table.select(&s.rows_by_part(&table.video_ids)?[index]),
            None => table,
        };
        let pred = model.predict(&part.values)?;
        let cm = eval::confusion_matrix(&part.labels, &pred, &model.class_list)?;
        (
            model.spec.algorithm().to_string(),
            "classic",
            sidecar.variant,
            json!({"classifier": model.spec, "feature_config": sidecar.config}),
            model.spec.seed,
            classic::accuracy(&part.labels, &pred),
            cm,
        )
    };
    let mut metrics = BTreeMap::from([(metric, acc)]);
    if metric == Metric::Test {
        metrics.insert(Metric::AvgT, eval::metrics(&cm)?.mean_class_accuracy);
    }
    let mut spec = spec;
    spec["model_path"] = json!(a.model.display().to_string());
    spec["split"] = json!(a.split.as_ref().map(|p| p.display().to_string()));
    spec["part"] = json!(format!("{:?}", a.part).to_lowercase());
    let result = ResultFile {
        model: model_name,
        family: family.into(),
        dataset: dataset_name,
        protocol: Protocol::VideoSplit,
        spec,
        seed,
        metrics,
        confusion: Some(cm.clone()),
        fold_accuracies: Vec::new(),
    };
    create_dir(&a.out)?;
    write_json(&a.out.join("result.json"), &result)?;
    write_confusion(&a.out, &cm)?;
    Ok(format!(
        "eval: {} on {} {}",
        result.model,
        result.dataset,
        summarize(&result.metrics)
    ))
}

fn report(a: ReportArgs) -> Result<String> {
    let mut entries: Vec<ReportEntry> = Vec::new();
    for path in &a.results {
        let file = if path.is_dir() {
            path.join("result.json")
        } else {
            path.clone()
        };
        let result: ResultFile = read_json(&file)?;
        entries.extend(result.entries());
    }
    let rendered = eval::render_report(&entries);
    write_text(&a.out.join("report.txt"), &rendered.text)?;
    write_text(&a.out.join("report.csv"), &rendered.csv)?;
    print!("{}", rendered.text);
    Ok(format!(
        "report: {} results, {} numbers -> {}",
        a.results.len(),
        entries.len(),
        a.out.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(algorithm: Algorithm, params: Option<&str>) -> ClassifierArgs {
        ClassifierArgs {
            algorithm,
            params: params.map(str::to_string),
            seed: 3,
        }
    }

    #[test]
    fn params_override_defaults() {
        let spec = classifier_spec(&args(Algorithm::Knn, Some(r#"{"k":1}"#))).unwrap();
        assert_eq!(spec.params, Hyperparameters::Knn { k: 1 });
        assert_eq!(spec.seed, 3);
        let spec = classifier_spec(&args(Algorithm::Rf, Some(r#"{"n_trees":7}"#))).unwrap();
        assert!(matches!(
            spec.params,
            Hyperparameters::Rf {
                n_trees: 7,
                bootstrap: true,
                ..
            }
        ));
        assert_eq!(
            classifier_spec(&args(Algorithm::Nb, None)).unwrap(),
            ClassifierSpec::new(Algorithm::Nb, 3)
        );
    }

    #[test]
    fn bad_params_are_usage_errors() {
        for p in [
            r#"{"depth":1}"#,
            r#"{"algorithm":"rf"}"#,
            "[1]",
            "not json",
            r#"{"k":"x"}"#,
        ] {
            let err = classifier_spec(&args(Algorithm::Knn, Some(p))).unwrap_err();
            assert!(matches!(err, Error::Usage(_)), "{p}: {err}");
        }
        let err = classifier_spec(&args(Algorithm::Knn, Some(r#"{"k":0}"#))).unwrap_err();
        assert_eq!(err.module(), "classic_ml");
    }

    #[test]
    fn sidecar_sits_next_to_csv() {
        assert_eq!(
            sidecar_path(Path::new("out/features.csv")),
            PathBuf::from("out/features.csv.json")
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["weaklabel"]), 2);
        assert_eq!(run(["weaklabel", "frobnicate"]), 2);
        assert_eq!(
            run(["weaklabel", "split", "--mode", "frame", "-o", "x.json"]),
            2
        );
        assert_eq!(run(["weaklabel", "--help"]), 0);
    }
}
