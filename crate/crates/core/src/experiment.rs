//! Experiment orchestration: the end-to-end toy pipeline, the smoke-scale
//! image pipeline, embedding emission and the JSON report format.
//!
//! All randomness flows from one root seed expanded into named per-stage
//! seeds, so adding a stage never perturbs the draws of earlier stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{evaluate, svm_predict, svm_train, LinearSvmModel, EMOTION_NAMES};
use crate::data::{
    load_image_csv, merge_augmented, sample_gaussians, save_points_csv, split_domains,
    stratified_cap, GaussianSpec, LabeledSet,
};
use crate::embed::{save_embedding_csv, silhouette, tsne_run, EmbedConfig};
use crate::error::{Error, Result};
use crate::nets::{build_cnn_classifier, init_weights, CycleGanModel};
use crate::rng::stage_seed;
use crate::train::{
    generate_augmented, predict_classes, pretrain_finetune, train_classifier, train_cyclegan,
    PretrainSchedule, TrainConfig,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Toy,
    ImageSmoke,
}

/// Which classes get generated samples, from which reference class, how many.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub reference_class: usize,
    pub target_classes: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            reference_class: 0,
            target_classes: vec![2],
            counts: vec![900],
        }
    }
}

/// Embedding emission settings: the t-SNE schedule plus the stratified
/// subsample cap applied before embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedSection {
    #[serde(default = "default_embed_max_points")]
    pub max_points: usize,
    #[serde(flatten)]
    pub tsne: EmbedConfig,
}

fn default_embed_max_points() -> usize {
    450
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            max_points: default_embed_max_points(),
            tsne: EmbedConfig {
                iterations: 500,
                exaggeration_iters: 125,
                momentum_switch: 125,
                ..EmbedConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmSection {
    pub reg_lambda: f64,
    pub epochs: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        Self {
            reg_lambda: 1e-3,
            epochs: 30,
        }
    }
}

/// Full experiment description. Unspecified JSON keys fall back to the
/// defaults, so a config file only needs the fields it overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output_dir: String,
    pub gaussians: GaussianSpec,
    /// `label,pixels` CSV for the image pipeline.
    pub image_csv: Option<String>,
    /// Ingestion cap for the image pipeline.
    pub max_images: usize,
    pub toy_hidden: usize,
    pub cyclegan: TrainConfig,
    pub classifier: TrainConfig,
    pub pretrain: PretrainSchedule,
    pub svm: SvmSection,
    pub augmentation: AugmentationPlan,
    pub embed: Option<EmbedSection>,
    /// Margin grid resolution per axis (grid covers data extent ±2).
    pub margin_grid: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Toy,
            seed: 1,
            output_dir: "runs/toy".to_string(),
            gaussians: GaussianSpec::default(),
            image_csv: None,
            max_images: 500,
            toy_hidden: 64,
            cyclegan: TrainConfig {
                steps: 3000,
                batch_size: 16,
                lr_g: 1e-3,
                lr_d: 1e-3,
                log_every: 100,
                ..TrainConfig::default()
            },
            classifier: TrainConfig {
                steps: 20,
                log_every: 5,
                ..TrainConfig::default()
            },
            pretrain: PretrainSchedule {
                pretrain_steps: 20,
                finetune_steps: 20,
            },
            svm: SvmSection::default(),
            augmentation: AugmentationPlan::default(),
            embed: Some(EmbedSection::default()),
            margin_grid: 200,
        }
    }
}

impl ExperimentConfig {
    pub fn image_smoke_default(csv: impl Into<String>) -> Self {
        Self {
            kind: ExperimentKind::ImageSmoke,
            output_dir: "runs/image-smoke".to_string(),
            image_csv: Some(csv.into()),
            cyclegan: TrainConfig {
                steps: 200,
                batch_size: 1,
                log_every: 20,
                ..TrainConfig::default()
            },
            augmentation: AugmentationPlan {
                reference_class: 6, // neutral
                target_classes: vec![1],
                counts: vec![50],
            },
            embed: None,
            ..Self::default()
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.cyclegan.validate()?;
        self.classifier.validate()?;
        if self.augmentation.target_classes.len() != self.augmentation.counts.len() {
            return Err(Error::config(format!(
                "{} target classes with {} counts",
                self.augmentation.target_classes.len(),
                self.augmentation.counts.len()
            )));
        }
        let num_classes = match self.kind {
            ExperimentKind::Toy => {
                let k = self.gaussians.means.len();
                if self.gaussians.train_counts.len() != k || self.gaussians.test_counts.len() != k
                {
                    return Err(Error::config(format!(
                        "gaussian spec: {k} means need {k} train and test counts, got {} and {}",
                        self.gaussians.train_counts.len(),
                        self.gaussians.test_counts.len()
                    )));
                }
                k
            }
            ExperimentKind::ImageSmoke => 7,
        };
        let mut referenced = self.augmentation.target_classes.clone();
        referenced.push(self.augmentation.reference_class);
        for class in referenced {
            if class >= num_classes {
                return Err(Error::config(format!(
                    "augmentation references class {class}, but the data has {num_classes} classes"
                )));
            }
        }
        for target in &self.augmentation.target_classes {
            if *target == self.augmentation.reference_class {
                return Err(Error::config(
                    "reference class cannot also be a target class",
                ));
            }
        }
        if self.kind == ExperimentKind::ImageSmoke && self.image_csv.is_none() {
            return Err(Error::config("image-smoke requires image_csv"));
        }
        if self.margin_grid < 2 {
            return Err(Error::config("margin_grid must be at least 2"));
        }
        Ok(())
    }
}

/// Accuracy block of the report: overall plus per-class (None for classes
/// without test samples), with the side files that back the numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyBlock {
    pub overall: f64,
    pub per_class: Vec<Option<f64>>,
    pub confusion_csv: String,
    #[serde(default)]
    pub margins_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub class_names: Vec<String>,
    pub histogram_before: Vec<usize>,
    pub histogram_after: Vec<usize>,
    pub baseline: Option<AccuracyBlock>,
    pub augmented: Option<AccuracyBlock>,
    /// One CycleGAN loss-curve CSV per target class, in plan order.
    pub cyclegan_curve_csvs: Vec<String>,
    pub classifier_curve_csvs: Vec<String>,
    pub embedding_csvs: Vec<String>,
    pub data_csvs: Vec<String>,
    pub network_param_counts: BTreeMap<String, usize>,
    pub timings_sec: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, config: &ExperimentConfig, class_names: Vec<String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind,
            seed: config.seed,
            config: config.clone(),
            class_names,
            histogram_before: Vec::new(),
            histogram_after: Vec::new(),
            baseline: None,
            augmented: None,
            cyclegan_curve_csvs: Vec::new(),
            classifier_curve_csvs: Vec::new(),
            embedding_csvs: Vec::new(),
            data_csvs: Vec::new(),
            network_param_counts: BTreeMap::new(),
            timings_sec: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Relative paths of every side file the report references.
    pub fn referenced_files(&self) -> Vec<String> {
        let mut files = Vec::new();
        for block in [&self.baseline, &self.augmented].into_iter().flatten() {
            files.push(block.confusion_csv.clone());
            if let Some(m) = &block.margins_csv {
                files.push(m.clone());
            }
        }
        files.extend(self.cyclegan_curve_csvs.iter().cloned());
        files.extend(self.classifier_curve_csvs.iter().cloned());
        files.extend(self.embedding_csvs.iter().cloned());
        files.extend(self.data_csvs.iter().cloned());
        files
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Write `report.json` and verify every referenced side file exists.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    for file in report.referenced_files() {
        let path = dir.join(&file);
        if !path.exists() {
            return Err(Error::io(
                path.display().to_string(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
            ));
        }
    }
    let path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::config(format!("report serialization: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

pub fn load_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = dir.as_ref().join(REPORT_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn stage<T>(
    timings: &mut BTreeMap<String, f64>,
    name: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let t0 = Instant::now();
    let out = f().map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Numerical(format!("stage {name}: {other}")),
    });
    timings.insert(name.to_string(), t0.elapsed().as_secs_f64());
    out
}

/// Raw one-vs-rest scores on a grid covering the data extent ±2, written as
/// `x1,x2,score_class0,...` with grid² rows.
fn write_margin_grid(
    model: &LinearSvmModel,
    data: &LabeledSet,
    grid: usize,
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..data.len() {
        let r = data.row(i);
        for d in 0..2 {
            lo[d] = lo[d].min(r[d]);
            hi[d] = hi[d].max(r[d]);
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut out = || -> Result<()> {
        let header: Vec<String> = (0..model.num_classes)
            .map(|k| format!("score_class{k}"))
            .collect();
        writeln!(w, "x1,x2,{}", header.join(","))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for i in 0..grid {
            for j in 0..grid {
                let x1 = lo[0] - 2.0 + (hi[0] - lo[0] + 4.0) * i as f64 / (grid - 1) as f64;
                let x2 = lo[1] - 2.0 + (hi[1] - lo[1] + 4.0) * j as f64 / (grid - 1) as f64;
                let scores = model.scores(&[x1, x2])?;
                write!(w, "{x1},{x2}").map_err(|e| Error::io(path.display().to_string(), e))?;
                for s in scores {
                    write!(w, ",{s}").map_err(|e| Error::io(path.display().to_string(), e))?;
                }
                writeln!(w).map_err(|e| Error::io(path.display().to_string(), e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    };
    out()
}

fn svm_block(
    model: &LinearSvmModel,
    test: &LabeledSet,
    dir: &Path,
    tag: &str,
    margins_data: Option<(&LabeledSet, usize)>,
) -> Result<AccuracyBlock> {
    let preds = svm_predict(model, &test.to_matrix()?)?;
    let cm = evaluate(&preds, test.labels(), test.num_classes())?;
    let confusion_csv = format!("confusion_{tag}.csv");
    cm.to_csv(dir.join(&confusion_csv))?;
    let margins_csv = if let Some((train, grid)) = margins_data {
        let name = format!("margins_{tag}.csv");
        write_margin_grid(model, train, grid, &dir.join(&name))?;
        Some(name)
    } else {
        None
    };
    Ok(AccuracyBlock {
        overall: cm.overall_accuracy(),
        per_class: cm.per_class_accuracy(),
        confusion_csv,
        margins_csv,
    })
}

/// Train one CycleGAN per target class and return the merged augmented set
/// plus the loss-curve file names.
fn augment_toy(
    train: &LabeledSet,
    config: &ExperimentConfig,
    dir: &Path,
    timings: &mut BTreeMap<String, f64>,
) -> Result<(LabeledSet, Vec<String>)> {
    let mut merged = train.clone();
    let mut curves = Vec::new();
    for (target, count) in config
        .augmentation
        .target_classes
        .iter()
        .zip(&config.augmentation.counts)
    {
        let domains = split_domains(train, config.augmentation.reference_class, *target)?;
        let mut model = CycleGanModel::toy(
            config.toy_hidden,
            stage_seed(config.seed, &format!("cyclegan-model-{target}")),
        )?;
        let gan_config = TrainConfig {
            seed: stage_seed(config.seed, &format!("cyclegan-train-{target}")),
            ..config.cyclegan.clone()
        };
        let curve = stage(timings, &format!("cyclegan_target{target}"), || {
            train_cyclegan(&mut model, &domains, &gan_config)
        })?;
        let name = format!("cyclegan_target{target}.csv");
        curve.to_csv(dir.join(&name))?;
        curves.push(name);

        let generated = generate_augmented(
            &mut model,
            &domains.reference,
            *count,
            *target,
            train.num_classes(),
            true,
        )?;
        merged = merge_augmented(&merged, &generated)?;
    }
    Ok((merged, curves))
}

fn embed_pair(
    baseline: &LabeledSet,
    augmented: &LabeledSet,
    section: &EmbedSection,
    root_seed: u64,
    dir: &Path,
    report: &mut ExperimentReport,
) -> Result<()> {
    for (tag, set) in [("baseline", baseline), ("augmented", augmented)] {
        let sub = stratified_cap(set, section.max_points, stage_seed(root_seed, "embed-subsample"))?;
        let tsne_config = EmbedConfig {
            seed: stage_seed(root_seed, &format!("embed-{tag}")),
            ..section.tsne.clone()
        };
        let embedding = tsne_run(&sub.to_matrix()?, sub.labels(), &tsne_config)?;
        let (mean_sil, _) = silhouette(&embedding.coordinates, sub.labels(), sub.num_classes());
        let name = format!("embedding_{tag}.csv");
        save_embedding_csv(&embedding, dir.join(&name))?;
        report.embedding_csvs.push(name);
        report.notes.push(format!(
            "embedding {tag}: kl {:.6} -> {:.6}, mean silhouette {:.4}",
            embedding.initial_kl, embedding.final_kl, mean_sil
        ));
    }
    Ok(())
}

/// The end-to-end toy experiment: sample the Gaussian mixture, fit the
/// baseline SVM and its margin grid, train one CycleGAN per target class,
/// merge the generated samples, refit, and emit every artifact.
pub fn run_toy(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dir = PathBuf::from(&config.output_dir);
    ensure_dir(&dir)?;
    let class_names = (0..config.gaussians.means.len())
        .map(|c| format!("class{c}"))
        .collect();
    let mut report = ExperimentReport::new(ExperimentKind::Toy, config, class_names);
    let mut timings = BTreeMap::new();

    let (train, test) = stage(&mut timings, "data", || {
        sample_gaussians(&config.gaussians, stage_seed(config.seed, "data"))
    })?;
    save_points_csv(&train, dir.join("train.csv"))?;
    save_points_csv(&test, dir.join("test.csv"))?;
    report.data_csvs.push("train.csv".to_string());
    report.data_csvs.push("test.csv".to_string());
    report.histogram_before = train.class_histogram();

    let baseline_model = stage(&mut timings, "svm_baseline", || {
        svm_train(
            &train,
            config.svm.reg_lambda,
            config.svm.epochs,
            stage_seed(config.seed, "svm-baseline"),
        )
    })?;
    report.baseline = Some(svm_block(
        &baseline_model,
        &test,
        &dir,
        "baseline",
        Some((&train, config.margin_grid)),
    )?);

    let (augmented_train, curves) = augment_toy(&train, config, &dir, &mut timings)?;
    report.cyclegan_curve_csvs = curves;
    report.histogram_after = augmented_train.class_histogram();
    save_points_csv(&augmented_train, dir.join("train_augmented.csv"))?;
    report.data_csvs.push("train_augmented.csv".to_string());

    let augmented_model = stage(&mut timings, "svm_augmented", || {
        svm_train(
            &augmented_train,
            config.svm.reg_lambda,
            config.svm.epochs,
            stage_seed(config.seed, "svm-augmented"),
        )
    })?;
    report.augmented = Some(svm_block(
        &augmented_model,
        &test,
        &dir,
        "augmented",
        Some((&train, config.margin_grid)),
    )?);

    if let Some(section) = &config.embed {
        stage(&mut timings, "embed", || {
            embed_pair(&train, &augmented_train, section, config.seed, &dir, &mut report)
        })?;
    }

    report.timings_sec = timings;
    emit_report(&report, &dir)?;
    Ok(report)
}

fn classifier_block(
    net: &mut crate::nets::Network,
    data: &LabeledSet,
    dir: &Path,
    tag: &str,
) -> Result<AccuracyBlock> {
    let preds = predict_classes(net, data)?;
    let cm = evaluate(&preds, data.labels(), data.num_classes())?;
    let confusion_csv = format!("confusion_{tag}.csv");
    cm.to_csv(dir.join(&confusion_csv))?;
    Ok(AccuracyBlock {
        overall: cm.overall_accuracy(),
        per_class: cm.per_class_accuracy(),
        confusion_csv,
        margins_csv: None,
    })
}

/// Smoke-scale image pipeline: ingest up to `max_images` 48×48 images, build
/// the CNN classifier and image CycleGAN, run the configured numbers of
/// steps, generate target-class images, and run the pre-train + fine-tune
/// schedule. Accuracies are reported for reference, not gated.
pub fn run_image_smoke(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dir = PathBuf::from(&config.output_dir);
    ensure_dir(&dir)?;
    let class_names = EMOTION_NAMES.iter().map(|s| s.to_string()).collect();
    let mut report = ExperimentReport::new(ExperimentKind::ImageSmoke, config, class_names);
    let mut timings = BTreeMap::new();

    let csv = config.image_csv.as_ref().expect("validated");
    let images = stage(&mut timings, "ingest", || load_image_csv(csv, 48))?;
    let images = stratified_cap(
        &images,
        config.max_images,
        stage_seed(config.seed, "ingest-cap"),
    )?;
    report.histogram_before = images.class_histogram();

    let mut classifier = init_weights(
        &build_cnn_classifier(),
        stage_seed(config.seed, "classifier-init"),
    )?;
    let gan_model = CycleGanModel::image(stage_seed(config.seed, "cyclegan-model"))?;
    report
        .network_param_counts
        .insert("cnn_classifier".to_string(), classifier.param_count());
    report
        .network_param_counts
        .insert("cyclegan_generator".to_string(), gan_model.g.param_count());
    report.network_param_counts.insert(
        "cyclegan_discriminator".to_string(),
        gan_model.d_r.param_count(),
    );

    if config.classifier.steps == 0 && config.cyclegan.steps == 0 {
        report.histogram_after = report.histogram_before.clone();
        report.notes.push("zero steps: histograms and shapes only".to_string());
        report.timings_sec = timings;
        emit_report(&report, &dir)?;
        return Ok(report);
    }

    let classifier_config = TrainConfig {
        seed: stage_seed(config.seed, "classifier-train"),
        ..config.classifier.clone()
    };
    let baseline_curve = stage(&mut timings, "classifier_baseline", || {
        train_classifier(&mut classifier, &images, &classifier_config)
    })?;
    baseline_curve.to_csv(dir.join("classifier_baseline.csv"))?;
    report
        .classifier_curve_csvs
        .push("classifier_baseline.csv".to_string());
    report.baseline = Some(classifier_block(&mut classifier, &images, &dir, "baseline")?);

    let mut merged = images.clone();
    for (target, count) in config
        .augmentation
        .target_classes
        .iter()
        .zip(&config.augmentation.counts)
    {
        let domains = split_domains(&images, config.augmentation.reference_class, *target)?;
        let mut model = CycleGanModel::image(stage_seed(
            config.seed,
            &format!("cyclegan-model-{target}"),
        ))?;
        let gan_config = TrainConfig {
            seed: stage_seed(config.seed, &format!("cyclegan-train-{target}")),
            ..config.cyclegan.clone()
        };
        let curve = stage(&mut timings, &format!("cyclegan_target{target}"), || {
            train_cyclegan(&mut model, &domains, &gan_config)
        })?;
        let name = format!("cyclegan_target{target}.csv");
        curve.to_csv(dir.join(&name))?;
        report.cyclegan_curve_csvs.push(name);

        let generated = stage(&mut timings, &format!("generate_target{target}"), || {
            generate_augmented(
                &mut model,
                &domains.reference,
                *count,
                *target,
                merged.num_classes(),
                true,
            )
        })?;
        merged = merge_augmented(&merged, &generated)?;
    }
    report.histogram_after = merged.class_histogram();

    // pre-train on generated images only, then fine-tune on the originals
    let generated_only = {
        let idx: Vec<usize> = (images.len()..merged.len()).collect();
        merged.select(&idx)
    };
    if !generated_only.is_empty()
        && (config.pretrain.pretrain_steps > 0 || config.pretrain.finetune_steps > 0)
    {
        let mut aug_net = init_weights(
            &build_cnn_classifier(),
            stage_seed(config.seed, "classifier-aug-init"),
        )?;
        let pf_config = TrainConfig {
            seed: stage_seed(config.seed, "classifier-aug-train"),
            ..config.classifier.clone()
        };
        let (pre, fine) = stage(&mut timings, "pretrain_finetune", || {
            pretrain_finetune(&mut aug_net, &generated_only, &images, &pf_config, config.pretrain)
        })?;
        if !pre.is_empty() {
            pre.to_csv(dir.join("classifier_pretrain.csv"))?;
            report
                .classifier_curve_csvs
                .push("classifier_pretrain.csv".to_string());
        }
        fine.to_csv(dir.join("classifier_finetune.csv"))?;
        report
            .classifier_curve_csvs
            .push("classifier_finetune.csv".to_string());
        report.augmented = Some(classifier_block(&mut aug_net, &images, &dir, "augmented")?);
    }

    if let Some(section) = &config.embed {
        stage(&mut timings, "embed", || {
            embed_pair(&images, &merged, section, config.seed, &dir, &mut report)
        })?;
    }

    report.timings_sec = timings;
    emit_report(&report, &dir)?;
    Ok(report)
}

/// Run the configured experiment kind.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::Toy => run_toy(config),
        ExperimentKind::ImageSmoke => run_image_smoke(config),
    }
}

/// Embedding-only entry point: for toy configs this runs the augmentation
/// pipeline and embeds the baseline and augmented training sets; for image
/// configs it embeds the ingested images.
pub fn run_embed(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut config = config.clone();
    if config.embed.is_none() {
        config.embed = Some(EmbedSection::default());
    }
    match config.kind {
        ExperimentKind::Toy => run_toy(&config),
        ExperimentKind::ImageSmoke => {
            config.validate()?;
            let dir = PathBuf::from(&config.output_dir);
            ensure_dir(&dir)?;
            let class_names = EMOTION_NAMES.iter().map(|s| s.to_string()).collect();
            let mut report = ExperimentReport::new(ExperimentKind::ImageSmoke, &config, class_names);
            let mut timings = BTreeMap::new();
            let csv = config.image_csv.as_ref().expect("validated");
            let images = stage(&mut timings, "ingest", || load_image_csv(csv, 48))?;
            let images = stratified_cap(
                &images,
                config.max_images,
                stage_seed(config.seed, "ingest-cap"),
            )?;
            report.histogram_before = images.class_histogram();
            report.histogram_after = images.class_histogram();
            let section = config.embed.as_ref().expect("set above");
            let sub = stratified_cap(
                &images,
                section.max_points,
                stage_seed(config.seed, "embed-subsample"),
            )?;
            let tsne_config = EmbedConfig {
                seed: stage_seed(config.seed, "embed-baseline"),
                ..section.tsne.clone()
            };
            let embedding = stage(&mut timings, "embed", || {
                tsne_run(&sub.to_matrix()?, sub.labels(), &tsne_config)
            })?;
            save_embedding_csv(&embedding, dir.join("embedding_baseline.csv"))?;
            report.embedding_csvs.push("embedding_baseline.csv".to_string());
            report.notes.push(format!(
                "embedding baseline: kl {:.6} -> {:.6}",
                embedding.initial_kl, embedding.final_kl
            ));
            report.timings_sec = timings;
            emit_report(&report, &dir)?;
            Ok(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "ganaug-exp-{tag}-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn fast_toy(seed: u64, out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            output_dir: out.display().to_string(),
            cyclegan: TrainConfig {
                steps: 150,
                batch_size: 16,
                lr_g: 1e-3,
                lr_d: 1e-3,
                log_every: 50,
                ..TrainConfig::default()
            },
            svm: SvmSection {
                reg_lambda: 1e-3,
                epochs: 4,
            },
            embed: Some(EmbedSection {
                max_points: 120,
                tsne: EmbedConfig {
                    perplexity: 12.0,
                    iterations: 60,
                    exaggeration_iters: 15,
                    momentum_switch: 15,
                    ..EmbedConfig::default()
                },
            }),
            margin_grid: 20,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn toy_run_emits_consistent_report() {
        let dir = temp_dir("toy");
        let config = fast_toy(3, &dir);
        let report = run_toy(&config).unwrap();

        assert_eq!(report.histogram_before, vec![1000, 1000, 100]);
        assert_eq!(report.histogram_after, vec![1000, 1000, 1000]);
        assert!(report.baseline.is_some());
        assert!(report.augmented.is_some());
        for file in report.referenced_files() {
            assert!(dir.join(&file).exists(), "missing {file}");
        }
        // margin grid has grid² data rows
        let margins = std::fs::read_to_string(
            dir.join(report.baseline.as_ref().unwrap().margins_csv.as_ref().unwrap()),
        )
        .unwrap();
        assert_eq!(margins.lines().count(), 20 * 20 + 1);

        // report json roundtrips
        let loaded = load_report(&dir).unwrap();
        assert_eq!(loaded.histogram_after, report.histogram_after);
        assert_eq!(loaded.schema_version, REPORT_SCHEMA_VERSION);

        // accuracies recomputable from the confusion csv
        let cm = crate::classify::ConfusionMatrix::from_csv(
            dir.join(&report.baseline.as_ref().unwrap().confusion_csv),
        )
        .unwrap();
        assert!(
            (cm.overall_accuracy() - report.baseline.as_ref().unwrap().overall).abs() < 1e-12
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn toy_runs_are_byte_identical_per_seed() {
        let dir_a = temp_dir("det-a");
        let dir_b = temp_dir("det-b");
        let report_a = run_toy(&fast_toy(11, &dir_a)).unwrap();
        let report_b = run_toy(&fast_toy(11, &dir_b)).unwrap();
        for file in report_a.referenced_files() {
            let a = std::fs::read(dir_a.join(&file)).unwrap();
            let b = std::fs::read(dir_b.join(&file)).unwrap();
            assert_eq!(a, b, "file {file} differs across identical runs");
        }
        assert_eq!(report_a.histogram_after, report_b.histogram_after);
        std::fs::remove_dir_all(&dir_a).ok();
        std::fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn config_validation_catches_bad_plans() {
        let mut config = ExperimentConfig::default();
        config.augmentation.target_classes = vec![7];
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = ExperimentConfig::default();
        config.augmentation.target_classes = vec![0];
        assert!(config.validate().is_err());

        let config = ExperimentConfig {
            kind: ExperimentKind::ImageSmoke,
            image_csv: None,
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());

        let mut config = ExperimentConfig::default();
        config.gaussians.train_counts = vec![10, 10];
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn partial_json_config_uses_defaults() {
        let dir = temp_dir("cfg");
        let path = dir.join("config.json");
        std::fs::write(&path, r#"{"seed": 42, "margin_grid": 50}"#).unwrap();
        let config = ExperimentConfig::from_json_file(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.margin_grid, 50);
        assert_eq!(config.cyclegan.steps, 3000);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn zero_step_image_smoke_reports_shapes_only() {
        let dir = temp_dir("img0");
        let csv = dir.join("images.csv");
        // minimal valid image set: three 48x48 rows across two classes
        let mut rng = crate::rng::rng_from_seed(3);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..3 {
            for _ in 0..48 * 48 {
                let px: i64 = rand::Rng::random_range(&mut rng, 0..=255);
                features.push(px as f64 / 127.5 - 1.0);
            }
            labels.push(if i == 0 { 6 } else { 1 });
        }
        let set = crate::data::LabeledSet::new(features, 48 * 48, labels, 7).unwrap();
        crate::data::save_image_csv(&set, &csv).unwrap();

        let mut config = ExperimentConfig::image_smoke_default(csv.display().to_string());
        config.output_dir = dir.join("run").display().to_string();
        config.cyclegan.steps = 0;
        config.classifier.steps = 0;
        let report = run_image_smoke(&config).unwrap();
        assert_eq!(report.histogram_before, report.histogram_after);
        assert!(report.baseline.is_none());
        assert!(report.cyclegan_curve_csvs.is_empty());
        assert!(report.network_param_counts.contains_key("cyclegan_generator"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn emit_report_rejects_missing_files() {
        let dir = temp_dir("missing");
        let mut report = ExperimentReport::new(
            ExperimentKind::Toy,
            &ExperimentConfig::default(),
            vec!["class0".to_string()],
        );
        report.data_csvs.push("nonexistent.csv".to_string());
        assert!(matches!(emit_report(&report, &dir), Err(Error::Io { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }
}
