//! Stage functions behind the `mdfg` subcommands.
//!
//! Shared artifacts (data, splits, reference statistics, features, Gini
//! weights) live in the output root. Model artifacts (checkpoints, logs,
//! threshold, report, scores) go to a model directory, which is the root for
//! a plain run and `ablate/alpha_<α>/` inside the α sweep, so a sweep entry
//! follows exactly the code path of a plain run.

use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::augment::AugmentError;
use crate::config::{stream, ConfigError, RunConfig};
use crate::dataio::{read_rds, segment, write_rds, ComplexSeries, DataError, EchoSegment, Label, SplitSpec};
use crate::detector::{calibrate_threshold, evaluate, score, DetectError, DetectionThreshold, EvaluationReport};
use crate::features::{extract_batch, fit_reference, to_c64, FeatureError, ReferenceStats, ShallowFeatureVector, FEATURE_NAMES};
use crate::gini::{apply_weights, fit_weights, FeatureWeights, GiniError, GiniReport};
use crate::losses::LossError;
use crate::model::{ModelError, ModelParams};
use crate::seeding::derive_seed;
use crate::synth::{gen_clutter, gen_target_in_clutter, SynthError};
use crate::tensor::TensorError;
use crate::trainer::{finetune, pretrain, write_log_csv, LogRow, TrainError, TrainSample};

pub const DATA: &str = "data.rds";
pub const SPLITS: &str = "splits.toml";
pub const REFERENCE: &str = "reference.toml";
pub const FEATURES: &str = "features.csv";
pub const GINI: &str = "gini.toml";
pub const PRETRAINED: &str = "pretrained.ckpt";
pub const PRETRAIN_LOG: &str = "pretrain_log.csv";
pub const FINETUNED: &str = "finetuned.ckpt";
pub const FINETUNE_LOG: &str = "finetune_log.csv";
pub const THRESHOLD: &str = "threshold.toml";
pub const REPORT: &str = "report.toml";
pub const SCORES: &str = "scores.csv";
pub const ABLATION: &str = "ablation.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numeric,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Numeric => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage}: {cause}")]
pub struct StageError {
    pub stage: &'static str,
    pub kind: FailureKind,
    pub cause: String,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

/// Maps a module error onto the exit-code classes.
pub trait Classify: Display {
    fn kind(&self) -> FailureKind;
}

impl Classify for ConfigError {
    fn kind(&self) -> FailureKind {
        FailureKind::Config
    }
}

impl Classify for DataError {
    fn kind(&self) -> FailureKind {
        match self {
            DataError::InvalidConfig(_) => FailureKind::Config,
            _ => FailureKind::Data,
        }
    }
}

impl Classify for SynthError {
    fn kind(&self) -> FailureKind {
        FailureKind::Config
    }
}

impl Classify for FeatureError {
    fn kind(&self) -> FailureKind {
        match self {
            FeatureError::InvalidConfig(_) => FailureKind::Config,
            FeatureError::DegenerateReference { .. } => FailureKind::Numeric,
            FeatureError::AllZeroSpectrum | FeatureError::EmptyPool => FailureKind::Data,
        }
    }
}

impl Classify for GiniError {
    fn kind(&self) -> FailureKind {
        match self {
            GiniError::NonFinite(_) => FailureKind::Numeric,
            _ => FailureKind::Data,
        }
    }
}

impl Classify for TensorError {
    fn kind(&self) -> FailureKind {
        FailureKind::Numeric
    }
}

impl Classify for ModelError {
    fn kind(&self) -> FailureKind {
        match self {
            ModelError::InvalidConfig(_) => FailureKind::Config,
            ModelError::Checkpoint { .. } | ModelError::Io(_) => FailureKind::Data,
            ModelError::Tensor(_) | ModelError::ZeroVectorEmbedding { .. } => FailureKind::Numeric,
        }
    }
}

impl Classify for TrainError {
    fn kind(&self) -> FailureKind {
        match self {
            TrainError::InvalidConfig(_) => FailureKind::Config,
            TrainError::SingleClass { .. } | TrainError::Io(_) => FailureKind::Data,
            TrainError::NonFinite { .. } | TrainError::Tensor(_) => FailureKind::Numeric,
            TrainError::Loss(e) => match e {
                LossError::DegenerateBatch => FailureKind::Data,
                LossError::InvalidTemperature(_) => FailureKind::Config,
                _ => FailureKind::Numeric,
            },
            TrainError::Augment(AugmentError::InvalidConfig(_)) => FailureKind::Config,
            TrainError::Augment(AugmentError::ZeroPowerInput) => FailureKind::Data,
            TrainError::Model(e) => e.kind(),
        }
    }
}

impl Classify for DetectError {
    fn kind(&self) -> FailureKind {
        match self {
            DetectError::InvalidPfa(_) => FailureKind::Config,
            DetectError::NonFiniteScore(_) => FailureKind::Numeric,
            _ => FailureKind::Data,
        }
    }
}

fn at<E: Classify>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        kind: e.kind(),
        cause: e.to_string(),
    }
}

fn data_err(stage: &'static str, cause: String) -> StageError {
    StageError {
        stage,
        kind: FailureKind::Data,
        cause,
    }
}

fn read_text(stage: &'static str, path: &Path) -> Result<String, StageError> {
    fs::read_to_string(path).map_err(|e| data_err(stage, format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<(), StageError> {
    fs::write(path, bytes).map_err(|e| data_err(stage, format!("cannot write {}: {e}", path.display())))
}

fn parse_toml<T: serde::de::DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, StageError> {
    toml::from_str(&read_text(stage, path)?).map_err(|e| data_err(stage, format!("{}: {e}", path.display())))
}

fn create_dir(stage: &'static str, dir: &Path) -> Result<(), StageError> {
    fs::create_dir_all(dir).map_err(|e| data_err(stage, format!("cannot create {}: {e}", dir.display())))
}

// ---------------------------------------------------------------------------
// In-memory building blocks

/// Target cells first (ids `0..target_cells`), then clutter cells.
pub fn synthesize(cfg: &RunConfig) -> Result<Vec<ComplexSeries>, SynthError> {
    let s = &cfg.synth;
    let root = cfg.stream_seed(stream::SYNTH);
    let mut cells = Vec::with_capacity(s.target_cells + s.clutter_cells);
    for i in 0..s.target_cells + s.clutter_cells {
        let id = i as u64;
        let clutter = gen_clutter(
            if i < s.target_cells { s.target_len } else { s.clutter_len },
            s.prf_hz,
            &s.clutter(derive_seed(root, &[id, 0])),
        )?;
        let mut cell = if i < s.target_cells {
            gen_target_in_clutter(&clutter, &s.target(derive_seed(root, &[id, 1])))?
        } else {
            clutter
        };
        cell.cell_id = i as u32;
        cells.push(cell);
    }
    Ok(cells)
}

pub fn segment_cells(cells: &[ComplexSeries], cfg: &RunConfig) -> Result<Vec<EchoSegment>, DataError> {
    let mut out = Vec::new();
    for c in cells {
        out.extend(segment(c, &cfg.data)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub segment_id: usize,
    pub label: Label,
    pub raw: ShallowFeatureVector,
    pub normalized: ShallowFeatureVector,
}

/// The `features.csv` table. Values are written in shortest round-trip
/// form, so parsing gives back the exact doubles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable(pub Vec<FeatureRow>);

impl FeatureTable {
    pub fn header() -> String {
        let mut cols = vec!["segment_id".to_string(), "label".to_string()];
        cols.extend(FEATURE_NAMES.iter().map(|n| n.to_string()));
        cols.extend(FEATURE_NAMES.iter().map(|n| format!("{n}_norm")));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::header();
        s.push('\n');
        for r in &self.0 {
            let vals: Vec<String> = r
                .raw
                .to_array()
                .iter()
                .chain(r.normalized.to_array().iter())
                .map(|v| v.to_string())
                .collect();
            s.push_str(&format!("{},{},{}\n", r.segment_id, r.label.as_str(), vals.join(",")));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::header().as_str()) {
            return Err("unexpected header".into());
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = |what: &str| format!("line {}: {what}", n + 2);
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 14 {
                return Err(bad("expected 14 columns"));
            }
            let segment_id = cells[0].parse().map_err(|_| bad("segment_id"))?;
            let label = match cells[1] {
                "clutter" => Label::Clutter,
                "target" => Label::Target,
                _ => return Err(bad("label")),
            };
            let mut v = [0.0; 12];
            for (slot, c) in v.iter_mut().zip(&cells[2..]) {
                *slot = c.parse().map_err(|_| bad("feature value"))?;
            }
            rows.push(FeatureRow {
                segment_id,
                label,
                raw: ShallowFeatureVector::from_array(v[..6].try_into().unwrap()),
                normalized: ShallowFeatureVector::from_array(v[6..].try_into().unwrap()),
            });
        }
        Ok(FeatureTable(rows))
    }
}

fn complex_segments(segments: &[EchoSegment], ids: &[usize]) -> Vec<Vec<Complex64>> {
    ids.iter().map(|&i| to_c64(&segments[i].samples)).collect()
}

/// Reference statistics from the pretraining split's clutter, then raw and
/// normalized features for every segment.
pub fn extract_table(
    cfg: &RunConfig,
    segments: &[EchoSegment],
    splits: &SplitSpec,
) -> Result<(ReferenceStats, FeatureTable), FeatureError> {
    let pool_ids: Vec<usize> = splits
        .pretrain_ids
        .iter()
        .copied()
        .filter(|&i| segments[i].label == Label::Clutter)
        .collect();
    let reference = fit_reference(&complex_segments(segments, &pool_ids), &cfg.features)?;
    let all: Vec<usize> = (0..segments.len()).collect();
    let feats = extract_batch(&complex_segments(segments, &all), &reference, &cfg.features)?;
    let rows = feats
        .into_iter()
        .enumerate()
        .map(|(i, (raw, normalized))| FeatureRow {
            segment_id: i,
            label: segments[i].label,
            raw,
            normalized,
        })
        .collect();
    Ok((reference, FeatureTable(rows)))
}

pub fn fit_gini(cfg: &RunConfig, table: &FeatureTable, splits: &SplitSpec) -> Result<(GiniReport, FeatureWeights), GiniError> {
    let rows: Vec<&FeatureRow> = splits.pretrain_ids.iter().map(|&i| &table.0[i]).collect();
    let feats: Vec<ShallowFeatureVector> = rows.iter().map(|r| r.normalized).collect();
    let labels: Vec<usize> = rows.iter().map(|r| r.label.class_id()).collect();
    fit_weights(&feats, &labels, cfg.gini.weighting)
}

pub fn train_samples(segments: &[EchoSegment], table: &FeatureTable, weights: &FeatureWeights, ids: &[usize]) -> Vec<TrainSample> {
    ids.iter()
        .map(|&i| TrainSample {
            samples: to_c64(&segments[i].samples),
            label: segments[i].label.class_id(),
            shallow: apply_weights(&table.0[i].normalized, weights),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Stages over files

pub mod stage {
    pub const CONFIG: &str = "config";
    pub const SYNTH_GEN: &str = "synth-gen";
    pub const EXTRACT_FEATURES: &str = "extract-features";
    pub const GINI_WEIGHTS: &str = "gini-weights";
    pub const PRETRAIN: &str = "pretrain";
    pub const FINETUNE: &str = "finetune";
    pub const CALIBRATE: &str = "calibrate";
    pub const EVALUATE: &str = "evaluate";
    pub const ABLATE_ALPHA: &str = "ablate-alpha";
}

/// Output layout of a run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
    pub model_dir: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            model_dir: root.clone(),
            root,
        }
    }

    pub fn alpha_dir(&self, alpha: f64) -> Workspace {
        Self {
            root: self.root.clone(),
            model_dir: self.root.join("ablate").join(format!("alpha_{alpha}")),
        }
    }

    pub fn shared(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.model_dir.join(name)
    }
}

fn load_segments(st: &'static str, cfg: &RunConfig, ws: &Workspace) -> Result<Vec<EchoSegment>, StageError> {
    let path = ws.shared(DATA);
    if !path.exists() {
        return Err(data_err(st, format!("missing input {}", path.display())));
    }
    let cells = read_rds(&path).map_err(at(st))?;
    segment_cells(&cells, cfg).map_err(at(st))
}

fn load_splits(st: &'static str, ws: &Workspace, n_segments: usize) -> Result<SplitSpec, StageError> {
    let splits = SplitSpec::from_toml(&read_text(st, &ws.shared(SPLITS))?).map_err(at(st))?;
    let max = [&splits.pretrain_ids, &splits.train_ids, &splits.val_ids, &splits.test_ids]
        .iter()
        .flat_map(|v| v.iter())
        .copied()
        .max();
    if max.is_some_and(|m| m >= n_segments) {
        return Err(data_err(st, format!("{SPLITS} refers to segments beyond the {n_segments} in {DATA}")));
    }
    Ok(splits)
}

fn load_table(st: &'static str, ws: &Workspace, n_segments: usize) -> Result<FeatureTable, StageError> {
    let path = ws.shared(FEATURES);
    let table = FeatureTable::from_csv(&read_text(st, &path)?).map_err(|e| data_err(st, format!("{}: {e}", path.display())))?;
    if table.0.len() != n_segments || table.0.iter().enumerate().any(|(i, r)| r.segment_id != i) {
        return Err(data_err(st, format!("{} does not match the segments of {DATA}", path.display())));
    }
    Ok(table)
}

fn load_model(st: &'static str, path: &Path) -> Result<ModelParams, StageError> {
    if !path.exists() {
        return Err(data_err(st, format!("missing input {}", path.display())));
    }
    ModelParams::load(path).map_err(at(st))
}

pub fn synth_gen(cfg: &RunConfig, ws: &Workspace) -> Result<(), StageError> {
    let st = stage::SYNTH_GEN;
    create_dir(st, &ws.root)?;
    let cells = synthesize(cfg).map_err(at(st))?;
    write_rds(ws.shared(DATA), &cells).map_err(at(st))?;
    log::info!("{st}: wrote {} cells", cells.len());
    Ok(())
}

pub fn extract_features(cfg: &RunConfig, ws: &Workspace) -> Result<(), StageError> {
    let st = stage::EXTRACT_FEATURES;
    let segments = load_segments(st, cfg, ws)?;
    let splits = crate::dataio::make_splits(&segments, cfg.stream_seed(stream::SPLIT)).map_err(at(st))?;
    let (reference, table) = extract_table(cfg, &segments, &splits).map_err(at(st))?;
    write_bytes(st, &ws.shared(SPLITS), splits.to_toml().as_bytes())?;
    write_bytes(st, &ws.shared(REFERENCE), reference.to_toml().as_bytes())?;
    write_bytes(st, &ws.shared(FEATURES), table.to_csv().as_bytes())?;
    log::info!(
        "{st}: {} segments (pretrain {}, train {}, val {}, test {})",
        segments.len(),
        splits.pretrain_ids.len(),
        splits.train_ids.len(),
        splits.val_ids.len(),
        splits.test_ids.len()
    );
    Ok(())
}

pub fn gini_weights(cfg: &RunConfig, ws: &Workspace) -> Result<(), StageError> {
    let st = stage::GINI_WEIGHTS;
    let segments = load_segments(st, cfg, ws)?;
    let splits = load_splits(st, ws, segments.len())?;
    let table = load_table(st, ws, segments.len())?;
    let (report, weights) = fit_gini(cfg, &table, &splits).map_err(at(st))?;
    write_bytes(st, &ws.shared(GINI), report.to_toml().as_bytes())?;
    log::info!("{st}: weights {:?}", weights.w);
    Ok(())
}

fn load_training_inputs(
    st: &'static str,
    cfg: &RunConfig,
    ws: &Workspace,
) -> Result<(Vec<EchoSegment>, SplitSpec, FeatureTable, FeatureWeights), StageError> {
    let segments = load_segments(st, cfg, ws)?;
    let splits = load_splits(st, ws, segments.len())?;
    let table = load_table(st, ws, segments.len())?;
    let report: GiniReport = parse_toml(st, &ws.shared(GINI))?;
    Ok((segments, splits, table, report.weights()))
}

/// Pre-trains from a fresh initialization; returns the loss log.
pub fn run_pretrain(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<LogRow>, StageError> {
    let st = stage::PRETRAIN;
    let (segments, splits, table, weights) = load_training_inputs(st, cfg, ws)?;
    let data = train_samples(&segments, &table, &weights, &splits.pretrain_ids);
    let mut params = ModelParams::init(cfg.model, cfg.stream_seed(stream::MODEL)).map_err(at(st))?;
    let log = pretrain(&mut params, &data, &cfg.train_config(), &cfg.augment_config()).map_err(at(st))?;
    create_dir(st, &ws.model_dir)?;
    params.save(ws.model(PRETRAINED)).map_err(at(st))?;
    let mut csv = Vec::new();
    write_log_csv(&log, &mut csv).map_err(|e| data_err(st, e.to_string()))?;
    write_bytes(st, &ws.model(PRETRAIN_LOG), &csv)?;
    Ok(log)
}

pub fn run_finetune(cfg: &RunConfig, ws: &Workspace) -> Result<(), StageError> {
    let st = stage::FINETUNE;
    let (segments, splits, table, weights) = load_training_inputs(st, cfg, ws)?;
    let data = train_samples(&segments, &table, &weights, &splits.train_ids);
    let mut params = load_model(st, &ws.model(PRETRAINED))?;
    let log = finetune(&mut params, &data, &cfg.train_config()).map_err(at(st))?;
    params.save(ws.model(FINETUNED)).map_err(at(st))?;
    let mut csv = String::from("epoch,step,loss\n");
    for (epoch, step, loss) in log {
        csv.push_str(&format!("{epoch},{step},{loss:e}\n"));
    }
    write_bytes(st, &ws.model(FINETUNE_LOG), csv.as_bytes())
}

fn split_scores(st: &'static str, cfg: &RunConfig, ws: &Workspace, pick: fn(&SplitSpec) -> &[usize]) -> Result<(Vec<EchoSegment>, Vec<usize>, Vec<f64>), StageError> {
    let segments = load_segments(st, cfg, ws)?;
    let splits = load_splits(st, ws, segments.len())?;
    let params = load_model(st, &ws.model(FINETUNED))?;
    let ids = pick(&splits).to_vec();
    let scores = score(&params, &complex_segments(&segments, &ids)).map_err(at(st))?;
    Ok((segments, ids, scores))
}

pub fn calibrate(cfg: &RunConfig, ws: &Workspace) -> Result<DetectionThreshold, StageError> {
    let st = stage::CALIBRATE;
    let (segments, ids, scores) = split_scores(st, cfg, ws, |s| &s.val_ids)?;
    if ids.iter().any(|&i| segments[i].label != Label::Clutter) {
        return Err(data_err(st, "validation split holds target segments".into()));
    }
    let th = calibrate_threshold(&scores, cfg.detect.preset_pfa).map_err(at(st))?;
    write_bytes(st, &ws.model(THRESHOLD), th.to_toml().as_bytes())?;
    log::info!("{st}: threshold {} from {} clutter scores", th.threshold, th.n_calibration);
    Ok(th)
}

pub fn run_evaluate(cfg: &RunConfig, ws: &Workspace) -> Result<EvaluationReport, StageError> {
    let st = stage::EVALUATE;
    let th: DetectionThreshold = parse_toml(st, &ws.model(THRESHOLD))?;
    let (segments, ids, scores) = split_scores(st, cfg, ws, |s| &s.test_ids)?;
    let truth: Vec<Label> = ids.iter().map(|&i| segments[i].label).collect();
    let report = evaluate(&scores, &truth, th).map_err(at(st))?;
    let mut csv = String::from("segment_id,label,score,decision\n");
    for ((&i, &s), t) in ids.iter().zip(&scores).zip(&truth) {
        let d = crate::detector::decide(s, &th);
        csv.push_str(&format!("{i},{},{s},{}\n", t.as_str(), d.as_str()));
    }
    write_bytes(st, &ws.model(SCORES), csv.as_bytes())?;
    write_bytes(st, &ws.model(REPORT), report.to_toml().as_bytes())?;
    log::info!("{st}: mIoU {:.4}, true P_fa {:.4}", report.metrics.miou, report.metrics.true_pfa);
    Ok(report)
}

/// Result of one model run: the pre-training log and the test report.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub alpha: f64,
    pub pretrain_log: Vec<LogRow>,
    pub report: EvaluationReport,
}

/// pretrain → finetune → calibrate → evaluate into `ws.model_dir`.
pub fn train_and_evaluate(cfg: &RunConfig, ws: &Workspace) -> Result<ModelRun, StageError> {
    let pretrain_log = run_pretrain(cfg, ws)?;
    run_finetune(cfg, ws)?;
    calibrate(cfg, ws)?;
    let report = run_evaluate(cfg, ws)?;
    Ok(ModelRun {
        alpha: cfg.train.alpha,
        pretrain_log,
        report,
    })
}

/// One model run per configured α on the shared data artifacts, all with
/// the same seed; writes `ablation.csv` with one metrics row per α.
pub fn ablate_alpha(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<ModelRun>, StageError> {
    let st = stage::ABLATE_ALPHA;
    let mut runs = Vec::new();
    for &alpha in &cfg.ablate.alphas {
        let mut c = cfg.clone();
        c.train.alpha = alpha;
        log::info!("{st}: alpha {alpha}");
        runs.push(train_and_evaluate(&c, &ws.alpha_dir(alpha))?);
    }
    let path = ws.shared(ABLATION);
    let file = fs::File::create(&path).map_err(|e| data_err(st, format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| data_err(st, e.to_string());
    writeln!(w, "alpha,threshold,tp,fn,fp,tn,accuracy,precision,recall_pd,true_pfa,miou,final_l_total").map_err(io)?;
    for r in &runs {
        let (cm, m) = (r.report.confusion, r.report.metrics);
        let last = r.pretrain_log.last().map_or(f64::NAN, |l| l.report.l_total);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.alpha, r.report.threshold.threshold, cm.tp, cm.fn_, cm.fp, cm.tn, m.accuracy, m.precision, m.recall_pd, m.true_pfa, m.miou, last
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(runs)
}

/// Every stage in order; the α sweep too when `[ablate] in_pipeline`.
pub fn run_pipeline(cfg: &RunConfig, ws: &Workspace) -> Result<ModelRun, StageError> {
    synth_gen(cfg, ws)?;
    extract_features(cfg, ws)?;
    gini_weights(cfg, ws)?;
    let run = train_and_evaluate(cfg, ws)?;
    if cfg.ablate.in_pipeline {
        ablate_alpha(cfg, ws)?;
    }
    Ok(run)
}
