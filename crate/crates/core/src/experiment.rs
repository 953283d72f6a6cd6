//! Benchmark orchestration: repeated stratified 70/30 runs of all four
//! classifiers, aggregated metrics, best-model selection with a C⁺ safety
//! screen, and an index audit proving test rows never reach any fit.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{ann_train_encoded, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::ingest::{AbsenteeismClass, HireTimeRecord};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::mlr::{mlr_fit_encoded, MlrConfig, MlrFitReport, MLR_EXCLUDED_ATTRIBUTES};
use crate::model::{ModelKind, ModelParams, TrainedModel};
use crate::numerics::RngStream;
use crate::persistence::{sha256_hex, ModelBundle};
use crate::preprocess::{
    apply_scaler, build_schema, encode, fit_scaler, smote_oversample, stratified_split, EncodedMatrix, FeatureSchema,
    ScalerParams, SmoteOutput, SplitIndices, DEFAULT_SMOTE_K,
};
use crate::rf::{feature_importance, forest_fit_encoded, ForestConfig, ImportanceReport};
use crate::svm::{svm_fit_ovr, svm_grid_search, GridSearchResult, KernelSpec, SmoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSettings {
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self {
            gamma_grid: vec![0.001, 0.01, 0.1, 1.0],
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            folds: 5,
            tolerance: 1e-3,
            max_passes: 200,
        }
    }
}

impl SvmSettings {
    fn smo(&self) -> SmoConfig {
        SmoConfig {
            tolerance: self.tolerance,
            max_passes: self.max_passes,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub delimiter: char,
    /// Share of rows used for training.
    pub split_ratio: f64,
    /// Master seed; every per-repetition seed derives from it.
    pub seed: u64,
    pub repetitions: usize,
    pub smote_k: usize,
    pub models: Vec<ModelKind>,
    pub mlr: MlrConfig,
    pub svm: SvmSettings,
    /// Network settings; the seed is replaced per repetition.
    pub ann: TrainConfig,
    /// Forest settings; the seed is replaced per repetition.
    pub rf: ForestConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            delimiter: ';',
            split_ratio: 0.7,
            seed: 42,
            repetitions: 10,
            smote_k: DEFAULT_SMOTE_K,
            models: ModelKind::ALL.to_vec(),
            mlr: MlrConfig::default(),
            svm: SvmSettings::default(),
            ann: TrainConfig::default(),
            rf: ForestConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document; errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio {} not in (0, 1)", self.split_ratio)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be at least 1".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter {:?} is not ASCII", self.delimiter)));
        }
        Ok(())
    }
}

/// Seeds used by one repetition, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub repetition: usize,
    pub split: u64,
    pub smote: u64,
    pub svm_folds: u64,
    pub ann: u64,
    pub rf: u64,
}

impl RepetitionSeeds {
    pub fn derive(master: u64, repetition: usize) -> Self {
        let mut rng = RngStream::derive(master, repetition as u64);
        Self {
            repetition,
            split: rng.next_u64(),
            smote: rng.next_u64(),
            svm_folds: rng.next_u64(),
            ann: rng.next_u64(),
            rf: rng.next_u64(),
        }
    }
}

/// One repetition's data after splitting and scaling.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: SplitIndices,
    pub scaler: ScalerParams,
    /// Scaled training rows, in `split.train` order.
    pub train: EncodedMatrix<f64>,
    /// Scaled test rows, in `split.test` order.
    pub test: EncodedMatrix<f64>,
    /// SMOTE-balanced training rows.
    pub smote: Option<SmoteOutput<f64>>,
}

impl PreparedSplit {
    /// Dataset rows behind positions of the SMOTE matrix: originals map to
    /// themselves, synthetic rows to both interpolation endpoints.
    pub fn smote_provenance(&self, positions: &[usize]) -> BTreeSet<usize> {
        let n = self.train.rows();
        let mut out = BTreeSet::new();
        for &p in positions {
            if p < n {
                out.insert(self.split.train[p]);
            } else if let Some(o) = self.smote.as_ref().and_then(|s| s.origins.get(p - n)) {
                out.insert(self.split.train[o.base]);
                out.insert(self.split.train[o.neighbor]);
            }
        }
        out
    }

    fn smote_matrix(&self) -> Result<&EncodedMatrix<f64>> {
        self.smote
            .as_ref()
            .map(|s| &s.matrix)
            .ok_or_else(|| Error::InvalidParameter("SMOTE output was not prepared".into()))
    }
}

pub fn prepare_split(full: &EncodedMatrix<f64>, config: &ExperimentConfig, seeds: &RepetitionSeeds, with_smote: bool) -> Result<PreparedSplit> {
    let split = stratified_split(&full.labels, config.split_ratio, seeds.split)?;
    let scaler = fit_scaler(full, &split.train)?;
    let train = apply_scaler(&full.select_rows(&split.train), &scaler)?;
    let test = apply_scaler(&full.select_rows(&split.test), &scaler)?;
    let smote = if with_smote {
        Some(smote_oversample(&train, config.smote_k, seeds.smote)?)
    } else {
        None
    };
    Ok(PreparedSplit {
        split,
        scaler,
        train,
        test,
        smote,
    })
}

/// Row-index record of one fit, in dataset coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub fit_rows: Vec<usize>,
    pub carve_out_rows: Vec<usize>,
    pub grid_fold_rows: Vec<usize>,
    pub mlr: Option<MlrFitReport>,
    pub svm_grid: Option<GridSearchResult>,
    pub ann: Option<TrainReport>,
}

fn all_positions(m: &EncodedMatrix<f64>) -> Vec<usize> {
    (0..m.rows()).collect()
}

/// Fits one model kind on a prepared split.
pub fn fit_kind(kind: ModelKind, prepared: &PreparedSplit, config: &ExperimentConfig, seeds: &RepetitionSeeds) -> Result<(TrainedModel, FitTrace)> {
    let schema = prepared.train.schema.clone();
    let mut trace = FitTrace::default();
    let (params, mask) = match kind {
        ModelKind::Mlr => {
            let mask = schema.columns_excluding(&MLR_EXCLUDED_ATTRIBUTES);
            let x = prepared.train.select_cols(&mask);
            let (m, report) = mlr_fit_encoded(&x, &config.mlr)?;
            trace.fit_rows = prepared.split.train.clone();
            trace.mlr = Some(report);
            (ModelParams::Mlr(m), Some(mask))
        }
        ModelKind::Svm => {
            let data = prepared.smote_matrix()?;
            let s = &config.svm;
            let grid = svm_grid_search(data, s.folds, &s.gamma_grid, &s.c_grid, seeds.svm_folds, &s.smo())?;
            let kernel = KernelSpec::new(grid.best.gamma, grid.best.c)?;
            let m = svm_fit_ovr(&data.values, &data.label_indices(), AbsenteeismClass::COUNT, kernel, &s.smo())?;
            trace.fit_rows = prepared.smote_provenance(&all_positions(data)).into_iter().collect();
            let fold_positions: Vec<usize> = grid.folds.iter().flatten().copied().collect();
            trace.grid_fold_rows = prepared.smote_provenance(&fold_positions).into_iter().collect();
            trace.svm_grid = Some(grid);
            (ModelParams::Svm(m), None)
        }
        ModelKind::Ann => {
            let data = prepared.smote_matrix()?;
            let cfg = TrainConfig {
                seed: seeds.ann,
                ..config.ann.clone()
            };
            let (m, report) = ann_train_encoded(data, &cfg)?;
            trace.fit_rows = prepared.smote_provenance(&all_positions(data)).into_iter().collect();
            trace.carve_out_rows = prepared.smote_provenance(&report.validation_rows).into_iter().collect();
            trace.ann = Some(report);
            (ModelParams::Ann(m), None)
        }
        ModelKind::Rf => {
            let data = prepared.smote_matrix()?;
            let cfg = ForestConfig {
                seed: seeds.rf,
                ..config.rf.clone()
            };
            let m = forest_fit_encoded(data, &cfg)?;
            trace.fit_rows = prepared.smote_provenance(&all_positions(data)).into_iter().collect();
            (ModelParams::Rf(m), None)
        }
    };
    Ok((TrainedModel::new(params, schema, prepared.scaler.clone(), mask)?, trace))
}

/// Predicts every row of an already scaled full-width matrix.
pub fn evaluate_scaled(model: &TrainedModel, scaled: &EncodedMatrix<f64>) -> Result<(MetricsReport, ConfusionMatrix)> {
    if scaled.cols() != model.schema.len() {
        return Err(Error::DimensionMismatch {
            expected: model.schema.len(),
            found: scaled.cols(),
        });
    }
    let mut predicted = Vec::with_capacity(scaled.rows());
    let mut scores = Vec::with_capacity(scaled.rows());
    for i in 0..scaled.rows() {
        let p = model.predict_input(&model.select_inputs(scaled.row(i)))?;
        predicted.push(p.class.index());
        scores.push(p.ranking_scores());
    }
    MetricsReport::compute(&scaled.label_indices(), &predicted, Some(&scores), AbsenteeismClass::COUNT)
}

/// Encodes raw records with the model's own schema and evaluates.
pub fn evaluate_records(model: &TrainedModel, records: &[HireTimeRecord]) -> Result<(MetricsReport, ConfusionMatrix)> {
    let encoded = encode::<f64>(records, &model.schema)?;
    let scaled = apply_scaler(&encoded, &model.scaler)?;
    evaluate_scaled(model, &scaled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub kind: ModelKind,
    pub metrics: Option<MetricsReport>,
    pub confusion: Option<ConfusionMatrix>,
    pub fit_seconds: f64,
    pub error: Option<String>,
}

impl ModelRun {
    pub fn succeeded(&self) -> bool {
        self.metrics.is_some()
    }
}

/// Rows seen by one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditStage {
    pub stage: String,
    pub rows: Vec<usize>,
}

/// Every dataset row each stage touched, checked against the test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexAudit {
    pub test_rows: Vec<usize>,
    pub stages: Vec<AuditStage>,
    /// One entry per stage that touched a test row.
    pub violations: Vec<String>,
}

impl IndexAudit {
    pub fn new(test_rows: Vec<usize>, stages: Vec<AuditStage>) -> Self {
        let test: BTreeSet<usize> = test_rows.iter().copied().collect();
        let violations = stages
            .iter()
            .filter_map(|s| {
                let leaked: Vec<usize> = s.rows.iter().copied().filter(|r| test.contains(r)).collect();
                (!leaked.is_empty()).then(|| format!("{} used test rows {leaked:?}", s.stage))
            })
            .collect();
        Self {
            test_rows,
            stages,
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub seeds: RepetitionSeeds,
    pub runs: Vec<ModelRun>,
    pub audit: IndexAudit,
}

impl RepetitionResult {
    pub fn run(&self, kind: ModelKind) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }

    pub fn select_best(&self) -> Result<Selection> {
        let candidates: Vec<Candidate> = self
            .runs
            .iter()
            .filter_map(|r| {
                let (m, cm) = (r.metrics.as_ref()?, r.confusion.as_ref()?);
                Some(Candidate {
                    kind: r.kind,
                    f1: m.f1_weighted,
                    passes_screen: passes_c_plus_screen(cm),
                })
            })
            .collect();
        select_best(&candidates)
    }
}

/// Runs one repetition and also returns the fitted models.
pub fn run_repetition_with_models(
    full: &EncodedMatrix<f64>,
    config: &ExperimentConfig,
    repetition: usize,
) -> Result<(RepetitionResult, Vec<(ModelKind, TrainedModel)>)> {
    let seeds = RepetitionSeeds::derive(config.seed, repetition);
    let needs_smote = config.models.iter().any(|k| k.uses_smote());
    let prepared = prepare_split(full, config, &seeds, needs_smote)?;
    let mut stages = vec![AuditStage {
        stage: "scaler".into(),
        rows: prepared.split.train.clone(),
    }];
    if let Some(s) = &prepared.smote {
        let synth: Vec<usize> = (prepared.train.rows()..s.matrix.rows()).collect();
        stages.push(AuditStage {
            stage: "smote".into(),
            rows: prepared.smote_provenance(&synth).into_iter().collect(),
        });
    }
    let mut runs = Vec::new();
    let mut models = Vec::new();
    for &kind in &config.models {
        let start = Instant::now();
        let fitted = fit_kind(kind, &prepared, config, &seeds);
        let fit_seconds = start.elapsed().as_secs_f64();
        let run = match fitted.and_then(|(model, trace)| {
            let (metrics, cm) = evaluate_scaled(&model, &prepared.test)?;
            Ok((model, trace, metrics, cm))
        }) {
            Ok((model, trace, metrics, cm)) => {
                let tag = kind.tag();
                stages.push(AuditStage {
                    stage: format!("{tag}.fit"),
                    rows: trace.fit_rows,
                });
                if trace.svm_grid.is_some() {
                    stages.push(AuditStage {
                        stage: format!("{tag}.grid_folds"),
                        rows: trace.grid_fold_rows,
                    });
                }
                if trace.ann.is_some() {
                    stages.push(AuditStage {
                        stage: format!("{tag}.carve_out"),
                        rows: trace.carve_out_rows,
                    });
                }
                models.push((kind, model));
                ModelRun {
                    kind,
                    metrics: Some(metrics),
                    confusion: Some(cm),
                    fit_seconds,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("repetition {repetition}: {kind} failed: {e}");
                ModelRun {
                    kind,
                    metrics: None,
                    confusion: None,
                    fit_seconds,
                    error: Some(e.to_string()),
                }
            }
        };
        runs.push(run);
    }
    let audit = IndexAudit::new(prepared.split.test.clone(), stages);
    Ok((RepetitionResult { seeds, runs, audit }, models))
}

pub fn run_repetition(full: &EncodedMatrix<f64>, config: &ExperimentConfig, repetition: usize) -> Result<RepetitionResult> {
    run_repetition_with_models(full, config, repetition).map(|(r, _)| r)
}

/// Median (mean of the middle pair for even counts), min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Self {
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub successes: usize,
    pub failures: usize,
    pub accuracy: Option<Aggregate>,
    pub precision_weighted: Option<Aggregate>,
    pub recall_weighted: Option<Aggregate>,
    pub f1_weighted: Option<Aggregate>,
    pub roc_auc_ovo_weighted: Option<Aggregate>,
    pub per_class_recall: Vec<Option<Aggregate>>,
    /// Sum of the per-repetition confusion matrices.
    pub confusion_total: Option<ConfusionMatrix>,
    pub fit_seconds: Option<Aggregate>,
}

fn summarize(kind: ModelKind, reps: &[RepetitionResult]) -> Result<ModelSummary> {
    let runs: Vec<&ModelRun> = reps.iter().filter_map(|r| r.run(kind)).collect();
    let ok: Vec<(&MetricsReport, &ConfusionMatrix)> = runs
        .iter()
        .filter_map(|r| Some((r.metrics.as_ref()?, r.confusion.as_ref()?)))
        .collect();
    let agg = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|(m, _)| f(m)).collect();
        Aggregate::of(&v)
    };
    let per_class_recall = (0..AbsenteeismClass::COUNT)
        .map(|c| agg(&|m: &MetricsReport| m.per_class_recall.get(c).copied().flatten()))
        .collect();
    let confusion_total = if ok.is_empty() {
        None
    } else {
        let mut counts = vec![vec![0u64; AbsenteeismClass::COUNT]; AbsenteeismClass::COUNT];
        for (_, cm) in &ok {
            for (i, row) in counts.iter_mut().enumerate() {
                for (j, c) in row.iter_mut().enumerate() {
                    *c += cm.get(i, j);
                }
            }
        }
        Some(ConfusionMatrix::from_counts(counts)?)
    };
    let seconds: Vec<f64> = runs.iter().map(|r| r.fit_seconds).collect();
    Ok(ModelSummary {
        kind,
        successes: ok.len(),
        failures: runs.len() - ok.len(),
        accuracy: agg(&|m| Some(m.accuracy)),
        precision_weighted: agg(&|m| Some(m.precision_weighted)),
        recall_weighted: agg(&|m| Some(m.recall_weighted)),
        f1_weighted: agg(&|m| Some(m.f1_weighted)),
        roc_auc_ovo_weighted: agg(&|m| m.roc_auc_ovo_weighted),
        per_class_recall,
        confusion_total,
        fit_seconds: Aggregate::of(&seconds),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub repetitions: Vec<RepetitionResult>,
    pub summaries: Vec<ModelSummary>,
}

impl BenchmarkTable {
    pub fn from_repetitions(repetitions: Vec<RepetitionResult>, models: &[ModelKind]) -> Result<Self> {
        let summaries = models
            .iter()
            .map(|&k| summarize(k, &repetitions))
            .collect::<Result<_>>()?;
        Ok(Self {
            repetitions,
            summaries,
        })
    }

    pub fn summary(&self, kind: ModelKind) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    /// Ranks models by median weighted F1; the screen requires that no A⁺
    /// or B⁺ row was ever predicted C⁺ in any repetition.
    pub fn select_best(&self) -> Result<Selection> {
        let candidates: Vec<Candidate> = self
            .summaries
            .iter()
            .filter_map(|s| {
                Some(Candidate {
                    kind: s.kind,
                    f1: s.f1_weighted?.median,
                    passes_screen: passes_c_plus_screen(s.confusion_total.as_ref()?),
                })
            })
            .collect();
        select_best(&candidates)
    }

    /// Copy with wall-clock fields zeroed, for reproducible digests.
    pub fn without_timings(&self) -> Self {
        let mut t = self.clone();
        for rep in &mut t.repetitions {
            for run in &mut rep.runs {
                run.fit_seconds = 0.0;
            }
        }
        for s in &mut t.summaries {
            s.fit_seconds = None;
        }
        t
    }

    /// Rendered table of median (min–max) metrics per model.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let cell = |a: Option<Aggregate>| a.map_or_else(|| "       n/a        ".to_string(), |a| format!("{:.3} ({:.3}-{:.3})", a.median, a.min, a.max));
        let _ = writeln!(
            out,
            "{:<5} {:>19} {:>19} {:>19} {:>19} {:>19} {:>5}",
            "model", "accuracy", "precision", "recall", "f1", "roc_auc_ovo", "fails"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<5} {:>19} {:>19} {:>19} {:>19} {:>19} {:>5}",
                s.kind.tag(),
                cell(s.accuracy),
                cell(s.precision_weighted),
                cell(s.recall_weighted),
                cell(s.f1_weighted),
                cell(s.roc_auc_ovo_weighted),
                s.failures
            );
        }
        out
    }
}

/// Zero A⁺ and zero B⁺ rows predicted as C⁺.
pub fn passes_c_plus_screen(cm: &ConfusionMatrix) -> bool {
    let c = AbsenteeismClass::CPlus.index();
    cm.get(AbsenteeismClass::APlus.index(), c) == 0 && cm.get(AbsenteeismClass::BPlus.index(), c) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: ModelKind,
    pub f1: f64,
    pub passes_screen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: ModelKind,
    pub f1: f64,
    pub passed_screen: bool,
    /// Set when no candidate passed the screen.
    pub warning: Option<String>,
    /// All candidates, best first.
    pub ranking: Vec<Candidate>,
}

/// Screen-passers first, then by weighted F1; exact F1 ties go to the
/// earlier model kind so the result does not depend on input order.
pub fn select_best(candidates: &[Candidate]) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no successful model to select from".into()));
    }
    let mut ranking = candidates.to_vec();
    ranking.sort_by(|a, b| {
        b.passes_screen
            .cmp(&a.passes_screen)
            .then(b.f1.total_cmp(&a.f1))
            .then(a.kind.cmp(&b.kind))
    });
    let best = ranking[0];
    let warning = (!best.passes_screen).then(|| {
        let msg = "no model passed the C+ screen; selected by weighted F1 alone".to_string();
        log::warn!("{msg}");
        msg
    });
    Ok(Selection {
        kind: best.kind,
        f1: best.f1,
        passed_screen: best.passes_screen,
        warning,
        ranking,
    })
}

/// Encodes the full dataset under a schema built from all of it.
pub fn encode_dataset(records: &[HireTimeRecord]) -> Result<EncodedMatrix<f64>> {
    let schema = build_schema(records)?;
    encode(records, &schema)
}

pub fn run_benchmark(records: &[HireTimeRecord], config: &ExperimentConfig) -> Result<BenchmarkTable> {
    config.validate()?;
    let full = encode_dataset(records)?;
    let reps = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(&full, config, r))
        .collect::<Result<Vec<_>>>()?;
    BenchmarkTable::from_repetitions(reps, &config.models)
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub rng: String,
    pub schema_width: usize,
    pub table: BenchmarkTable,
    pub selection: Option<Selection>,
}

impl RunManifest {
    /// SHA-256 of the manifest with timings removed.
    pub fn digest(&self) -> Result<String> {
        let canonical = Self {
            table: self.table.without_timings(),
            ..self.clone()
        };
        Ok(sha256_hex(&serde_json::to_vec(&canonical)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    Kind(ModelKind),
    SelectBest,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub manifest: RunManifest,
}

/// Trains on the first repetition's split and packages the requested model
/// (or the selected best one) with its test metrics.
pub fn train_bundle(records: &[HireTimeRecord], config: &ExperimentConfig, target: TrainTarget) -> Result<TrainOutcome> {
    let mut cfg = config.clone();
    cfg.repetitions = 1;
    cfg.models = match target {
        TrainTarget::Kind(k) => vec![k],
        TrainTarget::SelectBest => ModelKind::ALL.to_vec(),
    };
    cfg.validate()?;
    let full = encode_dataset(records)?;
    let (rep, models) = run_repetition_with_models(&full, &cfg, 0)?;
    let selection = rep.select_best().ok();
    let kind = match target {
        TrainTarget::Kind(k) => k,
        TrainTarget::SelectBest => selection.as_ref().map(|s| s.kind).ok_or(Error::EmptyInput("every model failed".into()))?,
    };
    let run = rep.run(kind).expect("configured model ran");
    if let Some(e) = &run.error {
        return Err(Error::InvalidParameter(format!("{kind} failed: {e}")));
    }
    let metrics = run.metrics.clone();
    let model = models
        .into_iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, m)| m)
        .expect("successful run has a model");
    let manifest = RunManifest {
        config: cfg.clone(),
        rng: RngStream::ALGORITHM.to_string(),
        schema_width: full.cols(),
        table: BenchmarkTable::from_repetitions(vec![rep], &cfg.models)?,
        selection,
    };
    let bundle = ModelBundle {
        model,
        manifest_digest: manifest.digest()?,
        metrics,
    };
    Ok(TrainOutcome { bundle, manifest })
}

/// Fits one model on every row (no hold-out); used for memorization checks
/// and for deploying on all available data.
pub fn train_on_all_rows(records: &[HireTimeRecord], config: &ExperimentConfig, kind: ModelKind) -> Result<ModelBundle> {
    config.validate()?;
    let full = encode_dataset(records)?;
    let all: Vec<usize> = (0..full.rows()).collect();
    let scaler = fit_scaler(&full, &all)?;
    let train = apply_scaler(&full, &scaler)?;
    let seeds = RepetitionSeeds::derive(config.seed, 0);
    let smote = if kind.uses_smote() {
        Some(smote_oversample(&train, config.smote_k, seeds.smote)?)
    } else {
        None
    };
    let prepared = PreparedSplit {
        split: SplitIndices {
            train: all,
            test: Vec::new(),
            seed: seeds.split,
        },
        scaler,
        test: train.select_rows(&[]),
        train,
        smote,
    };
    let (model, trace) = fit_kind(kind, &prepared, config, &seeds)?;
    let digest_input = serde_json::to_vec(&(config, &trace.fit_rows))?;
    Ok(ModelBundle {
        model,
        manifest_digest: sha256_hex(&digest_input),
        metrics: None,
    })
}

/// Impurity importance from a forest fitted on the full, unbalanced dataset.
pub fn importance_ranking(records: &[HireTimeRecord], config: &ExperimentConfig) -> Result<(ImportanceReport, FeatureSchema)> {
    let full = encode_dataset(records)?;
    let all: Vec<usize> = (0..full.rows()).collect();
    let scaled = apply_scaler(&full, &fit_scaler(&full, &all)?)?;
    let cfg = ForestConfig {
        seed: RepetitionSeeds::derive(config.seed, 0).rf,
        ..config.rf.clone()
    };
    let forest = forest_fit_encoded(&scaled, &cfg)?;
    Ok((feature_importance(&forest, &full.schema)?, full.schema))
}
