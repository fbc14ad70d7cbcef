//! Adaptive transfer-learning schedule: one source model trained from
//! scratch, base-learners obtained from it by fine-tuning on growing windows
//! of the same farm (intra) or other farms (inter), a rolling set of the
//! latest learners, and a DBN meta-learner stacked on their predictions.

mod cross_task;
mod data;
mod schedule;

pub use cross_task::{
    cross_task_cold_start, cross_task_split, cross_task_transfer, prepare_speed_data, run_cross_task, CrossTaskFarm,
    CrossTaskOutcome, CrossTaskRun,
};
pub use data::{AccessLog, AccessRecord, FarmData, Phase};
pub use schedule::{
    epochs_to_reach, run_adaptive_schedule, warm_start_comparison, EventKind, EventLog, FarmOutcome, RollingLearners,
    ScheduleOutcome, TrainingEvent, WarmStart,
};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    finetune_from, stack_finetune, stack_pretrain, AeTrainConfig, FinetuneConfig, Provenance,
    StackedSparseRegressor, Trained,
};
use crate::dataio::{LeadTime, NormParams, TargetChannel, Window};
use crate::dbn::{dbn_finetune_regression, dbn_pretrain, Dbn, DbnTrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, DEFAULT_MI_BINS};
use crate::metrics::{evaluate, power_histogram, MetricsReport};
use crate::numerics::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaInputMode {
    /// Predictions of every live learner plus the original features.
    #[default]
    AllThree,
    /// Prediction of the newest learner plus the original features.
    LastOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferPlan {
    pub source_farm_id: String,
    /// Empty means every farm other than the source.
    pub target_farm_ids: Vec<String>,
    pub hours_per_month: usize,
    pub window_months: usize,
    /// Number of cumulative base windows before the meta and test windows.
    pub n_base_windows: usize,
    pub max_base_learners: usize,
    pub meta_input_mode: MetaInputMode,
    pub target_channel: TargetChannel,
    pub cross_task_window_months: usize,
    pub cross_task_test_months: usize,
    /// Fine-tuning epochs for transferred learners as a fraction of the
    /// from-scratch supervised epochs.
    pub tl_epoch_fraction: f64,
    /// Inter-farm learner `k` starts from the same farm's learner `k − 1`
    /// instead of the source model.
    pub chained_inter: bool,
    /// Allow a trainable linear input projection when feature widths differ.
    pub input_adapter: bool,
    pub mi_bins: usize,
    /// Target farms reuse the source farm's lead time instead of running
    /// their own selection.
    pub freeze_lead_to_source: bool,
}

impl Default for TransferPlan {
    fn default() -> Self {
        Self {
            source_farm_id: "farm2".into(),
            target_farm_ids: Vec::new(),
            hours_per_month: 720,
            window_months: 4,
            n_base_windows: 3,
            max_base_learners: 3,
            meta_input_mode: MetaInputMode::AllThree,
            target_channel: TargetChannel::Power,
            cross_task_window_months: 2,
            cross_task_test_months: 4,
            tl_epoch_fraction: 0.25,
            chained_inter: false,
            input_adapter: false,
            mi_bins: DEFAULT_MI_BINS,
            freeze_lead_to_source: false,
        }
    }
}

impl TransferPlan {
    pub fn validate(&self) -> Result<()> {
        if self.max_base_learners == 0 || self.n_base_windows == 0 {
            return Err(Error::InvalidArgument(
                "need at least one base window and one live learner".into(),
            ));
        }
        if self.target_farm_ids.contains(&self.source_farm_id) {
            return Err(Error::InvalidArgument(format!(
                "source farm {} is also listed as a target",
                self.source_farm_id
            )));
        }
        if !(self.tl_epoch_fraction > 0.0) {
            return Err(Error::InvalidArgument("tl_epoch_fraction must be positive".into()));
        }
        Ok(())
    }

    /// Supervised epochs for a transferred learner.
    pub fn tl_epochs(&self, from_scratch: usize) -> usize {
        ((from_scratch as f64 * self.tl_epoch_fraction).round() as usize).max(1)
    }
}

/// Hyperparameters of both network families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ModelConfigs {
    pub ae: AeTrainConfig,
    pub dbn: DbnTrainConfig,
}

impl ModelConfigs {
    pub fn tl_finetune(&self, plan: &TransferPlan) -> FinetuneConfig {
        self.ae.finetune.with_epochs(plan.tl_epochs(self.ae.finetune.epochs))
    }
}

/// Deterministic identifier `farm/window`.
pub fn model_id(farm_id: &str, window: Window) -> String {
    format!("{farm_id}/{window}")
}

/// The only model trained from scratch: greedy pretraining and supervised
/// fine-tuning on the source farm's first base window.
pub fn pretrain_source(
    farm: &FarmData,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
) -> Result<Trained<StackedSparseRegressor>> {
    let w = Window::Base(0);
    let train = farm.window(w, Phase::Pretrain);
    let layers = stack_pretrain(&train.x, &cfgs.ae, rng)?;
    let prov = Provenance {
        model_id: model_id(&farm.farm_id, w),
        farm_id: farm.farm_id.clone(),
        months_trained: farm.split.months(w),
        parent_model_id: None,
    };
    stack_finetune(&layers, &train.x, &train.y, &cfgs.ae.finetune, prov, rng)
}

/// Fine-tunes `parent` on `window` of `farm`.
pub fn transfer_to_window(
    parent: &StackedSparseRegressor,
    farm: &FarmData,
    window: Window,
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
) -> Result<Trained<StackedSparseRegressor>> {
    let train = farm.window(window, Phase::FineTune);
    let start = if plan.input_adapter && train.width() != parent.input_width() {
        crate::autoencoder::attach_input_adapter(parent, train.width(), rng)
    } else {
        parent.clone()
    };
    let prov = Provenance {
        model_id: model_id(&farm.farm_id, window),
        farm_id: farm.farm_id.clone(),
        months_trained: farm.split.months(window),
        parent_model_id: Some(parent.provenance.model_id.clone()),
    };
    finetune_from(&start, &train.x, &train.y, &cfgs.tl_finetune(plan), prov, rng)
}

/// Learners for every base window of the source farm: the source model itself
/// for the first window, then fine-tuned copies of it.
pub fn intra_transfer(
    source: &StackedSparseRegressor,
    farm: &FarmData,
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
) -> Result<Vec<Trained<StackedSparseRegressor>>> {
    let mut out = Vec::with_capacity(farm.split.base.len());
    for k in 1..farm.split.base.len() {
        out.push(transfer_to_window(source, farm, Window::Base(k), plan, cfgs, rng)?);
    }
    Ok(out)
}

/// Learners for every base window of a target farm, each fine-tuned from the
/// source model (or from the previous target learner in chained mode).
pub fn inter_transfer(
    source: &StackedSparseRegressor,
    farm: &FarmData,
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
) -> Result<Vec<Trained<StackedSparseRegressor>>> {
    if farm.farm_id == source.provenance.farm_id {
        return Err(Error::InvalidArgument(format!(
            "inter-farm transfer onto the source farm {}",
            farm.farm_id
        )));
    }
    if !plan.input_adapter && farm.features.width() != source.input_width() {
        return Err(Error::WidthMismatch {
            expected: source.input_width(),
            actual: farm.features.width(),
        });
    }
    let mut out: Vec<Trained<StackedSparseRegressor>> = Vec::with_capacity(farm.split.base.len());
    for k in 0..farm.split.base.len() {
        let parent = match (plan.chained_inter, out.last()) {
            (true, Some(prev)) => &prev.model,
            _ => source,
        };
        let t = transfer_to_window(parent, farm, Window::Base(k), plan, cfgs, rng)?;
        out.push(t);
    }
    Ok(out)
}

/// Base-learner predictions (clamped to `[0, 1]`) followed by the original
/// feature columns.
pub fn build_meta_inputs(
    learners: &[StackedSparseRegressor],
    features: &FeatureMatrix,
    mode: MetaInputMode,
) -> Result<FeatureMatrix> {
    if learners.is_empty() {
        return Err(Error::EmptyList);
    }
    let used: &[StackedSparseRegressor] = match mode {
        MetaInputMode::AllThree => learners,
        MetaInputMode::LastOnly => &learners[learners.len() - 1..],
    };
    let mut preds = Vec::with_capacity(used.len());
    for l in used {
        if l.input_width() != features.width() {
            return Err(Error::WidthMismatch {
                expected: l.input_width(),
                actual: features.width(),
            });
        }
        preds.push(l.network.predict(&features.x)?);
    }
    let width = used.len() + features.width();
    let mut data = Vec::with_capacity(features.rows() * width);
    for i in 0..features.rows() {
        data.extend(preds.iter().map(|p| p[i].clamp(0.0, 1.0)));
        data.extend_from_slice(features.x.row(i));
    }
    let mut labels: Vec<String> = used.iter().map(|l| format!("pred[{}]", l.provenance.model_id)).collect();
    labels.extend(features.column_labels.iter().cloned());
    Ok(FeatureMatrix {
        x: Matrix::new(features.rows(), width, data)?,
        y: features.y.clone(),
        column_labels: labels,
        lead: features.lead,
        target: features.target,
        series_rows: features.series_rows.clone(),
    })
}

/// Frozen base-learners (oldest first) with the meta-learner stacked on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub farm_id: String,
    pub base_learners: Vec<StackedSparseRegressor>,
    pub meta: Dbn,
    pub meta_input_mode: MetaInputMode,
    pub meta_input_width: usize,
    pub lead: LeadTime,
    pub target: TargetChannel,
    pub norm_params: NormParams,
}

impl EnsembleModel {
    pub fn predict_meta(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        let meta_in = build_meta_inputs(&self.base_learners, features, self.meta_input_mode)?;
        self.meta.predict(&meta_in.x)
    }

    /// Report keys paired with predictions: one per base learner, then `meta`.
    pub fn predict_all(&self, features: &FeatureMatrix) -> Result<Vec<(String, Vec<f64>)>> {
        let mut out = Vec::with_capacity(self.base_learners.len() + 1);
        for l in &self.base_learners {
            out.push((base_key(l), l.network.predict(&features.x)?));
        }
        out.push(("meta".to_string(), self.predict_meta(features)?));
        Ok(out)
    }

    fn denormalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        let range = self
            .norm_params
            .range(self.target.channel())
            .ok_or_else(|| Error::MissingColumn {
                column: self.target.channel().column_name(),
            })?;
        Ok(v.iter().map(|&x| range.inverse(x)).collect())
    }
}

/// `base_<window>` from the learner's model id.
pub fn base_key(l: &StackedSparseRegressor) -> String {
    let window = l.provenance.model_id.rsplit('/').next().unwrap_or_default();
    format!("base_{window}")
}

/// DBN pretraining and regression fine-tuning on the meta inputs built from
/// `features` (the meta window). Base learners are cloned, never updated.
pub fn train_ensemble(
    farm: &FarmData,
    learners: &[StackedSparseRegressor],
    plan: &TransferPlan,
    dbn_cfg: &DbnTrainConfig,
    rng: &mut RngStream,
) -> Result<Trained<EnsembleModel>> {
    let features = farm.window(Window::Meta, Phase::MetaTrain);
    if features.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let meta_in = build_meta_inputs(learners, &features, plan.meta_input_mode)?;
    let pre = dbn_pretrain(&meta_in.x, dbn_cfg, rng)?;
    let tuned = dbn_finetune_regression(&pre, &meta_in.x, &meta_in.y, &dbn_cfg.finetune, rng)?;
    Ok(Trained {
        model: EnsembleModel {
            farm_id: farm.farm_id.clone(),
            base_learners: learners.to_vec(),
            meta: tuned.model,
            meta_input_mode: plan.meta_input_mode,
            meta_input_width: meta_in.width(),
            lead: features.lead,
            target: features.target,
            norm_params: farm.params.clone(),
        },
        losses: tuned.losses,
    })
}

/// Metrics on the test window, in normalized and original units, plus the
/// per-hour predictions behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEvaluation {
    pub normalized: MetricsReport,
    pub denormalized: MetricsReport,
    pub series_rows: Vec<usize>,
    pub hours: Vec<i64>,
    pub actual: Vec<f64>,
    pub predictions: Vec<(String, Vec<f64>)>,
}

impl EnsembleEvaluation {
    /// `hour, actual, actual_denorm, <model>, <model>_denorm, ...`
    pub fn predictions_csv(&self, model: &EnsembleModel) -> Result<String> {
        use std::fmt::Write;
        let mut s = String::from("hour,actual,actual_denorm");
        for (k, _) in &self.predictions {
            write!(s, ",{k},{k}_denorm").unwrap();
        }
        s.push('\n');
        let actual_d = model.denormalize(&self.actual)?;
        let preds_d: Vec<Vec<f64>> = self
            .predictions
            .iter()
            .map(|(_, p)| model.denormalize(p))
            .collect::<Result<_>>()?;
        for i in 0..self.actual.len() {
            write!(s, "{},{},{}", self.hours[i], self.actual[i], actual_d[i]).unwrap();
            for (p, pd) in self.predictions.iter().zip(&preds_d) {
                write!(s, ",{},{}", p.1[i], pd[i]).unwrap();
            }
            s.push('\n');
        }
        Ok(s)
    }
}

pub fn evaluate_ensemble(model: &EnsembleModel, farm: &FarmData) -> Result<EnsembleEvaluation> {
    let test = farm.window(Window::Test, Phase::Evaluate);
    if test.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    evaluate_on(model, farm, &test)
}

/// Evaluation of `model` on an explicit feature window of `farm`.
pub fn evaluate_on(model: &EnsembleModel, farm: &FarmData, test: &FeatureMatrix) -> Result<EnsembleEvaluation> {
    let predictions = model.predict_all(test)?;
    let actual_d = model.denormalize(&test.y)?;
    let mut normalized = MetricsReport::default();
    let mut denormalized = MetricsReport::default();
    for (k, p) in &predictions {
        normalized.models.insert(k.clone(), evaluate(&test.y, p)?);
        denormalized.models.insert(k.clone(), evaluate(&actual_d, &model.denormalize(p)?)?);
    }
    let train_end = farm.split.base.last().map_or(0, |r| r.end);
    let train_target = farm.target_values(0..train_end, Phase::Evaluate);
    normalized.histogram = Some(power_histogram(&train_target, &test.y, 20)?);
    Ok(EnsembleEvaluation {
        normalized,
        denormalized,
        hours: test.series_rows.iter().map(|&r| farm.series.records[r].hour).collect(),
        series_rows: test.series_rows.clone(),
        actual: test.y.clone(),
        predictions,
    })
}

#[cfg(test)]
mod tests;
