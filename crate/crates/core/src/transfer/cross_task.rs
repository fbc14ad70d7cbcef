use std::ops::Range;

use super::schedule::farm_stream;
use super::{pretrain_source, EventLog, FarmData, ModelConfigs, Phase, TrainingEvent, TransferPlan};
use crate::autoencoder::{
    attach_input_adapter, finetune_from, stack_finetune, stack_pretrain, Provenance, StackedSparseRegressor,
};
use crate::dataio::{RollingSplit, TargetChannel, WindFarmSeries, Window};
use crate::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ModelMetrics};
use crate::numerics::RngStream;
use crate::transfer::EventKind;

/// Cumulative windows of `window_months` up to the held-out tail of
/// `test_months`. There is no meta window.
pub fn cross_task_split(
    n_rows: usize,
    hours_per_month: usize,
    window_months: usize,
    test_months: usize,
) -> Result<RollingSplit> {
    if hours_per_month == 0 || window_months == 0 || test_months == 0 {
        return Err(Error::InvalidArgument("window lengths must be positive".into()));
    }
    let w = window_months * hours_per_month;
    let tail = test_months * hours_per_month;
    if n_rows < w + tail {
        return Err(Error::SeriesTooShort {
            required: w + tail,
            actual: n_rows,
        });
    }
    let test_start = n_rows - tail;
    let base: Vec<Range<usize>> = (1..=test_start / w).map(|k| 0..k * w).collect();
    Ok(RollingSplit {
        hours_per_month,
        window_months,
        base,
        meta: test_start..test_start,
        test: test_start..n_rows,
    })
}

#[derive(Debug, Clone)]
pub struct CrossTaskOutcome {
    pub data: FarmData,
    /// Model after the last window.
    pub model: StackedSparseRegressor,
    pub events: Vec<TrainingEvent>,
    pub normalized: ModelMetrics,
    pub denormalized: ModelMetrics,
    pub predictions: Vec<f64>,
}

fn speed_plan(plan: &TransferPlan) -> TransferPlan {
    TransferPlan {
        target_channel: TargetChannel::Speed,
        ..plan.clone()
    }
}

/// Prepares `series` for the speed task: speed target, cross-task windows.
pub fn prepare_speed_data(series: &WindFarmSeries, plan: &TransferPlan) -> Result<FarmData> {
    let split = cross_task_split(
        series.len(),
        plan.hours_per_month,
        plan.cross_task_window_months,
        plan.cross_task_test_months,
    )?;
    FarmData::prepare_with_split(series, split, &speed_plan(plan))
}

fn denorm(data: &FarmData, v: &[f64]) -> Vec<f64> {
    let r = data
        .params
        .range(TargetChannel::Speed.channel())
        .expect("speed channel normalized");
    v.iter().map(|&x| r.inverse(x)).collect()
}

/// Adapts `source` (trained on power) to wind speed: fine-tunes it on every
/// cumulative window in turn, each step starting from the previous one, and
/// evaluates the final model on the held-out tail.
pub fn cross_task_transfer(
    source: &StackedSparseRegressor,
    speed_series: &WindFarmSeries,
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
) -> Result<CrossTaskOutcome> {
    let data = prepare_speed_data(speed_series, plan)?;
    let width = data.features.width();
    let mut model = if width == source.input_width() {
        source.clone()
    } else if plan.input_adapter {
        attach_input_adapter(source, width, rng)
    } else {
        return Err(Error::WidthMismatch {
            expected: source.input_width(),
            actual: width,
        });
    };
    let ft = cfgs.tl_finetune(plan);
    let mut events = Vec::new();
    for k in 0..data.split.base.len() {
        let w = Window::Base(k);
        let train = data.window(w, Phase::FineTune);
        let months = data.split.months(w);
        let prov = Provenance {
            model_id: format!("{}/speed/m{months}", data.farm_id),
            farm_id: data.farm_id.clone(),
            months_trained: months,
            parent_model_id: Some(model.provenance.model_id.clone()),
        };
        let t = finetune_from(&model, &train.x, &train.y, &ft, prov, rng)?;
        events.push(TrainingEvent {
            kind: EventKind::FineTune,
            farm_id: data.farm_id.clone(),
            window: format!("months 1-{months}"),
            model_id: t.model.provenance.model_id.clone(),
            parent_model_id: t.model.provenance.parent_model_id.clone(),
            epochs: t.epochs(),
            final_loss: Some(t.final_loss()),
            wall_clock_unix_ms: super::schedule::now_ms(),
        });
        model = t.model;
    }
    let test = data.window(Window::Test, Phase::Evaluate);
    let predictions = model.network.predict(&test.x)?;
    Ok(CrossTaskOutcome {
        normalized: evaluate(&test.y, &predictions)?,
        denormalized: evaluate(&denorm(&data, &test.y), &denorm(&data, &predictions))?,
        predictions,
        model,
        events,
        data,
    })
}

/// Control: a speed model trained from scratch on all rows before the tail,
/// evaluated on the tail.
pub fn cross_task_cold_start(data: &FarmData, cfgs: &ModelConfigs, rng: &mut RngStream) -> Result<ModelMetrics> {
    let last = Window::Base(data.split.base.len() - 1);
    let train = data.window(last, Phase::Pretrain);
    let layers = stack_pretrain(&train.x, &cfgs.ae, rng)?;
    let prov = Provenance {
        model_id: format!("{}/speed/cold", data.farm_id),
        farm_id: data.farm_id.clone(),
        months_trained: data.split.months(last),
        parent_model_id: None,
    };
    let cold = stack_finetune(&layers, &train.x, &train.y, &cfgs.ae.finetune, prov, rng)?;
    let test = data.window(Window::Test, Phase::Evaluate);
    evaluate(&test.y, &cold.model.network.predict(&test.x)?)
}

/// One target farm of a cross-task run.
#[derive(Debug, Clone)]
pub struct CrossTaskFarm {
    pub outcome: CrossTaskOutcome,
    /// Control trained from scratch on the same rows.
    pub cold_start: ModelMetrics,
}

#[derive(Debug, Clone)]
pub struct CrossTaskRun {
    pub source_model: StackedSparseRegressor,
    /// Targets in input order.
    pub farms: Vec<CrossTaskFarm>,
}

/// Pretrains the source on power (first base window of the standard split),
/// then transfers it to wind speed on every other farm. Each farm has its own
/// derived stream; the cold-start control uses a second one.
pub fn run_cross_task(
    farms: &[WindFarmSeries],
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    seed: u64,
    log: &mut EventLog,
) -> Result<CrossTaskRun> {
    plan.validate()?;
    let source_raw = farms
        .iter()
        .find(|f| f.farm_id == plan.source_farm_id)
        .ok_or_else(|| Error::InvalidArgument(format!("source farm {} not found", plan.source_farm_id)))?;
    let power = TransferPlan {
        target_channel: TargetChannel::Power,
        ..plan.clone()
    };
    let root = RngStream::new(seed);
    let source_data = FarmData::prepare(source_raw, &power)?;
    let mut rng = root.derive(farm_stream(&source_data.farm_id));
    let source = pretrain_source(&source_data, cfgs, &mut rng)?;
    log.events
        .push(TrainingEvent::trained(EventKind::FromScratch, Window::Base(0), &source));

    let mut out = Vec::new();
    for raw in farms.iter().filter(|f| f.farm_id != plan.source_farm_id) {
        if !plan.target_farm_ids.is_empty() && !plan.target_farm_ids.contains(&raw.farm_id) {
            continue;
        }
        let farm_rng = root.derive(farm_stream(&raw.farm_id));
        let outcome = cross_task_transfer(&source.model, raw, plan, cfgs, &mut farm_rng.derive(0))?;
        log.events.extend(outcome.events.iter().cloned());
        let cold_start = cross_task_cold_start(&outcome.data, cfgs, &mut farm_rng.derive(1))?;
        out.push(CrossTaskFarm { outcome, cold_start });
    }
    Ok(CrossTaskRun {
        source_model: source.model,
        farms: out,
    })
}

impl CrossTaskOutcome {
    /// `hour, actual, actual_denorm, cross_task, cross_task_denorm`
    pub fn predictions_csv(&self) -> String {
        use std::fmt::Write;
        let test: FeatureMatrix = self.data.window(Window::Test, Phase::Evaluate);
        let actual_d = denorm(&self.data, &test.y);
        let pred_d = denorm(&self.data, &self.predictions);
        let mut s = String::from("hour,actual,actual_denorm,cross_task,cross_task_denorm\n");
        for (i, &row) in test.series_rows.iter().enumerate() {
            let hour = self.data.series.records[row].hour;
            writeln!(s, "{hour},{},{},{},{}", test.y[i], actual_d[i], self.predictions[i], pred_d[i]).unwrap();
        }
        s
    }
}
