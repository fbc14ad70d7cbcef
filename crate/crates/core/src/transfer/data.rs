use std::ops::Range;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EnsembleModel, TransferPlan};
use crate::dataio::{normalize_fit_prefix, LeadTime, split_rolling, NormParams, RollingSplit, WindFarmSeries, Window};
use crate::error::Result;
use crate::features::{build_lagged_features, select_lead_time_for, FeatureMatrix, MiScore};

/// What a data read was for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normalization,
    FeatureSelection,
    Pretrain,
    FineTune,
    MetaTrain,
    Evaluate,
}

impl Phase {
    /// Reads in these phases influence model parameters.
    pub fn is_training(self) -> bool {
        !matches!(self, Phase::Evaluate)
    }
}

/// One read of series rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub phase: Phase,
    pub window: Option<Window>,
    /// Series rows whose values were read (targets and lagged inputs).
    pub rows: Range<usize>,
}

#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<AccessRecord>>);

impl AccessLog {
    fn push(&self, r: AccessRecord) {
        self.0.lock().expect("access log poisoned").push(r);
    }

    pub fn records(&self) -> Vec<AccessRecord> {
        self.0.lock().expect("access log poisoned").clone()
    }
}

impl Clone for AccessLog {
    fn clone(&self) -> Self {
        Self(Mutex::new(self.records()))
    }
}

/// One farm ready for the schedule: normalized series, selected lead time,
/// lagged features and the window split. Every window read goes through
/// [`FarmData::window`] and is logged.
#[derive(Debug, Clone)]
pub struct FarmData {
    pub farm_id: String,
    pub series: WindFarmSeries,
    pub params: NormParams,
    pub lead: MiScore,
    pub features: FeatureMatrix,
    pub split: RollingSplit,
    pub log: AccessLog,
}

impl FarmData {
    /// Standard split from the plan.
    pub fn prepare(raw: &WindFarmSeries, plan: &TransferPlan) -> Result<Self> {
        let split = split_rolling(raw.len(), plan.hours_per_month, plan.window_months, plan.n_base_windows)?;
        Self::prepare_with_split(raw, split, plan)
    }

    /// Normalization and lead-time selection see only rows before the test
    /// window; values after it are clamped into `[0, 1]`.
    pub fn prepare_with_split(raw: &WindFarmSeries, split: RollingSplit, plan: &TransferPlan) -> Result<Self> {
        Self::prepare_inner(raw, split, plan, None)
    }

    /// Standard split, but features use `lead` whatever this farm's own
    /// scores say. The scores are still computed and kept.
    pub fn prepare_with_lead(raw: &WindFarmSeries, plan: &TransferPlan, lead: LeadTime) -> Result<Self> {
        let split = split_rolling(raw.len(), plan.hours_per_month, plan.window_months, plan.n_base_windows)?;
        Self::prepare_inner(raw, split, plan, Some(lead))
    }

    fn prepare_inner(
        raw: &WindFarmSeries,
        split: RollingSplit,
        plan: &TransferPlan,
        forced: Option<LeadTime>,
    ) -> Result<Self> {
        let log = AccessLog::default();
        let fit_end = split.training_end();
        let (series, params) = normalize_fit_prefix(raw, fit_end)?;
        log.push(AccessRecord {
            phase: Phase::Normalization,
            window: None,
            rows: 0..fit_end,
        });
        let mut lead = select_lead_time_for(&series.prefix(fit_end), plan.target_channel, plan.mi_bins)?;
        if let Some(l) = forced {
            lead.score = lead.per_lead[l.index()];
            lead.lead = l;
        }
        log.push(AccessRecord {
            phase: Phase::FeatureSelection,
            window: None,
            rows: 0..fit_end,
        });
        let features = build_lagged_features(&series, lead.lead, plan.target_channel)?;
        Ok(Self {
            farm_id: raw.farm_id.clone(),
            series,
            params,
            lead,
            features,
            split,
            log,
        })
    }

    /// Prepares `raw` for an already trained `model`: the model's stored
    /// normalization and lead time are used instead of being refitted.
    pub fn for_model(raw: &WindFarmSeries, model: &EnsembleModel, plan: &TransferPlan) -> Result<Self> {
        let split = split_rolling(raw.len(), plan.hours_per_month, plan.window_months, plan.n_base_windows)?;
        let series = model.norm_params.apply(raw, true)?;
        let fm = build_lagged_features(&series, model.lead, model.target)?;
        let mut lead = select_lead_time_for(&series.prefix(split.training_end()), model.target, plan.mi_bins)?;
        lead.score = lead.per_lead[model.lead.index()];
        lead.lead = model.lead;
        Ok(Self {
            farm_id: raw.farm_id.clone(),
            series,
            params: model.norm_params.clone(),
            lead,
            features: fm,
            split,
            log: AccessLog::default(),
        })
    }

    /// Feature rows whose target hour lies in `window`.
    pub fn window(&self, window: Window, phase: Phase) -> FeatureMatrix {
        let range = self.split.range(window);
        let fm = self.features.window(range.clone());
        // lagged inputs reach back before the window start
        let lo = range.start.saturating_sub(crate::features::WEATHER_LAGS);
        self.log.push(AccessRecord {
            phase,
            window: Some(window),
            rows: lo..range.end,
        });
        fm
    }

    /// Raw normalized target values over `rows`.
    pub fn target_values(&self, rows: Range<usize>, phase: Phase) -> Vec<f64> {
        self.log.push(AccessRecord {
            phase,
            window: None,
            rows: rows.clone(),
        });
        let ch = self.features.target.channel();
        rows.map(|r| self.series.value(r, ch)).collect()
    }

    /// Training-phase reads that touched the test window.
    pub fn leaks(&self) -> Vec<AccessRecord> {
        let test = &self.split.test;
        self.log
            .records()
            .into_iter()
            .filter(|r| r.phase.is_training() && r.rows.start < test.end && test.start < r.rows.end)
            .collect()
    }
}
