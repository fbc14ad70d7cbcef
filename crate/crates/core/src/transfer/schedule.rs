use std::collections::VecDeque;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_ensemble, inter_transfer, intra_transfer, pretrain_source, train_ensemble, EnsembleEvaluation,
    EnsembleModel, FarmData, ModelConfigs, TransferPlan,
};
use crate::autoencoder::{finetune_from, stack_finetune, stack_pretrain, Provenance, StackedSparseRegressor, Trained};
use crate::dataio::{WindFarmSeries, Window};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FromScratch,
    FineTune,
    MetaTrain,
    Retire,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEvent {
    pub kind: EventKind,
    pub farm_id: String,
    pub window: String,
    pub model_id: String,
    pub parent_model_id: Option<String>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    /// Milliseconds since the Unix epoch when the event was recorded. The
    /// only non-reproducible field of the log.
    pub wall_clock_unix_ms: u64,
}

impl TrainingEvent {
    fn new(kind: EventKind, farm_id: &str, window: String, model_id: String, parent: Option<String>) -> Self {
        Self {
            kind,
            farm_id: farm_id.to_string(),
            window,
            model_id,
            parent_model_id: parent,
            epochs: 0,
            final_loss: None,
            wall_clock_unix_ms: now_ms(),
        }
    }

    pub(super) fn trained(kind: EventKind, window: Window, t: &Trained<StackedSparseRegressor>) -> Self {
        let p = &t.model.provenance;
        Self {
            epochs: t.epochs(),
            final_loss: Some(t.final_loss()),
            ..Self::new(kind, &p.farm_id, window.to_string(), p.model_id.clone(), p.parent_model_id.clone())
        }
    }
}

pub(super) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Events in deterministic order (source farm first, then targets in input
/// order), kept even when the schedule fails part-way.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<TrainingEvent>,
}

impl EventLog {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }
}

/// Live learners, oldest first. Pushing beyond capacity retires the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingLearners {
    capacity: usize,
    live: VecDeque<StackedSparseRegressor>,
}

impl RollingLearners {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            live: VecDeque::with_capacity(capacity + 1),
        }
    }

    /// Returns the retired learner, if any.
    pub fn push(&mut self, l: StackedSparseRegressor) -> Option<StackedSparseRegressor> {
        self.live.push_back(l);
        if self.live.len() > self.capacity {
            self.live.pop_front()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn to_vec(&self) -> Vec<StackedSparseRegressor> {
        self.live.iter().cloned().collect()
    }
}

/// Everything produced for one farm.
#[derive(Debug, Clone)]
pub struct FarmOutcome {
    pub data: FarmData,
    pub ensemble: EnsembleModel,
    pub evaluation: EnsembleEvaluation,
    /// Every base learner trained for this farm, retired ones included.
    pub all_learners: Vec<StackedSparseRegressor>,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub source_model: StackedSparseRegressor,
    /// Source farm first, then targets in input order.
    pub farms: Vec<FarmOutcome>,
}

/// Stable per-farm stream index so seeds do not depend on farm order.
pub(super) fn farm_stream(farm_id: &str) -> u64 {
    // FNV-1a
    farm_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn finish_farm(
    data: FarmData,
    learners: Vec<(Window, Trained<StackedSparseRegressor>)>,
    seed_learner: Option<StackedSparseRegressor>,
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    rng: &mut RngStream,
    events: &mut Vec<TrainingEvent>,
) -> Result<FarmOutcome> {
    let mut rolling = RollingLearners::new(plan.max_base_learners);
    let mut all = Vec::new();
    let mut push = |l: StackedSparseRegressor, events: &mut Vec<TrainingEvent>| {
        all.push(l.clone());
        if let Some(old) = rolling.push(l) {
            let w = old.provenance.model_id.rsplit('/').next().unwrap_or_default().to_string();
            events.push(TrainingEvent::new(
                EventKind::Retire,
                &data.farm_id,
                w,
                old.provenance.model_id.clone(),
                old.provenance.parent_model_id.clone(),
            ));
        }
    };
    if let Some(s) = seed_learner {
        push(s, events);
    }
    for (w, t) in learners {
        events.push(TrainingEvent::trained(EventKind::FineTune, w, &t));
        push(t.model, events);
    }

    let live = rolling.to_vec();
    let trained = train_ensemble(&data, &live, plan, &cfgs.dbn, rng)?;
    let mut e = TrainingEvent::new(
        EventKind::MetaTrain,
        &data.farm_id,
        Window::Meta.to_string(),
        format!("{}/meta", data.farm_id),
        None,
    );
    e.epochs = trained.epochs();
    e.final_loss = Some(trained.final_loss());
    events.push(e);

    let evaluation = evaluate_ensemble(&trained.model, &data)?;
    Ok(FarmOutcome {
        data,
        ensemble: trained.model,
        evaluation,
        all_learners: all,
    })
}

/// Source pretraining, intra-farm transfer on the source, inter-farm transfer
/// on every target (in parallel, one derived stream per farm), then meta
/// training and test evaluation per farm. `log` receives every training event
/// even if a later step fails.
pub fn run_adaptive_schedule(
    farms: &[WindFarmSeries],
    plan: &TransferPlan,
    cfgs: &ModelConfigs,
    seed: u64,
    log: &mut EventLog,
) -> Result<ScheduleOutcome> {
    plan.validate()?;
    if farms.is_empty() {
        return Err(Error::EmptyList);
    }
    let source_raw = farms
        .iter()
        .find(|f| f.farm_id == plan.source_farm_id)
        .ok_or_else(|| Error::InvalidArgument(format!("source farm {} not found", plan.source_farm_id)))?;
    let targets: Vec<&WindFarmSeries> = farms
        .iter()
        .filter(|f| f.farm_id != plan.source_farm_id)
        .filter(|f| plan.target_farm_ids.is_empty() || plan.target_farm_ids.contains(&f.farm_id))
        .collect();
    let root = RngStream::new(seed);

    let source_data = FarmData::prepare(source_raw, plan)?;
    let source_lead = source_data.lead.lead;
    let mut rng = root.derive(farm_stream(&source_data.farm_id));
    let source = pretrain_source(&source_data, cfgs, &mut rng)?;
    log.events
        .push(TrainingEvent::trained(EventKind::FromScratch, Window::Base(0), &source));
    let source_model = source.model;

    let mut events = Vec::new();
    let intra = intra_transfer(&source_model, &source_data, plan, cfgs, &mut rng);
    let source_outcome = intra.and_then(|learners| {
        let windows = (1..=learners.len()).map(Window::Base);
        finish_farm(
            source_data,
            windows.zip(learners).collect(),
            Some(source_model.clone()),
            plan,
            cfgs,
            &mut rng,
            &mut events,
        )
    });
    log.events.append(&mut events);
    let mut outcomes = vec![source_outcome?];

    let results: Vec<(Vec<TrainingEvent>, Result<FarmOutcome>)> = targets
        .par_iter()
        .map(|raw| {
            let mut events = Vec::new();
            let r = (|| {
                let data = if plan.freeze_lead_to_source {
                    FarmData::prepare_with_lead(raw, plan, source_lead)?
                } else {
                    FarmData::prepare(raw, plan)?
                };
                let mut rng = root.derive(farm_stream(&data.farm_id));
                let learners = inter_transfer(&source_model, &data, plan, cfgs, &mut rng)?;
                let windows = (0..learners.len()).map(Window::Base);
                finish_farm(data, windows.zip(learners).collect(), None, plan, cfgs, &mut rng, &mut events)
            })();
            (events, r)
        })
        .collect();
    let mut first_err = None;
    for (mut ev, r) in results {
        log.events.append(&mut ev);
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(ScheduleOutcome {
        source_model,
        farms: outcomes,
    })
}

/// Supervised epochs each start needed to reach the cold-start model's final
/// training loss on the target's first window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub cold_epochs: usize,
    pub cold_final_loss: f64,
    /// `None` if the warm start never reached the threshold within
    /// `cold_epochs`.
    pub warm_epochs: Option<usize>,
    pub warm_losses: Vec<f64>,
}

/// First epoch index whose loss is at or below `threshold` (0 = before training).
pub fn epochs_to_reach(losses: &[f64], threshold: f64) -> Option<usize> {
    losses.iter().position(|&l| l <= threshold)
}

/// Trains a cold-start model on `target`'s first base window from scratch,
/// then fine-tunes `source` on the same rows with the same supervised
/// budget and counts the epochs it needs to match the cold-start loss.
pub fn warm_start_comparison(
    source: &StackedSparseRegressor,
    target: &FarmData,
    cfgs: &ModelConfigs,
    seed: u64,
) -> Result<WarmStart> {
    let w = Window::Base(0);
    let train = target.window(w, super::Phase::FineTune);
    let mut rng = RngStream::new(seed);
    let layers = stack_pretrain(&train.x, &cfgs.ae, &mut rng)?;
    let prov = |id: &str, parent: Option<String>| Provenance {
        model_id: format!("{}/{id}", target.farm_id),
        farm_id: target.farm_id.clone(),
        months_trained: target.split.months(w),
        parent_model_id: parent,
    };
    let cold = stack_finetune(&layers, &train.x, &train.y, &cfgs.ae.finetune, prov("cold", None), &mut rng)?;
    let threshold = cold.final_loss();
    let warm = finetune_from(
        source,
        &train.x,
        &train.y,
        &cfgs.ae.finetune,
        prov("warm", Some(source.provenance.model_id.clone())),
        &mut rng,
    )?;
    Ok(WarmStart {
        cold_epochs: cold.epochs(),
        cold_final_loss: threshold,
        warm_epochs: epochs_to_reach(&warm.losses, threshold),
        warm_losses: warm.losses,
    })
}
