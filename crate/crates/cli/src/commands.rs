use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use atl_core::dataio::{load_series, series_to_csv, synth_generate, SynthConfig, TargetChannel, WindFarmSeries};
use atl_core::metrics::{aggregate_reports, AggregateMetrics, MetricsReport};
use atl_core::oracle::verify_all;
use atl_core::serialize::{from_json, to_json};
use atl_core::transfer::{
    evaluate_ensemble, run_adaptive_schedule, run_cross_task, EnsembleModel, EventLog, FarmData, TrainingEvent,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Files collected in memory and written together once everything succeeded.
#[derive(Debug, Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    fn write(&self, dir: &Path, force: bool) -> Result<(), CliError> {
        if !force {
            if let Some((p, _)) = self.files.iter().find(|(p, _)| dir.join(p).exists()) {
                return Err(CliError::Usage(format!(
                    "{} exists; pass --force to overwrite",
                    dir.join(p).display()
                )));
            }
        }
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn stamp_csv(cfg_hash: &str, seed: u64, body: &str) -> String {
    format!("# config_hash={cfg_hash} seed={seed}\n{body}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFile {
    pub farm_id: String,
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config_hash: String,
    pub seed: u64,
    pub synth: SynthConfig,
    pub files: Vec<SynthFile>,
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    SynthConfig {
        seed: cfg.seed,
        hours_per_month: cfg.plan.hours_per_month,
        include_measured_speed: cfg.synth.include_measured_speed || cfg.plan.target_channel == TargetChannel::Speed,
        ..cfg.synth.clone()
    }
}

/// One CSV per farm plus `manifest.json` in the data dir.
pub fn cmd_synth(cfg: &RunConfig, force: bool) -> Result<Vec<SynthFile>, CliError> {
    let sc = synth_config(cfg);
    sc.validate()?;
    let mut out = Outputs::default();
    let mut files = Vec::new();
    for s in synth_generate(&sc) {
        let text = series_to_csv(&s);
        let file = format!("{}.csv", s.farm_id);
        files.push(SynthFile {
            farm_id: s.farm_id.clone(),
            file: file.clone(),
            rows: s.len(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
        out.add(file, text);
    }
    let manifest = SynthManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        synth: sc,
        files: files.clone(),
    };
    out.add("manifest.json", json(&manifest)?);
    out.write(&cfg.paths.data_dir, force)?;
    Ok(files)
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(atl_core::Error::from)? + "\n")
}

/// Every `*.csv` in the data dir, by file name.
pub fn load_farms(dir: &Path) -> Result<Vec<WindFarmSeries>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no .csv datasets in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| load_series(p).map_err(CliError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub normalized: MetricsReport,
    pub denormalized: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmMetrics {
    pub aggregate: BTreeMap<String, AggregateMetrics>,
    pub aggregate_denormalized: BTreeMap<String, AggregateMetrics>,
    pub per_run: Vec<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub seed: u64,
    pub runs: usize,
    pub mode: String,
    pub farms: BTreeMap<String, FarmMetrics>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    run: usize,
    seed: u64,
    config_hash: &'a str,
    #[serde(flatten)]
    event: &'a TrainingEvent,
}

/// Paths and summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub metrics: MetricsFile,
    pub summary: String,
}

fn hyper(cfg: &RunConfig, run: usize, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "config_hash": cfg.hash(),
        "seed": seed,
        "run": run,
        "plan": cfg.plan,
        "ae": cfg.ae,
        "dbn": cfg.dbn,
    })
}

/// Runs seeds `seed .. seed + runs` and writes models, metrics, predictions,
/// histograms and the event log under the output dir.
pub fn cmd_run(cfg: &RunConfig, force: bool) -> Result<RunArtifacts, CliError> {
    let farms = load_farms(&cfg.paths.data_dir)?;
    let hash = cfg.hash();
    let mut out = Outputs::default();
    let mut log_text = String::new();
    let mut reports: BTreeMap<String, Vec<RunMetrics>> = BTreeMap::new();
    let cfgs = cfg.models();

    for run in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        let dir = PathBuf::from(format!("run{run}"));
        let mut log = EventLog::default();
        let result = if cfg.cross_task {
            run_cross_task(&farms, &cfg.plan, &cfgs, seed, &mut log).map(|ct| {
                let src = &ct.source_model;
                out.add(
                    dir.join("models").join(format!("{}.json", src.provenance.farm_id)),
                    to_json(src, hyper(cfg, run, seed)).expect("model serializes"),
                );
                for f in &ct.farms {
                    let o = &f.outcome;
                    let id = &o.data.farm_id;
                    let mut normalized = MetricsReport::default();
                    normalized.models.insert("cross_task".into(), o.normalized);
                    normalized.models.insert("cold_start".into(), f.cold_start);
                    let mut denormalized = MetricsReport::default();
                    denormalized.models.insert("cross_task".into(), o.denormalized);
                    reports.entry(id.clone()).or_default().push(RunMetrics {
                        run,
                        seed,
                        normalized,
                        denormalized,
                    });
                    out.add(
                        dir.join("models").join(format!("{id}_speed.json")),
                        to_json(&o.model, hyper(cfg, run, seed)).expect("model serializes"),
                    );
                    out.add(
                        dir.join("predictions").join(format!("{id}.csv")),
                        stamp_csv(&hash, seed, &o.predictions_csv()),
                    );
                }
            })
        } else {
            run_adaptive_schedule(&farms, &cfg.plan, &cfgs, seed, &mut log).and_then(|s| {
                for f in &s.farms {
                    let id = &f.data.farm_id;
                    let ev = &f.evaluation;
                    out.add(
                        dir.join("models").join(format!("{id}.json")),
                        to_json(&f.ensemble, hyper(cfg, run, seed))?,
                    );
                    out.add(
                        dir.join("predictions").join(format!("{id}.csv")),
                        stamp_csv(&hash, seed, &ev.predictions_csv(&f.ensemble)?),
                    );
                    if let Some(h) = &ev.normalized.histogram {
                        out.add(
                            dir.join("histogram").join(format!("{id}.csv")),
                            stamp_csv(&hash, seed, &h.to_csv()),
                        );
                    }
                    reports.entry(id.clone()).or_default().push(RunMetrics {
                        run,
                        seed,
                        normalized: ev.normalized.clone(),
                        denormalized: ev.denormalized.clone(),
                    });
                }
                Ok(())
            })
        };
        for e in &log.events {
            let line = LogLine {
                run,
                seed,
                config_hash: &hash,
                event: e,
            };
            log_text += &(serde_json::to_string(&line).expect("event serializes") + "\n");
        }
        if let Err(e) = result {
            // keep the partial log for diagnosis
            let mut partial = Outputs::default();
            partial.add("run_log.jsonl", log_text);
            let _ = partial.write(&cfg.paths.output_dir, true);
            return Err(e.into());
        }
    }

    let mut farms_out = BTreeMap::new();
    for (id, per_run) in reports {
        let norm: Vec<MetricsReport> = per_run.iter().map(|r| r.normalized.clone()).collect();
        let denorm: Vec<MetricsReport> = per_run.iter().map(|r| r.denormalized.clone()).collect();
        farms_out.insert(
            id,
            FarmMetrics {
                aggregate: aggregate_reports(&norm)?,
                aggregate_denormalized: aggregate_reports(&denorm)?,
                per_run,
            },
        );
    }
    let metrics = MetricsFile {
        config_hash: hash.clone(),
        seed: cfg.seed,
        runs: cfg.runs,
        mode: if cfg.cross_task { "cross_task" } else { "schedule" }.into(),
        farms: farms_out,
    };
    out.add("metrics.json", json(&metrics)?);
    out.add("run_log.jsonl", log_text);
    out.add("config.toml", format!("# config_hash={hash}\n{}", cfg.to_toml()));
    out.write(&cfg.paths.output_dir, force)?;
    Ok(RunArtifacts {
        output_dir: cfg.paths.output_dir.clone(),
        summary: render(&metrics),
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub config_hash: String,
    pub seed: u64,
    pub model_file: String,
    pub farm_id: String,
    pub normalized: MetricsReport,
    pub denormalized: MetricsReport,
}

/// Metrics and predictions of a saved ensemble on the test window of `data`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    model: &Path,
    data: &Path,
    out_dir: Option<&Path>,
    force: bool,
) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(model).map_err(|e| CliError::io(model, e))?;
    let ensemble: EnsembleModel = from_json(&text)?;
    let raw = load_series(data)?;
    let farm = FarmData::for_model(&raw, &ensemble, &cfg.plan)?;
    let ev = evaluate_ensemble(&ensemble, &farm)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.paths.output_dir.join("evaluate").join(&raw.farm_id));
    let hash = cfg.hash();
    let file = EvaluationFile {
        config_hash: hash.clone(),
        seed: cfg.seed,
        model_file: model.display().to_string(),
        farm_id: raw.farm_id.clone(),
        normalized: ev.normalized.clone(),
        denormalized: ev.denormalized.clone(),
    };
    let mut out = Outputs::default();
    out.add("metrics.json", json(&file)?);
    out.add("predictions.csv", stamp_csv(&hash, cfg.seed, &ev.predictions_csv(&ensemble)?));
    out.write(&dir, force)?;
    Ok(dir)
}

/// Table of `metrics.json` in the output dir.
pub fn cmd_report(cfg: &RunConfig) -> Result<String, CliError> {
    let path = cfg.paths.output_dir.join("metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let m: MetricsFile = serde_json::from_str(&text).map_err(atl_core::Error::from)?;
    Ok(render(&m))
}

fn render(m: &MetricsFile) -> String {
    let mut s = String::new();
    writeln!(s, "config {} seed {} runs {} ({})", &m.config_hash[..12], m.seed, m.runs, m.mode).unwrap();
    writeln!(
        s,
        "{:<8} {:<12} {:>18} {:>18} {:>18} {:>18}",
        "farm", "model", "rmse", "mae", "sde", "pearson"
    )
    .unwrap();
    for (farm, f) in &m.farms {
        for (model, a) in &f.aggregate {
            let p = a.pearson.map_or("-".to_string(), |p| format!("{p:.4}"));
            writeln!(
                s,
                "{farm:<8} {model:<12} {:>18} {:>18} {:>18} {:>18}",
                format!("{:.4}", a.rmse),
                format!("{:.4}", a.mae),
                format!("{:.4}", a.sde),
                p
            )
            .unwrap();
        }
    }
    s
}

/// Oracle checks as pretty JSON, and whether all passed.
pub fn cmd_verify(seed: u64) -> Result<(String, bool), CliError> {
    let checks = verify_all(seed)?;
    let ok = checks.iter().all(|c| c.passed);
    let v = serde_json::json!({ "seed": seed, "passed": ok, "checks": checks });
    Ok((json(&v)?, ok))
}
