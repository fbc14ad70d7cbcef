//! Point-forecast error measures, power-distribution histograms and
//! aggregation over independent runs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;

fn check<T>(actual: &[T], predicted: &[T]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn mean<T: Scalar>(v: impl Iterator<Item = T>, n: usize) -> T {
    v.sum::<T>() / T::of(n as f64)
}

/// `sqrt((1/m) Σ (a_i − p_i)²)`. The squared error is summed per element;
/// squaring the summed error instead would make the measure blind to
/// cancelling errors and inconsistent with [`sde`].
pub fn rmse<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check(actual, predicted)?;
    let ms = mean(actual.iter().zip(predicted).map(|(&a, &p)| (a - p) * (a - p)), actual.len());
    Ok(ms.sqrt())
}

pub fn mae<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check(actual, predicted)?;
    Ok(mean(actual.iter().zip(predicted).map(|(&a, &p)| (a - p).abs()), actual.len()))
}

/// Population standard deviation of the error `a − p`.
pub fn sde<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check(actual, predicted)?;
    let n = actual.len();
    let e: Vec<T> = actual.iter().zip(predicted).map(|(&a, &p)| a - p).collect();
    let mu = mean(e.iter().copied(), n);
    Ok(mean(e.iter().map(|&x| (x - mu) * (x - mu)), n).sqrt())
}

/// Pearson correlation. Undefined (an error) when either side is constant.
pub fn pearson<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check(actual, predicted)?;
    let n = actual.len();
    let ma = mean(actual.iter().copied(), n);
    let mp = mean(predicted.iter().copied(), n);
    let (mut sab, mut saa, mut spp) = (T::zero(), T::zero(), T::zero());
    for (&a, &p) in actual.iter().zip(predicted) {
        let (da, dp) = (a - ma, p - mp);
        sab += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa.is_zero() {
        return Err(Error::ConstantVector("actual"));
    }
    if spp.is_zero() {
        return Err(Error::ConstantVector("predicted"));
    }
    let r = sab / (saa.sqrt() * spp.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// All four measures for one model on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub sde: f64,
    /// `None` when the correlation is undefined.
    pub pearson: Option<f64>,
    pub n_points: usize,
}

pub fn evaluate<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<ModelMetrics> {
    let pearson = match pearson(actual, predicted) {
        Ok(r) => Some(r.to_f64_lossy()),
        Err(Error::ConstantVector(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ModelMetrics {
        rmse: rmse(actual, predicted)?.to_f64_lossy(),
        mae: mae(actual, predicted)?.to_f64_lossy(),
        sde: sde(actual, predicted)?.to_f64_lossy(),
        pearson,
        n_points: actual.len(),
    })
}

/// Mean and population standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStat {
    pub mean: f64,
    pub std: f64,
}

impl fmt::Display for RunStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.p$} ± {:.p$}", self.mean, self.std),
            None => write!(f, "{} ± {}", self.mean, self.std),
        }
    }
}

pub fn run_stat(values: &[f64]) -> Result<RunStat> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut sorted = values.to_vec();
    // summation order fixed so the result does not depend on run order
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(RunStat { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub rmse: RunStat,
    pub mae: RunStat,
    pub sde: RunStat,
    /// Over the runs where the correlation was defined.
    pub pearson: Option<RunStat>,
    pub runs: usize,
}

pub fn aggregate_runs(runs: &[ModelMetrics]) -> Result<AggregateMetrics> {
    if runs.is_empty() {
        return Err(Error::EmptyList);
    }
    let col = |f: fn(&ModelMetrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let pearsons: Vec<f64> = runs.iter().filter_map(|r| r.pearson).collect();
    Ok(AggregateMetrics {
        rmse: run_stat(&col(|r| r.rmse))?,
        mae: run_stat(&col(|r| r.mae))?,
        sde: run_stat(&col(|r| r.sde))?,
        pearson: run_stat(&pearsons).ok(),
        runs: runs.len(),
    })
}

/// Paired equal-width histograms on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerHistogram {
    pub edges: Vec<f64>,
    pub train_density: Vec<f64>,
    pub test_density: Vec<f64>,
    /// `½ Σ |p_i − q_i|` over bin probabilities.
    pub tv_distance: f64,
}

fn densities(values: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let scale = bins as f64 / values.len() as f64;
    counts.into_iter().map(|c| c as f64 * scale).collect()
}

/// Values outside `[0, 1]` are counted in the nearest edge bin.
pub fn power_histogram(train: &[f64], test: &[f64], bins: usize) -> Result<PowerHistogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument("histogram needs at least 2 bins".into()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let train_density = densities(train, bins);
    let test_density = densities(test, bins);
    let width = 1.0 / bins as f64;
    let tv_distance = 0.5
        * train_density
            .iter()
            .zip(&test_density)
            .map(|(p, q)| (p - q).abs() * width)
            .sum::<f64>();
    Ok(PowerHistogram {
        edges: (0..=bins).map(|k| k as f64 / bins as f64).collect(),
        train_density,
        test_density,
        tv_distance,
    })
}

impl PowerHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,train_density,test_density\n");
        for k in 0..self.train_density.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.edges[k],
                self.edges[k + 1],
                self.train_density[k],
                self.test_density[k]
            ));
        }
        s
    }
}

/// Evaluation of several models on one test set in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub models: BTreeMap<String, ModelMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PowerHistogram>,
}

/// Per-model aggregation across runs. All reports must cover the same models.
pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<BTreeMap<String, AggregateMetrics>> {
    let first = reports.first().ok_or(Error::EmptyList)?;
    for r in reports {
        if !r.models.keys().eq(first.models.keys()) {
            return Err(Error::InvalidArgument(
                "reports cover different model sets".into(),
            ));
        }
    }
    first
        .models
        .keys()
        .map(|name| {
            let runs: Vec<ModelMetrics> = reports.iter().map(|r| r.models[name]).collect();
            Ok((name.clone(), aggregate_runs(&runs)?))
        })
        .collect()
}
