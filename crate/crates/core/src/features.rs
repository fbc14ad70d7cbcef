//! Lead-time selection by mutual information and the lagged design matrix.
//!
//! Each feature row for hour `t` holds, in order: the 24 previous target
//! values `y(t−1) … y(t−24)`, then `t … t−24` of wind direction, zonal
//! component, meridional component and speed from the selected lead's
//! forecast block: `24 + 4·25 = 124` columns.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataio::{Channel, LeadTime, TargetChannel, WeatherVar, WindFarmSeries};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

pub const TARGET_LAGS: usize = 24;
pub const WEATHER_LAGS: usize = 25;
pub const FEATURE_WIDTH: usize = TARGET_LAGS + 4 * WEATHER_LAGS;
pub const DEFAULT_MI_BINS: usize = 16;

/// Weather blocks in feature order.
pub const WEATHER_FEATURE_ORDER: [WeatherVar; 4] = [
    WeatherVar::Direction,
    WeatherVar::Zonal,
    WeatherVar::Meridional,
    WeatherVar::Speed,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiScore {
    pub lead: LeadTime,
    /// nats
    pub score: f64,
    pub bins: usize,
    /// Score of every lead, indexed by [`LeadTime::index`].
    pub per_lead: [f64; 4],
}

fn bin_indices<T: Scalar>(v: &[T], bins: usize) -> Vec<usize> {
    let (lo, hi) = v
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let width = hi - lo;
    let nb = T::of(bins as f64);
    v.iter()
        .map(|&x| {
            if width > T::zero() {
                let b = ((x - lo) / width * nb).floor().to_usize().unwrap_or(0);
                b.min(bins - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Plug-in mutual information (nats) from an equal-width 2-D histogram with
/// `bins` bins per variable, each spanning that variable's own range.
pub fn mutual_information<T: Scalar>(x: &[T], y: &[T], bins: usize) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 || bins < 2 {
        return Err(Error::InvalidArgument(
            "mutual information needs at least 2 samples and 2 bins".into(),
        ));
    }
    let bx = bin_indices(x, bins);
    let by = bin_indices(y, bins);
    let mut joint = vec![0usize; bins * bins];
    let mut mx = vec![0usize; bins];
    let mut my = vec![0usize; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        mx[i] += 1;
        my[j] += 1;
    }
    let n = T::of(x.len() as f64);
    let mut mi = T::zero();
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let pij = T::of(c as f64) / n;
            let ratio = T::of(c as f64) * n / (T::of(mx[i] as f64) * T::of(my[j] as f64));
            mi += pij * ratio.ln();
        }
    }
    Ok(mi.max(T::zero()))
}

/// Picks the lead whose four weather channels carry, on average, the most
/// information about power. Ties go to the shortest lead.
pub fn select_lead_time(series: &WindFarmSeries, bins: usize) -> Result<MiScore> {
    select_lead_time_for(series, TargetChannel::Power, bins)
}

pub fn select_lead_time_for(
    series: &WindFarmSeries,
    target: TargetChannel,
    bins: usize,
) -> Result<MiScore> {
    if !series.normalized {
        return Err(Error::NotNormalized(series.farm_id.clone()));
    }
    let y = target_values(series, target)?;
    let mut per_lead = [0.0; 4];
    for lead in LeadTime::ALL {
        let mut total = 0.0;
        for var in WeatherVar::CSV_ORDER {
            let x = series.channel_values(Channel::Weather { lead, var });
            total += mutual_information(&x, &y, bins)?;
        }
        per_lead[lead.index()] = total / 4.0;
    }
    let mut best = LeadTime::H12;
    for lead in LeadTime::ALL {
        if per_lead[lead.index()] > per_lead[best.index()] {
            best = lead;
        }
    }
    Ok(MiScore {
        lead: best,
        score: per_lead[best.index()],
        bins,
        per_lead,
    })
}

fn target_values(series: &WindFarmSeries, target: TargetChannel) -> Result<Vec<f64>> {
    if target == TargetChannel::Speed && !series.has_measured_speed() {
        return Err(Error::MissingColumn {
            column: "speed".into(),
        });
    }
    Ok(series.channel_values(target.channel()))
}

/// Lagged design matrix with aligned targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
    pub column_labels: Vec<String>,
    pub lead: LeadTime,
    pub target: TargetChannel,
    /// Series row index of each feature row.
    pub series_rows: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    /// Feature rows whose target hour falls in `series_range`.
    pub fn window(&self, series_range: Range<usize>) -> FeatureMatrix {
        let idx: Vec<usize> = self
            .series_rows
            .iter()
            .enumerate()
            .filter(|(_, r)| series_range.contains(r))
            .map(|(i, _)| i)
            .collect();
        let lo = idx.first().copied().unwrap_or(0);
        let hi = idx.last().map_or(lo, |&i| i + 1);
        FeatureMatrix {
            x: self.x.slice_rows(lo..hi),
            y: self.y[lo..hi].to_vec(),
            column_labels: self.column_labels.clone(),
            lead: self.lead,
            target: self.target,
            series_rows: self.series_rows[lo..hi].to_vec(),
        }
    }

    /// CSV with `column_labels` then `target`.
    pub fn to_csv(&self) -> String {
        let mut out = self.column_labels.join(",");
        out.push_str(",target\n");
        for i in 0..self.rows() {
            for v in self.x.row(i) {
                write!(out, "{v},").unwrap();
            }
            writeln!(out, "{}", self.y[i]).unwrap();
        }
        out
    }
}

pub fn feature_labels(target: TargetChannel) -> Vec<String> {
    let tag = match target {
        TargetChannel::Power => "P",
        TargetChannel::Speed => "V",
    };
    let mut labels: Vec<String> = (1..=TARGET_LAGS).map(|k| format!("{tag}(t-{k})")).collect();
    for var in WEATHER_FEATURE_ORDER {
        let name = match var {
            WeatherVar::Direction => "D",
            WeatherVar::Zonal => "Z",
            WeatherVar::Meridional => "M",
            WeatherVar::Speed => "S",
        };
        labels.push(format!("{name}(t)"));
        labels.extend((1..WEATHER_LAGS).map(|k| format!("{name}(t-{k})")));
    }
    labels
}

pub fn build_lagged_features(
    series: &WindFarmSeries,
    lead: LeadTime,
    target: TargetChannel,
) -> Result<FeatureMatrix> {
    if !series.normalized {
        return Err(Error::NotNormalized(series.farm_id.clone()));
    }
    let n = series.len();
    if n <= TARGET_LAGS {
        return Err(Error::SeriesTooShort {
            required: TARGET_LAGS + 1,
            actual: n,
        });
    }
    let y_all = target_values(series, target)?;
    let weather: Vec<Vec<f64>> = WEATHER_FEATURE_ORDER
        .iter()
        .map(|&var| series.channel_values(Channel::Weather { lead, var }))
        .collect();

    let rows = n - TARGET_LAGS;
    let mut data = Vec::with_capacity(rows * FEATURE_WIDTH);
    for t in TARGET_LAGS..n {
        data.extend((1..=TARGET_LAGS).map(|k| y_all[t - k]));
        for w in &weather {
            data.extend((0..WEATHER_LAGS).map(|k| w[t - k]));
        }
    }
    Ok(FeatureMatrix {
        x: Matrix::new(rows, FEATURE_WIDTH, data)?,
        y: y_all[TARGET_LAGS..].to_vec(),
        column_labels: feature_labels(target),
        lead,
        target,
        series_rows: (TARGET_LAGS..n).collect(),
    })
}
