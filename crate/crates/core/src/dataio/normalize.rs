use serde::{Deserialize, Serialize};

use super::{Channel, WindFarmSeries};
use crate::error::{Error, Result};

/// Min/max of one channel. A degenerate channel (`max == min`) maps to zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl ChannelRange {
    pub fn forward(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub ranges: Vec<ChannelRange>,
    /// Leading rows the ranges were fitted on.
    pub fit_rows: usize,
    /// Whether values outside the fitted range were clamped into `[0, 1]`.
    pub clamped: bool,
}

impl NormParams {
    pub fn range(&self, channel: Channel) -> Option<&ChannelRange> {
        self.ranges.iter().find(|r| r.channel == channel)
    }

    pub fn degenerate_channels(&self) -> Vec<Channel> {
        self.ranges.iter().filter(|r| r.degenerate).map(|r| r.channel).collect()
    }

    /// Fits ranges on the first `fit_rows` rows of `series`.
    pub fn fit(series: &WindFarmSeries, fit_rows: usize) -> Result<Self> {
        if fit_rows == 0 || fit_rows > series.len() {
            return Err(Error::SeriesTooShort {
                required: fit_rows.max(1),
                actual: series.len(),
            });
        }
        let ranges = series
            .channels()
            .into_iter()
            .map(|channel| {
                let (min, max) = (0..fit_rows)
                    .map(|i| series.value(i, channel))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                ChannelRange {
                    channel,
                    min,
                    max,
                    degenerate: max == min,
                }
            })
            .collect();
        Ok(Self {
            ranges,
            fit_rows,
            clamped: false,
        })
    }

    /// Maps every channel of a raw series through these ranges.
    pub fn apply(&self, series: &WindFarmSeries, clamp: bool) -> Result<WindFarmSeries> {
        if series.normalized {
            return Err(Error::AlreadyNormalized(series.farm_id.clone()));
        }
        let mut out = series.clone();
        for r in &self.ranges {
            if r.channel == Channel::MeasuredSpeed && !series.has_measured_speed() {
                return Err(Error::MissingColumn {
                    column: "speed".into(),
                });
            }
            for i in 0..out.len() {
                let mut v = r.forward(series.value(i, r.channel));
                if clamp {
                    v = v.clamp(0.0, 1.0);
                }
                out.set_value(i, r.channel, v);
            }
        }
        let mut params = self.clone();
        params.clamped = clamp;
        out.norm_params = Some(params);
        out.normalized = true;
        Ok(out)
    }
}

/// Min–max normalization fitted on the whole series. Degenerate channels
/// become all zeros and are flagged in the returned parameters.
pub fn normalize(series: &WindFarmSeries) -> Result<(WindFarmSeries, NormParams)> {
    if series.normalized {
        return Err(Error::AlreadyNormalized(series.farm_id.clone()));
    }
    let params = NormParams::fit(series, series.len())?;
    let out = params.apply(series, false)?;
    Ok((out, params))
}

/// Fits on the first `fit_rows` rows only and clamps everything, including
/// later rows, into `[0, 1]`.
pub fn normalize_fit_prefix(
    series: &WindFarmSeries,
    fit_rows: usize,
) -> Result<(WindFarmSeries, NormParams)> {
    if series.normalized {
        return Err(Error::AlreadyNormalized(series.farm_id.clone()));
    }
    let params = NormParams::fit(series, fit_rows)?;
    let out = params.apply(series, true)?;
    let stored = out.norm_params.clone().expect("set by apply");
    Ok((out, stored))
}

pub fn denormalize(series: &WindFarmSeries) -> Result<WindFarmSeries> {
    let params = match (&series.norm_params, series.normalized) {
        (Some(p), true) => p,
        _ => return Err(Error::NotNormalized(series.farm_id.clone())),
    };
    let mut out = series.clone();
    for r in &params.ranges {
        for i in 0..out.len() {
            out.set_value(i, r.channel, r.inverse(series.value(i, r.channel)));
        }
    }
    out.norm_params = None;
    out.normalized = false;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{LeadBlock, WindFarmRecord};
    use crate::metrics::pearson;
    use crate::numerics::RngStream;

    fn series_from(power: &[f64], rng: &mut RngStream) -> WindFarmSeries {
        let records = power
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut leads = [LeadBlock::default(); 4];
                for b in &mut leads {
                    b.zonal = rng.uniform_range(-10.0, 10.0);
                    b.meridional = rng.uniform_range(-10.0, 10.0);
                    b.direction = rng.uniform_range(0.0, 359.0);
                    b.speed = rng.uniform_range(0.0, 25.0);
                }
                WindFarmRecord {
                    hour: i as i64,
                    power: p,
                    leads,
                    speed: None,
                }
            })
            .collect();
        WindFarmSeries::new("t", records)
    }

    #[test]
    fn power_maps_to_unit_interval() {
        let s = series_from(&[0.0, 50.0, 100.0], &mut RngStream::new(1));
        let (n, _) = normalize(&s).unwrap();
        assert_eq!(n.channel_values(Channel::Power), vec![0.0, 0.5, 1.0]);
        assert!(n.normalized);
        assert!(matches!(normalize(&n), Err(Error::AlreadyNormalized(_))));
    }

    #[test]
    fn constant_channel_is_zero_and_flagged() {
        let s = series_from(&[7.0, 7.0, 7.0], &mut RngStream::new(1));
        let (n, p) = normalize(&s).unwrap();
        assert_eq!(n.channel_values(Channel::Power), vec![0.0, 0.0, 0.0]);
        assert_eq!(p.degenerate_channels(), vec![Channel::Power]);
        assert_eq!(denormalize(&n).unwrap().channel_values(Channel::Power), vec![7.0; 3]);
    }

    #[test]
    fn round_trip_and_correlation_preserved() {
        let mut rng = RngStream::new(9);
        let power: Vec<f64> = (0..500).map(|_| rng.uniform_range(0.0, 100.0)).collect();
        let s = series_from(&power, &mut rng);
        let (n, _) = normalize(&s).unwrap();
        let back = denormalize(&n).unwrap();
        let mut max_err: f64 = 0.0;
        for c in s.channels() {
            for (a, b) in s.channel_values(c).iter().zip(back.channel_values(c)) {
                max_err = max_err.max((a - b).abs());
            }
        }
        assert!(max_err < 1e-12, "max_err = {max_err}");

        let chans = s.channels();
        for pair in chans.windows(2) {
            let before = pearson(&s.channel_values(pair[0]), &s.channel_values(pair[1])).unwrap();
            let after = pearson(&n.channel_values(pair[0]), &n.channel_values(pair[1])).unwrap();
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_fit_clamps_tail() {
        let s = series_from(&[0.0, 10.0, 20.0, 40.0, -5.0], &mut RngStream::new(2));
        let (n, p) = normalize_fit_prefix(&s, 3).unwrap();
        assert_eq!(p.fit_rows, 3);
        assert!(p.clamped);
        assert_eq!(n.channel_values(Channel::Power), vec![0.0, 0.5, 1.0, 1.0, 0.0]);
    }
}
