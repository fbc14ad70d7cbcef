//! Hourly wind-farm series: CSV ingest, [0,1] normalization, the adaptive
//! dataset division and a seeded multi-farm generator.

mod csv_io;
mod normalize;
mod split;
mod synth;

pub use csv_io::{load_series, series_to_csv, write_norm_sidecar, write_series, CSV_HEADER};
pub use normalize::{denormalize, normalize, normalize_fit_prefix, ChannelRange, NormParams};
pub use split::{split_adaptive, split_rolling, DatasetSplit, RollingSplit, Window};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};

/// Forecast lead time: hours between issuance and the target hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LeadTime {
    H12,
    H24,
    H36,
    H48,
}

impl LeadTime {
    pub const ALL: [LeadTime; 4] = [LeadTime::H12, LeadTime::H24, LeadTime::H36, LeadTime::H48];

    pub fn hours(self) -> u32 {
        match self {
            LeadTime::H12 => 12,
            LeadTime::H24 => 24,
            LeadTime::H36 => 36,
            LeadTime::H48 => 48,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_hours(h: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.hours() == h)
    }
}

/// One weather variable inside a lead-time block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeatherVar {
    Zonal,
    Meridional,
    Direction,
    Speed,
}

impl WeatherVar {
    /// CSV column order within a block.
    pub const CSV_ORDER: [WeatherVar; 4] = [
        WeatherVar::Zonal,
        WeatherVar::Meridional,
        WeatherVar::Direction,
        WeatherVar::Speed,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            WeatherVar::Zonal => "zs",
            WeatherVar::Meridional => "ms",
            WeatherVar::Direction => "dw",
            WeatherVar::Speed => "sw",
        }
    }
}

/// Weather forecast for one target hour, issued `lead` hours earlier.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeadBlock {
    /// m/s, positive eastward
    pub zonal: f64,
    /// m/s, positive northward
    pub meridional: f64,
    /// degrees in `[0, 360)`
    pub direction: f64,
    /// m/s, non-negative
    pub speed: f64,
}

impl LeadBlock {
    pub fn get(&self, var: WeatherVar) -> f64 {
        match var {
            WeatherVar::Zonal => self.zonal,
            WeatherVar::Meridional => self.meridional,
            WeatherVar::Direction => self.direction,
            WeatherVar::Speed => self.speed,
        }
    }

    pub fn get_mut(&mut self, var: WeatherVar) -> &mut f64 {
        match var {
            WeatherVar::Zonal => &mut self.zonal,
            WeatherVar::Meridional => &mut self.meridional,
            WeatherVar::Direction => &mut self.direction,
            WeatherVar::Speed => &mut self.speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarmRecord {
    /// Hours since series start.
    pub hour: i64,
    pub power: f64,
    /// Indexed by [`LeadTime::index`].
    pub leads: [LeadBlock; 4],
    /// Measured wind speed, present only in speed-task datasets.
    pub speed: Option<f64>,
}

/// Any single column of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Power,
    MeasuredSpeed,
    Weather { lead: LeadTime, var: WeatherVar },
}

impl Channel {
    pub fn column_name(self) -> String {
        match self {
            Channel::Power => "power".into(),
            Channel::MeasuredSpeed => "speed".into(),
            Channel::Weather { lead, var } => format!("{}_{}", var.prefix(), lead.hours()),
        }
    }

    /// Power followed by the 16 weather columns in CSV order.
    pub fn standard() -> Vec<Channel> {
        let mut out = vec![Channel::Power];
        for lead in LeadTime::ALL {
            for var in WeatherVar::CSV_ORDER {
                out.push(Channel::Weather { lead, var });
            }
        }
        out
    }
}

/// Which measured quantity is forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChannel {
    #[default]
    Power,
    Speed,
}

impl TargetChannel {
    pub fn channel(self) -> Channel {
        match self {
            TargetChannel::Power => Channel::Power,
            TargetChannel::Speed => Channel::MeasuredSpeed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarmSeries {
    pub farm_id: String,
    pub records: Vec<WindFarmRecord>,
    pub norm_params: Option<NormParams>,
    pub normalized: bool,
}

impl WindFarmSeries {
    pub fn new(farm_id: impl Into<String>, records: Vec<WindFarmRecord>) -> Self {
        Self {
            farm_id: farm_id.into(),
            records,
            norm_params: None,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_measured_speed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.speed.is_some())
    }

    /// Channels present in this series, in CSV column order.
    pub fn channels(&self) -> Vec<Channel> {
        let mut ch = Channel::standard();
        if self.has_measured_speed() {
            ch.push(Channel::MeasuredSpeed);
        }
        ch
    }

    pub fn value(&self, row: usize, channel: Channel) -> f64 {
        let r = &self.records[row];
        match channel {
            Channel::Power => r.power,
            Channel::MeasuredSpeed => r.speed.unwrap_or(f64::NAN),
            Channel::Weather { lead, var } => r.leads[lead.index()].get(var),
        }
    }

    pub fn set_value(&mut self, row: usize, channel: Channel, v: f64) {
        let r = &mut self.records[row];
        match channel {
            Channel::Power => r.power = v,
            Channel::MeasuredSpeed => r.speed = Some(v),
            Channel::Weather { lead, var } => *r.leads[lead.index()].get_mut(var) = v,
        }
    }

    pub fn channel_values(&self, channel: Channel) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, channel)).collect()
    }

    /// First `n` records, keeping normalization state.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            farm_id: self.farm_id.clone(),
            records: self.records[..n.min(self.len())].to_vec(),
            norm_params: self.norm_params.clone(),
            normalized: self.normalized,
        }
    }
}
