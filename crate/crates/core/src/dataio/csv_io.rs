use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{Channel, DatasetSplit, LeadBlock, NormParams, WindFarmRecord, WindFarmSeries};
use crate::error::{Error, Result};

/// Column header of the series CSV. Speed-task files append a `speed` column.
pub const CSV_HEADER: &str = "hour,power,zs_12,ms_12,dw_12,sw_12,zs_24,ms_24,dw_24,sw_24,\
zs_36,ms_36,dw_36,sw_36,zs_48,ms_48,dw_48,sw_48";

/// Reads a series CSV. The farm id is the file stem. Rows are numbered from
/// zero in error messages, header excluded.
pub fn load_series(path: impl AsRef<Path>) -> Result<WindFarmSeries> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let find = |name: &str| -> Result<usize> {
        position.get(name).copied().ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })
    };
    let hour_col = find("hour")?;
    let channel_cols: Vec<(Channel, usize)> = Channel::standard()
        .into_iter()
        .map(|c| find(&c.column_name()).map(|i| (c, i)))
        .collect::<Result<_>>()?;
    let speed_col = position.get("speed").copied();

    let farm_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut series = WindFarmSeries::new(farm_id, Vec::new());

    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericCell {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let hour_raw = rec.get(hour_col).unwrap_or("");
        let hour: i64 = hour_raw.parse().map_err(|_| Error::NonNumericCell {
            row,
            column: "hour".into(),
            value: hour_raw.to_string(),
        })?;
        if let Some(prev) = series.records.last() {
            if hour != prev.hour + 1 {
                return Err(Error::GapInTimestamps {
                    row,
                    expected: prev.hour + 1,
                    found: hour,
                });
            }
        }

        let mut record = WindFarmRecord {
            hour,
            power: 0.0,
            leads: [LeadBlock::default(); 4],
            speed: None,
        };
        for &(channel, col) in &channel_cols {
            let name = channel.column_name();
            let v = cell(col, &name)?;
            check_range(row, channel, &name, v)?;
            match channel {
                Channel::Power => record.power = v,
                Channel::Weather { lead, var } => *record.leads[lead.index()].get_mut(var) = v,
                Channel::MeasuredSpeed => unreachable!("not in the standard set"),
            }
        }
        if let Some(col) = speed_col {
            let v = cell(col, "speed")?;
            check_range(row, Channel::MeasuredSpeed, "speed", v)?;
            record.speed = Some(v);
        }
        series.records.push(record);
    }
    Ok(series)
}

fn check_range(row: usize, channel: Channel, name: &str, v: f64) -> Result<()> {
    use super::WeatherVar;
    let out_of_range = |reason| Error::OutOfRange {
        row,
        column: name.to_string(),
        value: v,
        reason,
    };
    match channel {
        Channel::Weather {
            var: WeatherVar::Direction,
            ..
        } if !(0.0..360.0).contains(&v) => Err(out_of_range("direction must lie in [0, 360)")),
        Channel::Weather {
            var: WeatherVar::Speed,
            ..
        }
        | Channel::MeasuredSpeed
            if v < 0.0 =>
        {
            Err(out_of_range("speed must be non-negative"))
        }
        _ => Ok(()),
    }
}

/// Serializes a series in the CSV schema. Floats use the shortest
/// representation that parses back to the same bits.
pub fn series_to_csv(series: &WindFarmSeries) -> String {
    let channels = series.channels();
    let mut out = String::with_capacity(series.len() * 200);
    out.push_str(CSV_HEADER);
    if series.has_measured_speed() {
        out.push_str(",speed");
    }
    out.push('\n');
    for (i, rec) in series.records.iter().enumerate() {
        write!(out, "{}", rec.hour).unwrap();
        for &c in &channels {
            write!(out, ",{}", series.value(i, c)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_series(path: impl AsRef<Path>, series: &WindFarmSeries) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, series_to_csv(series)).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    farm_id: &'a str,
    hours_per_month: usize,
    norm_params: &'a NormParams,
    split: &'a DatasetSplit,
}

/// JSON sidecar with normalization parameters and split row ranges.
pub fn write_norm_sidecar(
    path: impl AsRef<Path>,
    farm_id: &str,
    params: &NormParams,
    split: &DatasetSplit,
) -> Result<()> {
    let path = path.as_ref();
    let doc = Sidecar {
        farm_id,
        hours_per_month: split.hours_per_month,
        norm_params: params,
        split,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
