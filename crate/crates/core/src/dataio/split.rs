use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::WindFarmSeries;
use crate::error::{Error, Result};

/// Named data window of the adaptive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Cumulative base-learner window `k`: months `1 ..= 4(k+1)` by default.
    Base(usize),
    /// Meta-learner window (DS6 by default).
    Meta,
    /// Held-out test window (DS7 by default).
    Test,
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Base(k) => write!(f, "DS{}", 3 + k),
            Window::Meta => write!(f, "meta"),
            Window::Test => write!(f, "test"),
        }
    }
}

/// Months 1–4 / 1–8 / 1–12 (nested), 13–16 and 17–20, as row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub hours_per_month: usize,
    pub ds3: Range<usize>,
    pub ds4: Range<usize>,
    pub ds5: Range<usize>,
    pub ds6: Range<usize>,
    pub ds7: Range<usize>,
}

/// Generalization with any number of cumulative base windows: base window
/// `k` spans months `1 ..= window_months·(k+1)`, followed by one meta window
/// and one test window of `window_months` each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSplit {
    pub hours_per_month: usize,
    pub window_months: usize,
    pub base: Vec<Range<usize>>,
    pub meta: Range<usize>,
    pub test: Range<usize>,
}

impl RollingSplit {
    pub fn range(&self, window: Window) -> Range<usize> {
        match window {
            Window::Base(k) => self.base[k].clone(),
            Window::Meta => self.meta.clone(),
            Window::Test => self.test.clone(),
        }
    }

    /// Months covered by a base window.
    pub fn months(&self, window: Window) -> usize {
        self.range(window).len() / self.hours_per_month
    }

    /// First row never used for fitting anything (start of the test window).
    pub fn training_end(&self) -> usize {
        self.test.start
    }
}

pub fn split_rolling(
    n_rows: usize,
    hours_per_month: usize,
    window_months: usize,
    n_base: usize,
) -> Result<RollingSplit> {
    if hours_per_month == 0 || window_months == 0 || n_base == 0 {
        return Err(Error::InvalidArgument(
            "hours_per_month, window_months and base window count must be positive".into(),
        ));
    }
    let w = window_months * hours_per_month;
    let required = (n_base + 2) * w;
    if n_rows < required {
        return Err(Error::SeriesTooShort {
            required,
            actual: n_rows,
        });
    }
    Ok(RollingSplit {
        hours_per_month,
        window_months,
        base: (1..=n_base).map(|k| 0..k * w).collect(),
        meta: n_base * w..(n_base + 1) * w,
        test: (n_base + 1) * w..(n_base + 2) * w,
    })
}

/// The standard 20-month division.
pub fn split_adaptive(series: &WindFarmSeries, hours_per_month: usize) -> Result<DatasetSplit> {
    let r = split_rolling(series.len(), hours_per_month, 4, 3)?;
    Ok(DatasetSplit::from(&r))
}

impl From<&RollingSplit> for DatasetSplit {
    fn from(r: &RollingSplit) -> Self {
        Self {
            hours_per_month: r.hours_per_month,
            ds3: r.base[0].clone(),
            ds4: r.base.get(1).cloned().unwrap_or_default(),
            ds5: r.base.get(2).cloned().unwrap_or_default(),
            ds6: r.meta.clone(),
            ds7: r.test.clone(),
        }
    }
}
