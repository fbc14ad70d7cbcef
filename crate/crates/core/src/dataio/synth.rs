//! Seeded multi-farm generator.
//!
//! Hub wind speed per farm is
//! `mean + offset_f + A·sin(2π·hour/24) + σ·(c·z_t + sqrt(1 − c²)·e_{f,t})`,
//! clipped at zero, where `z` is an AR(1) factor shared by all farms, `e_f`
//! an independent AR(1) per farm (both with unit stationary variance) and
//! `c` the inter-farm correlation. Power follows `½ρAV³c_p`, plus Gaussian
//! noise, clipped to `[0, rated]` with `rated` the 99th percentile of the
//! noiseless curve. A lead-`τ` forecast of hour `t` is the true weather at `t`
//! plus noise whose scale grows linearly with `τ`.

use serde::{Deserialize, Serialize};

use super::{LeadBlock, LeadTime, WindFarmRecord, WindFarmSeries};
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_farms: usize,
    pub months: usize,
    pub hours_per_month: usize,
    pub seed: u64,
    /// kg/m³
    pub air_density: f64,
    /// m²
    pub rotor_area: f64,
    /// Must stay below the Betz limit 16/27.
    pub power_coefficient: f64,
    /// Weight of the shared factor in `[0, 1]`.
    pub correlation: f64,
    /// Dimensionless noise level. At 1.0: 12-hour speed forecasts carry
    /// 1 m/s noise, directions 10°, and power 5% of rated.
    pub noise: f64,
    /// m/s
    pub mean_speed: f64,
    /// m/s, amplitude of the daily cycle
    pub diurnal_amplitude: f64,
    /// m/s, stationary std of the stochastic part
    pub speed_std: f64,
    /// Hour-to-hour AR(1) coefficient of both factors.
    pub persistence: f64,
    /// Emit a measured hub-speed channel for speed-task datasets.
    pub include_measured_speed: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_farms: 5,
            months: 20,
            hours_per_month: 720,
            seed: 1,
            air_density: 1.225,
            rotor_area: 5027.0,
            power_coefficient: 0.4,
            correlation: 0.8,
            noise: 0.1,
            mean_speed: 8.0,
            diurnal_amplitude: 1.0,
            speed_std: 3.0,
            persistence: 0.97,
            include_measured_speed: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidArgument(m.to_string()));
        if !(self.power_coefficient > 0.0 && self.power_coefficient < 16.0 / 27.0) {
            return bad("power_coefficient must lie in (0, 16/27)");
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad("correlation must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad("persistence must lie in [0, 1)");
        }
        if self.noise < 0.0 || self.speed_std < 0.0 {
            return bad("noise and speed_std must be non-negative");
        }
        if self.n_farms == 0 || self.months == 0 || self.hours_per_month == 0 {
            return bad("n_farms, months and hours_per_month must be positive");
        }
        Ok(())
    }

    /// `½ρAV³c_p` in watts.
    pub fn betz_power(&self, speed: f64) -> f64 {
        0.5 * self.air_density * self.rotor_area * speed.powi(3) * self.power_coefficient
    }
}

struct Ar1 {
    phi: f64,
    innov: f64,
    state: f64,
}

impl Ar1 {
    fn new(phi: f64, rng: &mut RngStream) -> Self {
        Self {
            phi,
            innov: (1.0 - phi * phi).sqrt(),
            state: rng.normal(),
        }
    }

    fn step(&mut self, rng: &mut RngStream) -> f64 {
        let v = self.state;
        self.state = self.phi * self.state + self.innov * rng.normal();
        v
    }
}

fn percentile_99(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // nearest rank
    let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Generates `n_farms` series named `farm1`, `farm2`, ...
pub fn synth_generate(cfg: &SynthConfig) -> Vec<WindFarmSeries> {
    cfg.validate().expect("invalid SynthConfig");
    let n = cfg.months * cfg.hours_per_month;
    let root = RngStream::new(cfg.seed);
    let c = cfg.correlation;
    let own = (1.0 - c * c).max(0.0).sqrt();

    let mut shared_rng = root.derive(0);
    let mut shared_speed = Ar1::new(cfg.persistence, &mut shared_rng);
    let mut shared_dir = Ar1::new(cfg.persistence, &mut shared_rng);
    let shared: Vec<(f64, f64)> = (0..n)
        .map(|_| (shared_speed.step(&mut shared_rng), shared_dir.step(&mut shared_rng)))
        .collect();

    (0..cfg.n_farms)
        .map(|f| {
            let mut rng = root.derive(f as u64 + 1);
            let offset = (1.0 - c) * rng.normal();
            let mut own_speed = Ar1::new(cfg.persistence, &mut rng);
            let mut own_dir = Ar1::new(cfg.persistence, &mut rng);

            let mut speed = Vec::with_capacity(n);
            let mut direction = Vec::with_capacity(n);
            for (t, &(zs, zd)) in shared.iter().enumerate() {
                let es = own_speed.step(&mut rng);
                let ed = own_dir.step(&mut rng);
                let daily = cfg.diurnal_amplitude
                    * (std::f64::consts::TAU * (t % 24) as f64 / 24.0).sin();
                let v = cfg.mean_speed + offset + daily + cfg.speed_std * (c * zs + own * es);
                speed.push(v.max(0.0));
                direction.push((225.0 + 60.0 * (c * zd + own * ed)).rem_euclid(360.0));
            }

            let clean: Vec<f64> = speed.iter().map(|&v| cfg.betz_power(v)).collect();
            let rated = percentile_99(&clean);
            let power_noise = cfg.noise * 0.05 * rated;

            let records = (0..n)
                .map(|t| {
                    let mut p = clean[t];
                    if power_noise > 0.0 {
                        p += power_noise * rng.normal();
                    }
                    let power = p.clamp(0.0, rated);
                    let mut leads = [LeadBlock::default(); 4];
                    for lead in LeadTime::ALL {
                        let scale = cfg.noise * lead.hours() as f64 / 12.0;
                        let (mut s, mut d) = (speed[t], direction[t]);
                        if scale > 0.0 {
                            s = (s + scale * rng.normal()).max(0.0);
                            d = (d + 10.0 * scale * rng.normal()).rem_euclid(360.0);
                        }
                        // rem_euclid can round up to exactly 360.0
                        if d >= 360.0 {
                            d = 0.0;
                        }
                        let rad = d.to_radians();
                        leads[lead.index()] = LeadBlock {
                            zonal: -s * rad.sin(),
                            meridional: -s * rad.cos(),
                            direction: d,
                            speed: s,
                        };
                    }
                    WindFarmRecord {
                        hour: t as i64,
                        power,
                        leads,
                        speed: cfg.include_measured_speed.then_some(speed[t]),
                    }
                })
                .collect();
            WindFarmSeries::new(format!("farm{}", f + 1), records)
        })
        .collect()
}
