//! Controller–thruster plant simulator.
//!
//! The plant is a Wiener-type structure: a static steady-state map (deadband,
//! saturating speed curve, quadratic current curve) feeding two cascaded
//! first-order lags, preceded by a pure transport delay. Soft-faults act on
//! the static maps through [`FaultEffects`].

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::frame::TimeSeriesFrame;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub dead_time_s: f64,
    pub tau1_s: f64,
    pub tau2_s: f64,
    /// Half-width of the deadband in normalized input units.
    pub deadband_u: f64,
    pub rpm_max: f64,
    pub rpm_sat_gain: f64,
    /// Current at full input, amperes.
    pub current_quad_coeff: f64,
    pub nominal_voltage_v: f64,
    pub noise_sigma_rpm: f64,
    pub noise_sigma_current: f64,
    pub noise_sigma_voltage: f64,
    pub sample_rate_hz: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        let rpm_max = 4200.0;
        let current_quad_coeff = 10.0;
        PlantParams {
            dead_time_s: 0.59,
            tau1_s: 0.55,
            tau2_s: 0.20,
            // ±25 µs over the 500 µs PWM half-range.
            deadband_u: 0.05,
            rpm_max,
            rpm_sat_gain: 2.0,
            current_quad_coeff,
            nominal_voltage_v: 15.0,
            noise_sigma_rpm: 0.01 * rpm_max,
            noise_sigma_current: 0.02 * current_quad_coeff,
            noise_sigma_voltage: 0.05,
            sample_rate_hz: 10.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.dead_time_s,
            self.tau1_s,
            self.tau2_s,
            self.deadband_u,
            self.rpm_max,
            self.rpm_sat_gain,
            self.current_quad_coeff,
            self.nominal_voltage_v,
            self.noise_sigma_rpm,
            self.noise_sigma_current,
            self.noise_sigma_voltage,
            self.sample_rate_hz,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(FddError::Config("plant parameters must be finite".into()));
        }
        if !(self.tau1_s > self.tau2_s && self.tau2_s > 0.0) {
            return Err(FddError::Config(format!(
                "time constants must satisfy tau1 > tau2 > 0 (got {}, {})",
                self.tau1_s, self.tau2_s
            )));
        }
        if self.dead_time_s < 0.0 {
            return Err(FddError::Config("dead time must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.deadband_u) {
            return Err(FddError::Config(format!(
                "deadband half-width must lie in [0, 1), got {}",
                self.deadband_u
            )));
        }
        if self.rpm_max <= 0.0 || self.sample_rate_hz <= 0.0 || self.nominal_voltage_v <= 0.0 {
            return Err(FddError::Config(
                "rpm_max, sample_rate_hz and nominal_voltage_v must be positive".into(),
            ));
        }
        if self.noise_sigma_rpm < 0.0 || self.noise_sigma_current < 0.0 || self.noise_sigma_voltage < 0.0 {
            return Err(FddError::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Transport delay as a whole number of samples.
    pub fn dead_time_samples(&self) -> usize {
        (self.dead_time_s * self.sample_rate_hz).round() as usize
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma_rpm = 0.0;
        self.noise_sigma_current = 0.0;
        self.noise_sigma_voltage = 0.0;
        self
    }
}

/// The six health conditions, in confusion-matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultCondition {
    Nominal15V,
    Voltage13V,
    Voltage11_8V,
    OneBrokenBlade,
    TwoBrokenBlades,
    Biofouling,
}

impl FaultCondition {
    pub const ALL: [FaultCondition; 6] = [
        FaultCondition::Nominal15V,
        FaultCondition::Voltage13V,
        FaultCondition::Voltage11_8V,
        FaultCondition::OneBrokenBlade,
        FaultCondition::TwoBrokenBlades,
        FaultCondition::Biofouling,
    ];

    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultCondition::Nominal15V => "Nominal15V",
            FaultCondition::Voltage13V => "Voltage13V",
            FaultCondition::Voltage11_8V => "Voltage11_8V",
            FaultCondition::OneBrokenBlade => "OneBrokenBlade",
            FaultCondition::TwoBrokenBlades => "TwoBrokenBlades",
            FaultCondition::Biofouling => "Biofouling",
        }
    }
}

impl fmt::Display for FaultCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultCondition {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let cond = match key.as_str() {
            "nominal15v" | "nominal" => FaultCondition::Nominal15V,
            "voltage13v" | "13v" | "130v" => FaultCondition::Voltage13V,
            "voltage118v" | "118v" => FaultCondition::Voltage11_8V,
            "onebrokenblade" | "brokenblade" => FaultCondition::OneBrokenBlade,
            "twobrokenblades" => FaultCondition::TwoBrokenBlades,
            "biofouling" => FaultCondition::Biofouling,
            _ => return Err(FddError::Data(format!("unknown fault condition `{s}`"))),
        };
        Ok(cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEffects {
    pub voltage_v: f64,
    /// Multiplies the steady-state speed map.
    pub load_factor: f64,
    /// Multiplies the steady-state current map.
    pub drag_factor: f64,
}

impl FaultEffects {
    pub const NOMINAL: FaultEffects = FaultEffects {
        voltage_v: 15.0,
        load_factor: 1.0,
        drag_factor: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.voltage_v > 0.0 && self.load_factor > 0.0 && self.drag_factor > 0.0) {
            return Err(FddError::Config(format!("fault effects must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Per-condition effects; overridable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultTable {
    pub effects: [FaultEffects; 6],
}

impl Default for FaultTable {
    fn default() -> Self {
        let fx = |voltage_v, load_factor, drag_factor| FaultEffects {
            voltage_v,
            load_factor,
            drag_factor,
        };
        FaultTable {
            effects: [
                FaultEffects::NOMINAL,
                fx(13.0, 1.0, 1.0),
                fx(11.8, 1.0, 1.0),
                fx(15.0, 1.08, 0.85),
                fx(15.0, 1.15, 0.70),
                fx(15.0, 0.92, 1.25),
            ],
        }
    }
}

impl FaultTable {
    pub fn get(&self, condition: FaultCondition) -> FaultEffects {
        self.effects[condition.index()]
    }

    pub fn set(&mut self, condition: FaultCondition, effects: FaultEffects) {
        self.effects[condition.index()] = effects;
    }

    pub fn validate(&self) -> Result<()> {
        self.effects.iter().try_for_each(FaultEffects::validate)
    }
}

/// Effects of a condition under the default fault table.
pub fn fault_effects(condition: FaultCondition) -> FaultEffects {
    FaultTable::default().get(condition)
}

/// Rescaled dead zone: zero inside `±width`, linear outside, `±1 ↦ ±1`.
pub(crate) fn deadband_shift(u: f64, width: f64) -> f64 {
    let mag = u.abs();
    if mag <= width {
        0.0
    } else {
        u.signum() * (mag - width) / (1.0 - width)
    }
}

/// Steady-state speed and current for a constant input.
pub fn steady_state_maps(u: f64, effects: &FaultEffects, params: &PlantParams) -> Result<(f64, f64)> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(FddError::InputDomain(format!("control input {u} outside [-1, 1]")));
    }
    Ok(steady_state_unchecked(u, effects, params))
}

fn steady_state_unchecked(u: f64, effects: &FaultEffects, params: &PlantParams) -> (f64, f64) {
    let u_db = deadband_shift(u, params.deadband_u);
    if u_db == 0.0 {
        return (0.0, 0.0);
    }
    let voltage_ratio = effects.voltage_v / params.nominal_voltage_v;
    let rpm = u_db.signum()
        * effects.load_factor
        * voltage_ratio
        * params.rpm_max
        * (params.rpm_sat_gain * u_db.abs()).tanh();
    let current = effects.drag_factor * params.current_quad_coeff * u_db * u_db;
    (rpm, current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InputSignal {
    /// Triangular staircase 0 → +1 → −1 → 0 in increments of `amplitude_step`,
    /// each level held for `hold_s`.
    StepStaircase {
        amplitude_step: f64,
        hold_s: f64,
        duration_s: f64,
    },
    Sinusoid {
        frequency_hz: f64,
        amplitude: f64,
        phase_rad: f64,
        duration_s: f64,
    },
}

impl InputSignal {
    pub fn staircase(amplitude_step: f64, duration_s: f64) -> Self {
        InputSignal::StepStaircase {
            amplitude_step,
            hold_s: 10.0,
            duration_s,
        }
    }

    pub fn sine(frequency_hz: f64, duration_s: f64) -> Self {
        InputSignal::Sinusoid {
            frequency_hz,
            amplitude: 1.0,
            phase_rad: 0.0,
            duration_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        match *self {
            InputSignal::StepStaircase { duration_s, .. } | InputSignal::Sinusoid { duration_s, .. } => duration_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InputSignal::StepStaircase {
                amplitude_step,
                hold_s,
                duration_s,
            } => {
                if !(amplitude_step > 0.0 && amplitude_step <= 1.0) {
                    return Err(FddError::Config(format!(
                        "staircase step must lie in (0, 1], got {amplitude_step}"
                    )));
                }
                if !(hold_s > 0.0 && duration_s > 0.0) {
                    return Err(FddError::Config("hold and duration must be positive".into()));
                }
            }
            InputSignal::Sinusoid {
                frequency_hz,
                amplitude,
                phase_rad,
                duration_s,
            } => {
                if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
                    return Err(FddError::Config(format!("frequency must be positive, got {frequency_hz}")));
                }
                if !(0.0..=1.0).contains(&amplitude) || !phase_rad.is_finite() {
                    return Err(FddError::Config(format!("sinusoid amplitude must lie in [0, 1], got {amplitude}")));
                }
                if !(duration_s > 0.0) {
                    return Err(FddError::Config("duration must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            InputSignal::StepStaircase {
                amplitude_step,
                hold_s,
                ..
            } => {
                let levels = (1.0 / amplitude_step).round().max(1.0) as i64;
                let period = 4 * levels;
                // Small guard so t = k·hold lands on the new level despite rounding.
                let k = ((t / hold_s) + 1e-9).floor() as i64;
                let p = k.rem_euclid(period);
                let tri = if p <= levels {
                    p
                } else if p <= 3 * levels {
                    2 * levels - p
                } else {
                    p - period
                };
                (tri as f64 * amplitude_step).clamp(-1.0, 1.0)
            }
            InputSignal::Sinusoid {
                frequency_hz,
                amplitude,
                phase_rad,
                ..
            } => amplitude * (2.0 * std::f64::consts::PI * frequency_hz * t + phase_rad).sin(),
        }
    }
}

/// Runs the plant for the signal's duration, starting at rest.
pub fn simulate(
    signal: &InputSignal,
    condition: FaultCondition,
    params: &PlantParams,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    simulate_with_table(signal, condition, &FaultTable::default(), params, seed)
}

pub fn simulate_with_table(
    signal: &InputSignal,
    condition: FaultCondition,
    table: &FaultTable,
    params: &PlantParams,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    params.validate()?;
    signal.validate()?;
    table.validate()?;
    if signal.duration_s() < params.dead_time_s {
        return Err(FddError::Config(format!(
            "duration {} s is shorter than the dead time {} s",
            signal.duration_s(),
            params.dead_time_s
        )));
    }
    let n = ((signal.duration_s() * params.sample_rate_hz).round() as usize).max(1);
    let dt = params.sample_period_s();
    let u: Vec<f64> = (0..n).map(|k| signal.value_at(k as f64 * dt)).collect();
    let effects = table.get(condition);
    let (v, rpm, i) = respond(&u, &effects, params, seed);
    let t = (0..n).map(|k| k as f64 * dt).collect();
    TimeSeriesFrame::new(t, u, v, rpm, i, Some(vec![condition; n]))
}

/// Plant response to an arbitrary input sequence; returns (voltage, rpm, current).
pub fn respond(
    u: &[f64],
    effects: &FaultEffects,
    params: &PlantParams,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = u.len();
    let dt = params.sample_period_s();
    let a1 = (-dt / params.tau1_s).exp();
    let a2 = (-dt / params.tau2_s).exp();
    let delay = params.dead_time_samples();

    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            sigma * normal.sample(&mut rng)
        } else {
            0.0
        }
    };

    let mut v = Vec::with_capacity(n);
    let mut rpm = Vec::with_capacity(n);
    let mut cur = Vec::with_capacity(n);
    let (mut r1, mut r2, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        // Plant at rest before t = 0.
        let delayed = if k >= delay { u[k - delay].clamp(-1.0, 1.0) } else { 0.0 };
        let (rpm_ss, i_ss) = steady_state_unchecked(delayed, effects, params);
        r1 = a1 * r1 + (1.0 - a1) * rpm_ss;
        r2 = a2 * r2 + (1.0 - a2) * r1;
        c1 = a1 * c1 + (1.0 - a1) * i_ss;
        c2 = a2 * c2 + (1.0 - a2) * c1;
        v.push(effects.voltage_v + draw(params.noise_sigma_voltage));
        rpm.push(r2 + draw(params.noise_sigma_rpm));
        cur.push(c2 + draw(params.noise_sigma_current));
    }
    (v, rpm, cur)
}

/// Timing of one step in a measured response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTiming {
    pub step_time_s: f64,
    /// From the input step to the first sample that moves 2% of the way.
    pub dead_time_s: f64,
    /// From the input step until the output stays within ±2% of the change.
    pub settling_time_s: f64,
}

/// Measures dead time and 2% settling time of every step in `u`.
///
/// Each step is evaluated over the window until the next step; steps whose
/// output change is zero (both levels inside the deadband) are skipped.
pub fn step_timings(t: &[f64], u: &[f64], y: &[f64], band: f64) -> Vec<StepTiming> {
    let steps: Vec<usize> = (1..u.len()).filter(|&k| u[k] != u[k - 1]).collect();
    let mut out = Vec::new();
    for (s, &k0) in steps.iter().enumerate() {
        let end = steps.get(s + 1).copied().unwrap_or(u.len());
        if end - k0 < 3 {
            continue;
        }
        let start = y[k0 - 1];
        let fin = y[end - 1];
        let delta = fin - start;
        if delta.abs() < 1e-9 {
            continue;
        }
        let tol = band * delta.abs();
        let Some(onset) = (k0..end).find(|&k| (y[k] - start).abs() > tol) else {
            continue;
        };
        let settled = (k0..end)
            .rev()
            .find(|&k| (y[k] - fin).abs() > tol)
            .map_or(k0, |k| k + 1);
        out.push(StepTiming {
            step_time_s: t[k0],
            dead_time_s: t[onset] - t[k0],
            settling_time_s: t[settled.min(end - 1)] - t[k0],
        });
    }
    out
}

/// Signed area enclosed by the closed curve through `(x, y)` (shoelace).
pub fn loop_area(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..n {
        let j = (k + 1) % n;
        acc += x[k] * y[j] - x[j] * y[k];
    }
    0.5 * acc
}
