//! Flat `key = value` configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! overrides are applied on top with [`KeyValues::set`]. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::plant::{FaultCondition, FaultTable, PlantParams};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FddError::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(FddError::Config(format!("line {}: empty key", n + 1)));
            }
            if kv.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(FddError::Config(format!("line {}: key `{k}` given twice", n + 1)));
            }
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FddError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Inserts or replaces a value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    /// Parses a `key=value` override.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| FddError::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| FddError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Applies a `plant.<field>` key. Returns `false` for keys outside that
/// namespace.
pub fn apply_plant_key(plant: &mut PlantParams, key: &str, value: &str) -> Result<bool> {
    let Some(field) = key.strip_prefix("plant.") else {
        return Ok(false);
    };
    let x: f64 = parse_value(key, value)?;
    let slot = match field {
        "dead_time_s" => &mut plant.dead_time_s,
        "tau1_s" => &mut plant.tau1_s,
        "tau2_s" => &mut plant.tau2_s,
        "deadband_u" => &mut plant.deadband_u,
        "rpm_max" => &mut plant.rpm_max,
        "rpm_sat_gain" => &mut plant.rpm_sat_gain,
        "current_quad_coeff" => &mut plant.current_quad_coeff,
        "nominal_voltage_v" => &mut plant.nominal_voltage_v,
        "noise_sigma_rpm" => &mut plant.noise_sigma_rpm,
        "noise_sigma_current" => &mut plant.noise_sigma_current,
        "noise_sigma_voltage" => &mut plant.noise_sigma_voltage,
        "sample_rate_hz" => &mut plant.sample_rate_hz,
        _ => return Err(FddError::Config(format!("unknown plant parameter `{key}`"))),
    };
    *slot = x;
    Ok(true)
}

/// Applies a `fault.<condition>.<field>` key, e.g.
/// `fault.biofouling.drag_factor = 1.3`.
pub fn apply_fault_key(table: &mut FaultTable, key: &str, value: &str) -> Result<bool> {
    let Some(rest) = key.strip_prefix("fault.") else {
        return Ok(false);
    };
    let (cond, field) = rest
        .rsplit_once('.')
        .ok_or_else(|| FddError::Config(format!("`{key}` should be fault.<condition>.<field>")))?;
    let cond: FaultCondition = cond.parse().map_err(|_| FddError::Config(format!("`{key}`: unknown condition `{cond}`")))?;
    let x: f64 = parse_value(key, value)?;
    let mut fx = table.get(cond);
    match field {
        "voltage_v" => fx.voltage_v = x,
        "load_factor" => fx.load_factor = x,
        "drag_factor" => fx.drag_factor = x,
        _ => return Err(FddError::Config(format!("unknown fault-effect field in `{key}`"))),
    }
    table.set(cond, fx);
    Ok(true)
}

fn plant_pairs(p: &PlantParams) -> Vec<(&'static str, f64)> {
    vec![
        ("dead_time_s", p.dead_time_s),
        ("tau1_s", p.tau1_s),
        ("tau2_s", p.tau2_s),
        ("deadband_u", p.deadband_u),
        ("rpm_max", p.rpm_max),
        ("rpm_sat_gain", p.rpm_sat_gain),
        ("current_quad_coeff", p.current_quad_coeff),
        ("nominal_voltage_v", p.nominal_voltage_v),
        ("noise_sigma_rpm", p.noise_sigma_rpm),
        ("noise_sigma_current", p.noise_sigma_current),
        ("noise_sigma_voltage", p.noise_sigma_voltage),
        ("sample_rate_hz", p.sample_rate_hz),
    ]
}

/// One classifier row of the benchmark: a preset trained with a batch size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierRow {
    pub preset: String,
    pub batch_size: usize,
}

impl FromStr for ClassifierRow {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self> {
        let (preset, batch) = s
            .split_once(':')
            .ok_or_else(|| FddError::Config(format!("classifier row `{s}` should be <preset>:<batch size>")))?;
        Ok(ClassifierRow {
            preset: preset.trim().to_string(),
            batch_size: parse_value("classifiers", batch.trim())?,
        })
    }
}

impl fmt::Display for ClassifierRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.preset, self.batch_size)
    }
}

/// Everything `run_benchmark` needs. Defaults reproduce the published
/// protocol on the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub plant: PlantParams,
    pub faults: FaultTable,
    /// Regressor used for residual generation.
    pub nominal_preset: String,
    /// Rows of the r² table.
    pub regressors: Vec<String>,
    pub train_freq_hz: f64,
    pub train_samples: usize,
    pub test_freqs_hz: Vec<f64>,
    pub test_samples: usize,
    pub regressor_folds: usize,
    pub regressor_epochs: usize,
    pub regressor_patience: usize,
    pub learning_rate: f64,
    pub class_freq_hz: f64,
    /// Training samples per condition.
    pub class_train_samples: usize,
    /// Test samples over all conditions; the remainder of an even split
    /// goes to the nominal class.
    pub class_test_samples: usize,
    pub classifier_folds: usize,
    pub classifier_epochs: usize,
    pub classifier_patience: usize,
    pub classifiers: Vec<ClassifierRow>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let row = |p: &str, b| ClassifierRow {
            preset: p.to_string(),
            batch_size: b,
        };
        BenchmarkConfig {
            seed: 7,
            plant: PlantParams::default(),
            faults: FaultTable::default(),
            nominal_preset: "narx".into(),
            regressors: crate::models::REGRESSOR_PRESETS.iter().map(|s| s.to_string()).collect(),
            train_freq_hz: 0.01,
            train_samples: 2000,
            test_freqs_hz: vec![0.01, 0.02, 0.03, 0.04],
            test_samples: 1000,
            regressor_folds: 2,
            regressor_epochs: 200,
            regressor_patience: 20,
            learning_rate: 1e-3,
            class_freq_hz: 0.01,
            class_train_samples: 2000,
            class_test_samples: 11200,
            classifier_folds: 3,
            classifier_epochs: 30,
            classifier_patience: 5,
            classifiers: vec![
                row("clf-mlp-all", 5),
                row("clf-mlp-res", 5),
                row("clf-mlp-all", 1),
                row("clf-mlp-res", 1),
                row("clf-lstm-all", 1),
                row("clf-lstm-res", 1),
            ],
        }
    }
}

impl BenchmarkConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = BenchmarkConfig::default();
        for (key, value) in kv.iter() {
            if apply_plant_key(&mut c.plant, key, value)? || apply_fault_key(&mut c.faults, key, value)? {
                continue;
            }
            match key {
                "seed" => c.seed = parse_value(key, value)?,
                "nominal_preset" => c.nominal_preset = value.to_string(),
                "regressors" => c.regressors = parse_list(key, value)?,
                "train_freq_hz" => c.train_freq_hz = parse_value(key, value)?,
                "train_samples" => c.train_samples = parse_value(key, value)?,
                "test_freqs_hz" => c.test_freqs_hz = parse_list(key, value)?,
                "test_samples" => c.test_samples = parse_value(key, value)?,
                "regressor_folds" => c.regressor_folds = parse_value(key, value)?,
                "regressor_epochs" => c.regressor_epochs = parse_value(key, value)?,
                "regressor_patience" => c.regressor_patience = parse_value(key, value)?,
                "learning_rate" => c.learning_rate = parse_value(key, value)?,
                "class_freq_hz" => c.class_freq_hz = parse_value(key, value)?,
                "class_train_samples" => c.class_train_samples = parse_value(key, value)?,
                "class_test_samples" => c.class_test_samples = parse_value(key, value)?,
                "classifier_folds" => c.classifier_folds = parse_value(key, value)?,
                "classifier_epochs" => c.classifier_epochs = parse_value(key, value)?,
                "classifier_patience" => c.classifier_patience = parse_value(key, value)?,
                "classifiers" => c.classifiers = parse_list(key, value)?,
                _ => return Err(FddError::Config(format!("unknown configuration key `{key}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    /// Every setting as key/value pairs; parsing the result gives back an
    /// equal config.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("seed", self.seed.to_string());
        kv.set("nominal_preset", self.nominal_preset.clone());
        kv.set("regressors", self.regressors.join(","));
        kv.set("train_freq_hz", self.train_freq_hz.to_string());
        kv.set("train_samples", self.train_samples.to_string());
        kv.set("test_freqs_hz", join(&self.test_freqs_hz));
        kv.set("test_samples", self.test_samples.to_string());
        kv.set("regressor_folds", self.regressor_folds.to_string());
        kv.set("regressor_epochs", self.regressor_epochs.to_string());
        kv.set("regressor_patience", self.regressor_patience.to_string());
        kv.set("learning_rate", self.learning_rate.to_string());
        kv.set("class_freq_hz", self.class_freq_hz.to_string());
        kv.set("class_train_samples", self.class_train_samples.to_string());
        kv.set("class_test_samples", self.class_test_samples.to_string());
        kv.set("classifier_folds", self.classifier_folds.to_string());
        kv.set("classifier_epochs", self.classifier_epochs.to_string());
        kv.set("classifier_patience", self.classifier_patience.to_string());
        kv.set("classifiers", join(&self.classifiers));
        for (k, v) in plant_pairs(&self.plant) {
            kv.set(&format!("plant.{k}"), v.to_string());
        }
        for cond in FaultCondition::ALL {
            let fx = self.faults.get(cond);
            let key = cond.name().to_ascii_lowercase();
            kv.set(&format!("fault.{key}.voltage_v"), fx.voltage_v.to_string());
            kv.set(&format!("fault.{key}.load_factor"), fx.load_factor.to_string());
            kv.set(&format!("fault.{key}.drag_factor"), fx.drag_factor.to_string());
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.faults.validate()?;
        let positive = [
            ("train_samples", self.train_samples),
            ("test_samples", self.test_samples),
            ("regressor_epochs", self.regressor_epochs),
            ("class_train_samples", self.class_train_samples),
            ("classifier_epochs", self.classifier_epochs),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(FddError::Config(format!("`{k}` must be positive")));
        }
        if self.regressor_folds < 2 || self.classifier_folds < 2 {
            return Err(FddError::Config("fold counts must be at least 2".into()));
        }
        if self.class_test_samples < FaultCondition::COUNT {
            return Err(FddError::Config("class_test_samples must cover all six conditions".into()));
        }
        let freqs = self.test_freqs_hz.iter().chain([&self.train_freq_hz, &self.class_freq_hz]);
        if self.test_freqs_hz.is_empty() || freqs.clone().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(FddError::Config("frequencies must be positive and test_freqs_hz non-empty".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FddError::Config("learning_rate must be positive".into()));
        }
        if !crate::models::REGRESSOR_PRESETS.contains(&self.nominal_preset.as_str()) {
            return Err(FddError::Config(format!("unknown nominal_preset `{}`", self.nominal_preset)));
        }
        for r in &self.regressors {
            r.parse::<crate::models::RegressorKind>()?;
        }
        for row in &self.classifiers {
            crate::models::ClassifierSpec::preset(&row.preset)?;
            if row.batch_size == 0 {
                return Err(FddError::Config(format!("classifier row `{row}` needs a positive batch size")));
            }
        }
        Ok(())
    }

    /// Test samples per condition, in [`FaultCondition::ALL`] order.
    pub fn class_test_counts(&self) -> [usize; FaultCondition::COUNT] {
        let each = self.class_test_samples / FaultCondition::COUNT;
        let mut counts = [each; FaultCondition::COUNT];
        counts[FaultCondition::Nominal15V.index()] += self.class_test_samples % FaultCondition::COUNT;
        counts
    }
}
