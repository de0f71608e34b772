//! Regressor and classifier presets, the training loop, grid search and the
//! serialized model artifact.

pub mod artifact;
pub mod classifier;
pub mod grid;
pub mod regressor;
pub mod training;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::nn::{Activation, DenseLayer, GruCell, LstmCell, Network, RecurrentLayer};

pub use artifact::{FoldRecord, ModelSpec, TrainedModel};
pub use classifier::{
    predict_proba, predict_classes, train_classifier, ClassifierData, ClassifierKind, ClassifierSpec, FeatureMode,
    CLASSIFIER_PRESETS,
};
pub use grid::{grid_search, GridResult};
pub use regressor::{
    predict_parallel, predict_series_parallel, train_regressor, Prediction, RegressorKind, RegressorSpec, REGRESSOR_PRESETS,
};
pub use training::{fit, Dataset, EpochRecord, Example, FitResult, TrainConfig};

/// Unit vocabulary of the hidden-layer notation (`P`, `L`, `G`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKind {
    Perceptron,
    Lstm,
    Gru,
}

impl UnitKind {
    fn letter(self) -> char {
        match self {
            UnitKind::Perceptron => 'P',
            UnitKind::Lstm => 'L',
            UnitKind::Gru => 'G',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub unit: UnitKind,
}

impl HiddenLayer {
    pub const fn new(width: usize, unit: UnitKind) -> Self {
        HiddenLayer { width, unit }
    }
}

/// Hidden layers written as in `24L,16P,16P`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Layout(pub Vec<HiddenLayer>);

impl Layout {
    pub fn recurrent(&self) -> Option<UnitKind> {
        self.0.first().map(|l| l.unit).filter(|u| *u != UnitKind::Perceptron)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(FddError::Config("layout needs at least one hidden layer".into()));
        }
        if self.0.iter().any(|l| l.width == 0) {
            return Err(FddError::Config(format!("layout {self} has a zero-width layer")));
        }
        if self.0.iter().skip(1).any(|l| l.unit != UnitKind::Perceptron) {
            return Err(FddError::Config(format!("layout {self}: only the first layer may be recurrent")));
        }
        Ok(())
    }

    /// Builds a network: optional recurrent layer, tanh perceptron layers,
    /// then an output layer with `output_activation`.
    pub fn build<R: Rng + ?Sized>(
        &self,
        inputs: usize,
        outputs: usize,
        output_activation: Activation,
        gate_activation: Activation,
        rng: &mut R,
    ) -> Result<Network> {
        self.validate()?;
        let mut width = inputs;
        let mut recurrent = None;
        let mut dense = Vec::new();
        for layer in &self.0 {
            match layer.unit {
                UnitKind::Lstm => {
                    recurrent = Some(RecurrentLayer::Lstm(LstmCell::init(width, layer.width, gate_activation, rng)))
                }
                UnitKind::Gru => {
                    recurrent = Some(RecurrentLayer::Gru(GruCell::init(width, layer.width, gate_activation, rng)))
                }
                UnitKind::Perceptron => dense.push(DenseLayer::init(width, layer.width, Activation::Tanh, rng)),
            }
            width = layer.width;
        }
        dense.push(DenseLayer::init(width, outputs, output_activation, rng));
        Network::new(recurrent, dense)
    }

    /// True when `net` has exactly this hidden structure.
    pub fn matches(&self, net: &Network) -> bool {
        let mut widths: Vec<(usize, UnitKind)> = Vec::new();
        match &net.recurrent {
            Some(RecurrentLayer::Lstm(c)) => widths.push((c.hidden(), UnitKind::Lstm)),
            Some(RecurrentLayer::Gru(c)) => widths.push((c.hidden(), UnitKind::Gru)),
            None => {}
        }
        let hidden_dense = net.dense.len().saturating_sub(1);
        widths.extend(net.dense[..hidden_dense].iter().map(|d| (d.outputs(), UnitKind::Perceptron)));
        widths == self.0.iter().map(|l| (l.width, l.unit)).collect::<Vec<_>>()
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| format!("{}{}", l.width, l.unit.letter())).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Layout {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for part in s.split(',').map(str::trim) {
            let (num, unit) = part.split_at(part.len().saturating_sub(1));
            let unit = match unit {
                "P" | "p" => UnitKind::Perceptron,
                "L" | "l" => UnitKind::Lstm,
                "G" | "g" => UnitKind::Gru,
                _ => return Err(FddError::Config(format!("bad layer '{part}' in layout '{s}'"))),
            };
            let width = num
                .parse()
                .map_err(|_| FddError::Config(format!("bad layer width in '{part}'")))?;
            layers.push(HiddenLayer::new(width, unit));
        }
        let layout = Layout(layers);
        layout.validate()?;
        Ok(layout)
    }
}

impl TryFrom<String> for Layout {
    type Error = FddError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Layout> for String {
    fn from(l: Layout) -> String {
        l.to_string()
    }
}
