//! Parallel grid search with deterministic ranking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regressor::{train_regressor, RegressorSpec};
use super::training::TrainConfig;
use super::Layout;
use crate::error::{FddError, Result};
use crate::frame::TimeSeriesFrame;
use crate::preprocess::SplitSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult<S> {
    /// 1-based position in the ranking.
    pub rank: usize,
    /// Position in the input grid.
    pub index: usize,
    pub spec: S,
    /// Mean validation score; `None` when the point failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Scores every grid point with `eval` (in parallel) and ranks them by
/// descending score. Ties keep grid order; failed points come last.
pub fn grid_search<S, F>(grid: &[S], eval: F) -> Result<Vec<GridResult<S>>>
where
    S: Clone + Send + Sync,
    F: Fn(&S) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(FddError::Config("grid is empty".into()));
    }
    let outcomes: Vec<Result<f64>> = grid.par_iter().map(&eval).collect();
    let mut results: Vec<GridResult<S>> = grid
        .iter()
        .zip(outcomes)
        .enumerate()
        .map(|(index, (spec, outcome))| {
            let (score, error) = match outcome {
                Ok(s) if s.is_finite() => (Some(s), None),
                Ok(s) => (None, Some(format!("non-finite score {s}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            GridResult {
                rank: 0,
                index,
                spec: spec.clone(),
                score,
                error,
            }
        })
        .collect();
    results.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    for (k, r) in results.iter_mut().enumerate() {
        r.rank = k + 1;
        if let Some(e) = &r.error {
            log::warn!("grid point {} failed: {e}", r.index);
        }
    }
    Ok(results)
}

/// Regressor sweep over the quantities the published grid varied. Empty
/// lists keep the preset's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorGrid {
    pub preset: String,
    #[serde(default)]
    pub layouts: Vec<Layout>,
    #[serde(default)]
    pub batch_sizes: Vec<usize>,
    #[serde(default)]
    pub lookbacks: Vec<usize>,
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl RegressorGrid {
    /// Cartesian product in the order layouts × batch sizes × lookbacks × epochs.
    pub fn expand(&self) -> Result<Vec<RegressorSpec>> {
        let mut base = RegressorSpec::preset(&self.preset)?;
        if let Some(t) = self.train {
            base.train = t;
        }
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let layouts = if self.layouts.is_empty() {
            vec![base.layout.clone()]
        } else {
            self.layouts.clone()
        };
        let mut out = Vec::new();
        for layout in &layouts {
            for &batch_size in &or(&self.batch_sizes, base.batch_size) {
                for &lookback in &or(&self.lookbacks, base.lookback) {
                    for &epochs in &or(&self.epochs, base.train.epochs) {
                        out.push(RegressorSpec {
                            layout: layout.clone(),
                            batch_size,
                            lookback,
                            train: TrainConfig { epochs, ..base.train },
                            ..base.clone()
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Ranks regressor specs by mean cross-validated r².
pub fn regressor_grid(
    grid: &[RegressorSpec],
    frame: &TimeSeriesFrame,
    split: SplitSpec,
    seed: u64,
) -> Result<Vec<GridResult<RegressorSpec>>> {
    grid_search(grid, |spec| Ok(train_regressor(spec, frame, split, seed)?.cv_score()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_descending_with_failures_last() {
        let grid = [0.5, f64::NAN, 0.9, -1.0, 0.9, 0.1];
        let r = grid_search(&grid, |&x| {
            if x < 0.0 {
                Err(FddError::Config("bad".into()))
            } else {
                Ok(x)
            }
        })
        .unwrap();
        let order: Vec<usize> = r.iter().map(|g| g.index).collect();
        assert_eq!(order, vec![2, 4, 0, 5, 1, 3]);
        assert_eq!(r.iter().map(|g| g.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert!(r[4].error.is_some() && r[5].error.is_some());
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(grid_search::<f64, _>(&[], |_| Ok(0.0)).is_err());
    }

    #[test]
    fn grid_expands_in_documented_order() {
        let g: RegressorGrid =
            serde_json::from_str(r#"{"preset":"narx","layouts":["32P,4P","16P"],"batch_sizes":[5,10]}"#).unwrap();
        let specs = g.expand().unwrap();
        assert_eq!(specs.len(), 4);
        assert_eq!(specs[1].layout.to_string(), "32P,4P");
        assert_eq!(specs[1].batch_size, 10);
        assert_eq!(specs[2].layout.to_string(), "16P");
        assert!(serde_json::from_str::<RegressorGrid>(r#"{"preset":"narx","bogus":1}"#).is_err());
    }
}
