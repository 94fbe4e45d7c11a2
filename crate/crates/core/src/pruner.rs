//! Level (magnitude) pruning and the binary search for the highest sparsity
//! that stays within a tolerated accuracy loss.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::trainer::{train, PruneMask, TrainConfig};

/// Zeroes the `floor(sparsity * n)` smallest-magnitude weights of every
/// parametric layer. Ties on `|w|` prune the later flat index first.
/// Biases are left alone.
pub fn prune_level(model: &ModelGraph, sparsity: f64) -> Result<(ModelGraph, PruneMask)> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidConfig(format!("sparsity must be in [0, 1), got {sparsity}")));
    }
    let mut out = model.clone();
    let mut layers = Vec::with_capacity(model.weights().len());
    for w in out.weights_mut() {
        let n = w.len();
        let k = (sparsity * n as f64).floor() as usize;
        let data = w.data_mut();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            data[a]
                .abs()
                .total_cmp(&data[b].abs())
                .then_with(|| b.cmp(&a))
        });
        let mut keep = vec![true; n];
        for &idx in &order[..k] {
            keep[idx] = false;
            data[idx] = 0.0;
        }
        layers.push(keep);
    }
    Ok((out, PruneMask::from_layers(layers)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneSearchConfig {
    pub tolerated_acc_loss: f64,
    pub min_search_step: f64,
    pub train: TrainConfig,
}

impl PruneSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_search_step > 0.0 && self.min_search_step < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "min_search_step must be in (0, 0.5), got {}",
                self.min_search_step
            )));
        }
        if !(0.0..1.0).contains(&self.tolerated_acc_loss) {
            return Err(Error::InvalidConfig(format!(
                "tolerated_acc_loss must be in [0, 1), got {}",
                self.tolerated_acc_loss
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub sparsity: f64,
    pub accuracy: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<M> {
    pub best: M,
    pub best_sparsity: f64,
    pub initial_accuracy: f64,
    pub trials: Vec<Trial>,
}

/// Number of prune/retrain trials the search performs.
pub fn expected_trials(min_search_step: f64) -> usize {
    let mut step = 0.5;
    let mut n = 0;
    while step > min_search_step {
        step /= 2.0;
        n += 1;
    }
    n
}

/// The search control flow, independent of what a trial does.
///
/// `step` and `sparsity` start at 0.5; while `step > min_search_step` the step
/// is halved, one trial runs at the current sparsity, and the sparsity moves
/// up by `step` on acceptance or down on rejection. `trial(s)` returns the
/// candidate and its accuracy; `original` is returned with sparsity 0 when no
/// trial is accepted.
pub fn search_trajectory<M>(
    original: M,
    initial_accuracy: f64,
    tolerated_acc_loss: f64,
    min_search_step: f64,
    mut trial: impl FnMut(f64) -> Result<(M, f64)>,
) -> Result<SearchOutcome<M>> {
    let mut step = 0.5f64;
    let mut sparsity = 0.5f64;
    let mut best_sparsity = 0.0;
    let mut best = original;
    let mut trials = Vec::new();
    while step > min_search_step {
        step /= 2.0;
        let (candidate, accuracy) = trial(sparsity)?;
        let accepted = accuracy >= initial_accuracy - tolerated_acc_loss;
        trials.push(Trial {
            sparsity,
            accuracy,
            accepted,
        });
        if accepted {
            best = candidate;
            best_sparsity = sparsity;
            sparsity += step;
        } else {
            sparsity -= step;
        }
    }
    Ok(SearchOutcome {
        best,
        best_sparsity,
        initial_accuracy,
        trials,
    })
}

/// Binary search over level-pruning sparsity with retraining.
///
/// Every trial prunes the original `model` (not the previous trial's result)
/// and retrains it with the pruned weights held at zero.
pub fn binary_search_sparsity(
    model: &ModelGraph,
    train_set: &Dataset,
    eval_set: &Dataset,
    cfg: &PruneSearchConfig,
) -> Result<SearchOutcome<(ModelGraph, PruneMask)>> {
    binary_search_sparsity_with_progress(model, train_set, eval_set, cfg, |_| {})
}

pub fn binary_search_sparsity_with_progress(
    model: &ModelGraph,
    train_set: &Dataset,
    eval_set: &Dataset,
    cfg: &PruneSearchConfig,
    mut on_trial: impl FnMut(&Trial),
) -> Result<SearchOutcome<(ModelGraph, PruneMask)>> {
    cfg.validate()?;
    let initial_accuracy = crate::dense::evaluate(model, eval_set)?;
    let original = (model.clone(), PruneMask::full(model));
    search_trajectory(
        original,
        initial_accuracy,
        cfg.tolerated_acc_loss,
        cfg.min_search_step,
        |sparsity| {
            let (pruned, mask) = prune_level(model, sparsity)?;
            let (trained, accuracy) = train(&pruned, train_set, eval_set, &cfg.train, Some(&mask))?;
            on_trial(&Trial {
                sparsity,
                accuracy,
                accepted: accuracy >= initial_accuracy - cfg.tolerated_acc_loss,
            });
            Ok(((trained, mask), accuracy))
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::tensor::TensorF32;

    fn one_layer(weights: Vec<f32>) -> ModelGraph {
        let n = weights.len();
        let layers = vec![LayerSpec::Flatten, LayerSpec::linear(n, 1)];
        ModelGraph::new(
            [1, 1, n],
            layers,
            vec![TensorF32::new(vec![1, n], weights).unwrap()],
            vec![vec![0.3]],
        )
        .unwrap()
    }

    #[test]
    fn prunes_smallest_magnitudes() {
        let m = one_layer(vec![0.1, -0.5, 0.2, 0.9]);
        let (p, mask) = prune_level(&m, 0.5).unwrap();
        assert_eq!(p.weights()[0].data(), &[0.0, -0.5, 0.0, 0.9]);
        assert_eq!(mask.layers()[0], vec![false, true, false, true]);
        assert_eq!(p.biases()[0], vec![0.3]);
    }

    #[test]
    fn zero_sparsity_is_identity() {
        let m = one_layer(vec![0.1, -0.5, 0.2, 0.9]);
        let (p, mask) = prune_level(&m, 0.0).unwrap();
        assert_eq!(p, m);
        assert_eq!(mask.kept(), 4);
    }

    #[test]
    fn ties_keep_earlier_index() {
        let m = one_layer(vec![0.2, -0.2, 0.2, 0.9]);
        let (p, _) = prune_level(&m, 0.5).unwrap();
        assert_eq!(p.weights()[0].data(), &[0.2, 0.0, 0.0, 0.9]);
    }

    #[test]
    fn rejects_full_sparsity() {
        let m = one_layer(vec![1.0]);
        assert!(prune_level(&m, 1.0).is_err());
    }

    #[test]
    fn hand_simulated_trajectory() {
        // search against "pass iff sparsity <= 0.6" with step 1/32:
        // 0.5 pass -> 0.75 fail -> 0.625 fail -> 0.5625 pass, then step == 1/32 stops.
        let out = search_trajectory((), 0.9, 0.0, 1.0 / 32.0, |s| Ok(((), if s <= 0.6 { 0.9 } else { 0.0 }))).unwrap();
        let seq: Vec<(f64, bool)> = out.trials.iter().map(|t| (t.sparsity, t.accepted)).collect();
        assert_eq!(seq, vec![(0.5, true), (0.75, false), (0.625, false), (0.5625, true)]);
        assert_eq!(out.best_sparsity, 0.5625);
        assert_eq!(out.trials.len(), expected_trials(1.0 / 32.0));
    }

    #[test]
    fn all_failing_returns_original() {
        let out = search_trajectory("original", 0.9, 0.01, 1.0 / 64.0, |_| Ok(("pruned", 0.1))).unwrap();
        assert_eq!(out.best, "original");
        assert_eq!(out.best_sparsity, 0.0);
        assert_eq!(out.trials.len(), 5);
    }

    #[test]
    fn trial_counts() {
        assert_eq!(expected_trials(1.0 / 8.0), 2);
        assert_eq!(expected_trials(1.0 / 32.0), 4);
        assert_eq!(expected_trials(1.0 / 64.0), 5);
        assert_eq!(expected_trials(0.1), 3);
    }

    #[test]
    fn config_bounds() {
        let mut cfg = PruneSearchConfig {
            tolerated_acc_loss: 0.01,
            min_search_step: 0.5,
            train: TrainConfig::default(),
        };
        assert!(cfg.validate().is_err());
        cfg.min_search_step = 1.0 / 64.0;
        assert!(cfg.validate().is_ok());
        cfg.tolerated_acc_loss = 1.0;
        assert!(cfg.validate().is_err());
    }
}
