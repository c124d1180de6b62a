//! Model modifications an adversary might apply: pruning, additive noise and
//! neuron shuffling.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keying::{SecretKey, Seed};
use crate::model::{dense_layers, DenseLayer, ParameterVector, TensorContainer};
use crate::watermark::{MarkRecord, WatermarkContext};
use crate::math;

/// How pruned parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneStrategy {
    /// Uniformly at random.
    Random,
    /// Smallest absolute value first.
    Magnitude,
}

/// Pruning fractions evaluated by default.
pub const DEFAULT_PRUNE_FRACTIONS: [f64; 8] = [0.25, 0.50, 0.75, 0.90, 0.95, 0.99, 0.9975, 0.9999];

/// Number of parameters zeroed for `fraction` of `total`.
pub fn prune_count(total: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(alloc::format!(
            "prune fraction {fraction} outside [0, 1]"
        )));
    }
    Ok((math::floor(fraction * total as f64) as usize).min(total))
}

/// Zeroes `floor(fraction × N)` parameters. `seed` drives the random strategy;
/// magnitude pruning breaks ties by index.
pub fn prune(
    weights: &ParameterVector,
    fraction: f64,
    strategy: PruneStrategy,
    seed: &Seed,
) -> Result<ParameterVector> {
    let count = prune_count(weights.len(), fraction)?;
    let mut values = weights.as_slice().to_vec();
    let mut order: Vec<usize> = (0..values.len()).collect();
    match strategy {
        PruneStrategy::Random => {
            let mut rng = seed.rng();
            let (chosen, _) = order.partial_shuffle(&mut rng, count);
            for &i in chosen.iter() {
                values[i] = 0.0;
            }
        }
        PruneStrategy::Magnitude => {
            if count > 0 && count < order.len() {
                order.select_nth_unstable_by(count - 1, |&a, &b| {
                    values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b))
                });
            }
            for &i in &order[..count] {
                values[i] = 0.0;
            }
        }
    }
    Ok(ParameterVector::new(values))
}

/// Adds independent `N(0, sigma²)` noise to every parameter.
pub fn perturb(weights: &ParameterVector, sigma: f64, seed: &Seed) -> Result<ParameterVector> {
    let bad = || Error::InvalidArgument(alloc::format!("invalid noise sigma {sigma}"));
    if sigma.is_nan() || sigma < 0.0 {
        return Err(bad());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| bad())?;
    let mut rng = seed.rng();
    let values = weights
        .as_slice()
        .iter()
        .map(|&w| (w as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    Ok(ParameterVector::new(values))
}

/// One hidden-layer permutation per dense layer except the output layer.
///
/// `layers[l][j]` is the old index of the neuron now at position `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationMap {
    /// Per-layer gather permutations.
    pub layers: Vec<Vec<usize>>,
}

impl PermutationMap {
    /// The map that undoes `self`.
    pub fn inverse(&self) -> PermutationMap {
        PermutationMap {
            layers: self.layers.iter().map(|p| invert(p)).collect(),
        }
    }
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = alloc::vec![0; perm.len()];
    for (j, &i) in perm.iter().enumerate() {
        inv[i] = j;
    }
    inv
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = alloc::vec![false; perm.len()];
    perm.iter().all(|&i| i < seen.len() && !core::mem::replace(&mut seen[i], true))
}

/// Reorders the output neurons of `layers[l]` by `perm` (gather), moving the
/// bias entries and the next layer's input columns with them.
pub(crate) fn permute_layer(
    container: &mut TensorContainer,
    layers: &[DenseLayer],
    l: usize,
    perm: &[usize],
) {
    let layer = layers[l];
    let w = container.tensor_mut(layer.weight);
    let old = w.to_vec();
    for (j, &src) in perm.iter().enumerate() {
        w[j * layer.inputs..(j + 1) * layer.inputs]
            .copy_from_slice(&old[src * layer.inputs..(src + 1) * layer.inputs]);
    }
    if let Some(b) = layer.bias {
        let b = container.tensor_mut(b);
        let old = b.to_vec();
        for (j, &src) in perm.iter().enumerate() {
            b[j] = old[src];
        }
    }
    if let Some(next) = layers.get(l + 1) {
        let w = container.tensor_mut(next.weight);
        let old = w.to_vec();
        for r in 0..next.outputs {
            let row = r * next.inputs;
            for (j, &src) in perm.iter().enumerate() {
                w[row + j] = old[row + src];
            }
        }
    }
}

/// Applies `map` to a dense network. The function computed is unchanged.
pub fn apply_permutations(container: &TensorContainer, map: &PermutationMap) -> Result<TensorContainer> {
    let layers = dense_layers(container)?;
    if map.layers.len() + 1 != layers.len() {
        return Err(Error::Shuffle(alloc::format!(
            "map has {} layers, network has {} hidden layers",
            map.layers.len(),
            layers.len().saturating_sub(1)
        )));
    }
    let mut out = container.clone();
    for (l, perm) in map.layers.iter().enumerate() {
        if perm.len() != layers[l].outputs || !is_permutation(perm) {
            return Err(Error::Shuffle(alloc::format!(
                "layer {l}: not a permutation of {} neurons",
                layers[l].outputs
            )));
        }
        permute_layer(&mut out, &layers, l, perm);
    }
    Ok(out)
}

/// Shuffles every hidden layer with a random permutation drawn from `seed`.
pub fn shuffle_model(container: &TensorContainer, seed: &Seed) -> Result<(TensorContainer, PermutationMap)> {
    let layers = dense_layers(container)?;
    let mut rng = seed.rng();
    let map = PermutationMap {
        layers: layers[..layers.len().saturating_sub(1)]
            .iter()
            .map(|layer| {
                let mut p: Vec<usize> = (0..layer.outputs).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect(),
    };
    Ok((apply_permutations(container, &map)?, map))
}

/// A single attack, as carried on the command line or in a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackSpec {
    /// Zero a fraction of all parameters.
    Prune {
        /// Fraction in `[0, 1]`.
        fraction: f64,
        /// Selection rule.
        strategy: PruneStrategy,
    },
    /// Add Gaussian noise.
    Noise {
        /// Standard deviation.
        sigma: f64,
    },
    /// Permute hidden neurons.
    Shuffle,
}

/// Applies `spec` to a container. Shuffling also returns its permutation map.
pub fn apply_attack(
    container: &TensorContainer,
    spec: &AttackSpec,
    seed: &Seed,
) -> Result<(TensorContainer, Option<PermutationMap>)> {
    let rebuild = |v: ParameterVector| TensorContainer::unflatten(&v, container.manifest());
    match *spec {
        AttackSpec::Prune { fraction, strategy } => {
            Ok((rebuild(prune(&container.flatten(), fraction, strategy, seed)?)?, None))
        }
        AttackSpec::Noise { sigma } => Ok((rebuild(perturb(&container.flatten(), sigma, seed)?)?, None)),
        AttackSpec::Shuffle => {
            let (c, map) = shuffle_model(container, seed)?;
            Ok((c, Some(map)))
        }
    }
}

/// One row of a pruning sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruningRow {
    /// Fraction of parameters zeroed.
    pub fraction: f64,
    /// Verification accuracy after pruning.
    pub watermark_accuracy: f64,
    /// Preamble SNR after pruning.
    pub snr_db: f64,
}

/// Prunes `marked` at every fraction independently and verifies each result.
pub fn run_pruning_sweep(
    marked: &ParameterVector,
    record: &MarkRecord,
    key: &SecretKey,
    baseline: &ParameterVector,
    fractions: &[f64],
    strategy: PruneStrategy,
    seed: &Seed,
) -> Result<Vec<PruningRow>> {
    let ctx = WatermarkContext::new(key, record.payload.bit_length())?;
    fractions
        .iter()
        .map(|&fraction| {
            let pruned = prune(marked, fraction, strategy, seed)?;
            let report = ctx.verify(&pruned, record, baseline)?;
            Ok(PruningRow {
                fraction,
                watermark_accuracy: report.watermark_accuracy,
                snr_db: report.estimate.snr_db,
            })
        })
        .collect()
}
