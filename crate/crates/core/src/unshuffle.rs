//! Undoing a hidden-neuron permutation by matching neurons against a
//! reference copy of the network.
//!
//! Each neuron is described by its incoming weights and bias. Layers are
//! processed input to output, so by the time layer `l` is matched, the input
//! columns it reads from have already been restored.

use alloc::vec;
use alloc::vec::Vec;

use crate::attacks::{permute_layer, PermutationMap};
use crate::error::{Error, Result};
use crate::keying::SecretKey;
use crate::math;
use crate::model::{dense_layers, DenseLayer, TensorContainer};
use crate::watermark::{MarkRecord, WatermarkContext};

/// A recovered match must have cosine similarity above this.
pub const MIN_SIMILARITY: f64 = 0.5;

/// Row-by-row cosine similarities. `a` and `b` hold `m` rows of `dim` values;
/// entry `[i * m + j]` compares `a` row `i` with `b` row `j`.
pub fn cosine_matrix(a: &[f64], b: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || a.len() != b.len() || !a.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument("row blocks differ in shape".into()));
    }
    let m = a.len() / dim;
    let norms = |x: &[f64]| -> Result<Vec<f64>> {
        x.chunks(dim)
            .enumerate()
            .map(|(i, r)| {
                let n = math::sqrt(r.iter().map(|v| v * v).sum());
                if n == 0.0 {
                    Err(Error::DegenerateNeuron { neuron: i })
                } else {
                    Ok(n)
                }
            })
            .collect()
    };
    let (na, nb) = (norms(a)?, norms(b)?);
    let mut out = vec![0.0; m * m];
    for (i, ra) in a.chunks(dim).enumerate() {
        for (j, rb) in b.chunks(dim).enumerate() {
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            out[i * m + j] = dot / (na[i] * nb[j]);
        }
    }
    Ok(out)
}

/// For each reference neuron `i`, the position `j` of its match among the
/// shuffled neurons, given the `m × m` similarity matrix.
///
/// Greedy row-wise argmax when that is already a bijection; otherwise an
/// optimal assignment. Fails if any chosen similarity is at most
/// [`MIN_SIMILARITY`].
pub fn recover_permutation(similarity: &[f64], m: usize) -> Result<Vec<usize>> {
    if similarity.len() != m * m {
        return Err(Error::InvalidArgument("similarity matrix is not square".into()));
    }
    let greedy: Vec<usize> = similarity
        .chunks(m.max(1))
        .take(m)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &s)| if s > best.1 { (j, s) } else { best })
                .0
        })
        .collect();
    let mut taken = vec![false; m];
    let bijective = greedy.iter().all(|&j| !core::mem::replace(&mut taken[j], true));
    let assignment = if bijective {
        greedy
    } else {
        let cost: Vec<f64> = similarity.iter().map(|s| -s).collect();
        hungarian(&cost, m)
    };
    if assignment
        .iter()
        .enumerate()
        .any(|(i, &j)| similarity[i * m + j].is_nan() || similarity[i * m + j] <= MIN_SIMILARITY)
    {
        return Err(Error::RecoveryFailed { layer: None });
    }
    Ok(assignment)
}

/// Minimum-cost assignment on an `n × n` cost matrix; returns the column for
/// each row. O(n³) shortest augmenting paths with potentials.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based arrays; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}

fn neuron_rows(c: &TensorContainer, layer: &DenseLayer) -> Vec<f64> {
    let w = c.tensor(layer.weight);
    let bias = layer.bias.map(|b| c.tensor(b));
    let dim = layer.inputs + usize::from(bias.is_some());
    let mut out = Vec::with_capacity(layer.outputs * dim);
    for r in 0..layer.outputs {
        out.extend(w[r * layer.inputs..(r + 1) * layer.inputs].iter().map(|&x| x as f64));
        if let Some(b) = bias {
            out.push(b[r] as f64);
        }
    }
    out
}

/// Restores the neuron order of `shuffled` to that of `reference`.
///
/// Returns the restored network and, per hidden layer, the shuffled position
/// of each reference neuron.
pub fn unshuffle_model(
    shuffled: &TensorContainer,
    reference: &TensorContainer,
) -> Result<(TensorContainer, PermutationMap)> {
    if shuffled.manifest() != reference.manifest() {
        return Err(Error::Shuffle("networks have different layouts".into()));
    }
    let layers = dense_layers(shuffled)?;
    let mut work = shuffled.clone();
    let mut recovered = Vec::new();
    for l in 0..layers.len().saturating_sub(1) {
        let layer = &layers[l];
        let dim = layer.inputs + usize::from(layer.bias.is_some());
        let sim = cosine_matrix(&neuron_rows(reference, layer), &neuron_rows(&work, layer), dim)?;
        let perm = recover_permutation(&sim, layer.outputs).map_err(|e| match e {
            Error::RecoveryFailed { .. } => Error::RecoveryFailed { layer: Some(l) },
            other => other,
        })?;
        permute_layer(&mut work, &layers, l, &perm);
        recovered.push(perm);
    }
    Ok((work, PermutationMap { layers: recovered }))
}

/// Unshuffles a marked network when only the baseline, record and key are
/// held: the marked reference is rebuilt by marking the baseline again.
pub fn unshuffle_marked(
    shuffled: &TensorContainer,
    baseline: &TensorContainer,
    record: &MarkRecord,
    key: &SecretKey,
) -> Result<(TensorContainer, PermutationMap)> {
    if key.key_id() != record.key_id {
        return Err(Error::InvalidArgument("key does not match the record".into()));
    }
    let base = baseline.flatten();
    if base.provenance() != &record.baseline_ref.hash {
        return Err(Error::BaselineMismatch);
    }
    let ctx = WatermarkContext::new(key, record.payload.bit_length())?;
    let (marked, _) = ctx.mark(&base, &record.payload, record.gamma, record.ratio)?;
    let reference = TensorContainer::unflatten(&marked, baseline.manifest())?;
    unshuffle_model(shuffled, &reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::shuffle_model;
    use crate::keying::Seed;
    use crate::model::synth_model;

    #[test]
    fn cosine_by_hand() {
        let a = [1.0, 0.0, 0.0, 2.0];
        let b = [0.0, 3.0, 1.0, 1.0];
        let c = cosine_matrix(&a, &b, 2).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(c.len(), 4);
        assert!((c[0] - 0.0).abs() < 1e-15);
        assert!((c[1] - r).abs() < 1e-12);
        assert!((c[2] - 1.0).abs() < 1e-15);
        assert!((c[3] - r).abs() < 1e-12);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let a = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(
            cosine_matrix(&a, &[1.0, 1.0, 1.0, 1.0], 2).unwrap_err(),
            Error::DegenerateNeuron { neuron: 1 }
        );
    }

    fn brute_assignment(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, i: usize, used: &mut Vec<bool>) -> f64 {
            if i == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i * n + j] + rec(cost, n, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, n, 0, &mut vec![false; n])
    }

    #[test]
    fn hungarian_is_optimal() {
        let mut state = 0x9e37_79b9u32;
        for n in 1..=7 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n)
                    .map(|_| {
                        state ^= state << 13;
                        state ^= state >> 17;
                        state ^= state << 5;
                        (state % 1000) as f64 / 100.0
                    })
                    .collect();
                let a = hungarian(&cost, n);
                let mut seen = vec![false; n];
                assert!(a.iter().all(|&j| !core::mem::replace(&mut seen[j], true)));
                let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
                assert!((total - brute_assignment(&cost, n)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn collisions_fall_back_to_assignment() {
        // both rows prefer column 0; the optimum gives row 1 column 1
        let sim = [0.99, 0.6, 0.98, 0.9];
        assert_eq!(recover_permutation(&sim, 2).unwrap(), vec![0, 1]);
        let weak = [0.99, 0.1, 0.2, 0.4];
        assert_eq!(
            recover_permutation(&weak, 2).unwrap_err(),
            Error::RecoveryFailed { layer: None }
        );
    }

    #[test]
    fn recovers_a_shuffle_exactly() {
        let reference = synth_model(&[20, 16, 12, 4], &Seed::from_u64(1)).unwrap();
        let (shuffled, map) = shuffle_model(&reference, &Seed::from_u64(2)).unwrap();
        let (restored, recovered) = unshuffle_model(&shuffled, &reference).unwrap();
        assert_eq!(restored, reference);
        assert_eq!(recovered, map.inverse());
    }

    #[test]
    fn unshuffles_a_marked_network_from_the_baseline() {
        use crate::watermark::{mark, WatermarkPayload};
        let key = SecretKey::from([5u8; 64]);
        let baseline = synth_model(&[784, 24, 16, 10], &Seed::from_u64(3)).unwrap();
        let payload = WatermarkPayload::new(b"ID".to_vec()).unwrap();
        let (marked, record) = mark(&baseline.flatten(), &key, &payload, 0.09, 1.0).unwrap();
        let marked = TensorContainer::unflatten(&marked, baseline.manifest()).unwrap();
        let (shuffled, _) = shuffle_model(&marked, &Seed::from_u64(8)).unwrap();
        let (restored, _) = unshuffle_marked(&shuffled, &baseline, &record, &key).unwrap();
        assert_eq!(restored, marked);
        let other = SecretKey::from([6u8; 64]);
        assert!(unshuffle_marked(&shuffled, &baseline, &record, &other).is_err());
        assert_eq!(
            unshuffle_marked(&shuffled, &marked, &record, &key).unwrap_err(),
            Error::BaselineMismatch
        );
    }

    #[test]
    fn unrelated_network_fails() {
        let a = synth_model(&[20, 16, 4], &Seed::from_u64(1)).unwrap();
        let b = synth_model(&[20, 16, 4], &Seed::from_u64(2)).unwrap();
        assert_eq!(
            unshuffle_model(&a, &b).unwrap_err(),
            Error::RecoveryFailed { layer: Some(0) }
        );
    }
}
