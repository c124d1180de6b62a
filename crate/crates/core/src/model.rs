//! Tensor containers and the canonical flat parameter order.
//!
//! A container is an ordered list of named f32 tensors packed back to back in
//! one buffer. Flattening concatenates tensors in manifest order, row-major
//! within each tensor, which is exactly the buffer order.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::keying::Seed;
use crate::math;

/// Element type of every tensor. Only `f32` exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    /// IEEE-754 binary32, little-endian on disk.
    F32,
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    /// Unique tensor name.
    pub name: String,
    /// Dimensions, outermost first.
    pub shape: Vec<usize>,
    /// Element type.
    pub dtype: Dtype,
    /// Byte offset into the data blob.
    pub offset: usize,
    /// Byte length in the data blob.
    pub byte_length: usize,
}

impl TensorInfo {
    /// Number of scalars.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn range(&self) -> core::ops::Range<usize> {
        self.offset / 4..(self.offset + self.byte_length) / 4
    }
}

/// The ordered tensor list of a container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Tensors in flattening order.
    pub tensors: Vec<TensorInfo>,
}

impl Manifest {
    /// Lays out tensors back to back from `(name, shape)` pairs.
    pub fn packed<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<usize>)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let tensors = entries
            .into_iter()
            .map(|(name, shape)| {
                let byte_length = 4 * shape.iter().product::<usize>();
                let info = TensorInfo {
                    name: name.into(),
                    shape,
                    dtype: Dtype::F32,
                    offset,
                    byte_length,
                };
                offset += byte_length;
                info
            })
            .collect();
        Manifest { tensors }
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(TensorInfo::numel).sum()
    }

    /// Checks names, sizes, alignment and that tensors tile `blob_bytes`.
    pub fn validate(&self, blob_bytes: usize) -> Result<()> {
        let mut names = BTreeSet::new();
        let mut end = 0usize;
        for t in &self.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Format(format!("duplicate tensor name {:?}", t.name)));
            }
            if t.byte_length != 4 * t.numel() {
                return Err(Error::Format(format!(
                    "tensor {:?}: byte_length {} does not match shape {:?}",
                    t.name, t.byte_length, t.shape
                )));
            }
            if t.offset % 4 != 0 {
                return Err(Error::Format(format!("tensor {:?} is not 4-byte aligned", t.name)));
            }
            if t.offset < end {
                return Err(Error::Format(format!(
                    "tensor {:?} overlaps or precedes the previous tensor",
                    t.name
                )));
            }
            end = t.offset + t.byte_length;
        }
        let total = 4 * self.numel();
        if total != blob_bytes || end != blob_bytes {
            return Err(Error::Format(format!(
                "manifest describes {total} bytes ending at {end}, blob has {blob_bytes}"
            )));
        }
        Ok(())
    }
}

/// A set of named f32 tensors sharing one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    manifest: Manifest,
    data: Vec<f32>,
}

impl TensorContainer {
    /// Wraps a manifest and its data after validating the layout.
    pub fn new(manifest: Manifest, data: Vec<f32>) -> Result<Self> {
        manifest.validate(4 * data.len())?;
        Ok(TensorContainer { manifest, data })
    }

    /// Packs `(name, shape, values)` triples into a container.
    pub fn from_tensors<I, S>(tensors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<usize>, Vec<f32>)>,
        S: Into<String>,
    {
        let mut entries = Vec::new();
        let mut data = Vec::new();
        for (name, shape, values) in tensors {
            let name = name.into();
            if values.len() != shape.iter().product::<usize>() {
                return Err(Error::Format(format!(
                    "tensor {name:?}: {} values for shape {shape:?}",
                    values.len()
                )));
            }
            data.extend_from_slice(&values);
            entries.push((name, shape));
        }
        Self::new(Manifest::packed(entries), data)
    }

    /// The tensor list.
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// All scalars in flattening order.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.manifest.tensors.len()
    }

    /// True when the container holds no tensors.
    pub fn is_empty(&self) -> bool {
        self.manifest.tensors.is_empty()
    }

    /// Scalars of tensor `i`.
    pub fn tensor(&self, i: usize) -> &[f32] {
        &self.data[self.manifest.tensors[i].range()]
    }

    /// Mutable scalars of tensor `i`.
    pub fn tensor_mut(&mut self, i: usize) -> &mut [f32] {
        let range = self.manifest.tensors[i].range();
        &mut self.data[range]
    }

    /// Index of the tensor called `name`.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.manifest.tensors.iter().position(|t| t.name == name)
    }

    /// Canonical flat view of every parameter.
    pub fn flatten(&self) -> ParameterVector {
        ParameterVector::new(self.data.clone())
    }

    /// Rebuilds a container from a flat vector laid out by `manifest`.
    pub fn unflatten(vector: &ParameterVector, manifest: &Manifest) -> Result<Self> {
        Self::new(manifest.clone(), vector.as_slice().to_vec())
    }

    /// Consumes the container, returning manifest and data.
    pub fn into_parts(self) -> (Manifest, Vec<f32>) {
        (self.manifest, self.data)
    }
}

/// A flattened model: the substrate for marking and the target of attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f32>,
    provenance: [u8; 32],
}

impl ParameterVector {
    /// Wraps `values`, recording their content hash as provenance.
    pub fn new(values: Vec<f32>) -> Self {
        let provenance = content_hash(&values);
        ParameterVector { values, provenance }
    }

    /// Number of parameters.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True for an empty vector.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The parameters.
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    /// Takes the parameters out.
    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// SHA-256 of the little-endian f32 encoding of the values. For a
    /// flattened container this is the hash of its data blob.
    pub fn provenance(&self) -> &[u8; 32] {
        &self.provenance
    }
}

fn content_hash(values: &[f32]) -> [u8; 32] {
    let mut h = Sha256::new();
    for chunk in values.chunks(1024) {
        let mut buf = [0u8; 4096];
        for (dst, v) in buf.chunks_exact_mut(4).zip(chunk) {
            dst.copy_from_slice(&v.to_le_bytes());
        }
        h.update(&buf[..4 * chunk.len()]);
    }
    h.finalize().into()
}

/// Total parameter count of a dense network with biases.
pub fn dense_param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Layer sizes of the 198,656-parameter reference network (784 inputs,
/// three hidden layers, 10 outputs).
pub const REFERENCE_LAYERS: [usize; 5] = [784, 192, 190, 56, 10];

/// A dense network with Gaussian weights and biases of std `1/√fan_in`.
///
/// Tensors are `layers.{i}.weight` with shape `[out, in]` followed by
/// `layers.{i}.bias` with shape `[out]`.
pub fn synth_model(layers: &[usize], init_seed: &Seed) -> Result<TensorContainer> {
    if layers.len() < 2 || layers.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "need at least two non-zero layer sizes, got {layers:?}"
        )));
    }
    let mut rng = init_seed.rng();
    let mut tensors = Vec::with_capacity(2 * (layers.len() - 1));
    for (i, w) in layers.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = 1.0 / math::sqrt(fan_in as f64);
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (std * z) as f32
                })
                .collect()
        };
        let weight = draw(fan_in * fan_out);
        let bias = draw(fan_out);
        tensors.push((format!("layers.{i}.weight"), alloc::vec![fan_out, fan_in], weight));
        tensors.push((format!("layers.{i}.bias"), alloc::vec![fan_out], bias));
    }
    TensorContainer::from_tensors(tensors)
}

/// One fully connected layer inside a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayer {
    /// Tensor index of the `[out, in]` weight matrix.
    pub weight: usize,
    /// Tensor index of the `[out]` bias, if present.
    pub bias: Option<usize>,
    /// Output neurons.
    pub outputs: usize,
    /// Inputs.
    pub inputs: usize,
}

/// Interprets a container as a chain of dense layers.
///
/// Every 2-D tensor is a weight matrix; a following 1-D tensor whose length is
/// the matrix's row count is its bias. Consecutive layers must chain.
pub fn dense_layers(container: &TensorContainer) -> Result<Vec<DenseLayer>> {
    let tensors = &container.manifest().tensors;
    let mut layers: Vec<DenseLayer> = Vec::new();
    let mut i = 0;
    while i < tensors.len() {
        let t = &tensors[i];
        if t.shape.len() != 2 {
            return Err(Error::Shuffle(format!(
                "tensor {:?} with shape {:?} is not a weight matrix",
                t.name, t.shape
            )));
        }
        let (outputs, inputs) = (t.shape[0], t.shape[1]);
        if let Some(prev) = layers.last() {
            if prev.outputs != inputs {
                return Err(Error::Shuffle(format!(
                    "tensor {:?} expects {inputs} inputs but the previous layer has {} outputs",
                    t.name, prev.outputs
                )));
            }
        }
        let bias = match tensors.get(i + 1) {
            Some(b) if b.shape.len() == 1 && b.shape[0] == outputs => Some(i + 1),
            Some(b) if b.shape.len() == 1 => {
                return Err(Error::Shuffle(format!(
                    "bias {:?} has {} entries, layer has {outputs} outputs",
                    b.name, b.shape[0]
                )))
            }
            _ => None,
        };
        layers.push(DenseLayer {
            weight: i,
            bias,
            outputs,
            inputs,
        });
        i += if bias.is_some() { 2 } else { 1 };
    }
    if layers.is_empty() {
        return Err(Error::Shuffle("container holds no layers".into()));
    }
    Ok(layers)
}

/// Evaluates the network on `input` with ReLU between layers and a linear
/// output layer.
pub fn forward(container: &TensorContainer, input: &[f64]) -> Result<Vec<f64>> {
    let layers = dense_layers(container)?;
    if input.len() != layers[0].inputs {
        return Err(Error::InvalidArgument(format!(
            "input has {} values, network expects {}",
            input.len(),
            layers[0].inputs
        )));
    }
    let mut x = input.to_vec();
    for (li, layer) in layers.iter().enumerate() {
        let w = container.tensor(layer.weight);
        let mut y: Vec<f64> = match layer.bias {
            Some(b) => container.tensor(b).iter().map(|&v| v as f64).collect(),
            None => alloc::vec![0.0; layer.outputs],
        };
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
            *yo += row.iter().zip(&x).map(|(&a, &b)| a as f64 * b).sum::<f64>();
        }
        if li + 1 < layers.len() {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        x = y;
    }
    Ok(x)
}
