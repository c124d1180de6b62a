use alloc::string::String;
use core::fmt;

/// Errors produced by the watermarking pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A secret key was not exactly 64 bytes.
    KeyFormat {
        /// Length that was supplied.
        len: usize,
    },
    /// A spreading code of length zero was requested.
    EmptyCode,
    /// The selection ratio was outside `(0, 1]` or selected no parameters.
    Selection {
        /// Requested ratio.
        ratio: f64,
        /// Number of parameters available.
        total: usize,
    },
    /// No full-rank parity-check matrix was found within the retry budget.
    CodeConstruction {
        /// Message length that was requested.
        k: usize,
        /// Attempts made.
        attempts: usize,
    },
    /// Message length did not match the code dimension.
    Encode {
        /// Expected length.
        expected: usize,
        /// Supplied length.
        got: usize,
    },
    /// An embedding index was out of range or the job was malformed.
    Embed(String),
    /// Marked and baseline vectors differ in shape, or an index is invalid.
    Extract(String),
    /// The preamble correlation produced a non-positive gain.
    ChannelLost {
        /// The offending gain.
        gain: f64,
    },
    /// The selection is too small for the payload.
    Capacity {
        /// Selected parameter count.
        selected: usize,
        /// Required parameter count.
        required: usize,
    },
    /// The baseline supplied to verification is not the one recorded at mark time.
    BaselineMismatch,
    /// Two bit vectors of different length were compared.
    Accuracy {
        /// Length of the extracted vector.
        extracted: usize,
        /// Length of the original vector.
        original: usize,
    },
    /// A container is not a layered dense network of compatible shapes.
    Shuffle(String),
    /// A neuron with zero norm was found while computing cosine similarities.
    DegenerateNeuron {
        /// Index of the neuron.
        neuron: usize,
    },
    /// No bijection with every match above the similarity floor exists.
    RecoveryFailed {
        /// Hidden layer index that failed, when known.
        layer: Option<usize>,
    },
    /// Malformed tensor container or manifest.
    Format(String),
    /// Any other invalid argument.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::KeyFormat { len } => write!(f, "secret key must be 64 bytes, got {len}"),
            Error::EmptyCode => write!(f, "spreading code length must be at least 1"),
            Error::Selection { ratio, total } => {
                write!(f, "selection ratio {ratio} selects no parameters out of {total}")
            }
            Error::CodeConstruction { k, attempts } => write!(
                f,
                "no full-rank LDPC parity-check matrix for k = {k} after {attempts} attempts"
            ),
            Error::Encode { expected, got } => {
                write!(f, "message length {got} does not match code dimension {expected}")
            }
            Error::Embed(msg) => write!(f, "embedding failed: {msg}"),
            Error::Extract(msg) => write!(f, "extraction failed: {msg}"),
            Error::ChannelLost { gain } => write!(f, "preamble gain {gain} is not positive"),
            Error::Capacity { selected, required } => write!(
                f,
                "payload needs at least {required} selected parameters, only {selected} available"
            ),
            Error::BaselineMismatch => write!(f, "baseline does not match the mark record"),
            Error::Accuracy {
                extracted,
                original,
            } => write!(
                f,
                "cannot compare {extracted} extracted bits with {original} original bits"
            ),
            Error::Shuffle(msg) => write!(f, "shuffle failed: {msg}"),
            Error::DegenerateNeuron { neuron } => write!(f, "neuron {neuron} has zero norm"),
            Error::RecoveryFailed { layer: Some(l) } => {
                write!(f, "could not recover the neuron permutation of hidden layer {l}")
            }
            Error::RecoveryFailed { layer: None } => {
                write!(f, "could not recover a neuron permutation")
            }
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;
