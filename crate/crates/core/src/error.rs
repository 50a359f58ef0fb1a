use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, found {found}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        found: String,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("non-finite weight in layer {layer}")]
    NonFiniteWeight { layer: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("layer index {index} out of range (network has {num_affine} affine layers)")]
    InvalidLayerIndex { index: usize, num_affine: usize },
    #[error("cotangent has length {found}, network output has length {expected}")]
    InvalidCotangent { expected: usize, found: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("network has no affine layers")]
    NoAffineLayers,

    #[error("pre-activation of affine layer {layer} is exactly zero")]
    ZeroPreActivation { layer: usize },
    #[error("network logits are exactly zero")]
    ZeroLogits,
    #[error("noise stability of affine layer {layer} is not positive ({value})")]
    NonPositiveBeta { layer: usize, value: f64 },
    #[error("example {example}: {source}")]
    AtExample {
        example: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient difference vanishes for every competing class")]
    DegenerateGradient,
    #[error("aggregated output margin is not positive ({0})")]
    NonPositiveMargin(f64),
    #[error("no correctly classified example to aggregate the output margin over")]
    NoCorrectlyClassified,
    #[error("spectral norm of affine layer {layer} is zero")]
    ZeroSpectralNorm { layer: usize },

    #[error("degenerate zoo: {0}")]
    DegenerateZoo(String),
    #[error("measure `{measure}` missing for models: {}", model_ids.join(", "))]
    MissingMeasure {
        measure: String,
        model_ids: Vec<String>,
    },
    #[error("hyperparameter `{key}` is not discrete")]
    NonDiscreteHyperparam { key: String },
    #[error("inconsistent hyperparameters: {0}")]
    InconsistentHyperparams(String),

    #[error("checksum mismatch: header expects {expected:#018x}, payload hashes to {found:#018x}")]
    ChecksumMismatch { expected: u64, found: u64 },
    #[error("unknown layer type `{0}`")]
    UnknownLayerType(String),
    #[error("format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_example(self, example: usize) -> Self {
        Error::AtExample {
            example,
            source: Box::new(self),
        }
    }
}
