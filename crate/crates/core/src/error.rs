use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    // IDX parsing
    #[error("bad IDX magic: {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported IDX type code 0x{0:02x} (only 0x08 / u8 is supported)")]
    UnsupportedTypeCode(u8),
    #[error("truncated IDX payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("IDX file has {0} trailing bytes after the declared payload")]
    TrailingBytes(usize),

    // sampling
    #[error("class {class} has {available} members, {requested} requested")]
    InsufficientClassMembers {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("requested {requested} samples from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    // archives and shapes
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // networks
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },
    #[error("trace does not belong to this network: {0}")]
    TraceMismatch(String),
    #[error("bad layer range {start}..={end} for a network with {layers} layers")]
    BadLayerRange {
        start: usize,
        end: usize,
        layers: usize,
    },
    #[error("isomorphism scale for layer {layer}, neuron {neuron} is {value}; ReLU needs > 0")]
    NonPositiveScaleForReLU {
        layer: usize,
        neuron: usize,
        value: f64,
    },
    #[error("invalid isomorphism: {0}")]
    InvalidIsomorphism(String),

    // matrix space
    #[error("matrices lie in different regions ({0} vs {1})")]
    RegionMismatch(String, String),
    #[error("matrix lies in the tie region M0; no class is predicted")]
    UndefinedRegion,

    // detection
    #[error("class {class} has {count} samples; at least 2 are needed")]
    TooFewSamples { class: usize, count: usize },
    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    // registries / configuration
    #[error("unknown attack '{0}'")]
    UnknownAttack(String),
    #[error("unknown optimizer '{0}'")]
    UnknownOptimizer(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
