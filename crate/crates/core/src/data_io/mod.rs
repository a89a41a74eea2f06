//! Dataset ingestion, sampling, matrix archives and report emission.

mod archive;
mod dataset;
mod idx;
mod report;
mod sample;
mod synthetic;

pub use archive::{
    archive_paths, decode_f32_le, encode_f32_le, load_archive, read_archive, save_archive, write_archive,
    ArchiveManifest, MatrixArchive, ARCHIVE_FORMAT,
};
pub use dataset::{load_mnist_dir, Dataset, Split, MNIST_FILES};
pub use idx::{parse_idx, serialize_idx, IdxTensor, TYPE_U8};
pub use report::{write_report, write_report_json, AttackRow, DetectionReport, TestRow};
pub use sample::{sample_per_class, sample_uniform, SampleSet};
pub use synthetic::gaussian_blobs;
