//! Matrix archives: a JSON manifest next to a flat little-endian `f32`
//! payload (`<name>.manifest.json` + `<name>.f32bin`). Matrices are stored
//! row-major and concatenated.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARCHIVE_FORMAT: &str = "quivernet-matrix-archive/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format: String,
    /// `[rows, cols]` of every matrix.
    pub shape: [usize; 2],
    pub count: usize,
    /// Ground-truth class per matrix; empty when not recorded.
    #[serde(default)]
    pub class_labels: Vec<Option<usize>>,
    /// Predicted class per matrix (`None` for the tie region); empty when not recorded.
    #[serde(default)]
    pub predicted_labels: Vec<Option<usize>>,
    pub run_id: String,
    /// Free-form provenance: bias convention, ratio threshold, seeds.
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl ArchiveManifest {
    pub fn new(shape: [usize; 2], count: usize, run_id: impl Into<String>) -> Self {
        Self {
            format: ARCHIVE_FORMAT.to_string(),
            shape,
            count,
            class_labels: Vec::new(),
            predicted_labels: Vec::new(),
            run_id: run_id.into(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.count * self.shape[0] * self.shape[1] * 4
    }

    fn validate(&self) -> Result<()> {
        if self.format != ARCHIVE_FORMAT {
            return Err(Error::ManifestMismatch(format!("unknown format '{}'", self.format)));
        }
        for (name, v) in [("class_labels", &self.class_labels), ("predicted_labels", &self.predicted_labels)] {
            if !v.is_empty() && v.len() != self.count {
                return Err(Error::ManifestMismatch(format!(
                    "{name} has {} entries for {} matrices",
                    v.len(),
                    self.count
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixArchive {
    pub manifest: ArchiveManifest,
    pub matrices: Vec<Array2<f32>>,
}

pub fn encode_f32_le(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn decode_f32_le(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "payload of {} bytes is not a whole number of f32",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Serializes matrices and manifest to `(manifest JSON, payload bytes)`.
pub fn save_archive(matrices: &[Array2<f32>], manifest: &ArchiveManifest) -> Result<(String, Vec<u8>)> {
    manifest.validate()?;
    if matrices.len() != manifest.count {
        return Err(Error::ManifestMismatch(format!(
            "manifest count {} but {} matrices",
            manifest.count,
            matrices.len()
        )));
    }
    let [rows, cols] = manifest.shape;
    let mut payload = Vec::with_capacity(manifest.payload_len());
    for (i, m) in matrices.iter().enumerate() {
        if m.dim() != (rows, cols) {
            return Err(Error::ShapeMismatch(format!(
                "matrix {i} is {:?}, manifest says {rows}x{cols}",
                m.dim()
            )));
        }
        // iter() walks logical row-major order regardless of memory layout
        payload.extend(m.iter().flat_map(|v| v.to_le_bytes()));
    }
    Ok((serde_json::to_string_pretty(manifest)?, payload))
}

pub fn load_archive(manifest_text: &str, payload: &[u8]) -> Result<MatrixArchive> {
    let manifest: ArchiveManifest = serde_json::from_str(manifest_text)?;
    manifest.validate()?;
    if payload.len() != manifest.payload_len() {
        return Err(Error::ShapeMismatch(format!(
            "payload has {} bytes, manifest needs {}",
            payload.len(),
            manifest.payload_len()
        )));
    }
    let [rows, cols] = manifest.shape;
    let values = decode_f32_le(payload)?;
    let matrices = if rows * cols == 0 {
        vec![Array2::zeros((rows, cols)); manifest.count]
    } else {
        values
            .chunks_exact(rows * cols)
            .map(|c| Array2::from_shape_vec((rows, cols), c.to_vec()).expect("chunk size matches shape"))
            .collect()
    };
    Ok(MatrixArchive { manifest, matrices })
}

pub fn archive_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.manifest.json")),
        dir.join(format!("{name}.f32bin")),
    )
}

pub fn write_archive(dir: &Path, name: &str, matrices: &[Array2<f32>], manifest: &ArchiveManifest) -> Result<()> {
    let (text, payload) = save_archive(matrices, manifest)?;
    let (mpath, ppath) = archive_paths(dir, name);
    fs::create_dir_all(dir)?;
    fs::write(ppath, payload)?;
    fs::write(mpath, text)?;
    Ok(())
}

pub fn read_archive(dir: &Path, name: &str) -> Result<MatrixArchive> {
    let (mpath, ppath) = archive_paths(dir, name);
    load_archive(&fs::read_to_string(mpath)?, &fs::read(ppath)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_small_matrix() {
        let m = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.5);
        let mut manifest = ArchiveManifest::new([3, 4], 1, "t");
        manifest.class_labels = vec![Some(2)];
        manifest.predicted_labels = vec![None];
        let (text, payload) = save_archive(std::slice::from_ref(&m), &manifest).unwrap();
        assert_eq!(payload.len(), 48);
        let back = load_archive(&text, &payload).unwrap();
        assert_eq!(back.manifest, manifest);
        assert_eq!(back.matrices, vec![m]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let m = Array2::<f32>::ones((2, 2));
        let manifest = ArchiveManifest::new([2, 2], 2, "t");
        let (text, payload) = save_archive(&[m.clone(), m], &manifest).unwrap();
        let err = load_archive(&text, &payload[..payload.len() - 4]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn manifest_disagreements() {
        let m = Array2::<f32>::ones((2, 2));
        let manifest = ArchiveManifest::new([2, 2], 2, "t");
        assert!(matches!(
            save_archive(std::slice::from_ref(&m), &manifest),
            Err(Error::ManifestMismatch(_))
        ));
        let mut labelled = ArchiveManifest::new([2, 2], 1, "t");
        labelled.class_labels = vec![Some(0), Some(1)];
        assert!(matches!(
            save_archive(std::slice::from_ref(&m), &labelled),
            Err(Error::ManifestMismatch(_))
        ));
        let wrong_shape = ArchiveManifest::new([2, 3], 1, "t");
        assert!(matches!(save_archive(&[m], &wrong_shape), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = Array2::from_shape_fn((2, 3), |(i, j)| i as f32 - j as f32);
        let manifest = ArchiveManifest::new([2, 3], 1, "disk");
        write_archive(dir.path(), "x", std::slice::from_ref(&m), &manifest).unwrap();
        assert!(dir.path().join("x.f32bin").exists());
        assert_eq!(read_archive(dir.path(), "x").unwrap().matrices[0], m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bit_exact_roundtrip(
            rows in 1usize..5,
            cols in 1usize..6,
            bits in prop::collection::vec(any::<u32>(), 100 * 30),
        ) {
            // any finite f32 bit pattern, including subnormals and -0.0
            let vals: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).map(|v| if v.is_finite() { v } else { 1.5 }).collect();
            let matrices: Vec<Array2<f32>> = (0..100)
                .map(|i| Array2::from_shape_vec((rows, cols), vals[i * 30..i * 30 + rows * cols].to_vec()).unwrap())
                .collect();
            let manifest = ArchiveManifest::new([rows, cols], 100, "prop");
            let (text, payload) = save_archive(&matrices, &manifest).unwrap();
            let back = load_archive(&text, &payload).unwrap();
            for (a, b) in matrices.iter().zip(&back.matrices) {
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
