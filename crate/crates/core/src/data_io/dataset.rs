use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::idx::{parse_idx, IdxTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images flattened to `d` pixels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Array2<f32>,
    labels: Vec<usize>,
    k: usize,
    split: Split,
}

impl Dataset {
    pub fn new(images: Array2<f32>, labels: Vec<usize>, k: usize, split: Split) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images but {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidConfig(format!("label {bad} >= class count {k}")));
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("pixel outside [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            k,
            split,
        })
    }

    /// Builds a dataset from an image tensor `(n, rows, cols)` and a label
    /// vector `(n)`. Pixels are scaled by 1/255.
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor, k: usize, split: Split) -> Result<Self> {
        if images.dims.len() < 2 || labels.dims.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "image dims {:?}, label dims {:?}",
                images.dims, labels.dims
            )));
        }
        let n = images.dims[0];
        let d = images.item_len();
        let pixels: Vec<f32> = images.data.iter().map(|&b| b as f32 / 255.0).collect();
        let images = Array2::from_shape_vec((n, d), pixels)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let labels = labels.data.iter().map(|&l| l as usize).collect();
        Self::new(images, labels, k, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &Array2<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> ArrayView1<'_, f32> {
        self.images.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Gathers the given rows into a batch matrix.
    pub fn gather(&self, indices: &[usize]) -> Array2<f32> {
        self.images.select(ndarray::Axis(0), indices)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
            split: self.split,
        }
    }

    /// Indices of each class, in ascending order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the four standard (uncompressed) MNIST-layout files from `dir`.
/// FashionMNIST uses the same names and layout.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let read = |name: &str| -> Result<IdxTensor> { parse_idx(&fs::read(dir.join(name))?) };
    let train = Dataset::from_idx(&read(MNIST_FILES[0])?, &read(MNIST_FILES[1])?, 10, Split::Train)?;
    let test = Dataset::from_idx(&read(MNIST_FILES[2])?, &read(MNIST_FILES[3])?, 10, Split::Test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_pixels_and_checks_labels() {
        let images = IdxTensor::new(vec![2, 1, 2], vec![0, 255, 51, 102]).unwrap();
        let labels = IdxTensor::new(vec![2], vec![1, 0]).unwrap();
        let ds = Dataset::from_idx(&images, &labels, 2, Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.image(0).to_vec(), vec![0.0, 1.0]);
        assert!((ds.image(1)[0] - 0.2).abs() < 1e-7);

        let bad = IdxTensor::new(vec![2], vec![1, 2]).unwrap();
        assert!(Dataset::from_idx(&images, &bad, 2, Split::Test).is_err());
        let short = IdxTensor::new(vec![1], vec![1]).unwrap();
        assert!(Dataset::from_idx(&images, &short, 2, Split::Test).is_err());
    }
}
