//! Labeled image sets.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: [usize; 3],
    images: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(sample_shape: [usize; 3], images: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        let per = sample_shape.iter().product::<usize>();
        if per == 0 || images.len() != per * labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels but {} image values of {per} each",
                labels.len(),
                images.len()
            )));
        }
        Ok(Self {
            sample_shape,
            images,
            labels,
        })
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            sample_shape: self.sample_shape,
            images: self.images[..n * self.sample_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.label(i));
        }
        Dataset {
            sample_shape: self.sample_shape,
            images,
            labels,
        }
    }
}

/// Training and held-out evaluation sets.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}
