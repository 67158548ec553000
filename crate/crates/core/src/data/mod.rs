//! Labeled image sets: IDX files, synthetic generators and stratified splits.

mod idx;
mod split;
mod synth;

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx, write_idx_images, write_idx_labels,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::split;
pub use synth::{generate_synthetic, SynthTask, SynthTaskSpec};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Images `[N, H, W, C]` in `[0, 1]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
    split: String,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        class_names: Vec<String>,
        split: impl Into<String>,
    ) -> Result<Self> {
        images.expect_rank(4, "dataset images")?;
        if images.shape()[0] != labels.len() {
            return Err(Error::CountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Data(format!(
                "label {y} out of range for {} classes",
                class_names.len()
            )));
        }
        if !images.all_finite() {
            return Err(Error::Data("images contain non-finite pixels".into()));
        }
        Ok(Self {
            images,
            labels,
            class_names,
            split: split.into(),
        })
    }

    /// Class names `"0"`, `"1"`, ... for `n` classes.
    pub fn numbered_classes(n: usize) -> Vec<String> {
        (0..n).map(|c| c.to_string()).collect()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split_tag(&self) -> &str {
        &self.split
    }

    pub fn with_split_tag(mut self, tag: impl Into<String>) -> Self {
        self.split = tag.into();
        self
    }

    /// Replaces the class names; every label must stay in range.
    pub fn with_class_names(self, names: Vec<String>) -> Result<Self> {
        Self::new(self.images, self.labels, names, self.split)
    }

    /// Extends (never shrinks) the numbered class list to `n` classes.
    pub fn with_class_count(self, n: usize) -> Result<Self> {
        if n <= self.n_classes() {
            return Ok(self);
        }
        let mut names = self.class_names.clone();
        names.extend((self.n_classes()..n).map(|c| c.to_string()));
        self.with_class_names(names)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[H, W, C]`
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    fn pixels(&self) -> usize {
        self.images.len() / self.len().max(1)
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels();
        &self.images.data()[i * p..(i + 1) * p]
    }

    /// Stacks the selected samples into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return shape_err("cannot gather an empty batch");
        }
        let p = self.pixels();
        let mut data = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let [h, w, c] = self.image_shape();
        Ok((Tensor::new(vec![indices.len(), h, w, c], data)?, labels))
    }

    pub fn subset(&self, indices: &[usize], tag: impl Into<String>) -> Result<Self> {
        let (images, labels) = self.gather(indices)?;
        Self::new(images, labels, self.class_names.clone(), tag)
    }
}
