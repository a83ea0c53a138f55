//! Labeled image collections.

use std::path::Path;

use crate::error::{Error, Result};
use crate::img::Image;

/// A collection of images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn empty(num_classes: usize) -> Self {
        LabeledDataset {
            images: Vec::new(),
            labels: Vec::new(),
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn push(&mut self, image: Image, label: usize) {
        debug_assert!(label < self.num_classes);
        self.images.push(image);
        self.labels.push(label);
    }

    /// Samples per class, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of every sample of class `c`, in dataset order.
    pub fn indices_of_class(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset containing `indices` in the given order (clones images).
    pub fn subset(&self, indices: &[usize]) -> Self {
        LabeledDataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Load a class-per-subdirectory layout via its `manifest.csv`
    /// (columns `path,label`, paths relative to `dir`).
    pub fn load_dir(dir: impl AsRef<Path>, num_classes: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = dir.join("manifest.csv");
        if !manifest.is_file() {
            return Err(Error::invalid(format!(
                "missing manifest: {}",
                manifest.display()
            )));
        }
        let mut reader = csv::Reader::from_path(&manifest)?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            let rel = record
                .get(0)
                .ok_or_else(|| Error::Format("manifest row missing path".into()))?;
            let label: usize = record
                .get(1)
                .ok_or_else(|| Error::Format("manifest row missing label".into()))?
                .parse()
                .map_err(|_| Error::Format(format!("bad label in manifest row for {rel}")))?;
            images.push(Image::load(dir.join(rel))?);
            labels.push(label);
        }
        LabeledDataset::new(images, labels, num_classes)
    }

    /// Write the class-per-subdirectory layout plus `manifest.csv`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for c in 0..self.num_classes {
            std::fs::create_dir_all(dir.join(c.to_string()))?;
        }
        let mut writer = csv::Writer::from_path(dir.join("manifest.csv"))?;
        writer.write_record(["path", "label"])?;
        let mut per_class = vec![0usize; self.num_classes];
        for (img, &label) in self.images.iter().zip(&self.labels) {
            let rel = format!("{label}/{}.png", per_class[label]);
            per_class[label] += 1;
            img.save(dir.join(&rel))?;
            writer.write_record([rel.as_str(), &label.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(label_seq: &[usize]) -> LabeledDataset {
        let images = label_seq
            .iter()
            .map(|&l| Image::constant(4, 4, (l * 50) as f32).unwrap())
            .collect();
        LabeledDataset::new(images, label_seq.to_vec(), 3).unwrap()
    }

    #[test]
    fn counts_and_class_indices() {
        let ds = tiny(&[0, 2, 2, 1, 2]);
        assert_eq!(ds.class_counts(), vec![1, 1, 3]);
        assert_eq!(ds.indices_of_class(2), vec![1, 2, 4]);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let images = vec![Image::constant(2, 2, 0.0).unwrap()];
        assert!(LabeledDataset::new(images, vec![3], 3).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny(&[0, 1, 2, 2]);
        ds.save_dir(dir.path()).unwrap();
        let back = LabeledDataset::load_dir(dir.path(), 3).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.class_counts(), ds.class_counts());
    }

    #[test]
    fn load_missing_manifest_is_invalid_argument() {
        let dir = tempfile::tempdir().unwrap();
        let err = LabeledDataset::load_dir(dir.path(), 3).unwrap_err();
        assert!(err.is_validation());
    }
}
