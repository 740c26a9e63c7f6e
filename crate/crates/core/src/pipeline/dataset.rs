use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap};
use crate::taxonomy::{remap, Mapping};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePaths {
    pub stem: String,
    pub image: PathBuf,
    pub label: PathBuf,
}

/// Image/label pairs from one or more roots, in root order and then by
/// file stem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub samples: Vec<SamplePaths>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Indexes `<root>/images/*.{png,jpg,jpeg}` against `<root>/labels/*.png`.
pub fn load_dataset<P: AsRef<Path>>(roots: &[P]) -> Result<DatasetIndex> {
    let mut samples = Vec::new();
    for root in roots {
        let root = root.as_ref();
        let images = list_by_stem(&root.join("images"), &IMAGE_EXTENSIONS)?;
        let labels = list_by_stem(&root.join("labels"), &["png"])?;
        for stem in labels.keys() {
            if !images.contains_key(stem) {
                return Err(Error::Dataset(format!(
                    "{}: label `{stem}` has no matching image",
                    root.display()
                )));
            }
        }
        for (stem, image) in images {
            let label = labels.get(&stem).cloned().ok_or_else(|| {
                Error::Dataset(format!(
                    "{}: image `{stem}` has no matching label",
                    root.display()
                ))
            })?;
            samples.push(SamplePaths { stem, image, label });
        }
    }
    Ok(DatasetIndex { samples })
}

fn list_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Dataset(format!("non UTF-8 file name {}", path.display())))?
            .to_string();
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::Dataset(format!(
                "stem `{stem}` appears twice: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Random-access samples with 9-class labels.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn name(&self, index: usize) -> String;

    fn load(&self, index: usize) -> Result<(Image, LabelMap)>;
}

/// Reads samples from disk on access, remapping raw labels when a mapping
/// is set.
#[derive(Debug, Clone)]
pub struct DiskDataset {
    index: DatasetIndex,
    mapping: Option<Mapping>,
}

impl DiskDataset {
    pub fn new(index: DatasetIndex, mapping: Option<Mapping>) -> Self {
        DiskDataset { index, mapping }
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }
}

impl SampleSource for DiskDataset {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn name(&self, index: usize) -> String {
        self.index.samples[index].stem.clone()
    }

    fn load(&self, index: usize) -> Result<(Image, LabelMap)> {
        let s = &self.index.samples[index];
        let img = Image::load(&s.image)?;
        let mut labels = LabelMap::load(&s.label)?;
        if let Some(m) = &self.mapping {
            labels = remap(&labels, m)?;
        }
        if img.height() != labels.height() || img.width() != labels.width() {
            return Err(Error::Dataset(format!(
                "`{}`: image {}x{} vs label {}x{}",
                s.stem,
                img.height(),
                img.width(),
                labels.height(),
                labels.width()
            )));
        }
        Ok((img, labels))
    }
}

/// In-memory samples, mostly for tests and synthetic runs.
#[derive(Debug, Clone, Default)]
pub struct MemoryDataset {
    pub samples: Vec<(String, Image, LabelMap)>,
}

impl SampleSource for MemoryDataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn name(&self, index: usize) -> String {
        self.samples[index].0.clone()
    }

    fn load(&self, index: usize) -> Result<(Image, LabelMap)> {
        let (_, img, lbl) = &self.samples[index];
        Ok((img.clone(), lbl.clone()))
    }
}

/// Writes samples in the on-disk layout read by [`load_dataset`].
pub fn write_dataset(root: &Path, samples: &[(String, Image, LabelMap)]) -> Result<()> {
    for sub in ["images", "labels"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (stem, img, lbl) in samples {
        img.save_png(root.join("images").join(format!("{stem}.png")))?;
        lbl.save_png(root.join("labels").join(format!("{stem}.png")))?;
    }
    Ok(())
}
