//! Dataset loading and batch scheduling: folder ingestion with
//! deterministic ordering, preprocessing into `[-1,1]` tensors, optional
//! evaluation-only labels, and stateless epoch shuffling.

use crate::autograd::kernels;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};
use crate::scalar::Scalar;
use crate::vis;
use crate::Tensor;
use ndarray::IxDyn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub resolution: usize,
    pub center_crop: Option<usize>,
    pub label_file: Option<PathBuf>,
    pub split: Split,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            root: PathBuf::from("data"),
            resolution: 128,
            center_crop: None,
            label_file: None,
            split: Split::Train,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 32 != 0 {
            return Err(Error::Config(format!(
                "dataset resolution {} must be a positive multiple of 32",
                self.resolution
            )));
        }
        if let Some(crop) = self.center_crop {
            if crop < self.resolution {
                return Err(Error::Config(format!(
                    "center_crop {crop} must be at least the target resolution {}",
                    self.resolution
                )));
            }
        }
        Ok(())
    }

    /// The directory actually scanned: `root/<split>` when that exists,
    /// otherwise `root` itself.
    pub fn split_dir(&self) -> PathBuf {
        let sub = self.root.join(self.split.dir_name());
        if sub.is_dir() {
            sub
        } else {
            self.root.clone()
        }
    }
}

/// In-memory dataset: images as `[3, r, r]` tensors in deterministic
/// (sorted-path) order. Labels, when present, are evaluation-only — the
/// training batch API below never exposes them.
pub struct Dataset<S: Scalar> {
    pub images: Vec<Tensor<S>>,
    pub paths: Vec<PathBuf>,
    pub labels: Option<Vec<usize>>,
    pub resolution: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stack the given indices into a label-free `[B, 3, r, r]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor<S> {
        assert!(!indices.is_empty(), "cannot build an empty batch");
        let r = self.resolution;
        let mut out = Tensor::zeros(IxDyn(&[indices.len(), 3, r, r]));
        for (row, &idx) in indices.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), row)
                .assign(&self.images[idx]);
        }
        out
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }
}

/// Center-crop to a square of side `min(crop, h, w)`, then bilinear
/// resize (antialiased) to `res`×`res`.
pub fn preprocess<S: Scalar>(img: &Tensor<S>, center_crop: Option<usize>, res: usize) -> Tensor<S> {
    let sh = img.shape().to_vec();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let cropped = if let Some(crop) = center_crop {
        let side = crop.min(h).min(w);
        let y0 = (h - side) / 2;
        let x0 = (w - side) / 2;
        kernels::slice_nd(img, &[0, y0, x0], &[c, side, side])
    } else {
        img.clone()
    };
    let ch = cropped.shape()[1];
    let cw = cropped.shape()[2];
    let batched = kernels::reshape(&cropped, &[1, c, ch, cw]);
    kernels::reshape(&kernels::bilinear_resize(&batched, res, res, true), &[c, res, res])
}

fn is_image_path(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
    )
}

fn labels_from_subdirs(dir: &Path, paths: &[PathBuf]) -> Option<Vec<usize>> {
    let classes: Vec<Option<String>> = paths
        .iter()
        .map(|p| {
            p.strip_prefix(dir)
                .ok()
                .and_then(|rel| rel.parent())
                .filter(|parent| !parent.as_os_str().is_empty())
                .map(|parent| parent.to_string_lossy().into_owned())
        })
        .collect();
    if classes.iter().any(|c| c.is_none()) {
        return None; // flat (or mixed) layout → unlabeled
    }
    let mut ids = BTreeMap::new();
    for c in classes.iter().flatten() {
        let next = ids.len();
        ids.entry(c.clone()).or_insert(next);
    }
    Some(classes.into_iter().map(|c| ids[&c.unwrap()]).collect())
}

fn labels_from_file(file: &Path, paths: &[PathBuf]) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let mut by_name: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, label) = line.split_once(',').ok_or_else(|| {
            Error::Data(format!(
                "{}:{}: expected 'filename,label', got {line:?}",
                file.display(),
                lineno + 1
            ))
        })?;
        by_name.insert(name.trim().to_string(), label.trim().to_string());
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for label in by_name.values() {
        ids.entry(label).or_insert(0);
    }
    for (i, id) in ids.values_mut().enumerate() {
        *id = i;
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            by_name
                .get(&name)
                .map(|l| ids[l.as_str()])
                .ok_or_else(|| Error::Data(format!("no label for {name} in {}", file.display())))
        })
        .collect()
}

/// Load every decodable PNG/JPEG under the spec's split directory in
/// sorted-path order. Unreadable files are skipped with a warning; the
/// skip count is returned alongside the dataset.
pub fn load_dataset<S: Scalar>(spec: &DatasetSpec) -> Result<(Dataset<S>, usize)> {
    spec.validate()?;
    let dir = spec.split_dir();
    if !dir.is_dir() {
        return Err(Error::Data(format!("dataset directory {} does not exist", dir.display())));
    }
    let mut candidates: Vec<PathBuf> = walkdir::WalkDir::new(&dir)
        .follow_links(true)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && is_image_path(e.path()))
        .map(|e| e.into_path())
        .collect();
    candidates.sort();

    let mut images = Vec::new();
    let mut paths = Vec::new();
    let mut skipped = 0usize;
    for p in candidates {
        match vis::load_image::<S>(&p) {
            Ok(img) => {
                images.push(preprocess(&img, spec.center_crop, spec.resolution));
                paths.push(p);
            }
            Err(e) => {
                log::warn!("skipping unreadable image {}: {e}", p.display());
                skipped += 1;
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Data(format!(
            "no decodable images under {} ({skipped} unreadable)",
            dir.display()
        )));
    }
    let labels = match &spec.label_file {
        Some(f) => Some(labels_from_file(f, &paths)?),
        None => labels_from_subdirs(&dir, &paths),
    };
    Ok((Dataset { images, paths, labels, resolution: spec.resolution }, skipped))
}

/// Deterministic batch schedule: step `t` reads a contiguous slice of the
/// epoch's permutation, where epoch e uses the permutation drawn from
/// `stream(seed, Shuffle, e)`. Stateless in `t`, so resumed runs replay
/// the exact same batches. Within one epoch every index appears at most
/// once (exactly once when `n` is a multiple of `batch`; a short tail is
/// dropped otherwise).
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    assert!(batch > 0 && n >= batch, "need at least one full batch ({n} images, batch {batch})");
    let per_epoch = (n / batch) * batch;
    let epoch = (step * batch as u64) / per_epoch as u64;
    let offset = ((step * batch as u64) % per_epoch as u64) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, StreamTag::Shuffle, epoch));
    perm[offset..offset + batch].to_vec()
}
