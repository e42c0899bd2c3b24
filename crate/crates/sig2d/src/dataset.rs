//! Patch sampling from texture sheets and the dataset manifest that makes
//! a sampled train/test split reproducible: every patch is identified by
//! (sheet, top-left corner), so re-extracting from the sheets yields
//! bit-identical pixels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ImageField;
use crate::io::load_image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Index into `DatasetManifest::classes`.
    pub class: usize,
    /// Stable patch id, `{class}_{split}_{index}`; also the file stem when
    /// patches are materialized.
    pub patch: String,
    pub split: Split,
    /// Index into `DatasetManifest::sheet_paths`.
    pub sheet: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    /// One sheet file per class, relative to the dataset directory.
    pub sheet_paths: Vec<String>,
    pub patch_size: usize,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

/// Seeded uniform top-left positions for `n` size-by-size patches in a
/// rows-by-cols sheet. Row drawn before column for each patch.
pub fn sample_positions(
    rows: usize,
    cols: usize,
    n: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if rows < size || cols < size {
        return Err(Error::Param(format!(
            "sheet {rows}x{cols} is smaller than patch size {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.gen_range(0..=rows - size);
            let c = rng.gen_range(0..=cols - size);
            (r, c)
        })
        .collect())
}

/// `n` seeded patches of a sheet; overlaps are allowed.
pub fn sample_patches(
    sheet: &ImageField,
    n: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<ImageField>> {
    let positions = sample_positions(sheet.rows(), sheet.cols(), n, size, seed)?;
    positions
        .into_iter()
        .map(|(r, c)| sheet.patch(r, c, size))
        .collect()
}

/// Build a train/test manifest over per-class sheets. Each class uses its
/// own RNG stream (derived from the seed and class index); train positions
/// are drawn before test positions, and a test position that exactly
/// repeats a train position is redrawn.
pub fn build_manifest(
    sheets: &[(String, ImageField)],
    n_train: usize,
    n_test: usize,
    patch_size: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if sheets.len() < 2 {
        return Err(Error::Param(format!(
            "need at least 2 classes, got {}",
            sheets.len()
        )));
    }
    let mut classes = Vec::new();
    let mut sheet_paths = Vec::new();
    let mut entries = Vec::new();
    for (class_idx, (name, sheet)) in sheets.iter().enumerate() {
        if sheet.rows() < patch_size || sheet.cols() < patch_size {
            return Err(Error::Param(format!(
                "sheet for class {name:?} is {}x{}, smaller than patch size {patch_size}",
                sheet.rows(),
                sheet.cols()
            )));
        }
        classes.push(name.clone());
        sheet_paths.push(format!("sheets/{name}.ppm"));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class_idx as u64);
        let max_r = sheet.rows() - patch_size;
        let max_c = sheet.cols() - patch_size;
        let draw = |rng: &mut ChaCha8Rng| {
            let r = rng.gen_range(0..=max_r);
            let c = rng.gen_range(0..=max_c);
            (r, c)
        };

        let train_positions: Vec<(usize, usize)> = (0..n_train).map(|_| draw(&mut rng)).collect();
        let mut push = |split: Split, index: usize, (row, col): (usize, usize)| {
            entries.push(ManifestEntry {
                class: class_idx,
                patch: format!("{name}_{split}_{index}"),
                split,
                sheet: class_idx,
                row,
                col,
            });
        };
        for (i, &pos) in train_positions.iter().enumerate() {
            push(Split::Train, i, pos);
        }
        for i in 0..n_test {
            let mut pos = draw(&mut rng);
            let mut attempts = 0usize;
            while train_positions.contains(&pos) {
                attempts += 1;
                if attempts > 10_000 {
                    return Err(Error::Param(format!(
                        "cannot place distinct test patches for class {name:?}; \
                         sheet offers too few positions"
                    )));
                }
                pos = draw(&mut rng);
            }
            push(Split::Test, i, pos);
        }
    }
    Ok(DatasetManifest {
        classes,
        sheet_paths,
        patch_size,
        seed,
        entries,
    })
}

impl DatasetManifest {
    /// Check per-class split counts and the train/test position disjointness
    /// this module promises.
    pub fn validate(&self) -> Result<()> {
        for class_idx in 0..self.classes.len() {
            let of_split = move |s: Split| {
                self.entries
                    .iter()
                    .filter(move |e| e.class == class_idx && e.split == s)
            };
            let train: Vec<_> = of_split(Split::Train).map(|e| (e.sheet, e.row, e.col)).collect();
            for e in of_split(Split::Test) {
                if train.contains(&(e.sheet, e.row, e.col)) {
                    return Err(Error::Param(format!(
                        "patch {} duplicates a training position",
                        e.patch
                    )));
                }
            }
        }
        for e in &self.entries {
            if e.class >= self.classes.len() || e.sheet >= self.sheet_paths.len() {
                return Err(Error::Param(format!("entry {} out of range", e.patch)));
            }
        }
        Ok(())
    }

    pub fn count(&self, class_idx: usize, split: Split) -> usize {
        self.entries
            .iter()
            .filter(|e| e.class == class_idx && e.split == split)
            .count()
    }

    /// Load the sheets referenced by this manifest from `dir`.
    pub fn load_sheets(&self, dir: impl AsRef<Path>) -> Result<Vec<ImageField>> {
        self.sheet_paths
            .iter()
            .map(|p| load_image(dir.as_ref().join(p)))
            .collect()
    }

    /// Cut the patch of one entry out of its sheet.
    pub fn extract_patch(&self, sheets: &[ImageField], entry: &ManifestEntry) -> Result<ImageField> {
        sheets
            .get(entry.sheet)
            .ok_or_else(|| Error::Param(format!("entry {} references missing sheet", entry.patch)))?
            .patch(entry.row, entry.col, self.patch_size)
    }
}
