//! Feature extraction over a dataset manifest, and the CSV feature table
//! that carries (index, label, split, values) rows between pipeline
//! stages. The header is the contract: training and evaluation refuse
//! tables whose names don't match the model.
//!
//! Floats are written in Rust's shortest round-trip form, so write -> read
//! -> write is byte-stable and values reload bit-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::field::{DifferenceScheme, ImageField, Window};
use crate::pca::{pca_fit, pca_transform, PcaModel};
use crate::sig::{signature_vector, SignatureKind, SIGNATURE_CHANNELS};
use crate::symmetry::symmetrized_signature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub scheme: DifferenceScheme,
    /// Average signatures over the eight D4 orientations.
    pub symmetrize: bool,
    pub include_second_order: bool,
    pub include_first_order: bool,
    pub n_pcs: usize,
    /// Permit an empty feature set (chance-baseline mode).
    pub allow_empty: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            scheme: DifferenceScheme::Forward,
            symmetrize: false,
            include_second_order: true,
            include_first_order: false,
            n_pcs: 0,
            allow_empty: false,
        }
    }
}

/// Column names for a configuration: second-order signature entries, then
/// first-order ones, then PCA projections. Symmetrized signature columns
/// carry a `.sym` suffix; PCA columns are 1-based.
pub fn feature_names(cfg: &ExtractConfig) -> Vec<String> {
    let suffix = if cfg.symmetrize { ".sym" } else { "" };
    let mut names = Vec::new();
    let push_kinds = |kinds: &[SignatureKind], names: &mut Vec<String>| {
        for kind in kinds {
            for ch in 0..SIGNATURE_CHANNELS {
                names.push(format!("{}.ch{ch}{suffix}", kind.feature_name()));
            }
        }
    };
    if cfg.include_second_order {
        push_kinds(&SignatureKind::SECOND_ORDER, &mut names);
    }
    if cfg.include_first_order {
        push_kinds(
            &[SignatureKind::First12, SignatureKind::FirstHat],
            &mut names,
        );
    }
    for j in 1..=cfg.n_pcs {
        names.push(format!("pca.{j}"));
    }
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Manifest index of the image.
    pub index: usize,
    pub label: String,
    pub split: Split,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,label,split");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{},{}", row.index, row.label, row.split);
            for v in &row.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FeatureTable> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let mut cols = header.split(',');
        for expected in ["index", "label", "split"] {
            if cols.next() != Some(expected) {
                return Err(Error::Parse(format!(
                    "feature CSV must start with index,label,split; got {header:?}"
                )));
            }
        }
        let feature_names: Vec<String> = cols.map(str::to_string).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let ctx = || format!("line {}", lineno + 2);
            let index: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad index at {}", ctx())))?;
            let label = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("missing label at {}", ctx())))?
                .to_string();
            let split: Split = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("missing split at {}", ctx())))?
                .parse()?;
            let values: Vec<f64> = fields
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad value {s:?} at {}", ctx())))
                })
                .collect::<Result<_>>()?;
            if values.len() != feature_names.len() {
                return Err(Error::Parse(format!(
                    "{} values for {} feature columns at {}",
                    values.len(),
                    feature_names.len(),
                    ctx()
                )));
            }
            rows.push(FeatureRow {
                index,
                label,
                split,
                values,
            });
        }
        Ok(FeatureTable {
            feature_names,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_csv(&text)
    }

    pub fn rows_of(&self, split: Split) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }
}

fn signature_features(patch: &ImageField, cfg: &ExtractConfig) -> Result<Vec<f64>> {
    if !cfg.include_second_order && !cfg.include_first_order {
        return Ok(Vec::new());
    }
    let v = if cfg.symmetrize {
        symmetrized_signature(patch, cfg.scheme)?
    } else {
        signature_vector(patch, Window::full_for_scheme(patch, cfg.scheme), cfg.scheme)?
    };
    let mut out = Vec::new();
    if cfg.include_second_order {
        for kind in SignatureKind::SECOND_ORDER {
            for ch in 0..SIGNATURE_CHANNELS {
                out.push(v.get(kind, ch));
            }
        }
    }
    if cfg.include_first_order {
        for kind in [SignatureKind::First12, SignatureKind::FirstHat] {
            for ch in 0..SIGNATURE_CHANNELS {
                out.push(v.get(kind, ch));
            }
        }
    }
    Ok(out)
}

/// Extract the feature table for a manifest. PCA, when requested, is fit
/// on the training rows only and then applied to every row; the returned
/// model allows the projection to be reused or persisted.
///
/// Rows come out in manifest order regardless of thread count.
pub fn extract_features(
    manifest: &DatasetManifest,
    sheets: &[ImageField],
    cfg: &ExtractConfig,
) -> Result<(FeatureTable, Option<PcaModel>)> {
    let names = feature_names(cfg);
    if names.is_empty() && !cfg.allow_empty {
        return Err(Error::Param(
            "configuration selects no features; enable signatures or PCA, \
             or run the chance baseline"
                .into(),
        ));
    }
    let patches: Vec<ImageField> = manifest
        .entries
        .par_iter()
        .map(|e| manifest.extract_patch(sheets, e))
        .collect::<Result<_>>()?;

    let sig_parts: Vec<Vec<f64>> = patches
        .par_iter()
        .map(|p| signature_features(p, cfg))
        .collect::<Result<_>>()?;

    let pca_model = if cfg.n_pcs > 0 {
        let train: Vec<ImageField> = manifest
            .entries
            .iter()
            .zip(&patches)
            .filter(|(e, _)| e.split == Split::Train)
            .map(|(_, p)| p.clone())
            .collect();
        let model = pca_fit(&train, cfg.n_pcs)?;
        if model.n_components() < cfg.n_pcs {
            return Err(Error::Param(format!(
                "training data rank supports only {} principal components, {} requested",
                model.n_components(),
                cfg.n_pcs
            )));
        }
        Some(model)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(manifest.entries.len());
    for (i, (entry, mut values)) in manifest.entries.iter().zip(sig_parts).enumerate() {
        if let Some(model) = &pca_model {
            values.extend(pca_transform(model, &patches[i])?);
        }
        rows.push(FeatureRow {
            index: i,
            label: manifest.classes[entry.class].clone(),
            split: entry.split,
            values,
        });
    }
    Ok((
        FeatureTable {
            feature_names: names,
            rows,
        },
        pca_model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_manifest;
    use crate::texture::synth_textures;

    fn small_dataset() -> (DatasetManifest, Vec<ImageField>) {
        let sheets = synth_textures(2, 48, 11).unwrap();
        let manifest = build_manifest(&sheets, 4, 3, 16, 11).unwrap();
        let fields = sheets.into_iter().map(|(_, f)| f).collect();
        (manifest, fields)
    }

    #[test]
    fn name_layout_matches_configuration() {
        let cfg = ExtractConfig {
            symmetrize: true,
            n_pcs: 3,
            ..ExtractConfig::default()
        };
        let names = feature_names(&cfg);
        assert_eq!(names.len(), 15);
        assert_eq!(names[0], "sig2.1122.ch0.sym");
        assert_eq!(names[11], "sig2.mixhat1.ch2.sym");
        assert_eq!(names[14], "pca.3");

        let full = ExtractConfig {
            include_first_order: true,
            n_pcs: 2,
            ..ExtractConfig::default()
        };
        let names = feature_names(&full);
        assert_eq!(names.len(), 20);
        assert_eq!(names[12], "sig1.12.ch0");
        assert_eq!(names[17], "sig1.hat.ch2");

        let empty = ExtractConfig {
            include_second_order: false,
            ..ExtractConfig::default()
        };
        assert!(feature_names(&empty).is_empty());
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let table = FeatureTable {
            feature_names: vec!["a".into(), "b".into()],
            rows: vec![
                FeatureRow {
                    index: 0,
                    label: "x".into(),
                    split: Split::Train,
                    values: vec![0.1, -3.5e17],
                },
                FeatureRow {
                    index: 1,
                    label: "y".into(),
                    split: Split::Test,
                    values: vec![1e-300, f64::MIN_POSITIVE],
                },
            ],
        };
        let csv = table.to_csv();
        let back = FeatureTable::from_csv(&csv).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.to_csv(), csv);
        for (a, b) in table.rows.iter().zip(&back.rows) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(FeatureTable::from_csv("").is_err());
        assert!(FeatureTable::from_csv("idx,label,split,a\n").is_err());
        assert!(FeatureTable::from_csv("index,label,split,a\n0,x,train,notanumber\n").is_err());
        assert!(FeatureTable::from_csv("index,label,split,a\n0,x,train,1.0,2.0\n").is_err());
        assert!(FeatureTable::from_csv("index,label,split,a\n0,x,validation,1.0\n").is_err());
    }

    #[test]
    fn extraction_rows_follow_manifest_order() {
        let (manifest, sheets) = small_dataset();
        let cfg = ExtractConfig::default();
        let (table, pca) = extract_features(&manifest, &sheets, &cfg).unwrap();
        assert!(pca.is_none());
        assert_eq!(table.rows.len(), manifest.entries.len());
        assert_eq!(table.feature_names.len(), 12);
        for (i, row) in table.rows.iter().enumerate() {
            assert_eq!(row.index, i);
            assert_eq!(row.label, manifest.classes[manifest.entries[i].class]);
            assert_eq!(row.split, manifest.entries[i].split);
            assert_eq!(row.values.len(), 12);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let (manifest, sheets) = small_dataset();
        let cfg = ExtractConfig {
            symmetrize: true,
            n_pcs: 2,
            ..ExtractConfig::default()
        };
        let (a, _) = extract_features(&manifest, &sheets, &cfg).unwrap();
        let (b, _) = extract_features(&manifest, &sheets, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn constant_dataset_has_zero_signatures() {
        let sheets: Vec<(String, ImageField)> = (0..2)
            .map(|i| {
                (
                    format!("flat{i}"),
                    ImageField::constant(32, 32, 3, 0.25 + 0.5 * i as f64).unwrap(),
                )
            })
            .collect();
        let manifest = build_manifest(&sheets, 2, 2, 8, 0).unwrap();
        let fields: Vec<ImageField> = sheets.into_iter().map(|(_, f)| f).collect();
        let cfg = ExtractConfig {
            include_first_order: true,
            ..ExtractConfig::default()
        };
        let (table, _) = extract_features(&manifest, &fields, &cfg).unwrap();
        for row in &table.rows {
            assert!(row.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pca_fits_on_train_rows_only() {
        let (manifest, sheets) = small_dataset();
        let cfg = ExtractConfig {
            n_pcs: 2,
            ..ExtractConfig::default()
        };
        let (table, model) = extract_features(&manifest, &sheets, &cfg).unwrap();
        let model = model.unwrap();

        // Refit on train + test; the mean alone must already differ, and
        // the projected feature values with it.
        let all_patches: Vec<ImageField> = manifest
            .entries
            .iter()
            .map(|e| manifest.extract_patch(&sheets, e).unwrap())
            .collect();
        let leaked = pca_fit(&all_patches, 2).unwrap();
        assert_ne!(model.mean, leaked.mean);
        let mut any_differs = false;
        for (i, patch) in all_patches.iter().enumerate() {
            let honest = &table.rows[i].values[12..];
            let with_leak = pca_transform(&leaked, patch).unwrap();
            if honest != with_leak.as_slice() {
                any_differs = true;
            }
        }
        assert!(any_differs);
    }

    #[test]
    fn empty_feature_set_needs_explicit_opt_in() {
        let (manifest, sheets) = small_dataset();
        let cfg = ExtractConfig {
            include_second_order: false,
            ..ExtractConfig::default()
        };
        assert!(extract_features(&manifest, &sheets, &cfg).is_err());
        let baseline = ExtractConfig {
            include_second_order: false,
            allow_empty: true,
            ..ExtractConfig::default()
        };
        let (table, pca) = extract_features(&manifest, &sheets, &baseline).unwrap();
        assert!(pca.is_none());
        assert!(table.feature_names.is_empty());
        assert_eq!(table.rows.len(), manifest.entries.len());
        assert!(table.rows.iter().all(|r| r.values.is_empty()));
    }
}
