//! End-to-end pipeline stages behind the CLI subcommands: synthesize a
//! dataset, extract features, train, evaluate, benchmark, sweep. Each
//! stage reads and writes plain files (JSON, CSV, PPM) under a data
//! directory, so stages can be rerun and inspected independently.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::dataset::{build_manifest, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::features::{extract_features, ExtractConfig, FeatureRow, FeatureTable};
use crate::field::{DifferenceScheme, ImageField, Window};
use crate::forest::{train_forest, ForestModel, ForestParams};
use crate::io::save_ppm;
use crate::pca::{pca_fit, pca_transform, PcaModel};
use crate::sig::{brute_force_second, sig_second, signature_vector, SignatureKind};
use crate::texture::synth_textures;

pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Param(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn manifest_path(data_dir: &Path) -> PathBuf {
    data_dir.join("manifest.json")
}

pub fn load_manifest(data_dir: &Path) -> Result<DatasetManifest> {
    read_json(&manifest_path(data_dir))
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub sheet_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub patch_size: usize,
    pub seed: u64,
    /// Also materialize every patch as `patches/{id}.ppm`.
    pub write_patches: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 8,
            sheet_size: 256,
            n_train: 10,
            n_test: 100,
            patch_size: 64,
            seed: 42,
            write_patches: false,
        }
    }
}

/// Generate sheets, sample the split, and write `sheets/*.ppm` plus
/// `manifest.json` under `data_dir`.
pub fn run_synth(data_dir: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    let sheets = synth_textures(cfg.n_classes, cfg.sheet_size, cfg.seed)?;
    let manifest = build_manifest(&sheets, cfg.n_train, cfg.n_test, cfg.patch_size, cfg.seed)?;
    let sheet_dir = data_dir.join("sheets");
    fs::create_dir_all(&sheet_dir).map_err(|e| Error::io(&sheet_dir, e))?;
    for ((_, field), rel) in sheets.iter().zip(&manifest.sheet_paths) {
        save_ppm(field, data_dir.join(rel))?;
    }
    if cfg.write_patches {
        let patch_dir = data_dir.join("patches");
        fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
        let fields: Vec<ImageField> = sheets.iter().map(|(_, f)| f.clone()).collect();
        for entry in &manifest.entries {
            let patch = manifest.extract_patch(&fields, entry)?;
            save_ppm(&patch, patch_dir.join(format!("{}.ppm", entry.patch)))?;
        }
    }
    write_json(&manifest_path(data_dir), &manifest)?;
    Ok(manifest)
}

/// Extract features for the dataset under `data_dir`; writes the feature
/// CSV, `extract_meta.json`, and `pca.json` when PCA is active. Returns
/// the table for in-process use.
pub fn run_extract(
    data_dir: &Path,
    cfg: &ExtractConfig,
    out_csv: &Path,
) -> Result<(FeatureTable, Option<PcaModel>)> {
    let manifest = load_manifest(data_dir)?;
    let sheets = manifest.load_sheets(data_dir)?;
    let (table, pca) = extract_features(&manifest, &sheets, cfg)?;
    table.save(out_csv)?;
    let out_dir = out_csv.parent().unwrap_or(Path::new("."));
    write_json(&out_dir.join("extract_meta.json"), cfg)?;
    if let Some(model) = &pca {
        write_json(&out_dir.join("pca.json"), model)?;
    }
    Ok((table, pca))
}

/// On-disk classifier: either a trained forest or the chance baseline
/// (class drawn uniformly with the evaluation seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub baseline: bool,
    pub classes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forest: Option<ForestModel>,
}

impl ModelFile {
    pub fn feature_names(&self) -> &[String] {
        self.forest
            .as_ref()
            .map(|f| f.feature_names.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub n_train: usize,
    pub n_features: usize,
    pub baseline: bool,
}

fn split_features(rows: &[&FeatureRow]) -> (Vec<Vec<f64>>, Vec<String>) {
    let features = rows.iter().map(|r| r.values.clone()).collect();
    let labels = rows.iter().map(|r| r.label.clone()).collect();
    (features, labels)
}

fn train_model(table: &FeatureTable, params: &ForestParams) -> Result<(ModelFile, TrainReport)> {
    let train_rows: Vec<&FeatureRow> = table.rows_of(Split::Train).collect();
    if train_rows.is_empty() {
        return Err(Error::Param("feature table has no train rows".into()));
    }
    let (features, labels) = split_features(&train_rows);

    if table.feature_names.is_empty() {
        let mut classes: Vec<String> = labels.clone();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::DegenerateLabels(
                "baseline needs at least 2 classes".into(),
            ));
        }
        let model = ModelFile {
            baseline: true,
            classes,
            forest: None,
        };
        let report = TrainReport {
            train_accuracy: chance_accuracy(&model.classes, &train_rows, params.seed),
            n_train: train_rows.len(),
            n_features: 0,
            baseline: true,
        };
        return Ok((model, report));
    }

    let forest = train_forest(&features, &labels, &table.feature_names, params)?;
    let (pred, _) = forest.predict_batch(&features)?;
    let correct = pred
        .iter()
        .zip(&labels)
        .filter(|(p, l)| &forest.classes[**p] == *l)
        .count();
    let report = TrainReport {
        train_accuracy: correct as f64 / labels.len() as f64,
        n_train: labels.len(),
        n_features: table.feature_names.len(),
        baseline: false,
    };
    let model = ModelFile {
        baseline: false,
        classes: forest.classes.clone(),
        forest: Some(forest),
    };
    Ok((model, report))
}

/// Train on the CSV's train rows and write the model (and a small report)
/// next to it. An empty feature set produces the chance-baseline model.
pub fn run_train(
    features_csv: &Path,
    params: &ForestParams,
    model_out: &Path,
) -> Result<TrainReport> {
    let table = FeatureTable::load(features_csv)?;
    let (model, report) = train_model(&table, params)?;
    write_json(model_out, &model)?;
    let out_dir = model_out.parent().unwrap_or(Path::new("."));
    write_json(&out_dir.join("train_report.json"), &report)?;
    Ok(report)
}

fn chance_accuracy(classes: &[String], rows: &[&FeatureRow], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let correct = rows
        .iter()
        .filter(|r| classes[rng.gen_range(0..classes.len())] == r.label)
        .count();
    correct as f64 / rows.len().max(1) as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_rows: usize,
    pub classes: Vec<String>,
    /// Rows are true classes, columns predicted, in `classes` order.
    pub confusion: Vec<Vec<usize>>,
}

fn evaluate(
    model: &ModelFile,
    table: &FeatureTable,
    split: Split,
    eval_seed: u64,
) -> Result<EvalReport> {
    if table.feature_names != model.feature_names() {
        return Err(Error::FeatureMismatch(format!(
            "model was trained on columns {:?}, table has {:?}",
            model.feature_names(),
            table.feature_names
        )));
    }
    let rows: Vec<&FeatureRow> = table.rows_of(split).collect();
    if rows.is_empty() {
        return Err(Error::Param(format!("feature table has no {split} rows")));
    }
    let class_index = |label: &str| -> Result<usize> {
        model
            .classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Param(format!("label {label:?} unknown to the model")))
    };
    let predictions: Vec<usize> = match &model.forest {
        Some(forest) => {
            let (features, _) = split_features(&rows);
            forest.predict_batch(&features)?.0
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
            rows.iter()
                .map(|_| rng.gen_range(0..model.classes.len()))
                .collect()
        }
    };
    let k = model.classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (row, &pred) in rows.iter().zip(&predictions) {
        let truth = class_index(&row.label)?;
        confusion[truth][pred] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / rows.len() as f64,
        n_rows: rows.len(),
        classes: model.classes.clone(),
        confusion,
    })
}

fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("true_class");
    for c in &report.classes {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (c, row) in report.classes.iter().zip(&report.confusion) {
        out.push_str(c);
        for &n in row {
            out.push(',');
            out.push_str(&n.to_string());
        }
        out.push('\n');
    }
    out
}

/// Evaluate a model on one split of a feature CSV and write the confusion
/// matrix. `eval_seed` only drives the baseline model's random guesses.
pub fn run_eval(
    model_path: &Path,
    features_csv: &Path,
    split: Split,
    eval_seed: u64,
    confusion_out: &Path,
) -> Result<EvalReport> {
    let model: ModelFile = read_json(model_path)?;
    let table = FeatureTable::load(features_csv)?;
    let report = evaluate(&model, &table, split, eval_seed)?;
    fs::write(confusion_out, confusion_csv(&report)).map_err(|e| Error::io(confusion_out, e))?;
    let out_dir = confusion_out.parent().unwrap_or(Path::new("."));
    write_json(&out_dir.join("eval_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub fast_ms: f64,
    pub oracle_ms: Option<f64>,
    pub max_rel_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// False when any measured deviation exceeds 1e-9.
    pub ok: bool,
}

pub const BENCH_DEVIATION_LIMIT: f64 = 1e-9;

/// Seconds per call, best of three timed trials of at least 20 ms each.
fn time_per_call(mut f: impl FnMut()) -> f64 {
    f();
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t0 = Instant::now();
        let mut reps = 0u32;
        loop {
            f();
            reps += 1;
            if t0.elapsed().as_secs_f64() >= 0.02 {
                break;
            }
        }
        best = best.min(t0.elapsed().as_secs_f64() / reps as f64);
    }
    best
}

/// Time the prefix-sum signature path per size and, for sizes up to 64,
/// the quadratic oracle, checking their agreement along the way.
pub fn run_bench(sizes: &[usize], seed: u64) -> Result<BenchReport> {
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, &size) in sizes.iter().enumerate() {
        if size < 2 {
            return Err(Error::Param(format!("bench size {size} too small")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x = ImageField::from_fn(size, size, 3, |_, _, _| rng.gen_range(0.0..1.0))?;
        let w = Window::full(&x);
        let scheme = DifferenceScheme::Forward;

        let fast_s = time_per_call(|| {
            std::hint::black_box(signature_vector(&x, w, scheme).unwrap());
        });

        let (oracle_ms, max_rel_deviation) = if size <= 64 {
            let pairs = [(0usize, 0usize), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0)];
            let mut max_dev = 0.0f64;
            for kind in SignatureKind::SECOND_ORDER {
                for &(c1, c2) in &pairs {
                    let fast = sig_second(&x, kind, c1, c2, w, scheme)?;
                    let oracle = brute_force_second(&x, kind, c1, c2, w, scheme)?;
                    let dev = (fast - oracle).abs() / (1.0 + oracle.abs());
                    max_dev = max_dev.max(dev);
                }
            }
            if max_dev > BENCH_DEVIATION_LIMIT {
                ok = false;
            }
            // Oracle timing covers the four second-order kinds on one
            // channel pair; fast_ms covers the full 18-entry vector, so
            // the reported ratio understates the true slowdown.
            let oracle_s = time_per_call(|| {
                for kind in SignatureKind::SECOND_ORDER {
                    std::hint::black_box(
                        brute_force_second(&x, kind, 0, 0, w, scheme).unwrap(),
                    );
                }
            });
            (Some(oracle_s * 1000.0), Some(max_dev))
        } else {
            (None, None)
        };
        rows.push(BenchRow {
            size,
            fast_ms: fast_s * 1000.0,
            oracle_ms,
            max_rel_deviation,
        });
    }
    Ok(BenchReport { rows, ok })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub signatures: bool,
    pub symmetrize: bool,
    pub n_pcs: usize,
    pub n_train: usize,
    pub seed: u64,
    pub accuracy: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("signatures,symmetrize,n_pcs,n_train,seed,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.signatures, r.symmetrize, r.n_pcs, r.n_train, r.seed, r.accuracy
        ));
    }
    out
}

pub struct SweepConfig {
    pub pcs: Vec<usize>,
    /// Training patches kept per class (first n in manifest order); empty
    /// means the full training split.
    pub train_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub scheme: DifferenceScheme,
    pub trees: usize,
}

fn subset_train<'t>(
    table_rows: &[&'t FeatureRow],
    manifest: &DatasetManifest,
    per_class: usize,
) -> Vec<&'t FeatureRow> {
    let mut taken = vec![0usize; manifest.classes.len()];
    let mut out = Vec::new();
    for row in table_rows {
        let class = manifest.entries[row.index].class;
        if taken[class] < per_class {
            taken[class] += 1;
            out.push(*row);
        }
    }
    out
}

/// Accuracy grid over (PCs) x (signatures on/off) x (symmetrize on/off)
/// x (training-subset size) x (seed). Signature features are extracted
/// once per symmetrize setting and reused; the PCA for each subset is fit
/// once at the largest component count and truncated, which matches a
/// direct refit bit for bit.
pub fn run_sweep(data_dir: &Path, cfg: &SweepConfig, out_csv: &Path) -> Result<Vec<SweepRow>> {
    let manifest = load_manifest(data_dir)?;
    let sheets = manifest.load_sheets(data_dir)?;
    let full_train = manifest.count(0, Split::Train);
    let train_sizes = if cfg.train_sizes.is_empty() {
        vec![full_train]
    } else {
        cfg.train_sizes.clone()
    };
    let max_pcs = cfg.pcs.iter().copied().max().unwrap_or(0);

    // Signature tables per symmetrize setting (12 columns each).
    let sig_tables: Vec<FeatureTable> = [false, true]
        .into_iter()
        .map(|symmetrize| {
            let ecfg = ExtractConfig {
                scheme: cfg.scheme,
                symmetrize,
                ..ExtractConfig::default()
            };
            extract_features(&manifest, &sheets, &ecfg).map(|(t, _)| t)
        })
        .collect::<Result<_>>()?;

    // Patches in manifest order, for PCA.
    let patches: Vec<ImageField> = manifest
        .entries
        .iter()
        .map(|e| manifest.extract_patch(&sheets, e))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &n_train in &train_sizes {
        if n_train == 0 || n_train > full_train {
            return Err(Error::Param(format!(
                "train subset size {n_train} out of range 1..={full_train}"
            )));
        }
        // PCA on the first n_train patches per class, at max_pcs, truncated
        // per grid cell below.
        let pca_full: Option<PcaModel> = if max_pcs > 0 {
            let base_rows: Vec<&FeatureRow> = sig_tables[0].rows_of(Split::Train).collect();
            let subset = subset_train(&base_rows, &manifest, n_train);
            let train_patches: Vec<ImageField> =
                subset.iter().map(|r| patches[r.index].clone()).collect();
            Some(pca_fit(&train_patches, max_pcs)?)
        } else {
            None
        };

        for &signatures in &[true, false] {
            let sym_options: &[bool] = if signatures { &[false, true] } else { &[false] };
            for &symmetrize in sym_options {
                for &n_pcs in &cfg.pcs {
                    for &seed in &cfg.seeds {
                        let base = &sig_tables[symmetrize as usize];
                        let mut names = Vec::new();
                        if signatures {
                            names.extend(base.feature_names.iter().cloned());
                        }
                        let pca_model = if n_pcs > 0 {
                            let m = pca_full
                                .as_ref()
                                .expect("max_pcs covers any requested pcs")
                                .truncated(n_pcs);
                            if m.n_components() < n_pcs {
                                return Err(Error::Param(format!(
                                    "rank supports only {} components, {} requested",
                                    m.n_components(),
                                    n_pcs
                                )));
                            }
                            for j in 1..=n_pcs {
                                names.push(format!("pca.{j}"));
                            }
                            Some(m)
                        } else {
                            None
                        };

                        let assemble = |row: &FeatureRow| -> Result<FeatureRow> {
                            let mut values =
                                if signatures { row.values.clone() } else { Vec::new() };
                            if let Some(m) = &pca_model {
                                values.extend(pca_transform(m, &patches[row.index])?);
                            }
                            Ok(FeatureRow {
                                index: row.index,
                                label: row.label.clone(),
                                split: row.split,
                                values,
                            })
                        };

                        let train_rows: Vec<&FeatureRow> =
                            base.rows_of(Split::Train).collect();
                        let subset = subset_train(&train_rows, &manifest, n_train);
                        let mut cell_rows: Vec<FeatureRow> =
                            subset.into_iter().map(assemble).collect::<Result<_>>()?;
                        for row in base.rows_of(Split::Test) {
                            cell_rows.push(assemble(row)?);
                        }
                        let cell_table = FeatureTable {
                            feature_names: names,
                            rows: cell_rows,
                        };
                        let params = ForestParams {
                            n_trees: cfg.trees,
                            seed,
                            ..ForestParams::default()
                        };
                        let (model, _) = train_model(&cell_table, &params)?;
                        let report = evaluate(&model, &cell_table, Split::Test, seed)?;
                        rows.push(SweepRow {
                            signatures,
                            symmetrize,
                            n_pcs,
                            n_train,
                            seed,
                            accuracy: report.accuracy,
                        });
                    }
                }
            }
        }
    }
    fs::write(out_csv, sweep_csv(&rows)).map_err(|e| Error::io(out_csv, e))?;
    Ok(rows)
}
