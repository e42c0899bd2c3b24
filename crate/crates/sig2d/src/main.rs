//! `sig2d` — texture-classification pipeline built on 2-d signature
//! features: synthesize a seeded texture dataset, extract features, train
//! and evaluate a random forest, benchmark the signature kernels, and
//! sweep feature configurations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sig2d::dataset::Split;
use sig2d::features::ExtractConfig;
use sig2d::field::DifferenceScheme;
use sig2d::forest::ForestParams;
use sig2d::pipeline::{
    self, load_manifest, run_bench, run_eval, run_extract, run_sweep, run_synth, run_train,
    SweepConfig, SynthConfig,
};

#[derive(Parser)]
#[command(name = "sig2d", version, about = "2-d signature features and texture classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic texture dataset: sheets plus a patch manifest.
    Synth(SynthArgs),
    /// Extract signature and PCA features into a CSV table.
    Extract(ExtractArgs),
    /// Train a random forest on the train rows of a feature CSV.
    Train(TrainArgs),
    /// Evaluate a model on the test rows of a feature CSV.
    Eval(EvalArgs),
    /// Time the prefix-sum signature path against the brute-force oracle.
    Bench(BenchArgs),
    /// Write an accuracy grid over feature configurations and seeds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DataDir {
    /// Dataset directory; defaults to $SIG2D_DATA_DIR, then ".".
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl DataDir {
    fn resolve(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os("SIG2D_DATA_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataDir,
    /// Number of texture classes (2..=16).
    #[arg(long, default_value_t = 8)]
    classes: usize,
    /// Side length of each square texture sheet in pixels.
    #[arg(long, default_value_t = 256)]
    sheet_size: usize,
    /// Training patches per class.
    #[arg(long, default_value_t = 10)]
    train: usize,
    /// Test patches per class.
    #[arg(long, default_value_t = 100)]
    test: usize,
    /// Side length of each sampled patch in pixels.
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write every patch as patches/{id}.ppm.
    #[arg(long)]
    write_patches: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataDir,
    /// Output CSV path; defaults to <data-dir>/features.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Difference scheme for the hat differential: forward or central.
    #[arg(long, default_value = "forward")]
    scheme: DifferenceScheme,
    /// Average signatures over the eight square symmetries of each patch.
    #[arg(long)]
    symmetrize: bool,
    /// Number of principal components projected from raw pixels.
    #[arg(long, default_value_t = 0)]
    pcs: usize,
    /// Also include the six first-order signature entries.
    #[arg(long)]
    first_order: bool,
    /// Chance-baseline mode: extract no features at all.
    #[arg(long, conflicts_with_all = ["symmetrize", "pcs", "first_order"])]
    baseline: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV produced by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Model output path; defaults to model.json next to the CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum tree depth; unlimited when omitted.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum samples in a leaf.
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Features tried per split; defaults to ceil(sqrt(F)).
    #[arg(long)]
    mtry: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Model JSON produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV produced by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Confusion-matrix CSV output; defaults to confusion.csv next to the model.
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Seed for the chance-baseline model's random guesses.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Image side lengths to time; the oracle runs only up to 64.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataDir,
    /// Output CSV path; defaults to <data-dir>/sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Principal-component counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 3])]
    pcs: Vec<usize>,
    /// Training patches kept per class; omit for the full training split.
    #[arg(long, value_delimiter = ',')]
    train_sizes: Vec<usize>,
    /// Forest seeds; each grid cell is run once per seed.
    #[arg(long, value_delimiter = ',', default_values_t = [42u64])]
    seeds: Vec<u64>,
    /// Difference scheme for the hat differential: forward or central.
    #[arg(long, default_value = "forward")]
    scheme: DifferenceScheme,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> sig2d::Result<ExitCode> {
    match cli.command {
        Command::Synth(args) => {
            let dir = args.data.resolve();
            let cfg = SynthConfig {
                n_classes: args.classes,
                sheet_size: args.sheet_size,
                n_train: args.train,
                n_test: args.test,
                patch_size: args.patch_size,
                seed: args.seed,
                write_patches: args.write_patches,
            };
            let manifest = run_synth(&dir, &cfg)?;
            println!("{:<16} {:>5} {:>5}  sheet", "class", "train", "test");
            for (i, name) in manifest.classes.iter().enumerate() {
                println!(
                    "{name:<16} {:>5} {:>5}  {}",
                    manifest.count(i, Split::Train),
                    manifest.count(i, Split::Test),
                    manifest.sheet_paths[i]
                );
            }
            println!(
                "{} patches ({} px) -> {}",
                manifest.entries.len(),
                cfg.patch_size,
                pipeline::manifest_path(&dir).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract(args) => {
            let dir = args.data.resolve();
            let out = args.out.unwrap_or_else(|| dir.join("features.csv"));
            let cfg = if args.baseline {
                ExtractConfig {
                    scheme: args.scheme,
                    include_second_order: false,
                    allow_empty: true,
                    ..ExtractConfig::default()
                }
            } else {
                ExtractConfig {
                    scheme: args.scheme,
                    symmetrize: args.symmetrize,
                    include_second_order: true,
                    include_first_order: args.first_order,
                    n_pcs: args.pcs,
                    allow_empty: false,
                }
            };
            let (table, _) = pipeline::with_pool(args.threads, || run_extract(&dir, &cfg, &out))??;
            println!(
                "{} rows x {} features -> {}",
                table.rows.len(),
                table.feature_names.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let out = args
                .out
                .unwrap_or_else(|| args.features.with_file_name("model.json"));
            let params = ForestParams {
                n_trees: args.trees,
                max_depth: args.max_depth,
                min_leaf: args.min_leaf,
                mtry: args.mtry,
                seed: args.seed,
            };
            let report =
                pipeline::with_pool(args.threads, || run_train(&args.features, &params, &out))??;
            if report.baseline {
                println!("chance-baseline model (no feature columns)");
            }
            println!(
                "train accuracy {:.4} on {} rows x {} features -> {}",
                report.train_accuracy,
                report.n_train,
                report.n_features,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval(args) => {
            let confusion = args
                .confusion
                .unwrap_or_else(|| args.model.with_file_name("confusion.csv"));
            let report =
                run_eval(&args.model, &args.features, Split::Test, args.seed, &confusion)?;
            println!(
                "test accuracy {:.4} over {} rows, {} classes; confusion -> {}",
                report.accuracy,
                report.n_rows,
                report.classes.len(),
                confusion.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(args) => {
            let report = run_bench(&args.sizes, args.seed)?;
            println!("size    fast ms     oracle ms   max rel deviation");
            for row in &report.rows {
                let oracle = row
                    .oracle_ms
                    .map_or("-".to_string(), |v| format!("{v:.3}"));
                let dev = row
                    .max_rel_deviation
                    .map_or("-".to_string(), |v| format!("{v:.3e}"));
                println!("{:<6} {:>10.3} {:>11} {:>15}", row.size, row.fast_ms, oracle, dev);
            }
            if report.ok {
                println!("fast path and oracle agree within 1e-9");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: fast path deviates from the oracle by more than 1e-9");
                Ok(ExitCode::from(1))
            }
        }
        Command::Sweep(args) => {
            let dir = args.data.resolve();
            let out = args.out.unwrap_or_else(|| dir.join("sweep.csv"));
            let cfg = SweepConfig {
                pcs: args.pcs,
                train_sizes: args.train_sizes,
                seeds: args.seeds,
                scheme: args.scheme,
                trees: args.trees,
            };
            let rows = pipeline::with_pool(args.threads, || run_sweep(&dir, &cfg, &out))??;
            let n_test: usize = {
                let manifest = load_manifest(&dir)?;
                (0..manifest.classes.len())
                    .map(|i| manifest.count(i, Split::Test))
                    .sum()
            };
            println!(
                "{} grid cells over {} test rows -> {}",
                rows.len(),
                n_test,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
