//! Single executable exposing the segmentation pipeline as subcommands.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
//! 4 numeric/domain error. All file outputs are written atomically
//! (temp name + rename), so failures leave no partial files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edgeseg::edgex::{extract_edges, oracle_boundary, EdgeVolume};
use edgeseg::error::{Error, Result};
use edgeseg::focal::ClassWeights;
use edgeseg::metrics::evaluate_patient;
use edgeseg::normalize::zscore_normalize;
use edgeseg::phantom::generate_cohort;
use edgeseg::report::{aggregate, append_records_csv, read_records_csv, write_summary_csv, Stat};
use edgeseg::targets::{
    argmax_labels, fuse_prediction, onehot_regions, onehot_regions_edges, predicted_edges,
};
use edgeseg::toytrain::{
    export_activation_slice, export_edge_overlay, extract_features, predict, train, FeatureVolume,
    ToyModel, TrainConfig,
};
use edgeseg::volgrid::{
    read_labels, read_volume, write_labels, write_u8_grid, write_volume, Volume,
};

#[derive(Parser)]
#[command(
    name = "edgeseg",
    version,
    about = "Edge-aware segmentation pipeline tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Mean,
    Median,
}

#[derive(Subcommand)]
enum Command {
    /// Z-score normalize one modality over its brain (nonzero) region.
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the ground-truth edge volume.
    Edges {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the 26-neighborhood boundary oracle instead of the
        /// convolution filter.
        #[arg(long)]
        oracle: bool,
    },
    /// Build a one-hot target stack (4-class, or 7-class with --edges).
    Onehot {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Edge volume; switches to the 7-channel edge+region stack.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Score a prediction against ground truth; appends one CSV row per
    /// region (header written when the file is created).
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Aggregate per-patient records into a mean or median summary.
    Aggregate {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        stat: StatArg,
    },
    /// Generate a synthetic phantom cohort.
    Phantom {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the toy voxel classifier on a cohort directory.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 4096)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        /// Per-epoch loss trace CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Predict one case and write the fused label volume.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        case_dir: PathBuf,
        #[arg(long)]
        pred_out: PathBuf,
        /// Write per-channel activation PGMs of the middle axial slice.
        #[arg(long)]
        activations_dir: Option<PathBuf>,
        /// Write an edge-overlay PPM of slice Z: `--edge-overlay <Z> <PATH>`.
        #[arg(long, num_args = 2, value_names = ["Z", "PATH"])]
        edge_overlay: Option<Vec<String>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("edgeseg: {err}");
            let code = match err {
                Error::Usage(_) => 2,
                Error::Io(_) | Error::Format(_) => 3,
                Error::Domain(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::usage(format!(
            "{what} {} is not a readable file",
            path.display()
        )));
    }
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::usage(format!(
            "{what} {} is not a directory",
            path.display()
        )));
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Normalize { input, out } => {
            require_file(&input, "input")?;
            let vol = read_volume(&input)?;
            let normalized = zscore_normalize(&vol)?;
            write_volume(&normalized, &out)
        }
        Command::Edges {
            labels,
            out,
            oracle,
        } => {
            require_file(&labels, "labels")?;
            let label_vol = read_labels(&labels)?;
            let edges = if oracle {
                oracle_boundary(&label_vol)
            } else {
                extract_edges(&label_vol)
            };
            write_u8_grid(edges.dims(), edges.spacing(), edges.data(), &out)
        }
        Command::Onehot { labels, out, edges } => {
            require_file(&labels, "labels")?;
            let label_vol = read_labels(&labels)?;
            let stack = match edges {
                Some(edge_path) => {
                    require_file(&edge_path, "edges")?;
                    let e = read_labels(&edge_path)?;
                    let e = EdgeVolume::new(e.dims(), e.spacing(), e.data().to_vec())?;
                    onehot_regions_edges(&label_vol, &e)?
                }
                None => onehot_regions(&label_vol),
            };
            stack.write_nifti(&out)
        }
        Command::Evaluate {
            pred,
            gt,
            subject,
            csv,
        } => {
            require_file(&pred, "pred")?;
            require_file(&gt, "gt")?;
            let pred_vol = read_labels(&pred)?;
            let gt_vol = read_labels(&gt)?;
            let records = evaluate_patient(&pred_vol, &gt_vol, &subject)?;
            append_records_csv(&csv, &records)
        }
        Command::Aggregate { csv, out, stat } => {
            require_file(&csv, "csv")?;
            let records = read_records_csv(&csv)?;
            let stat = match stat {
                StatArg::Mean => Stat::Mean,
                StatArg::Median => Stat::Median,
            };
            let table = aggregate(&records, stat)?;
            write_summary_csv(&table, &out)
        }
        Command::Phantom {
            seed,
            count,
            size,
            noise,
            out_dir,
        } => {
            generate_cohort(count, seed, size, noise, &out_dir)?;
            Ok(())
        }
        Command::Train {
            data_dir,
            classes,
            epochs,
            lr,
            batch,
            seed,
            model_out,
            trace_out,
        } => {
            require_dir(&data_dir, "data directory")?;
            if classes != 4 && classes != 7 {
                return Err(Error::usage(format!(
                    "--classes must be 4 or 7, got {classes}"
                )));
            }
            let case_dirs = discover_cases(&data_dir)?;
            let mut cases = Vec::with_capacity(case_dirs.len());
            for dir in &case_dirs {
                let (features, labels) = load_case(dir)?;
                let stack = if classes == 4 {
                    onehot_regions(&labels)
                } else {
                    let edges = extract_edges(&labels);
                    onehot_regions_edges(&labels, &edges)?
                };
                cases.push((features, stack));
            }
            let cfg = TrainConfig {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                seed,
                weights: ClassWeights::defaults_for(classes)?,
            };
            let outcome = train(&cases, &cfg)?;
            outcome.model.save(&model_out)?;
            if let Some(trace_path) = trace_out {
                let mut text = String::from("epoch,loss\n");
                for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
                    text.push_str(&format!("{epoch},{loss}\n"));
                }
                edgeseg::fsutil::write_atomic(&trace_path, text.as_bytes())?;
            }
            Ok(())
        }
        Command::Predict {
            model,
            case_dir,
            pred_out,
            activations_dir,
            edge_overlay,
        } => {
            require_file(&model, "model")?;
            require_dir(&case_dir, "case directory")?;
            let overlay = match &edge_overlay {
                Some(args) => {
                    let z: usize = args[0]
                        .parse()
                        .map_err(|_| Error::usage(format!("bad overlay slice {:?}", args[0])))?;
                    Some((z, PathBuf::from(&args[1])))
                }
                None => None,
            };
            let model = ToyModel::load(&model)?;
            let (features, _) = load_modalities(&case_dir)?;
            let probs = predict(&model, &features)?;
            let class_indices = argmax_labels(&probs);
            let fused = fuse_prediction(&class_indices)?;
            write_labels(&fused, &pred_out)?;

            if let Some(dir) = activations_dir {
                std::fs::create_dir_all(&dir)?;
                let z = probs.dims()[2] / 2;
                for channel in 0..probs.channels() {
                    let path = dir.join(format!("activation_c{channel}_z{z}.pgm"));
                    export_activation_slice(&probs, channel, z, &path)?;
                }
            }
            if let Some((z, path)) = overlay {
                let edges = if model.classes() == 7 {
                    predicted_edges(&class_indices)?
                } else {
                    extract_edges(&fused)
                };
                export_edge_overlay(&fused, &edges, z, &path)?;
            }
            Ok(())
        }
    }
}

/// Case dirs under a cohort root: subdirectories holding the four case
/// files, in name order.
fn discover_cases(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && case_files(&path).iter().all(|p| p.is_file()) {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::usage(format!(
            "no case directories (flair.nii/t1ce.nii/t2.nii/seg.nii) under {}",
            root.display()
        )));
    }
    Ok(dirs)
}

fn case_files(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("flair.nii"),
        dir.join("t1ce.nii"),
        dir.join("t2.nii"),
        dir.join("seg.nii"),
    ]
}

/// Normalized-modality features of one case (no labels required).
fn load_modalities(dir: &Path) -> Result<(FeatureVolume, [usize; 3])> {
    let [flair, t1ce, t2, _] = case_files(dir);
    for p in [&flair, &t1ce, &t2] {
        require_file(p, "modality")?;
    }
    let norm = |p: &Path| -> Result<Volume> { zscore_normalize(&read_volume(p)?) };
    let flair = norm(&flair)?;
    let t1ce = norm(&t1ce)?;
    let t2 = norm(&t2)?;
    let dims = flair.dims();
    let features = extract_features([&flair, &t1ce, &t2])?;
    Ok((features, dims))
}

/// Features plus ground truth of one training case.
fn load_case(dir: &Path) -> Result<(FeatureVolume, edgeseg::volgrid::LabelVolume)> {
    let (features, dims) = load_modalities(dir)?;
    let labels = read_labels(dir.join("seg.nii"))?;
    if labels.dims() != dims {
        return Err(Error::usage(format!(
            "labels in {} do not match modality dims",
            dir.display()
        )));
    }
    Ok((features, labels))
}
