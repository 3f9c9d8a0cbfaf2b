//! `nucleopipe`: nuclei segmentation and classification pipeline.
//!
//! Exit codes: 0 success, 2 missing/unreadable input or invalid flags,
//! 3 shape/format mismatch, 4 gt/pred pairing errors.

mod commands;
mod errors;
mod opts;

use clap::{Parser, Subcommand};
use opts::{FileDefaults, NetworkOpts, WatershedOpts};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "nucleopipe", version, about = "Bottom-up nuclei segmentation and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the three-head network on an RGB tile, writing semantic, edge,
    /// and class probability maps
    Infer {
        /// Input tile (binary PPM)
        #[arg(long)]
        image: PathBuf,
        /// Weight bundle (WBDL)
        #[arg(long)]
        weights: PathBuf,
        /// Output directory for semantic.fmap, edges.fmap, classes.fmap
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        net: NetworkOpts,
    },
    /// Marker-controlled watershed from semantic + edge maps to instances
    Instances {
        /// Semantic probability map (FMAP)
        #[arg(long)]
        semantic: PathBuf,
        /// Edge probability map (FMAP)
        #[arg(long)]
        edges: PathBuf,
        /// Output instance map (16-bit PGM)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        watershed: WatershedOpts,
    },
    /// Majority-vote classification of instances from the class map
    Classify {
        /// Instance map (16-bit PGM)
        #[arg(long)]
        instances: PathBuf,
        /// Class probability map (FMAP)
        #[arg(long)]
        classes: PathBuf,
        /// Per-instance records (CSV)
        #[arg(long, default_value = "instances.csv")]
        out_csv: PathBuf,
        /// Class-painted map (16-bit PGM)
        #[arg(long, default_value = "classmap.pgm")]
        out_map: PathBuf,
        /// Skip pixel grouping: emit the raw per-pixel argmax classes only
        #[arg(long)]
        no_grouping: bool,
    },
    /// Score predictions against ground truth (bPQ/mPQ CSVs)
    Evaluate {
        /// Directory of ground-truth maps: `<stem>.pgm` + `<stem>_classes.pgm`
        #[arg(long)]
        gt_dir: PathBuf,
        /// Directory of predictions with matching file names
        #[arg(long)]
        pred_dir: PathBuf,
        /// Output CSV: one row per pair plus an average row
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
        /// Also write a per-class PQ CSV to this path
        #[arg(long)]
        per_class: Option<PathBuf>,
        /// Average per-class PQ per image instead of aggregating counts
        /// over the dataset
        #[arg(long)]
        per_image_mpq: bool,
        /// Bound worker threads
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Full pipeline: infer, segment, classify, overlay
    Pipeline {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        net: NetworkOpts,
        #[command(flatten)]
        watershed: WatershedOpts,
        /// Skip pixel grouping (per-pixel classes only, no CSV)
        #[arg(long)]
        no_grouping: bool,
        /// Report unit class weights in the effective config
        #[arg(long)]
        equal_class_weights: bool,
    },
    /// Generate a deterministic synthetic scene with ground truth and
    /// oracle maps
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Scene spec as key=value text (height, width, count, radius_min,
        /// radius_max, overlap, mixture, seed)
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a weight bundle (seeded pseudo-random or all zeros)
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// All-zero bundle (the analytic fixture)
        #[arg(long)]
        zero: bool,
        #[command(flatten)]
        net: NetworkOpts,
    },
}

fn run(cli: Cli) -> Result<(), errors::CliError> {
    let defaults = FileDefaults::load()?;
    match cli.command {
        Command::Infer {
            image,
            weights,
            out_dir,
            net,
        } => commands::cmd_infer(&image, &weights, &out_dir, &net),
        Command::Instances {
            semantic,
            edges,
            out,
            watershed,
        } => commands::cmd_instances(&semantic, &edges, &out, &watershed, &defaults),
        Command::Classify {
            instances,
            classes,
            out_csv,
            out_map,
            no_grouping,
        } => commands::cmd_classify(&instances, &classes, &out_csv, &out_map, no_grouping),
        Command::Evaluate {
            gt_dir,
            pred_dir,
            out,
            per_class,
            per_image_mpq,
            jobs,
        } => commands::cmd_evaluate(
            &gt_dir,
            &pred_dir,
            &out,
            per_class.as_deref(),
            per_image_mpq,
            jobs,
        ),
        Command::Pipeline {
            image,
            weights,
            out_dir,
            net,
            watershed,
            no_grouping,
            equal_class_weights,
        } => commands::cmd_pipeline(
            &image,
            &weights,
            &out_dir,
            &net,
            &watershed,
            no_grouping,
            equal_class_weights,
            &defaults,
        ),
        Command::Synth { out_dir, spec, seed } => {
            commands::cmd_synth(&out_dir, spec.as_deref(), seed)
        }
        Command::InitWeights {
            out,
            seed,
            zero,
            net,
        } => commands::cmd_init_weights(&out, seed, zero, &net),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
