//! Command implementations.

use crate::errors::CliError;
use crate::opts::{FileDefaults, NetworkOpts, WatershedOpts};
use nucleopipe::classify::{classify_instances, InstanceRecord};
use nucleopipe::instseg::segment_instances;
use nucleopipe::maps::{
    argmax_classes, io, ClassMap, LabelMap, RGBImage, CLASS_NAMES, NUM_CLASSES,
};
use nucleopipe::metrics::{mpq_dataset, pq, EvalPair, MpqMode};
use nucleopipe::network::{forward, init_weights, validate_bundle, zero_weights, WeightBundle};
use nucleopipe::synth::{
    edge_prob_from_labels, edges_from_labels, generate_scene, onehot_from_classes,
    semantic_from_labels, SceneSpec,
};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

/// Boundary tint per class for overlays, indexed by class id.
const OVERLAY_RGB: [[u8; 3]; NUM_CLASSES] = [
    [255, 255, 255],
    [255, 60, 60],
    [60, 220, 60],
    [80, 120, 255],
    [240, 220, 40],
    [230, 60, 230],
];

pub fn cmd_infer(
    image_path: &Path,
    weights_path: &Path,
    out_dir: &Path,
    net: &NetworkOpts,
) -> Result<(), CliError> {
    let image = io::read_rgb_image(image_path)?;
    let bundle = WeightBundle::read(weights_path)?;
    let cfg = net.config_for(image.height(), image.width())?;
    let (semantic, edges, classes) = forward(&image, &bundle, &cfg)?;
    fs::create_dir_all(out_dir)?;
    io::write_prob_map(out_dir.join("semantic.fmap"), &semantic)?;
    io::write_prob_map(out_dir.join("edges.fmap"), &edges)?;
    io::write_class_prob_map(out_dir.join("classes.fmap"), &classes)?;
    Ok(())
}

pub fn cmd_instances(
    semantic_path: &Path,
    edges_path: &Path,
    out_path: &Path,
    opts: &WatershedOpts,
    defaults: &FileDefaults,
) -> Result<(), CliError> {
    let semantic = io::read_prob_map(semantic_path)?;
    let edges = io::read_prob_map(edges_path)?;
    let cfg = opts.resolve(defaults)?;
    let labels = segment_instances(&semantic, &edges, &cfg)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    io::write_label_map(out_path, &labels)?;
    Ok(())
}

fn write_records_csv(path: &Path, records: &[InstanceRecord]) -> Result<(), CliError> {
    let mut text = InstanceRecord::csv_header();
    text.push('\n');
    for record in records {
        text.push_str(&record.to_csv_row());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_classify(
    instances_path: &Path,
    classes_path: &Path,
    out_csv: &Path,
    out_map: &Path,
    no_grouping: bool,
) -> Result<(), CliError> {
    let probs = io::read_class_prob_map(classes_path)?;
    let hard = argmax_classes(&probs);
    if no_grouping {
        // ablation: per-pixel classes only, no instance vote
        io::write_class_map(out_map, &hard)?;
        return Ok(());
    }
    let instances = io::read_label_map(instances_path)?;
    let (records, painted) = classify_instances(&instances, &hard)?;
    write_records_csv(out_csv, &records)?;
    io::write_class_map(out_map, &painted)?;
    Ok(())
}

/// One gt/pred pairing: instance maps named `<stem>.pgm`, class maps named
/// `<stem>_classes.pgm`.
struct PairPaths {
    stem: String,
    gt: PathBuf,
    pred: PathBuf,
    gt_classes: Option<PathBuf>,
    pred_classes: Option<PathBuf>,
}

fn collect_stems(dir: &Path) -> Result<(BTreeSet<String>, BTreeSet<String>), CliError> {
    let mut instances = BTreeSet::new();
    let mut classes = BTreeSet::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".pgm") else {
            continue;
        };
        if let Some(base) = stem.strip_suffix("_classes") {
            classes.insert(base.to_string());
        } else {
            instances.insert(stem.to_string());
        }
    }
    Ok((instances, classes))
}

fn pair_directories(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<PairPaths>, CliError> {
    let (gt_stems, gt_classes) = collect_stems(gt_dir)?;
    let (pred_stems, pred_classes) = collect_stems(pred_dir)?;

    let mut orphans = Vec::new();
    for stem in gt_stems.difference(&pred_stems) {
        orphans.push(format!("{} (no prediction)", gt_dir.join(format!("{stem}.pgm")).display()));
    }
    for stem in pred_stems.difference(&gt_stems) {
        orphans.push(format!(
            "{} (no ground truth)",
            pred_dir.join(format!("{stem}.pgm")).display()
        ));
    }
    for stem in &gt_stems {
        if pred_stems.contains(stem) && gt_classes.contains(stem) != pred_classes.contains(stem) {
            orphans.push(format!("{stem}_classes.pgm (present on one side only)"));
        }
    }
    if !orphans.is_empty() {
        return Err(CliError::Pairing(orphans));
    }

    Ok(gt_stems
        .iter()
        .map(|stem| {
            let classes = gt_classes.contains(stem);
            PairPaths {
                stem: stem.clone(),
                gt: gt_dir.join(format!("{stem}.pgm")),
                pred: pred_dir.join(format!("{stem}.pgm")),
                gt_classes: classes.then(|| gt_dir.join(format!("{stem}_classes.pgm"))),
                pred_classes: classes.then(|| pred_dir.join(format!("{stem}_classes.pgm"))),
            }
        })
        .collect())
}

struct LoadedPair {
    stem: String,
    gt: LabelMap,
    pred: LabelMap,
    gt_classes: Option<ClassMap>,
    pred_classes: Option<ClassMap>,
}

fn format_score(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn cmd_evaluate(
    gt_dir: &Path,
    pred_dir: &Path,
    out_csv: &Path,
    per_class_csv: Option<&Path>,
    per_image_mpq: bool,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let pairings = pair_directories(gt_dir, pred_dir)?;
    let mode = if per_image_mpq {
        MpqMode::PerImage
    } else {
        MpqMode::Dataset
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Format(format!("thread pool: {e}")))?;

    let loaded: Vec<Result<LoadedPair, CliError>> = pool.install(|| {
        use rayon::prelude::*;
        pairings
            .par_iter()
            .map(|p| {
                Ok(LoadedPair {
                    stem: p.stem.clone(),
                    gt: io::read_label_map(&p.gt)?,
                    pred: io::read_label_map(&p.pred)?,
                    gt_classes: p.gt_classes.as_deref().map(io::read_class_map).transpose()?,
                    pred_classes: p
                        .pred_classes
                        .as_deref()
                        .map(io::read_class_map)
                        .transpose()?,
                })
            })
            .collect()
    });
    let loaded: Vec<LoadedPair> = loaded.into_iter().collect::<Result<_, _>>()?;

    struct Row {
        stem: String,
        bpq: f64,
        mpq: Option<f64>,
    }
    let rows: Vec<Result<Row, CliError>> = pool.install(|| {
        use rayon::prelude::*;
        loaded
            .par_iter()
            .map(|pair| {
                let bpq = pq(&pair.gt, &pair.pred)?.pq;
                let mpq = match (&pair.gt_classes, &pair.pred_classes) {
                    (Some(gt_classes), Some(pred_classes)) => {
                        let eval = [EvalPair {
                            gt: &pair.gt,
                            gt_classes,
                            pred: &pair.pred,
                            pred_classes,
                        }];
                        Some(mpq_dataset(&eval, MpqMode::Dataset)?.1)
                    }
                    _ => None,
                };
                Ok(Row {
                    stem: pair.stem.clone(),
                    bpq,
                    mpq,
                })
            })
            .collect()
    });
    let rows: Vec<Row> = rows.into_iter().collect::<Result<_, _>>()?;

    let mut text = String::from("name,mpq,bpq\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{:.6}\n",
            row.stem,
            format_score(row.mpq),
            row.bpq
        ));
    }
    if !rows.is_empty() {
        let bpq_mean = rows.iter().map(|r| r.bpq).sum::<f64>() / rows.len() as f64;
        let with_mpq: Vec<f64> = rows.iter().filter_map(|r| r.mpq).collect();
        let mpq_mean = (!with_mpq.is_empty())
            .then(|| with_mpq.iter().sum::<f64>() / with_mpq.len() as f64);
        text.push_str(&format!(
            "average,{},{bpq_mean:.6}\n",
            format_score(mpq_mean)
        ));
    }
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out_csv, text)?;

    if let Some(per_class_path) = per_class_csv {
        let eval_pairs: Vec<EvalPair<'_>> = loaded
            .iter()
            .filter_map(|pair| {
                Some(EvalPair {
                    gt: &pair.gt,
                    gt_classes: pair.gt_classes.as_ref()?,
                    pred: &pair.pred,
                    pred_classes: pair.pred_classes.as_ref()?,
                })
            })
            .collect();
        let (per_class, mean) = mpq_dataset(&eval_pairs, mode)?;
        let header: Vec<&str> = CLASS_NAMES[1..].to_vec();
        let values: Vec<String> = (1..NUM_CLASSES)
            .map(|c| format_score(per_class[c].map(|s| s.pq)))
            .collect();
        let text = format!(
            "{},mean\n{},{mean:.6}\n",
            header.join(","),
            values.join(",")
        );
        fs::write(per_class_path, text)?;
    }
    Ok(())
}

fn render_overlay(image: &RGBImage, instances: &LabelMap, painted: &ClassMap) -> RGBImage {
    let boundary = edges_from_labels(instances);
    let mut data = image.data().to_vec();
    for (idx, &edge) in boundary.iter().enumerate() {
        if edge {
            let tint = OVERLAY_RGB[painted.data()[idx] as usize];
            data[idx * 3..idx * 3 + 3].copy_from_slice(&tint);
        }
    }
    RGBImage::new(image.height(), image.width(), data).expect("overlay keeps image shape")
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_pipeline(
    image_path: &Path,
    weights_path: &Path,
    out_dir: &Path,
    net: &NetworkOpts,
    watershed: &WatershedOpts,
    no_grouping: bool,
    equal_class_weights: bool,
    defaults: &FileDefaults,
) -> Result<(), CliError> {
    let image = io::read_rgb_image(image_path)?;
    let bundle = WeightBundle::read(weights_path)?;
    let cfg = net.config_for(image.height(), image.width())?;
    let ws_cfg = watershed.resolve(defaults)?;
    let mut loss_weights = defaults.loss_weights()?;
    if equal_class_weights {
        loss_weights = loss_weights.with_equal_class_weights();
    }
    loss_weights.validate()?;

    fs::create_dir_all(out_dir)?;
    let (semantic, edges, classes) = forward(&image, &bundle, &cfg)?;
    io::write_prob_map(out_dir.join("semantic.fmap"), &semantic)?;
    io::write_prob_map(out_dir.join("edges.fmap"), &edges)?;
    io::write_class_prob_map(out_dir.join("classes.fmap"), &classes)?;

    let instances = segment_instances(&semantic, &edges, &ws_cfg)?;
    io::write_label_map(out_dir.join("instances.pgm"), &instances)?;

    let hard = argmax_classes(&classes);
    let painted = if no_grouping {
        io::write_class_map(out_dir.join("classmap.pgm"), &hard)?;
        hard
    } else {
        let (records, painted) = classify_instances(&instances, &hard)?;
        write_records_csv(&out_dir.join("instances.csv"), &records)?;
        io::write_class_map(out_dir.join("classmap.pgm"), &painted)?;
        painted
    };

    let overlay = render_overlay(&image, &instances, &painted);
    io::write_rgb_image(out_dir.join("overlay.ppm"), &overlay)?;

    // echo the effective configuration for reproducibility
    let class_weights: Vec<String> = loss_weights
        .class_weights
        .iter()
        .map(|w| format!("{w}"))
        .collect();
    let config_echo = format!(
        "edge_threshold={}\nsemantic_threshold={}\nmin_area={}\ncontrolled={}\n\
         grouping={}\nlambda_a={}\nlambda_b={}\nlambda_c={}\nclass_weights={}\n",
        ws_cfg.edge_threshold,
        ws_cfg.semantic_threshold,
        ws_cfg.min_instance_area,
        ws_cfg.controlled,
        !no_grouping,
        loss_weights.lambda_a,
        loss_weights.lambda_b,
        loss_weights.lambda_c,
        class_weights.join(","),
    );
    fs::write(out_dir.join("config.txt"), config_echo)?;
    Ok(())
}

pub fn cmd_synth(
    out_dir: &Path,
    spec_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut spec = match spec_path {
        None => SceneSpec::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
            nucleopipe::config::scene_spec_from_kv(&nucleopipe::config::parse_kv(&text)?)?
        }
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (image, labels, classes) = generate_scene(&spec)?;
    fs::create_dir_all(out_dir)?;
    io::write_rgb_image(out_dir.join("image.ppm"), &image)?;
    io::write_label_map(out_dir.join("instances.pgm"), &labels)?;
    io::write_class_map(out_dir.join("instances_classes.pgm"), &classes)?;
    // oracle maps derived from the ground truth
    io::write_prob_map(out_dir.join("semantic.fmap"), &semantic_from_labels(&labels))?;
    io::write_prob_map(out_dir.join("edges.fmap"), &edge_prob_from_labels(&labels))?;
    io::write_class_prob_map(out_dir.join("classes.fmap"), &onehot_from_classes(&classes))?;
    Ok(())
}

pub fn cmd_init_weights(
    out_path: &Path,
    seed: u64,
    zero: bool,
    net: &NetworkOpts,
) -> Result<(), CliError> {
    // the bundle inventory is independent of the input size; any size that
    // passes validation works
    let side = 1usize << net.stages.max(1);
    let cfg = net.config_for(side * 8, side * 8)?;
    let bundle = if zero {
        zero_weights(&cfg)?
    } else {
        init_weights(&cfg, seed)?
    };
    validate_bundle(&bundle, &cfg)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    bundle.write(out_path)?;
    Ok(())
}
