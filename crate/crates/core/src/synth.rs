//! Deterministic synthetic scenes and ground-truth derivations for the test
//! corpus: ellipse nuclei with controlled pairwise overlap, a stained-tissue
//! flavored rendering, and label-boundary edge extraction.

use crate::components::{label_components, NEIGHBORS_8};
use crate::maps::{ClassMap, ClassProbMap, LabelMap, MapError, ProbMap, RGBImage, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    BadSpec(String),
    #[error("infeasible packing: placed {placed} of {requested} nuclei")]
    InfeasiblePacking { placed: usize, requested: usize },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub count: usize,
    /// Semi-axis range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Allowed pairwise overlap: |A ∩ B| <= overlap * min(|A|, |B|).
    pub overlap: f64,
    /// Sampling probabilities of the five nuclei classes (ids 1..=5).
    pub mixture: [f64; NUM_CLASSES - 1],
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 128,
            width: 128,
            count: 8,
            radius_min: 4.0,
            radius_max: 9.0,
            overlap: 0.2,
            mixture: [0.4, 0.2, 0.2, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.height < 8 || self.width < 8 {
            return Err(SynthError::BadSpec("canvas must be at least 8x8".into()));
        }
        if self.radius_min < 2.0 {
            return Err(SynthError::BadSpec("radii must be at least 2".into()));
        }
        if self.radius_max < self.radius_min {
            return Err(SynthError::BadSpec("radius_max below radius_min".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SynthError::BadSpec("overlap must be in [0, 1)".into()));
        }
        let sum: f64 = self.mixture.iter().sum();
        if self.mixture.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(SynthError::BadSpec(format!(
                "class mixture must be non-negative and sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// A pixel is an edge iff it is nonzero and has an in-bounds 8-neighbor with
/// a different label (background included).
pub fn edges_from_labels(gt: &LabelMap) -> Vec<bool> {
    let (h, w) = (gt.height(), gt.width());
    let data = gt.data();
    let mut edges = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if data[idx] == 0 {
                continue;
            }
            for &(dy, dx) in &NEIGHBORS_8 {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny < 0 || nx < 0 || ny as usize >= h || nx as usize >= w {
                    continue;
                }
                if data[ny as usize * w + nx as usize] != data[idx] {
                    edges[idx] = true;
                    break;
                }
            }
        }
    }
    edges
}

/// Foreground of the label map as a hard probability map.
pub fn semantic_from_labels(gt: &LabelMap) -> ProbMap {
    let data = gt
        .data()
        .iter()
        .map(|&v| if v != 0 { 1.0 } else { 0.0 })
        .collect();
    ProbMap::new(gt.height(), gt.width(), data).expect("hard mask is a valid probability map")
}

/// Edge mask of the label map as a hard probability map.
pub fn edge_prob_from_labels(gt: &LabelMap) -> ProbMap {
    let data = edges_from_labels(gt)
        .into_iter()
        .map(|e| if e { 1.0 } else { 0.0 })
        .collect();
    ProbMap::new(gt.height(), gt.width(), data).expect("hard mask is a valid probability map")
}

/// One-hot encoding of a class map.
pub fn onehot_from_classes(classes: &ClassMap) -> ClassProbMap {
    let (h, w) = (classes.height(), classes.width());
    let mut data = vec![0.0f32; h * w * NUM_CLASSES];
    for (px, &c) in classes.data().iter().enumerate() {
        data[px * NUM_CLASSES + c as usize] = 1.0;
    }
    ClassProbMap::new(h, w, NUM_CLASSES, data).expect("one-hot rows sum to 1")
}

struct Placed {
    pixels: Vec<usize>,
    class: u8,
}

fn rasterize_ellipse(
    height: usize,
    width: usize,
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    theta: f64,
) -> Vec<usize> {
    let (sin, cos) = theta.sin_cos();
    let reach = a.max(b).ceil() as isize + 1;
    let mut pixels = Vec::new();
    let y0 = ((cy as isize) - reach).max(0);
    let y1 = ((cy as isize) + reach).min(height as isize - 1);
    let x0 = ((cx as isize) - reach).max(0);
    let x1 = ((cx as isize) + reach).min(width as isize - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let u = (dx * cos + dy * sin) / a;
            let v = (-dx * sin + dy * cos) / b;
            if u * u + v * v <= 1.0 {
                pixels.push(y as usize * width + x as usize);
            }
        }
    }
    pixels
}

/// Each instance must keep an interior (pixels off the boundary mask) that
/// is this large and 8-connected, so boundary-seeded marker extraction can
/// recover it.
const MIN_INTERIOR: usize = 3;
const MAX_ATTEMPTS: usize = 400;

fn scene_is_valid(labels: &[u32], count: usize, height: usize, width: usize) -> bool {
    // interiors: instance pixels whose in-bounds 8-neighbors all share the label
    let mut interior = vec![false; labels.len()];
    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            if labels[idx] == 0 {
                continue;
            }
            let mut boundary = false;
            for &(dy, dx) in &NEIGHBORS_8 {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny < 0 || nx < 0 || ny as usize >= height || nx as usize >= width {
                    continue;
                }
                if labels[ny as usize * width + nx as usize] != labels[idx] {
                    boundary = true;
                    break;
                }
            }
            interior[idx] = !boundary;
        }
    }
    for id in 1..=count as u32 {
        let body: Vec<bool> = labels.iter().map(|&l| l == id).collect();
        let (_, parts) = label_components(&body, height, width);
        if parts != 1 {
            return false;
        }
        let id_interior: Vec<bool> = labels
            .iter()
            .zip(&interior)
            .map(|(&l, &i)| l == id && i)
            .collect();
        let size = id_interior.iter().filter(|&&v| v).count();
        if size < MIN_INTERIOR {
            return false;
        }
        let (_, parts) = label_components(&id_interior, height, width);
        if parts != 1 {
            return false;
        }
    }
    true
}

/// Generates a deterministic synthetic scene.
///
/// Nuclei are ellipses with random orientation; earlier placements keep
/// their pixels where ellipses overlap. Placements are rejected until every
/// instance is 8-connected with a usable interior, so the ground truth
/// always passes `LabelMap` validation and survives boundary subtraction.
pub fn generate_scene(spec: &SceneSpec) -> Result<(RGBImage, LabelMap, ClassMap), SynthError> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = vec![0u32; h * w];
    let mut placed: Vec<Placed> = Vec::new();

    for k in 0..spec.count {
        let mut accepted = false;
        for _ in 0..MAX_ATTEMPTS {
            let margin = spec.radius_max + 1.0;
            let cy = rng.random_range(margin..h as f64 - margin);
            let cx = rng.random_range(margin..w as f64 - margin);
            let a = rng.random_range(spec.radius_min..=spec.radius_max);
            let b = rng.random_range(spec.radius_min..=spec.radius_max);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let class = sample_class(&mut rng, &spec.mixture);

            let full = rasterize_ellipse(h, w, cy, cx, a, b, theta);
            if full.is_empty() {
                continue;
            }
            // pairwise overlap of ideal pixel sets
            let mut ok = true;
            for other in &placed {
                // rasterization emits pixels in ascending row-major order
                let inter = full
                    .iter()
                    .filter(|&&p| other.pixels.binary_search(&p).is_ok())
                    .count();
                let cap = (spec.overlap * full.len().min(other.pixels.len()) as f64).floor();
                if inter as f64 > cap {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let new_pixels: Vec<usize> =
                full.iter().copied().filter(|&p| labels[p] == 0).collect();
            if new_pixels.len() < MIN_INTERIOR {
                continue;
            }
            let id = k as u32 + 1;
            for &p in &new_pixels {
                labels[p] = id;
            }
            if scene_is_valid(&labels, k + 1, h, w) {
                placed.push(Placed {
                    pixels: full,
                    class,
                });
                accepted = true;
                break;
            }
            for &p in &new_pixels {
                labels[p] = 0;
            }
        }
        if !accepted {
            return Err(SynthError::InfeasiblePacking {
                placed: k,
                requested: spec.count,
            });
        }
    }

    let label_map = LabelMap::new(h, w, labels)?;
    let class_data = label_map
        .data()
        .iter()
        .map(|&id| {
            if id == 0 {
                0
            } else {
                placed[id as usize - 1].class
            }
        })
        .collect();
    let class_map = ClassMap::new(h, w, class_data)?;
    let image = render(&label_map, &class_map, &mut rng);
    Ok((image, label_map, class_map))
}

fn sample_class(rng: &mut ChaCha8Rng, mixture: &[f64; NUM_CLASSES - 1]) -> u8 {
    let draw: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in mixture.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i as u8 + 1;
        }
    }
    NUM_CLASSES as u8 - 1
}

/// Base tints: pink-ish tissue background, darker stains per nuclei class.
const BACKGROUND_RGB: [f64; 3] = [233.0, 207.0, 221.0];
const CLASS_RGB: [[f64; 3]; NUM_CLASSES] = [
    BACKGROUND_RGB,
    [94.0, 60.0, 132.0],
    [70.0, 84.0, 140.0],
    [108.0, 72.0, 110.0],
    [60.0, 52.0, 84.0],
    [122.0, 88.0, 96.0],
];

fn render(labels: &LabelMap, classes: &ClassMap, rng: &mut ChaCha8Rng) -> RGBImage {
    let (h, w) = (labels.height(), labels.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for idx in 0..h * w {
        let base = CLASS_RGB[classes.data()[idx] as usize];
        for &channel in &base {
            let noise: f64 = rng.random_range(-12.0..12.0);
            data.push((channel + noise).clamp(0.0, 255.0) as u8);
        }
    }
    RGBImage::new(h, w, data).expect("render fills the full canvas")
}
