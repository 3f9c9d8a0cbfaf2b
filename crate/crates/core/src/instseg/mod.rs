//! Marker-controlled watershed turning semantic + edge probability maps into
//! nuclei instances.
//!
//! The controlled path: threshold the edge proposals, subtract them from the
//! binarized semantic map to get sure-foreground markers, derive ridgelines
//! from the watershed of the negated distance transform, keep background
//! markers off those ridgelines, then flood the inverted semantic surface
//! from all markers.

pub mod edt;
pub mod watershed;

use crate::components::{label_components, NEIGHBORS_8};
use crate::maps::{LabelMap, MapError, ProbMap};
use thiserror::Error;

pub use edt::{distance_transform, squared_distance_transform};
pub use watershed::{flood, FloodResult};

#[derive(Debug, Error)]
pub enum SegError {
    #[error("shape mismatch: semantic {sem_h}x{sem_w} vs edges {edge_h}x{edge_w}")]
    ShapeMismatch {
        sem_h: usize,
        sem_w: usize,
        edge_h: usize,
        edge_w: usize,
    },
    #[error("invalid watershed config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Knobs of the instance segmentation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct WatershedConfig {
    /// Edge proposals below this probability are discarded.
    pub edge_threshold: f32,
    /// Foreground components smaller than this many pixels are dropped.
    pub min_instance_area: usize,
    /// Semantic probability at or above this value is foreground.
    pub semantic_threshold: f32,
    /// When false, run a plain watershed on the thresholded semantic map
    /// (the uncontrolled ablation).
    pub controlled: bool,
}

impl Default for WatershedConfig {
    fn default() -> Self {
        WatershedConfig {
            edge_threshold: 0.10,
            min_instance_area: 3,
            semantic_threshold: 0.5,
            controlled: true,
        }
    }
}

impl WatershedConfig {
    pub fn validate(&self) -> Result<(), SegError> {
        if !(0.0..=1.0).contains(&self.edge_threshold) {
            return Err(SegError::BadConfig(format!(
                "edge_threshold {} outside [0, 1]",
                self.edge_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.semantic_threshold) {
            return Err(SegError::BadConfig(format!(
                "semantic_threshold {} outside [0, 1]",
                self.semantic_threshold
            )));
        }
        if self.min_instance_area == 0 {
            return Err(SegError::BadConfig("min_instance_area must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-pixel marker state fed to the final flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerState {
    Unknown,
    Background,
    Foreground(u32),
}

/// Marker assignment for a tile. Foreground markers are 8-connected per id
/// and background markers never touch a foreground marker's 8-neighborhood.
pub struct MarkerField {
    pub height: usize,
    pub width: usize,
    pub states: Vec<MarkerState>,
    pub foreground_count: u32,
    /// Ridgelines of the marker distance transform; kept out of the
    /// background markers and excluded from the final flood.
    pub ridge: Vec<bool>,
}

/// Mask of edge proposals that survive the probability threshold.
pub fn threshold_edges(edges: &ProbMap, cfg: &WatershedConfig) -> Vec<bool> {
    edges
        .data()
        .iter()
        .map(|&v| v >= cfg.edge_threshold)
        .collect()
}

/// Sure-foreground components: binarized semantic minus the edge mask,
/// 8-connected, sized at least `min_instance_area`. Labels are contiguous
/// `1..=count` in row-major encounter order.
pub fn foreground_markers(
    semantic: &ProbMap,
    edge_mask: &[bool],
    cfg: &WatershedConfig,
) -> Result<(Vec<u32>, u32), SegError> {
    let (h, w) = (semantic.height(), semantic.width());
    if edge_mask.len() != h * w {
        return Err(SegError::ShapeMismatch {
            sem_h: h,
            sem_w: w,
            edge_h: edge_mask.len() / w.max(1),
            edge_w: w,
        });
    }
    let mask: Vec<bool> = semantic
        .data()
        .iter()
        .zip(edge_mask)
        .map(|(&s, &e)| s >= cfg.semantic_threshold && !e)
        .collect();
    let (labels, count) = label_components(&mask, h, w);
    Ok(filter_small(labels, count, cfg.min_instance_area))
}

/// Drops components below `min_area` and relabels the rest contiguously,
/// preserving order.
fn filter_small(labels: Vec<u32>, count: u32, min_area: usize) -> (Vec<u32>, u32) {
    let mut areas = vec![0usize; count as usize + 1];
    for &l in &labels {
        areas[l as usize] += 1;
    }
    let mut remap = vec![0u32; count as usize + 1];
    let mut next = 0u32;
    for id in 1..=count {
        if areas[id as usize] >= min_area {
            next += 1;
            remap[id as usize] = next;
        }
    }
    let relabeled = labels.into_iter().map(|l| remap[l as usize]).collect();
    (relabeled, next)
}

fn negated_distance_surface(sq: &[u64]) -> Vec<f64> {
    sq.iter()
        .map(|&d| {
            if d == edt::UNREACHABLE {
                f64::MIN
            } else {
                -(d as f64)
            }
        })
        .collect()
}

/// Ridgelines of the watershed of the negated distance transform of the
/// labelled foreground components: the pixels where two seed basins meet.
///
/// The flood surface is the negated signed distance: negative squared
/// distance inside the components, positive squared distance to the
/// components outside. Basins cross flat background at equal rates, so the
/// ridge falls on the line equidistant between seeds, matching a
/// brute-force nearest-seed partition.
pub fn ridgelines(fg_labels: &[u32], height: usize, width: usize) -> Vec<bool> {
    let mask: Vec<bool> = fg_labels.iter().map(|&l| l != 0).collect();
    let inverted: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let sq_fg = squared_distance_transform(&mask, height, width);
    let sq_bg = squared_distance_transform(&inverted, height, width);
    let surface: Vec<f64> = (0..mask.len())
        .map(|idx| {
            if mask[idx] {
                if sq_fg[idx] == edt::UNREACHABLE {
                    f64::MIN
                } else {
                    -(sq_fg[idx] as f64)
                }
            } else {
                sq_bg[idx] as f64
            }
        })
        .collect();
    flood(&surface, height, width, fg_labels, None).ridge
}

/// Builds the marker field: foreground components plus background markers at
/// below-threshold pixels that sit neither on a ridgeline nor adjacent to a
/// foreground marker.
pub fn build_markers(
    semantic: &ProbMap,
    edges: &ProbMap,
    cfg: &WatershedConfig,
) -> Result<MarkerField, SegError> {
    check_shapes(semantic, edges)?;
    cfg.validate()?;
    let (h, w) = (semantic.height(), semantic.width());
    let edge_mask = threshold_edges(edges, cfg);
    let (fg, count) = foreground_markers(semantic, &edge_mask, cfg)?;
    let ridge = if count > 0 {
        ridgelines(&fg, h, w)
    } else {
        vec![false; h * w]
    };

    let mut near_fg = vec![false; h * w];
    for idx in 0..h * w {
        if fg[idx] != 0 {
            near_fg[idx] = true;
            let (y, x) = (idx / w, idx % w);
            for &(dy, dx) in &NEIGHBORS_8 {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w {
                    near_fg[ny as usize * w + nx as usize] = true;
                }
            }
        }
    }

    let states = (0..h * w)
        .map(|idx| {
            if fg[idx] != 0 {
                MarkerState::Foreground(fg[idx])
            } else if semantic.data()[idx] < cfg.semantic_threshold && !ridge[idx] && !near_fg[idx]
            {
                MarkerState::Background
            } else {
                MarkerState::Unknown
            }
        })
        .collect();
    Ok(MarkerField {
        height: h,
        width: w,
        states,
        foreground_count: count,
        ridge,
    })
}

fn check_shapes(semantic: &ProbMap, edges: &ProbMap) -> Result<(), SegError> {
    if semantic.height() != edges.height() || semantic.width() != edges.width() {
        return Err(SegError::ShapeMismatch {
            sem_h: semantic.height(),
            sem_w: semantic.width(),
            edge_h: edges.height(),
            edge_w: edges.width(),
        });
    }
    Ok(())
}

/// Marker-controlled watershed over the inverted semantic surface.
///
/// Foreground components seed the basins; background markers and the
/// distance-transform ridgelines are excluded from flooding, so instances
/// reclaim their edge band but cannot cross the line between neighboring
/// nuclei or bleed into sure background. Every output instance contains
/// exactly one foreground marker and the result satisfies the `LabelMap`
/// invariants. With `cfg.controlled` false, the edge proposals are ignored
/// and a plain watershed runs on the thresholded semantic map instead.
pub fn segment_instances(
    semantic: &ProbMap,
    edges: &ProbMap,
    cfg: &WatershedConfig,
) -> Result<LabelMap, SegError> {
    check_shapes(semantic, edges)?;
    cfg.validate()?;
    if !cfg.controlled {
        return uncontrolled_watershed(semantic, cfg);
    }
    let markers = build_markers(semantic, edges, cfg)?;
    let (h, w) = (markers.height, markers.width);
    if markers.foreground_count == 0 {
        return Ok(LabelMap::empty(h, w)?);
    }

    let mut seeds = vec![0u32; h * w];
    let mut domain = vec![true; h * w];
    for idx in 0..h * w {
        match markers.states[idx] {
            MarkerState::Foreground(id) => seeds[idx] = id,
            MarkerState::Background => domain[idx] = false,
            MarkerState::Unknown => {}
        }
        if markers.ridge[idx] && seeds[idx] == 0 {
            domain[idx] = false;
        }
    }
    let surface: Vec<f64> = semantic.data().iter().map(|&p| 1.0 - f64::from(p)).collect();
    let result = flood(&surface, h, w, &seeds, Some(&domain));
    Ok(LabelMap::new(h, w, result.labels)?)
}

/// Plain watershed for the ablation: seeds are the regional maxima of the
/// distance transform of the thresholded semantic mask, flooded over the
/// negated distance restricted to the foreground.
fn uncontrolled_watershed(semantic: &ProbMap, cfg: &WatershedConfig) -> Result<LabelMap, SegError> {
    let (h, w) = (semantic.height(), semantic.width());
    let mask: Vec<bool> = semantic
        .data()
        .iter()
        .map(|&s| s >= cfg.semantic_threshold)
        .collect();
    if mask.iter().all(|&m| !m) {
        return Ok(LabelMap::empty(h, w)?);
    }
    let sq = squared_distance_transform(&mask, h, w);
    let seeds = regional_maxima(&sq, &mask, h, w);
    let surface = negated_distance_surface(&sq);
    let result = flood(&surface, h, w, &seeds, Some(&mask));
    let max = result.labels.iter().copied().max().unwrap_or(0);
    let (filtered, _) = filter_small(result.labels, max, cfg.min_instance_area);
    Ok(LabelMap::new(h, w, filtered)?)
}

/// Plateau-aware regional maxima of `values` within `mask`, labelled
/// contiguously in row-major encounter order. A plateau (component of equal
/// value) is a seed unless any member has a strictly greater masked neighbor.
fn regional_maxima(values: &[u64], mask: &[bool], height: usize, width: usize) -> Vec<u32> {
    // label plateaus: flood equal-valued masked pixels
    let mut plateau = vec![0u32; values.len()];
    let mut plateau_count = 0u32;
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if !mask[start] || plateau[start] != 0 {
            continue;
        }
        plateau_count += 1;
        plateau[start] = plateau_count;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (y, x) = (idx / width, idx % width);
            for &(dy, dx) in &NEIGHBORS_8 {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny < 0 || nx < 0 || ny as usize >= height || nx as usize >= width {
                    continue;
                }
                let n = ny as usize * width + nx as usize;
                if mask[n] && plateau[n] == 0 && values[n] == values[idx] {
                    plateau[n] = plateau_count;
                    stack.push(n);
                }
            }
        }
    }

    let mut is_max = vec![true; plateau_count as usize + 1];
    for idx in 0..values.len() {
        if !mask[idx] {
            continue;
        }
        let (y, x) = (idx / width, idx % width);
        for &(dy, dx) in &NEIGHBORS_8 {
            let ny = y as isize + dy;
            let nx = x as isize + dx;
            if ny < 0 || nx < 0 || ny as usize >= height || nx as usize >= width {
                continue;
            }
            let n = ny as usize * width + nx as usize;
            if mask[n] && values[n] > values[idx] {
                is_max[plateau[idx] as usize] = false;
            }
        }
    }

    let mut remap = vec![0u32; plateau_count as usize + 1];
    let mut seed_count = 0u32;
    let mut seeds = vec![0u32; values.len()];
    for idx in 0..values.len() {
        if !mask[idx] || !is_max[plateau[idx] as usize] {
            continue;
        }
        let pl = plateau[idx] as usize;
        if remap[pl] == 0 {
            seed_count += 1;
            remap[pl] = seed_count;
        }
        seeds[idx] = remap[pl];
    }
    seeds
}
