//! Shared fixture builders for the integration suites.
// each test binary uses its own subset of these helpers
#![allow(dead_code)]

pub mod network_oracle;

use nucleopipe::components::label_components;
use nucleopipe::maps::{ClassMap, LabelMap, NUM_CLASSES};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Turns an arbitrary label field into a valid `LabelMap`: every 8-connected
/// component of every nonzero value becomes its own contiguous id, numbered
/// in row-major encounter order.
pub fn canonical_label_map(raw: &[u32], height: usize, width: usize) -> LabelMap {
    let mut out = vec![0u32; raw.len()];
    let mut next = 0u32;
    let mut values: Vec<u32> = raw.iter().copied().filter(|&v| v != 0).collect();
    values.sort_unstable();
    values.dedup();
    for v in values {
        let mask: Vec<bool> = raw.iter().map(|&r| r == v).collect();
        let (labels, count) = label_components(&mask, height, width);
        for (dst, &l) in out.iter_mut().zip(&labels) {
            if l != 0 {
                *dst = next + l;
            }
        }
        next += count;
    }
    // renumber by row-major first encounter so ids are deterministic
    let mut remap = vec![0u32; next as usize + 1];
    let mut fresh = 0u32;
    for &l in &out {
        if l != 0 && remap[l as usize] == 0 {
            fresh += 1;
            remap[l as usize] = fresh;
        }
    }
    let data: Vec<u32> = out.iter().map(|&l| remap[l as usize]).collect();
    LabelMap::new(height, width, data).expect("canonicalized map is valid")
}

#[derive(Clone, Copy)]
struct Rect {
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
}

fn random_rects(rng: &mut ChaCha8Rng, h: usize, w: usize, max_blobs: u32) -> Vec<Rect> {
    let blobs = rng.random_range(0..=max_blobs);
    (0..blobs)
        .map(|_| {
            let bh = rng.random_range(1..=(h / 2).max(1));
            let bw = rng.random_range(1..=(w / 2).max(1));
            Rect {
                y0: rng.random_range(0..h - bh + 1),
                x0: rng.random_range(0..w - bw + 1),
                h: bh,
                w: bw,
            }
        })
        .collect()
}

fn rasterize(rects: &[Rect], h: usize, w: usize) -> Vec<u32> {
    let mut raw = vec![0u32; h * w];
    for (id, r) in rects.iter().enumerate() {
        for y in r.y0..r.y0 + r.h {
            for x in r.x0..r.x0 + r.w {
                raw[y * w + x] = id as u32 + 1;
            }
        }
    }
    raw
}

fn trim(map: LabelMap, max_instances: u32) -> LabelMap {
    if map.instance_count() <= max_instances {
        return map;
    }
    let trimmed: Vec<u32> = map
        .data()
        .iter()
        .map(|&l| if l > max_instances { 0 } else { l })
        .collect();
    LabelMap::new(map.height(), map.width(), trimmed)
        .expect("dropping top ids keeps the map valid")
}

/// Random valid label map: scattered rectangles, canonicalized, trimmed to
/// at most `max_instances`.
pub fn random_label_map(rng: &mut ChaCha8Rng, max_side: usize, max_instances: u32) -> LabelMap {
    let h = rng.random_range(4..=max_side);
    let w = rng.random_range(4..=max_side);
    let raw = rasterize(&random_rects(rng, h, w, max_instances), h, w);
    trim(canonical_label_map(&raw, h, w), max_instances)
}

/// A gt/pred pair over the same canvas. The prediction perturbs the ground
/// truth's blobs (jitter, dropout, spurious extras), so the pair exercises
/// true positives, false positives, and false negatives.
pub fn random_label_pair(
    rng: &mut ChaCha8Rng,
    max_side: usize,
    max_instances: u32,
) -> (LabelMap, LabelMap) {
    let h = rng.random_range(4..=max_side);
    let w = rng.random_range(4..=max_side);
    let gt_rects = random_rects(rng, h, w, max_instances);
    let mut pred_rects = Vec::new();
    for r in &gt_rects {
        if rng.random_bool(0.15) {
            continue; // missed detection
        }
        let dy = rng.random_range(-2i64..=2);
        let dx = rng.random_range(-2i64..=2);
        let y0 = (r.y0 as i64 + dy).clamp(0, h as i64 - 1) as usize;
        let x0 = (r.x0 as i64 + dx).clamp(0, w as i64 - 1) as usize;
        pred_rects.push(Rect {
            y0,
            x0,
            h: r.h.min(h - y0),
            w: r.w.min(w - x0),
        });
    }
    if rng.random_bool(0.3) {
        pred_rects.extend(random_rects(rng, h, w, 2));
    }
    let gt = trim(
        canonical_label_map(&rasterize(&gt_rects, h, w), h, w),
        max_instances,
    );
    let pred = trim(
        canonical_label_map(&rasterize(&pred_rects, h, w), h, w),
        max_instances,
    );
    (gt, pred)
}

/// Random class map aligned with a label map: one nuclei class per instance.
pub fn random_classes_for(rng: &mut ChaCha8Rng, labels: &LabelMap) -> ClassMap {
    let count = labels.instance_count() as usize;
    let classes: Vec<u8> = (0..=count)
        .map(|i| {
            if i == 0 {
                0
            } else {
                rng.random_range(1..NUM_CLASSES as u8)
            }
        })
        .collect();
    let data = labels
        .data()
        .iter()
        .map(|&l| classes[l as usize])
        .collect();
    ClassMap::new(labels.height(), labels.width(), data).expect("class ids are in range")
}

/// Applies a permutation to instance ids: `perm[old - 1] = new`.
pub fn permute_labels(map: &LabelMap, perm: &[u32]) -> LabelMap {
    let data = map
        .data()
        .iter()
        .map(|&l| if l == 0 { 0 } else { perm[l as usize - 1] })
        .collect();
    LabelMap::new(map.height(), map.width(), data).expect("permutation keeps validity")
}
