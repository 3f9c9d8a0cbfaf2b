//! Majority-vote classification of segmented instances.
//!
//! Each instance takes the nuclei class with the highest pixel frequency over
//! its region. Background votes are excluded unless they are all the instance
//! has; ties break toward the lowest class id.

use crate::maps::{ClassMap, ClassProbMap, LabelMap, MapError, NUM_CLASSES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("shape mismatch: instances {inst_h}x{inst_w} vs classes {cls_h}x{cls_w}")]
    ShapeMismatch {
        inst_h: usize,
        inst_w: usize,
        cls_h: usize,
        cls_w: usize,
    },
    #[error("unknown instance id {id} (map has {count} instances)")]
    UnknownInstance { id: u32, count: u32 },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One classified nucleus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRecord {
    pub id: u32,
    pub area: usize,
    /// Pixel counts per class id over the instance region.
    pub histogram: [usize; NUM_CLASSES],
    /// Assigned class id; 0 only when the histogram is entirely background.
    pub class: u8,
    /// True when the instance covered nothing but background-class pixels.
    pub background_only: bool,
}

impl InstanceRecord {
    /// CSV header matching [`InstanceRecord::to_csv_row`].
    pub fn csv_header() -> String {
        let classes: Vec<String> = (0..NUM_CLASSES)
            .map(|c| format!("count_{}", crate::maps::CLASS_NAMES[c]))
            .collect();
        format!("id,area,class,{}", classes.join(","))
    }

    pub fn to_csv_row(&self) -> String {
        let counts: Vec<String> = self.histogram.iter().map(|c| c.to_string()).collect();
        format!("{},{},{},{}", self.id, self.area, self.class, counts.join(","))
    }
}

fn check_shapes(instances: &LabelMap, h: usize, w: usize) -> Result<(), ClassifyError> {
    if instances.height() != h || instances.width() != w {
        return Err(ClassifyError::ShapeMismatch {
            inst_h: instances.height(),
            inst_w: instances.width(),
            cls_h: h,
            cls_w: w,
        });
    }
    Ok(())
}

fn histograms(instances: &LabelMap, classes: &ClassMap) -> Vec<[usize; NUM_CLASSES]> {
    let count = instances.instance_count() as usize;
    let mut hist = vec![[0usize; NUM_CLASSES]; count + 1];
    for (&id, &cls) in instances.data().iter().zip(classes.data()) {
        if id != 0 {
            hist[id as usize][cls as usize] += 1;
        }
    }
    hist
}

/// Pixel counts per class over one instance's region.
pub fn class_histogram(
    id: u32,
    instances: &LabelMap,
    classes: &ClassMap,
) -> Result<[usize; NUM_CLASSES], ClassifyError> {
    check_shapes(instances, classes.height(), classes.width())?;
    let count = instances.instance_count();
    if id == 0 || id > count {
        return Err(ClassifyError::UnknownInstance { id, count });
    }
    Ok(histograms(instances, classes)[id as usize])
}

/// Majority vote over a histogram: nuclei classes only, ties to the lowest
/// id, background only when nothing else voted.
#[allow(clippy::needless_range_loop)]
fn vote(histogram: &[usize; NUM_CLASSES]) -> (u8, bool) {
    let mut best_class = 0usize;
    let mut best_count = 0usize;
    for class in 1..NUM_CLASSES {
        if histogram[class] > best_count {
            best_count = histogram[class];
            best_class = class;
        }
    }
    if best_count == 0 {
        (0, true)
    } else {
        (best_class as u8, false)
    }
}

/// Classifies every instance by hard pixel-vote over `classes`.
///
/// Returns one record per instance (ascending id) plus the class-painted map
/// where each instance's pixels carry its assigned class.
pub fn classify_instances(
    instances: &LabelMap,
    classes: &ClassMap,
) -> Result<(Vec<InstanceRecord>, ClassMap), ClassifyError> {
    check_shapes(instances, classes.height(), classes.width())?;
    let hist = histograms(instances, classes);
    let mut records = Vec::with_capacity(hist.len().saturating_sub(1));
    for (id, histogram) in hist.iter().enumerate().skip(1) {
        let (class, background_only) = vote(histogram);
        records.push(InstanceRecord {
            id: id as u32,
            area: histogram.iter().sum(),
            histogram: *histogram,
            class,
            background_only,
        });
    }
    let painted = paint(instances, &records)?;
    Ok((records, painted))
}

/// Soft-vote variant: per-instance sums of class probabilities instead of
/// hard argmax counts.
#[allow(clippy::needless_range_loop)]
pub fn classify_instances_soft(
    instances: &LabelMap,
    probs: &ClassProbMap,
) -> Result<(Vec<InstanceRecord>, ClassMap), ClassifyError> {
    check_shapes(instances, probs.height(), probs.width())?;
    let count = instances.instance_count() as usize;
    let channels = probs.channels();
    let mut weights = vec![[0f64; NUM_CLASSES]; count + 1];
    let mut hist = vec![[0usize; NUM_CLASSES]; count + 1];
    for (px, &id) in instances.data().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let row = &probs.data()[px * probs.channels()..(px + 1) * probs.channels()];
        for c in 0..channels {
            weights[id as usize][c] += f64::from(row[c]);
        }
        let mut best = 0usize;
        for c in 1..channels {
            if row[c] > row[best] {
                best = c;
            }
        }
        hist[id as usize][best] += 1;
    }
    let mut records = Vec::with_capacity(count);
    for id in 1..=count {
        let w = &weights[id];
        let mut best_class = 0usize;
        let mut best_weight = 0.0f64;
        for class in 1..NUM_CLASSES {
            if w[class] > best_weight {
                best_weight = w[class];
                best_class = class;
            }
        }
        let background_only = best_weight == 0.0;
        records.push(InstanceRecord {
            id: id as u32,
            area: hist[id].iter().sum(),
            histogram: hist[id],
            class: best_class as u8,
            background_only,
        });
    }
    let painted = paint(instances, &records)?;
    Ok((records, painted))
}

fn paint(instances: &LabelMap, records: &[InstanceRecord]) -> Result<ClassMap, ClassifyError> {
    let data = instances
        .data()
        .iter()
        .map(|&id| {
            if id == 0 {
                0
            } else {
                records[id as usize - 1].class
            }
        })
        .collect();
    Ok(ClassMap::new(instances.height(), instances.width(), data)?)
}
