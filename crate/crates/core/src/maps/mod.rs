//! Core array types shared by the whole pipeline, their invariants, and
//! bit-exact file I/O.
//!
//! All maps are row-major; multi-channel data is channel-last. Instance id 0
//! and class id 0 both mean background. Nuclei classes are fixed as
//! 1 = neoplastic, 2 = inflammatory, 3 = epithelium, 4 = dead, 5 = connective.

pub mod io;

use crate::components;
use thiserror::Error;

/// Class channel count: background plus the five nuclei categories.
pub const NUM_CLASSES: usize = 6;

/// Canonical class names, indexed by class id.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "background",
    "neoplastic",
    "inflammatory",
    "epithelium",
    "dead",
    "connective",
];

/// Per-pixel softmax sums may drift from 1 by at most this much.
pub const CLASS_PROB_SUM_TOL: f64 = 1e-5;

/// Errors raised by map construction, validation, and file I/O.
#[derive(Debug, Error)]
pub enum MapError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected}")]
    BadMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("dimension overflow: {height} x {width} x {channels}")]
    DimensionOverflow { height: u64, width: u64, channels: u64 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid {kind}: {reason}")]
    Invalid { kind: &'static str, reason: String },
    #[error("sample {value} exceeds the 16-bit PGM range")]
    SampleRange { value: u32 },
}

fn invalid(kind: &'static str, reason: impl Into<String>) -> MapError {
    MapError::Invalid {
        kind,
        reason: reason.into(),
    }
}

fn check_dims(height: usize, width: usize, kind: &'static str) -> Result<(), MapError> {
    if height == 0 || width == 0 {
        return Err(invalid(kind, "height and width must be positive"));
    }
    Ok(())
}

/// 8-bit RGB tile, the network input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RGBImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RGBImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, MapError> {
        check_dims(height, width, "RGBImage")?;
        if data.len() != height * width * 3 {
            return Err(invalid(
                "RGBImage",
                format!("expected {} bytes, got {}", height * width * 3, data.len()),
            ));
        }
        Ok(RGBImage { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Single-channel probability field in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProbMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, MapError> {
        check_dims(height, width, "ProbMap")?;
        if data.len() != height * width {
            return Err(invalid(
                "ProbMap",
                format!("expected {} values, got {}", height * width, data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("ProbMap", format!("value {v} outside [0, 1]")));
        }
        Ok(ProbMap { height, width, data })
    }

    /// Uniform map, handy for fixtures.
    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self, MapError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel class probability field (channel-last softmax output).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ClassProbMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, MapError> {
        check_dims(height, width, "ClassProbMap")?;
        if !(2..=NUM_CLASSES).contains(&channels) {
            return Err(invalid(
                "ClassProbMap",
                format!("channel count {channels} outside 2..={NUM_CLASSES}"),
            ));
        }
        if data.len() != height * width * channels {
            return Err(invalid(
                "ClassProbMap",
                format!(
                    "expected {} values, got {}",
                    height * width * channels,
                    data.len()
                ),
            ));
        }
        for px in 0..height * width {
            let row = &data[px * channels..(px + 1) * channels];
            let mut sum = 0.0f64;
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid("ClassProbMap", format!("value {v} is negative")));
                }
                sum += f64::from(v);
            }
            if (sum - 1.0).abs() > CLASS_PROB_SUM_TOL {
                return Err(invalid(
                    "ClassProbMap",
                    format!("pixel {px} probabilities sum to {sum}"),
                ));
            }
        }
        Ok(ClassProbMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Probability vector of one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

/// Per-pixel instance identifiers; 0 is background and ids are contiguous
/// `1..=K`, each id's pixel set 8-connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u32>) -> Result<Self, MapError> {
        check_dims(height, width, "LabelMap")?;
        if data.len() != height * width {
            return Err(invalid(
                "LabelMap",
                format!("expected {} values, got {}", height * width, data.len()),
            ));
        }
        let max = data.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; max as usize + 1];
        for &v in &data {
            seen[v as usize] = true;
        }
        for id in 1..=max {
            if !seen[id as usize] {
                return Err(invalid(
                    "LabelMap",
                    format!("id set is not contiguous: {id} missing below max {max}"),
                ));
            }
        }
        for id in 1..=max {
            if !components::is_single_component(&data, height, width, id) {
                return Err(invalid(
                    "LabelMap",
                    format!("instance {id} is not 8-connected"),
                ));
            }
        }
        Ok(LabelMap { height, width, data })
    }

    /// Empty map (K = 0).
    pub fn empty(height: usize, width: usize) -> Result<Self, MapError> {
        Self::new(height, width, vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.data[y * self.width + x]
    }

    /// Number of instances K (ids are contiguous, so this is the max id).
    pub fn instance_count(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

/// Per-pixel class ids in `0..NUM_CLASSES`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, MapError> {
        check_dims(height, width, "ClassMap")?;
        if data.len() != height * width {
            return Err(invalid(
                "ClassMap",
                format!("expected {} values, got {}", height * width, data.len()),
            ));
        }
        if let Some(&v) = data.iter().find(|&&v| v as usize >= NUM_CLASSES) {
            return Err(invalid(
                "ClassMap",
                format!("class id {v} out of range (< {NUM_CLASSES})"),
            ));
        }
        Ok(ClassMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel argmax of a class probability field; ties break toward the
/// lowest channel index.
pub fn argmax_classes(probs: &ClassProbMap) -> ClassMap {
    let channels = probs.channels();
    let data = probs
        .data()
        .chunks_exact(channels)
        .map(|row| {
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    // ClassProbMap enforces channels <= NUM_CLASSES, so every argmax
    // index is a valid class id
    ClassMap::new(probs.height(), probs.width(), data)
        .expect("argmax of a valid ClassProbMap yields a valid ClassMap")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softmax_pixels(height: usize, width: usize, raw: Vec<f32>) -> ClassProbMap {
        let mut data = raw;
        for px in data.chunks_exact_mut(NUM_CLASSES) {
            let sum: f32 = px.iter().sum();
            for v in px {
                *v /= sum;
            }
        }
        ClassProbMap::new(height, width, NUM_CLASSES, data).unwrap()
    }

    #[test]
    fn argmax_picks_max_channel() {
        let probs = ClassProbMap::new(
            1,
            1,
            NUM_CLASSES,
            vec![0.1, 0.7, 0.2, 0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(argmax_classes(&probs).data(), &[1]);
    }

    #[test]
    fn argmax_ties_break_low() {
        let probs = ClassProbMap::new(
            1,
            1,
            NUM_CLASSES,
            vec![1.0 / 6.0; NUM_CLASSES],
        )
        .unwrap();
        assert_eq!(argmax_classes(&probs).data(), &[0]);
    }

    #[test]
    fn argmax_one_hot_is_identity() {
        let mut raw = vec![0.0f32; 4 * NUM_CLASSES];
        for px in 0..4 {
            raw[px * NUM_CLASSES + 3] = 1.0;
        }
        let probs = ClassProbMap::new(2, 2, NUM_CLASSES, raw).unwrap();
        assert!(argmax_classes(&probs).data().iter().all(|&c| c == 3));
    }

    #[test]
    fn label_map_rejects_gap_in_ids() {
        let err = LabelMap::new(1, 3, vec![0, 1, 3]).unwrap_err();
        assert!(matches!(err, MapError::Invalid { kind: "LabelMap", .. }));
    }

    #[test]
    fn label_map_rejects_split_instance() {
        #[rustfmt::skip]
        let data = vec![
            1, 0, 1,
            0, 0, 0,
            0, 0, 0,
        ];
        // the two `1` pixels are not 8-adjacent
        assert!(LabelMap::new(3, 3, data).is_err());
    }

    #[test]
    fn label_map_accepts_diagonal_instance() {
        #[rustfmt::skip]
        let data = vec![
            1, 0,
            0, 1,
        ];
        assert!(LabelMap::new(2, 2, data).is_ok());
    }

    #[test]
    fn class_prob_map_rejects_bad_sum() {
        let mut raw = vec![1.0 / 6.0; NUM_CLASSES];
        raw[0] += 1e-3;
        assert!(ClassProbMap::new(1, 1, NUM_CLASSES, raw).is_err());
    }

    #[test]
    fn class_prob_map_accepts_softmax_output() {
        let probs = softmax_pixels(2, 2, (0..4 * NUM_CLASSES).map(|i| i as f32 + 1.0).collect());
        assert_eq!(probs.channels(), NUM_CLASSES);
    }

    #[test]
    fn prob_map_rejects_out_of_range() {
        assert!(ProbMap::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(ProbMap::new(1, 2, vec![-0.1, 0.5]).is_err());
        assert!(ProbMap::new(1, 2, vec![f32::NAN, 0.5]).is_err());
    }

    #[test]
    fn class_prob_map_rejects_excess_channels() {
        let raw = vec![0.1f32; 10];
        assert!(ClassProbMap::new(1, 1, 10, raw).is_err());
    }

    #[test]
    fn class_map_rejects_out_of_range_id() {
        assert!(ClassMap::new(1, 1, vec![NUM_CLASSES as u8]).is_err());
    }
}
