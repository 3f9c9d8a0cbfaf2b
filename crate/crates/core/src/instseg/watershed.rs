//! Priority-flood watershed with deterministic ordering.
//!
//! Pixels are flooded in ascending surface order; ties break by row-major
//! position, so the transform is bit-stable across runs and platforms.

use crate::components::NEIGHBORS_8;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(PartialEq)]
struct Entry {
    value: f64,
    idx: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the lowest surface
        // value (then the lowest row-major index) on top
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Output of a flood: per-pixel basin labels (0 = never reached or ridge)
/// and the ridge mask marking pixels where two basins meet.
pub struct FloodResult {
    pub labels: Vec<u32>,
    pub ridge: Vec<bool>,
}

/// Floods `surface` from the nonzero labels in `seeds`.
///
/// `domain`, when given, restricts flooding to true pixels. A popped pixel
/// adjacent to exactly one basin joins it; a pixel adjacent to two or more
/// becomes a ridge pixel and does not propagate.
pub fn flood(
    surface: &[f64],
    height: usize,
    width: usize,
    seeds: &[u32],
    domain: Option<&[bool]>,
) -> FloodResult {
    assert_eq!(surface.len(), height * width);
    assert_eq!(seeds.len(), surface.len());
    if let Some(d) = domain {
        assert_eq!(d.len(), surface.len());
    }
    let in_domain = |idx: usize| domain.is_none_or(|d| d[idx]);

    let mut labels = seeds.to_vec();
    let mut ridge = vec![false; surface.len()];
    let mut queued = vec![false; surface.len()];
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();

    let neighbors = |idx: usize| {
        let (y, x) = (idx / width, idx % width);
        NEIGHBORS_8.iter().filter_map(move |&(dy, dx)| {
            let ny = y as isize + dy;
            let nx = x as isize + dx;
            if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                None
            } else {
                Some(ny as usize * width + nx as usize)
            }
        })
    };

    for idx in 0..surface.len() {
        if labels[idx] == 0 && in_domain(idx) && neighbors(idx).any(|n| labels[n] != 0) {
            queued[idx] = true;
            heap.push(Entry {
                value: surface[idx],
                idx: idx as u32,
            });
        }
    }

    while let Some(Entry { idx, .. }) = heap.pop() {
        let idx = idx as usize;
        if labels[idx] != 0 || ridge[idx] {
            continue;
        }
        let mut found: Option<u32> = None;
        let mut conflict = false;
        for n in neighbors(idx) {
            let l = labels[n];
            if l != 0 {
                match found {
                    None => found = Some(l),
                    Some(f) if f != l => {
                        conflict = true;
                        break;
                    }
                    _ => {}
                }
            }
        }
        if conflict {
            ridge[idx] = true;
            continue;
        }
        let label = found.expect("queued pixel always has a labelled neighbor");
        labels[idx] = label;
        for n in neighbors(idx) {
            if labels[n] == 0 && !ridge[n] && !queued[n] && in_domain(n) {
                queued[n] = true;
                heap.push(Entry {
                    value: surface[n],
                    idx: n as u32,
                });
            }
        }
    }

    FloodResult { labels, ridge }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_seed_floods_everything_without_ridges() {
        let surface = vec![0.0; 9];
        let mut seeds = vec![0u32; 9];
        seeds[4] = 1;
        let res = flood(&surface, 3, 3, &seeds, None);
        assert!(res.labels.iter().all(|&l| l == 1));
        assert!(res.ridge.iter().all(|&r| !r));
    }

    #[test]
    fn two_seeds_meet_on_a_ridge() {
        // 5 columns, seeds on the far left/right of the middle row
        let (h, w) = (5, 5);
        let surface = vec![0.0; h * w];
        let mut seeds = vec![0u32; h * w];
        for y in 0..h {
            seeds[y * w] = 1;
            seeds[y * w + w - 1] = 2;
        }
        let res = flood(&surface, h, w, &seeds, None);
        let ridge_count = res.ridge.iter().filter(|&&r| r).count();
        assert!(ridge_count > 0);
        // both basins still own their seed columns
        for y in 0..h {
            assert_eq!(res.labels[y * w], 1);
            assert_eq!(res.labels[y * w + w - 1], 2);
        }
        // no pixel carries both: labels and ridge are disjoint
        for i in 0..h * w {
            assert!(!(res.labels[i] != 0 && res.ridge[i]));
        }
    }

    #[test]
    fn flood_respects_domain() {
        let (h, w) = (3, 3);
        let surface = vec![0.0; 9];
        let mut seeds = vec![0u32; 9];
        seeds[0] = 1;
        let mut domain = vec![true; 9];
        domain[8] = false;
        let res = flood(&surface, h, w, &seeds, Some(&domain));
        assert_eq!(res.labels[8], 0);
        assert_eq!(res.labels[4], 1);
    }

    #[test]
    fn lower_surface_floods_first() {
        // a valley column between two seeds biases the meeting point
        let (h, w) = (1, 7);
        let surface = vec![0.5, 0.1, 0.1, 0.1, 0.9, 0.9, 0.5];
        let mut seeds = vec![0u32; 7];
        seeds[0] = 1;
        seeds[6] = 2;
        let res = flood(&surface, h, w, &seeds, None);
        // basin 1 claims the cheap valley up to the expensive cells
        assert_eq!(&res.labels[1..4], &[1, 1, 1]);
    }
}
