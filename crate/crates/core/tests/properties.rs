//! Property tests for the library's structural invariants.

mod common;

use common::{permute_labels, random_classes_for, random_label_map, random_label_pair};
use nucleopipe::classify::classify_instances;
use nucleopipe::instseg::{foreground_markers, threshold_edges, WatershedConfig};
use nucleopipe::losses::{combined_from_components, dice_loss_f64, jaccard_loss_f64};
use nucleopipe::maps::{argmax_classes, ProbMap};
use nucleopipe::metrics::pq;
use nucleopipe::synth::{edges_from_labels, onehot_from_classes};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binary_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY.prop_map(f64::from), len)
}

fn unit_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, len)
}

proptest! {
    #[test]
    fn dice_is_symmetric_on_binary_maps(a in binary_vec(48), b in binary_vec(48)) {
        let ab = dice_loss_f64(&a, &b).unwrap();
        let ba = dice_loss_f64(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
    }

    #[test]
    fn losses_are_nonnegative_and_finite(pred in unit_vec(48), target in binary_vec(48)) {
        let d = dice_loss_f64(&pred, &target).unwrap();
        let j = jaccard_loss_f64(&pred, &target).unwrap();
        let c = combined_from_components(d, j);
        for v in [d, j, c] {
            prop_assert!(v.is_finite() && (0.0..=1.0).contains(&v), "loss {v}");
        }
        prop_assert!(c <= d.min(j) + 1e-15);
    }

    #[test]
    fn raising_a_hit_never_hurts_dice(
        pred in unit_vec(32),
        target in binary_vec(32),
        bump in 0.0f64..0.5,
        idx in 0usize..32,
    ) {
        // increasing p at a target-1 pixel never increases the dice loss
        prop_assume!(target[idx] == 1.0);
        let before = dice_loss_f64(&pred, &target).unwrap();
        let mut bumped = pred.clone();
        bumped[idx] = (bumped[idx] + bump).min(1.0);
        let after = dice_loss_f64(&bumped, &target).unwrap();
        prop_assert!(after <= before + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pq_is_swap_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, pred) = random_label_pair(&mut rng, 24, 6);
        let a = pq(&gt, &pred).unwrap();
        let b = pq(&pred, &gt).unwrap();
        prop_assert_eq!(a.fp, b.fn_);
        prop_assert_eq!(a.fn_, b.fp);
        prop_assert!((a.pq - b.pq).abs() < 1e-15);
    }

    #[test]
    fn pq_ignores_instance_relabeling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, pred) = random_label_pair(&mut rng, 24, 6);
        let base = pq(&gt, &pred).unwrap();
        // reverse the id order on both sides
        let k_gt = gt.instance_count();
        let perm_gt: Vec<u32> = (1..=k_gt).rev().collect();
        let k_pred = pred.instance_count();
        let perm_pred: Vec<u32> = (1..=k_pred).rev().collect();
        let shuffled = pq(&permute_labels(&gt, &perm_gt), &permute_labels(&pred, &perm_pred))
            .unwrap();
        prop_assert!((base.pq - shuffled.pq).abs() < 1e-15);
        prop_assert_eq!((base.tp, base.fp, base.fn_), (shuffled.tp, shuffled.fp, shuffled.fn_));
    }

    #[test]
    fn classify_is_relabeling_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_label_map(&mut rng, 20, 6);
        let classes = random_classes_for(&mut rng, &labels);
        let (records, _) = classify_instances(&labels, &classes).unwrap();
        let k = labels.instance_count();
        prop_assume!(k > 0);
        let perm: Vec<u32> = (1..=k).rev().collect();
        let (shuffled, _) = classify_instances(&permute_labels(&labels, &perm), &classes).unwrap();
        for rec in &records {
            let moved = &shuffled[perm[rec.id as usize - 1] as usize - 1];
            prop_assert_eq!(moved.class, rec.class);
            prop_assert_eq!(moved.area, rec.area);
            prop_assert_eq!(moved.histogram, rec.histogram);
        }
    }

    #[test]
    fn raising_edge_threshold_grows_markers(seed in any::<u64>(), t0 in 0.0f32..1.0, t1 in 0.0f32..1.0) {
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_label_map(&mut rng, 20, 5);
        let semantic = nucleopipe::synth::semantic_from_labels(&labels);
        let edge_values: Vec<f32> = (0..labels.height() * labels.width())
            .map(|i| ((i as u64).wrapping_mul(31).wrapping_add(seed) % 100) as f32 / 100.0)
            .collect();
        let edges = ProbMap::new(labels.height(), labels.width(), edge_values).unwrap();
        let marker_pixels = |threshold: f32| -> usize {
            let cfg = WatershedConfig { edge_threshold: threshold, ..WatershedConfig::default() };
            let mask = threshold_edges(&edges, &cfg);
            let (field, _) = foreground_markers(&semantic, &mask, &cfg).unwrap();
            field.iter().filter(|&&l| l != 0).count()
        };
        prop_assert!(marker_pixels(hi) >= marker_pixels(lo));
    }

    #[test]
    fn component_labeling_matches_bfs_oracle(seed in any::<u64>()) {
        use nucleopipe::components::{label_components, NEIGHBORS_8};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(1..18usize);
        let w = rng.random_range(1..18usize);
        let mask: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.5)).collect();
        let (labels, count) = label_components(&mask, h, w);

        // independent BFS flood-fill
        let mut seen = vec![0u32; h * w];
        let mut bfs_count = 0u32;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..h * w {
            if !mask[start] || seen[start] != 0 {
                continue;
            }
            bfs_count += 1;
            seen[start] = bfs_count;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                let (y, x) = (idx / w, idx % w);
                for &(dy, dx) in &NEIGHBORS_8 {
                    let ny = y as isize + dy;
                    let nx = x as isize + dx;
                    if ny < 0 || nx < 0 || ny as usize >= h || nx as usize >= w {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if mask[n] && seen[n] == 0 {
                        seen[n] = bfs_count;
                        queue.push_back(n);
                    }
                }
            }
        }
        prop_assert_eq!(count, bfs_count);
        // identical partitions: two pixels share a label iff BFS agrees
        for idx in 0..h * w {
            prop_assert_eq!(labels[idx] == 0, seen[idx] == 0);
        }
        let mut label_to_bfs = vec![0u32; count as usize + 1];
        for idx in 0..h * w {
            if labels[idx] == 0 { continue; }
            let slot = &mut label_to_bfs[labels[idx] as usize];
            if *slot == 0 {
                *slot = seen[idx];
            } else {
                prop_assert_eq!(*slot, seen[idx], "label split across BFS components");
            }
        }
    }

    #[test]
    fn label_edges_stay_in_foreground(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_label_map(&mut rng, 20, 6);
        let edges = edges_from_labels(&labels);
        for (idx, &e) in edges.iter().enumerate() {
            if e {
                prop_assert!(labels.data()[idx] != 0);
            }
        }
    }

    #[test]
    fn every_marker_becomes_exactly_one_instance(seed in any::<u64>()) {
        use nucleopipe::instseg::{build_markers, MarkerState};
        // smooth-ish random probability fields exercise the soft path
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (24usize, 24usize);
        let blob = |cy: f64, cx: f64, r: f64, y: usize, x: usize| {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            (1.0 - d / r).clamp(0.0, 1.0)
        };
        let centers: Vec<(f64, f64, f64)> = (0..rng.random_range(0..5usize))
            .map(|_| {
                (
                    rng.random_range(4.0..20.0),
                    rng.random_range(4.0..20.0),
                    rng.random_range(4.0..9.0),
                )
            })
            .collect();
        let sem_data: Vec<f32> = (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                centers
                    .iter()
                    .map(|&(cy, cx, r)| blob(cy, cx, r, y, x))
                    .fold(0.0f64, f64::max) as f32
            })
            .collect();
        let edge_data: Vec<f32> = (0..h * w)
            .map(|_| if rng.random_bool(0.2) { 0.5 } else { 0.0 })
            .collect();
        let semantic = ProbMap::new(h, w, sem_data).unwrap();
        let edges = ProbMap::new(h, w, edge_data).unwrap();
        let cfg = WatershedConfig::default();

        let markers = build_markers(&semantic, &edges, &cfg).unwrap();
        let labels = nucleopipe::instseg::segment_instances(&semantic, &edges, &cfg).unwrap();
        prop_assert_eq!(labels.instance_count(), markers.foreground_count);
        // each basin still covers its own marker pixels
        for (idx, state) in markers.states.iter().enumerate() {
            if let MarkerState::Foreground(id) = state {
                prop_assert_eq!(labels.data()[idx], *id);
            }
        }
    }

    #[test]
    fn onehot_argmax_inverts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_label_map(&mut rng, 16, 5);
        let classes = random_classes_for(&mut rng, &labels);
        prop_assert_eq!(argmax_classes(&onehot_from_classes(&classes)), classes);
    }
}
