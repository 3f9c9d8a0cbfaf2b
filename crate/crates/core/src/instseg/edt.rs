//! Exact Euclidean distance transform.
//!
//! Two passes over the grid: a row scan producing the horizontal distance to
//! the nearest background pixel, then a column scan minimizing
//! `(dy)^2 + g^2` over the row results. Squared distances stay in integer
//! arithmetic, so the result is exact and bit-stable.

/// Squared distance assigned when no background pixel exists at all.
pub const UNREACHABLE: u64 = u64::MAX;

/// Squared Euclidean distance of every true pixel to the nearest false
/// pixel; false pixels get 0. Returns [`UNREACHABLE`] everywhere when the
/// mask has no false pixel.
pub fn squared_distance_transform(mask: &[bool], height: usize, width: usize) -> Vec<u64> {
    assert_eq!(mask.len(), height * width);
    let inf = u64::MAX;

    // Row pass: distance in pixels to the nearest false pixel in the row.
    let mut row_dist = vec![inf; mask.len()];
    for y in 0..height {
        let base = y * width;
        let mut last_false: Option<usize> = None;
        for x in 0..width {
            if !mask[base + x] {
                row_dist[base + x] = 0;
                last_false = Some(x);
            } else if let Some(lf) = last_false {
                row_dist[base + x] = (x - lf) as u64;
            }
        }
        last_false = None;
        for x in (0..width).rev() {
            if !mask[base + x] {
                last_false = Some(x);
            } else if let Some(lf) = last_false {
                let d = (lf - x) as u64;
                if d < row_dist[base + x] {
                    row_dist[base + x] = d;
                }
            }
        }
    }

    // Column pass: exact minimum of (dy)^2 + g^2 scanning outward with
    // pruning once the vertical term alone exceeds the best candidate.
    let mut out = vec![0u64; mask.len()];
    for x in 0..width {
        for y in 0..height {
            let idx = y * width + x;
            if !mask[idx] {
                continue;
            }
            let mut best = match row_dist[idx] {
                d if d == inf => inf,
                d => d * d,
            };
            for dy in 1..height as u64 {
                if dy * dy >= best {
                    break;
                }
                if dy as usize <= y {
                    let g = row_dist[(y - dy as usize) * width + x];
                    if g != inf {
                        let cand = dy * dy + g * g;
                        if cand < best {
                            best = cand;
                        }
                    }
                }
                if y + (dy as usize) < height {
                    let g = row_dist[(y + dy as usize) * width + x];
                    if g != inf {
                        let cand = dy * dy + g * g;
                        if cand < best {
                            best = cand;
                        }
                    }
                }
            }
            out[idx] = if best == inf { UNREACHABLE } else { best };
        }
    }
    out
}

/// Exact Euclidean distance transform; +inf where no background exists.
pub fn distance_transform(mask: &[bool], height: usize, width: usize) -> Vec<f64> {
    squared_distance_transform(mask, height, width)
        .into_iter()
        .map(|sq| {
            if sq == UNREACHABLE {
                f64::INFINITY
            } else {
                (sq as f64).sqrt()
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn brute_force_squared(mask: &[bool], height: usize, width: usize) -> Vec<u64> {
    let mut out = vec![0u64; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            if !mask[idx] {
                continue;
            }
            let mut best = UNREACHABLE;
            for yy in 0..height {
                for xx in 0..width {
                    if !mask[yy * width + xx] {
                        let dy = (y as i64 - yy as i64).unsigned_abs();
                        let dx = (x as i64 - xx as i64).unsigned_abs();
                        best = best.min(dy * dy + dx * dx);
                    }
                }
            }
            out[idx] = best;
        }
    }
    out
}
