//! Connected-component labelling over binary masks (8-connected, union-find).

/// Disjoint-set forest with path halving and union by rank.
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Offsets of the 8-neighborhood, row-major order.
pub const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels the 8-connected components of `mask`.
///
/// Returns a row-major label field (0 = background) and the component count.
/// Labels are contiguous `1..=count`, numbered by first row-major encounter,
/// so the output is deterministic.
pub fn label_components(mask: &[bool], height: usize, width: usize) -> (Vec<u32>, u32) {
    assert_eq!(mask.len(), height * width);
    let mut labels = vec![0u32; mask.len()];
    if height == 0 || width == 0 {
        return (labels, 0);
    }

    let mut forest = UnionFind::new(mask.len());
    // Union each foreground pixel with its already-visited neighbors
    // (west, north-west, north, north-east).
    for y in 0..height {
        for x in 0..width {
            let idx = y * width + x;
            if !mask[idx] {
                continue;
            }
            if x > 0 && mask[idx - 1] {
                forest.union(idx as u32, (idx - 1) as u32);
            }
            if y > 0 {
                let up = idx - width;
                if x > 0 && mask[up - 1] {
                    forest.union(idx as u32, (up - 1) as u32);
                }
                if mask[up] {
                    forest.union(idx as u32, up as u32);
                }
                if x + 1 < width && mask[up + 1] {
                    forest.union(idx as u32, (up + 1) as u32);
                }
            }
        }
    }

    let mut next = 0u32;
    let mut root_label = vec![0u32; mask.len()];
    for idx in 0..mask.len() {
        if !mask[idx] {
            continue;
        }
        let root = forest.find(idx as u32) as usize;
        if root_label[root] == 0 {
            next += 1;
            root_label[root] = next;
        }
        labels[idx] = root_label[root];
    }
    (labels, next)
}

/// True when the nonzero pixels carrying `value` in `field` form one
/// 8-connected component (or when there are none).
pub fn is_single_component(field: &[u32], height: usize, width: usize, value: u32) -> bool {
    let mask: Vec<bool> = field.iter().map(|&v| v == value && v != 0).collect();
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return true;
    }
    let (_, count) = label_components(&mask, height, width);
    count == 1
}
