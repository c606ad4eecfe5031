//! Static 3-d tree for exact nearest-neighbour queries over point clouds.

use super::vec3::{self, Vec3};

const LEAF: usize = 12;

/// Balanced k-d tree stored implicitly: each range `[lo, hi)` splits at its
/// midpoint on the axis of largest spread.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    index: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            index: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF {
            return;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.points[lo..hi] {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = lo + (hi - lo) / 2;
        // Sort points and their original indices together.
        let mut pairs: Vec<(Vec3, usize)> = self.points[lo..hi]
            .iter()
            .copied()
            .zip(self.index[lo..hi].iter().copied())
            .collect();
        pairs.select_nth_unstable_by(mid - lo, |a, b| a.0[axis].total_cmp(&b.0[axis]));
        for (k, (p, i)) in pairs.into_iter().enumerate() {
            self.points[lo + k] = p;
            self.index[lo + k] = i;
        }
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Original index and squared distance of the point nearest to `q`.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.points.len(), q, &mut best);
        Some((self.index[best.0], best.1))
    }

    fn search(&self, lo: usize, hi: usize, q: Vec3, best: &mut (usize, f64)) {
        if hi - lo <= LEAF {
            for k in lo..hi {
                let d = vec3::dist2(self.points[k], q);
                if d < best.1 || (d == best.1 && self.index[k] < self.index_or_max(best.0)) {
                    *best = (k, d);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axes[mid] as usize;
        let p = self.points[mid];
        let d = vec3::dist2(p, q);
        if d < best.1 || (d == best.1 && self.index[mid] < self.index_or_max(best.0)) {
            *best = (mid, d);
        }
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }

    fn index_or_max(&self, k: usize) -> usize {
        if k == usize::MAX {
            usize::MAX
        } else {
            self.index[k]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Quantised coordinates force many ties and repeated axis values.
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| {
                [
                    (rng.random_range(0..20) as f64) * 0.1,
                    (rng.random_range(0..20) as f64) * 0.1,
                    0.5,
                ]
            })
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..300 {
            let q = [rng.random_range(-0.2..2.2), rng.random_range(-0.2..2.2), rng.random()];
            let (i, d) = tree.nearest(q).unwrap();
            let (bi, bd) = pts
                .iter()
                .enumerate()
                .map(|(k, &p)| (k, vec3::dist2(p, q)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!(d, bd);
            assert_eq!(i, bi);
        }
    }

    #[test]
    fn empty_tree_has_no_neighbour() {
        assert!(KdTree::new(&[]).nearest([0.0; 3]).is_none());
    }
}
