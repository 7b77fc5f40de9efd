//! A k-d tree over fixed-dimension `f32` points with best-bin-first search.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// The two nearest neighbours found for a query, as squared distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoNearest {
    pub nearest: Option<usize>,
    pub d1_sq: f32,
    pub d2_sq: f32,
}

impl TwoNearest {
    fn empty() -> Self {
        TwoNearest {
            nearest: None,
            d1_sq: f32::INFINITY,
            d2_sq: f32::INFINITY,
        }
    }

    #[inline]
    fn offer(&mut self, idx: usize, d: f32) {
        if d < self.d1_sq {
            self.d2_sq = self.d1_sq;
            self.d1_sq = d;
            self.nearest = Some(idx);
        } else if d < self.d2_sq {
            self.d2_sq = d;
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Linear scan over every point; the reference for [`KdTree::bbf_two_nearest`].
pub fn exact_two_nearest(points: &[f32], dim: usize, query: &[f32]) -> TwoNearest {
    let mut best = TwoNearest::empty();
    for (i, p) in points.chunks_exact(dim).enumerate() {
        best.offer(i, squared_distance(p, query));
    }
    best
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { point: usize },
    Split { dim: usize, value: f32, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    bound: f32,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Builds a tree over `points`, a flat row-major array of `dim`-vectors.
    /// Each split is at the median of the dimension with the largest spread.
    pub fn build(points: Vec<f32>, dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "points must be a whole number of {dim}-vectors");
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            nodes: Vec::with_capacity(2 * n),
        };
        if n > 0 {
            let mut idx: Vec<usize> = (0..n).collect();
            tree.build_node(&mut idx);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[f32] {
        &self.points
    }

    #[inline]
    fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build_node(&mut self, idx: &mut [usize]) -> usize {
        if idx.len() == 1 {
            self.nodes.push(Node::Leaf { point: idx[0] });
            return self.nodes.len() - 1;
        }
        let dim = self.widest_dimension(idx);
        let mid = idx.len() / 2;
        let key = |i: &usize| (self.points[i * self.dim + dim], *i);
        idx.select_nth_unstable_by(mid, |a, b| {
            let (va, ia) = key(a);
            let (vb, ib) = key(b);
            va.total_cmp(&vb).then(ia.cmp(&ib))
        });
        let value = self.points[idx[mid] * self.dim + dim];

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { point: usize::MAX });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_node(lo);
        let right = self.build_node(hi);
        self.nodes[slot] = Node::Split { dim, value, left, right };
        slot
    }

    fn widest_dimension(&self, idx: &[usize]) -> usize {
        let mut best = (0usize, f32::NEG_INFINITY);
        for d in 0..self.dim {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for &i in idx {
                let v = self.points[i * self.dim + d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        best.0
    }

    /// Best-bin-first search: branches are explored in order of their
    /// distance to the query along the split planes, stopping after
    /// `max_checks` leaves or once no pending branch can improve the
    /// second-nearest distance.
    pub fn bbf_two_nearest(&self, query: &[f32], max_checks: usize) -> TwoNearest {
        debug_assert_eq!(query.len(), self.dim);
        let mut best = TwoNearest::empty();
        if self.nodes.is_empty() {
            return best;
        }
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Pending { bound: 0.0, node: 0 }));
        let mut checks = 0usize;

        while let Some(Reverse(Pending { bound, mut node })) = heap.pop() {
            if checks >= max_checks.max(1) || bound >= best.d2_sq {
                break;
            }
            loop {
                match self.nodes[node] {
                    Node::Leaf { point } => {
                        best.offer(point, squared_distance(self.point(point), query));
                        checks += 1;
                        break;
                    }
                    Node::Split { dim, value, left, right } => {
                        let diff = query[dim] - value;
                        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                        let far_bound = bound.max(diff * diff);
                        if far_bound < best.d2_sq {
                            heap.push(Reverse(Pending { bound: far_bound, node: far }));
                        }
                        node = near;
                    }
                }
            }
        }
        best
    }

    pub fn exact_two_nearest(&self, query: &[f32]) -> TwoNearest {
        exact_two_nearest(&self.points, self.dim, query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.gen::<f32>()).collect()
    }

    #[test]
    fn unlimited_bbf_is_exact() {
        let dim = 8;
        let pts = random_points(300, dim, 1);
        let tree = KdTree::build(pts.clone(), dim);
        for q in random_points(50, dim, 2).chunks_exact(dim) {
            let a = tree.bbf_two_nearest(q, usize::MAX);
            let b = exact_two_nearest(&pts, dim, q);
            assert_eq!(a.nearest, b.nearest);
            assert_eq!(a.d1_sq, b.d1_sq);
            assert_eq!(a.d2_sq, b.d2_sq);
        }
    }

    #[test]
    fn single_point() {
        let tree = KdTree::build(vec![1.0, 2.0], 2);
        let r = tree.bbf_two_nearest(&[1.0, 2.0], 10);
        assert_eq!(r.nearest, Some(0));
        assert_eq!(r.d1_sq, 0.0);
        assert!(r.d2_sq.is_infinite());
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::build(vec![], 4);
        let r = tree.bbf_two_nearest(&[0.0; 4], 10);
        assert_eq!(r.nearest, None);
    }

    #[test]
    fn duplicate_points_build() {
        let tree = KdTree::build(vec![0.5; 3 * 10], 3);
        let r = tree.bbf_two_nearest(&[0.5, 0.5, 0.5], 200);
        assert_eq!(r.d1_sq, 0.0);
        assert_eq!(r.d2_sq, 0.0);
    }

    #[test]
    fn limited_checks_still_return_candidates() {
        let dim = 16;
        let pts = random_points(500, dim, 3);
        let tree = KdTree::build(pts, dim);
        let r = tree.bbf_two_nearest(&random_points(1, dim, 4), 2);
        assert!(r.nearest.is_some());
        assert!(r.d2_sq.is_finite());
    }
}
