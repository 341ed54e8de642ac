//! Exact k-nearest-neighbour search over low-dimensional points.
//!
//! Results are ordered by `(squared distance, index)`, so ties always resolve
//! to the smaller index and the tree agrees with a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds a tree over `points`, a flat row-major array with `dim` columns.
    pub fn new(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points: points.to_vec(),
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for d in 0..self.dim {
            let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points[i * self.dim + d];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = d;
            }
        }
        let mid = start + (end - start) / 2;
        let dim = self.dim;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * dim + best_dim]
                .total_cmp(&pts[b * dim + best_dim])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] * dim + best_dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim: best_dim,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query`, skipping `exclude` if given.
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut heap);
        }
        heap.into_sorted_vec()
    }

    pub fn nearest(&self, query: &[f64]) -> Option<Neighbor> {
        self.knn(query, 1, None).into_iter().next()
    }

    fn search(&self, node: usize, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        dist2: dist2(self.point(i), q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
}

/// Brute-force reference with the same ordering contract as [`KdTree::knn`].
/// Closest point by linear scan; the lowest index wins ties.
pub fn nearest_brute(points: &[f64], dim: usize, query: &[f64]) -> Option<Neighbor> {
    let mut best: Option<Neighbor> = None;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let d = dist2(p, query);
        if best.as_ref().map_or(true, |b| d < b.dist2) {
            best = Some(Neighbor { dist2: d, index: i });
        }
    }
    best
}

pub fn knn_brute(points: &[f64], dim: usize, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
    let n = points.len() / dim;
    let mut all: Vec<Neighbor> = (0..n)
        .filter(|&i| Some(i) != exclude)
        .map(|i| Neighbor {
            dist2: dist2(&points[i * dim..(i + 1) * dim], query),
            index: i,
        })
        .collect();
    all.sort();
    all.truncate(k);
    all
}
