//! Exact nearest-neighbor search over fixed-dimension real vectors.
//!
//! Ties are resolved toward the smallest stored id, so results match a
//! linear scan bit for bit.

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    data: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Squared Euclidean distance, summed in index order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

impl KdTree {
    /// Builds an index over `data`, a row-major `count × dim` buffer.
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("index dimension must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        let n = data.len() / dim;
        let mut tree = KdTree {
            dim,
            data,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let node_id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return node_id;
        }
        // Split on the axis with the widest extent.
        let mut axis = 0;
        let mut widest = f64::NEG_INFINITY;
        for a in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let x = self.data[i * self.dim + a];
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        if widest <= 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return node_id;
        }

        let mid = start + (end - start) / 2;
        let dim = self.dim;
        let data = &self.data;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * dim + axis].total_cmp(&data[b * dim + axis])
        });
        let value = self.data[self.order[mid] * dim + axis];

        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[node_id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        node_id
    }

    /// Returns `(id, distance)` of the stored vector closest to `query`.
    pub fn nearest(&self, query: &[f64]) -> Result<(usize, f64)> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, query, &mut best);
        Ok((best.1, best.0.sqrt()))
    }

    fn search(&self, node: usize, query: &[f64], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    let d2 = squared_distance(self.point(id), query);
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, best);
                // Non-strict so equal-distance candidates with smaller ids are seen.
                if diff * diff <= best.0 {
                    self.search(far, query, best);
                }
            }
        }
    }
}
