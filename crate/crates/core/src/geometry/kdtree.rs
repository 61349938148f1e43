use super::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Immutable kd-tree answering exact k-nearest-neighbor queries.
///
/// Neighbors are ordered by ascending distance, ties broken by ascending point id.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    // points[order[i]], laid out leaf by leaf for cache-friendly scans
    packed: Vec<Point3>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn new(points: Vec<Point3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        let packed = order.iter().map(|&i| points[i]).collect();
        Self {
            points,
            order,
            packed,
            nodes,
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, N)` nearest points to `query`.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        let mut best = Vec::with_capacity(k.min(self.len()) + 1);
        self.knn_into(query, k, &mut best)?;
        Ok(best
            .into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                distance: d2.sqrt(),
            })
            .collect())
    }

    /// Allocation-free variant of [`knn`](Self::knn): fills `best` with
    /// `(squared distance, id)` pairs in the same order.
    pub fn knn_into(&self, query: &Point3, k: usize, best: &mut Vec<(f64, usize)>) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        best.clear();
        let k = k.min(self.len());
        let mut off = [0.0; 3];
        self.search(0, query, k, 0.0, &mut off, best);
        Ok(())
    }

    pub fn nearest(&self, query: &Point3) -> Result<Neighbor> {
        Ok(self.knn(query, 1)?[0])
    }

    // `rd` is the squared distance from `q` to the node's cell, tracked through
    // the per-axis offsets in `off`.
    fn search(&self, node: usize, q: &Point3, k: usize, rd: f64, off: &mut [f64; 3], best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, &id) in self.packed[start..end].iter().zip(&self.order[start..end]) {
                    let d2 = (p - q).norm_squared();
                    offer(best, k, d2, id);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, rd, off, best);
                let old = off[axis];
                let far_rd = rd - old * old + diff * diff;
                // `<=` so that equal-distance candidates with smaller ids are still visited
                if best.len() < k || far_rd <= best[best.len() - 1].0 {
                    off[axis] = diff;
                    self.search(far, q, k, far_rd, off, best);
                    off[axis] = old;
                }
            }
        }
    }
}

fn offer(best: &mut Vec<(f64, usize)>, k: usize, d2: f64, id: usize) {
    let cand = (d2, id);
    if best.len() == k {
        let worst = best[k - 1];
        if cand.0 > worst.0 || (cand.0 == worst.0 && cand.1 > worst.1) {
            return;
        }
        best.pop();
    }
    let mut pos = best.len();
    while pos > 0 {
        let (d, i) = best[pos - 1];
        if d < cand.0 || (d == cand.0 && i < cand.1) {
            break;
        }
        pos -= 1;
    }
    best.insert(pos, cand);
}

fn build(points: &[Point3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return me;
    }
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    if hi[axis] - lo[axis] == 0.0 {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return me;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[me] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    me
}
