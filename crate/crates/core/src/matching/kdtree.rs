//! Exact k-d tree over 128-d descriptors.
//!
//! Queries return the true two nearest neighbors under squared L2 distance,
//! ties broken by lower index. Distances are accumulated with
//! [`squared_distance`] in a fixed order, so results are bit-identical to a
//! linear scan using the same function.

use crate::error::{Error, Result};
use crate::features::{Descriptor, DESCRIPTOR_LEN};

const LEAF_SIZE: usize = 8;

#[inline]
pub fn squared_distance(a: &[f32; DESCRIPTOR_LEN], b: &[f32; DESCRIPTOR_LEN]) -> f32 {
    let mut acc = 0.0f32;
    for i in 0..DESCRIPTOR_LEN {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the descriptor list the index was built from.
    pub index: usize,
    pub squared_distance: f32,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        (self.squared_distance as f64).sqrt()
    }

    #[inline]
    fn key(&self) -> (f32, usize) {
        (self.squared_distance, self.index)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f32, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct DescriptorIndex {
    points: Vec<[f32; DESCRIPTOR_LEN]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

/// Builds an index over the non-degenerate descriptors.
pub fn build_index(descriptors: &[Descriptor]) -> Result<DescriptorIndex> {
    let (points, ids): (Vec<_>, Vec<_>) = descriptors
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.degenerate)
        .map(|(i, d)| (d.values, i))
        .unzip();
    DescriptorIndex::from_points(points, ids)
}

impl DescriptorIndex {
    fn from_points(points: Vec<[f32; DESCRIPTOR_LEN]>, ids: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        build(&points, &mut order, 0, &mut nodes);
        let points_sorted = order.iter().map(|&i| points[i]).collect();
        let ids_sorted = order.iter().map(|&i| ids[i]).collect();
        Ok(Self {
            points: points_sorted,
            ids: ids_sorted,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Two nearest neighbors, closest first. The second is `None` when the
    /// index holds a single descriptor.
    pub fn nearest_two(&self, query: &[f32; DESCRIPTOR_LEN]) -> (Neighbor, Option<Neighbor>) {
        let mut best: [Option<Neighbor>; 2] = [None, None];
        self.search(0, query, &mut best);
        (best[0].expect("index is non-empty"), best[1])
    }

    fn search(&self, node: usize, query: &[f32; DESCRIPTOR_LEN], best: &mut [Option<Neighbor>; 2]) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let cand = Neighbor {
                        index: self.ids[i],
                        squared_distance: squared_distance(&self.points[i], query),
                    };
                    offer(best, cand);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, best);
                let bound = diff * diff;
                let prune = matches!(best[1], Some(w) if bound > w.squared_distance);
                if !prune {
                    self.search(far, query, best);
                }
            }
        }
    }
}

fn offer(best: &mut [Option<Neighbor>; 2], cand: Neighbor) {
    let better = |a: &Neighbor, b: &Option<Neighbor>| b.is_none_or(|b| a.key() < b.key());
    if better(&cand, &best[0]) {
        best[1] = best[0];
        best[0] = Some(cand);
    } else if better(&cand, &best[1]) {
        best[1] = Some(cand);
    }
}

fn build(
    points: &[[f32; DESCRIPTOR_LEN]],
    order: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mut dim = 0;
    let mut widest = -1.0f32;
    #[allow(clippy::needless_range_loop)]
    for d in 0..DESCRIPTOR_LEN {
        let (lo, hi) = order.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(points[i][d]), hi.max(points[i][d]))
        });
        if hi - lo > widest {
            widest = hi - lo;
            dim = d;
        }
    }
    if widest <= 0.0 {
        // all points identical
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    order.sort_by(|&a, &b| points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b)));
    let mid = order.len() / 2;
    let value = points[order[mid]][dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(points, lo, offset, nodes);
    let right = build(points, hi, offset + mid, nodes);
    nodes[id] = Node::Split { dim, value, left, right };
    id
}
