//! Exact k-nearest-neighbour queries over point clouds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use crate::geometry::Vec3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Scene points with optional per-point feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    features: Option<Array2<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(PointCloud { points, features: None })
    }

    pub fn with_features(points: Vec<Vec3>, features: Array2<f64>) -> Result<Self> {
        let mut cloud = PointCloud::new(points)?;
        cloud.set_features(features)?;
        Ok(cloud)
    }

    pub fn set_features(&mut self, features: Array2<f64>) -> Result<()> {
        if features.nrows() != self.points.len() {
            return Err(Error::FeatureShape { rows: features.nrows(), points: self.points.len() });
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced k-d tree. Immutable after construction; queries take `&self`
/// and may run concurrently.
#[derive(Clone, Debug)]
pub struct KdIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Heap entry ordered by (squared distance, index): the heap top is the
/// current worst candidate, and ties resolve toward the lower index.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl KdIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut index = KdIndex { order: (0..points.len()).collect(), points, nodes: Vec::new() };
        index.build_node(0, index.points.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let points = &self.points;
        self.order[start..end].sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec3 {
        self.points[index]
    }

    /// The `k` nearest points in ascending distance; equal distances are
    /// ordered by point index.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.points.len() {
            return Err(Error::TooManyNeighbours { k, n: self.points.len() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        Ok(found
            .into_iter()
            .map(|c| Neighbor { index: c.index, distance: c.d2.sqrt() })
            .collect())
    }

    pub fn nearest(&self, query: &Vec3) -> Neighbor {
        self.k_nearest(query, 1).expect("index is non-empty")[0]
    }

    fn search(&self, node: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate { d2: dist2(&self.points[i], q), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}
