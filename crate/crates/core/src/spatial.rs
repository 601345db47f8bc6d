//! Exact nearest-neighbour search over 3D points.

use alloc::vec::Vec;

use crate::linalg::{self, Vec3};

const LEAF_SIZE: usize = 8;

/// Static k-d tree. Queries are exact; ties resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Point indices, permuted so every node owns a contiguous range.
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    start: u32,
    end: u32,
    axis: u8,
    split: f64,
    /// Child node indices, `u32::MAX` for leaves.
    left: u32,
    right: u32,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { start: start as u32, end: end as u32, axis: 0, split: 0.0, left: u32::MAX, right: u32::MAX });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis]).then(a.cmp(&b))
        });
        let split = self.points[self.order[mid] as usize][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u8;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    /// Index and squared distance of the point nearest to `q`, `None` for an empty tree.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.descend(0, q, &mut best);
        Some(best)
    }

    fn descend(&self, id: u32, q: Vec3, best: &mut (usize, f64)) {
        let node = self.nodes[id as usize];
        if node.left == u32::MAX {
            for &i in &self.order[node.start as usize..node.end as usize] {
                let d = linalg::norm_sq(linalg::sub(self.points[i as usize], q));
                if d < best.1 || (d == best.1 && (i as usize) < best.0) {
                    *best = (i as usize, d);
                }
            }
            return;
        }
        let delta = q[node.axis as usize] - node.split;
        let (near, far) = if delta < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.descend(near, q, best);
        // `<=` keeps equal-distance points with lower indices reachable
        if delta * delta <= best.1 {
            self.descend(far, q, best);
        }
    }
}
