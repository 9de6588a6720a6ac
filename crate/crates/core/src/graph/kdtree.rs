//! Static kd-tree for fixed-radius queries.

use super::cloud::{sq_dist, PointCloud};

const LEAF_SIZE: usize = 24;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub(crate) struct KdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let n = order.len();
        let root = build_node(cloud, &mut order, 0, n);
        KdTree { cloud, order, root }
    }

    /// Indices `j` with `sq_dist(q, x_j) <= r2`, in unspecified order.
    pub fn within(&self, q: &[f64], r2: f64, out: &mut Vec<usize>) {
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf { start, end } => {
                    for &j in &self.order[*start..*end] {
                        if sq_dist(q, self.cloud.point(j)) <= r2 {
                            out.push(j);
                        }
                    }
                }
                Node::Split { dim, value, left, right } => {
                    let diff = q[*dim] - value;
                    let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                    stack.push(near);
                    if diff * diff <= r2 {
                        stack.push(far);
                    }
                }
            }
        }
    }
}

fn build_node(cloud: &PointCloud, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let dim = widest_dim(cloud, slice);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| cloud.point(a)[dim].total_cmp(&cloud.point(b)[dim]));
    let value = cloud.point(slice[mid])[dim];
    let left = build_node(cloud, order, start, start + mid);
    let right = build_node(cloud, order, start + mid, end);
    Node::Split {
        dim,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn widest_dim(cloud: &PointCloud, idx: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..cloud.dim() {
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = cloud.point(i)[k];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (k, hi - lo);
        }
    }
    best.0
}
