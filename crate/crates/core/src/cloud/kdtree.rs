//! Static kd-tree over a flat coordinate array, for closed-ball queries and
//! nearest-neighbor distances in any dimension.

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
struct Node {
    start: usize,
    end: usize,
    /// Child node indices; `None` for leaves.
    children: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    dim: usize,
    /// Point indices, permuted so every node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
    /// Per node: `dim` lower bounds followed by `dim` upper bounds.
    bounds: Vec<f64>,
}

impl KdTree {
    pub(crate) fn build(coords: &[f64], dim: usize) -> Self {
        let count = if dim == 0 { 0 } else { coords.len() / dim };
        let mut tree = KdTree {
            dim,
            order: (0..count).collect(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if count > 0 {
            tree.build_node(coords, 0, count);
        }
        tree
    }

    fn build_node(&mut self, coords: &[f64], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, children: None });
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for d in 0..dim {
                let v = coords[i * dim + d];
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[axis] <= lo[axis] {
            // All points coincide.
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis]).then(a.cmp(&b))
        });
        let left = self.build_node(coords, start, mid);
        let right = self.build_node(coords, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn node_bounds(&self, id: usize) -> (&[f64], &[f64]) {
        let b = &self.bounds[2 * self.dim * id..2 * self.dim * (id + 1)];
        b.split_at(self.dim)
    }

    /// Squared distance from `x` to the node's box, and squared distance to
    /// its farthest corner.
    fn box_distances(&self, id: usize, x: &[f64]) -> (f64, f64) {
        let (lo, hi) = self.node_bounds(id);
        let mut near = 0.0;
        let mut far = 0.0;
        for d in 0..self.dim {
            let below = lo[d] - x[d];
            let above = x[d] - hi[d];
            let gap = below.max(above).max(0.0);
            near += gap * gap;
            let reach = (x[d] - lo[d]).abs().max((hi[d] - x[d]).abs());
            far += reach * reach;
        }
        (near, far)
    }

    /// Calls `visit` on every index with `|p - x|^2 <= r2`, in a fixed
    /// traversal order.
    pub(crate) fn for_each_in_ball(&self, coords: &[f64], x: &[f64], r2: f64, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let dim = self.dim;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (near, far) = self.box_distances(id, x);
            if near > r2 {
                continue;
            }
            let node = &self.nodes[id];
            if far <= r2 {
                // Box inside the ball: no descent, but points are still tested
                // so rounding cannot admit a point the linear scan rejects.
                for &i in &self.order[node.start..node.end] {
                    if sq_dist(&coords[i * dim..(i + 1) * dim], x) <= r2 {
                        visit(i);
                    }
                }
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if sq_dist(&coords[i * dim..(i + 1) * dim], x) <= r2 {
                            visit(i);
                        }
                    }
                }
            }
        }
    }

    /// Smallest positive squared distance from `x` to a point other than
    /// `skip`; `None` when every other point coincides with `x` or there is
    /// none.
    pub(crate) fn nearest_positive_sq(&self, coords: &[f64], x: &[f64], skip: Option<usize>) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let dim = self.dim;
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (near, _) = self.box_distances(id, x);
            if near >= best {
                continue;
            }
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    let (dl, _) = self.box_distances(l, x);
                    let (dr, _) = self.box_distances(r, x);
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if Some(i) == skip {
                            continue;
                        }
                        let d = sq_dist(&coords[i * dim..(i + 1) * dim], x);
                        if d > 0.0 && d < best {
                            best = d;
                        }
                    }
                }
            }
        }
        best.is_finite().then_some(best)
    }

    /// Index of a point nearest to `x` (ties: smallest index).
    pub(crate) fn nearest(&self, coords: &[f64], x: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let dim = self.dim;
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (near, _) = self.box_distances(id, x);
            if let Some((_, b)) = best {
                if near > b {
                    continue;
                }
            }
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = sq_dist(&coords[i * dim..(i + 1) * dim], x);
                        let better = match best {
                            None => true,
                            Some((bi, b)) => d < b || (d == b && i < bi),
                        };
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
            }
        }
        best
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coords(count: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn ball_query_matches_linear_scan() {
        for dim in 1..=4 {
            let coords = random_coords(700, dim, dim as u64);
            let tree = KdTree::build(&coords, dim);
            let queries = random_coords(50, dim, 99);
            for (q, r) in queries.chunks(dim).zip([0.05, 0.2, 0.5, 1.5, 3.0].iter().cycle()) {
                let mut got = Vec::new();
                tree.for_each_in_ball(&coords, q, r * r, |i| got.push(i));
                got.sort_unstable();
                let want: Vec<usize> = (0..700)
                    .filter(|&i| sq_dist(&coords[i * dim..(i + 1) * dim], q) <= r * r)
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let coords = random_coords(500, 3, 5);
        let tree = KdTree::build(&coords, 3);
        for i in 0..500 {
            let x = &coords[i * 3..i * 3 + 3];
            let got = tree.nearest_positive_sq(&coords, x, Some(i)).unwrap();
            let want = (0..500)
                .filter(|&j| j != i)
                .map(|j| sq_dist(&coords[j * 3..j * 3 + 3], x))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(got, want);
            assert_eq!(tree.nearest(&coords, x).unwrap().0, i);
        }
    }

    #[test]
    fn coincident_points() {
        let coords = vec![0.5; 2 * 40];
        let tree = KdTree::build(&coords, 2);
        let mut hits = 0;
        tree.for_each_in_ball(&coords, &[0.5, 0.5], 0.0, |_| hits += 1);
        assert_eq!(hits, 40);
        assert_eq!(tree.nearest_positive_sq(&coords, &[0.5, 0.5], None), None);
    }
}
