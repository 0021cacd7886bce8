//! KD-tree with median splits on the coordinate of widest spread.

use super::{dense_sq_distance, TopK};

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>, leaf_size: usize) -> Self {
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len(), leaf_size.max(1));
        }
        tree
    }

    fn bounds(&self, start: usize, end: usize) -> (Vec<f64>, Vec<f64>) {
        let dim = self.points[self.order[start]].len();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for (d, &x) in self.points[i].iter().enumerate() {
                lower[d] = lower[d].min(x);
                upper[d] = upper[d].max(x);
            }
        }
        (lower, upper)
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let (lower, upper) = self.bounds(start, end);
        let (split_dim, spread) = lower
            .iter()
            .zip(&upper)
            .map(|(lo, hi)| hi - lo)
            .enumerate()
            .fold((0, 0.0), |best, (d, s)| if s > best.1 { (d, s) } else { best });
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            lower,
            upper,
            children: None,
        });
        if end - start <= leaf_size || spread == 0.0 {
            return id;
        }

        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid, |&a, &b| points[a][split_dim].total_cmp(&points[b][split_dim]));
        let left = self.build_node(start, start + mid, leaf_size);
        let right = self.build_node(start + mid, end, leaf_size);
        self.nodes[id].children = Some((left, right));
        id
    }

    pub fn depth(&self) -> usize {
        fn walk(tree: &KdTree, node: usize) -> usize {
            match tree.nodes[node].children {
                None => 0,
                Some((l, r)) => 1 + walk(tree, l).max(walk(tree, r)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(self, 0)
        }
    }

    /// Squared distance from `query` to the node's bounding box.
    fn min_sq_distance(&self, node: usize, query: &[f64]) -> f64 {
        let n = &self.nodes[node];
        let mut sum = 0.0;
        for ((&q, &lo), &hi) in query.iter().zip(&n.lower).zip(&n.upper) {
            let gap = if q < lo {
                lo - q
            } else if q > hi {
                q - hi
            } else {
                0.0
            };
            sum += gap * gap;
        }
        sum
    }

    pub(crate) fn search(&self, query: &[f64], top: &mut TopK<'_>) {
        if !self.nodes.is_empty() {
            self.search_node(0, query, top);
        }
    }

    fn search_node(&self, node: usize, query: &[f64], top: &mut TopK<'_>) {
        match self.nodes[node].children {
            None => {
                let n = &self.nodes[node];
                for &i in &self.order[n.start..n.end] {
                    top.offer(dense_sq_distance(&self.points[i], query), i);
                }
            }
            Some((l, r)) => {
                let dl = self.min_sq_distance(l, query);
                let dr = self.min_sq_distance(r, query);
                let visits = if dl <= dr {
                    [(l, dl), (r, dr)]
                } else {
                    [(r, dr), (l, dl)]
                };
                for (child, lb) in visits {
                    // Equal bounds may still hold a tie with a smaller id.
                    if top.bound().is_some_and(|b| lb > b) {
                        continue;
                    }
                    self.search_node(child, query, top);
                }
            }
        }
    }
}
