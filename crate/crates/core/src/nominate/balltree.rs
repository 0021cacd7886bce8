//! Ball tree. Each node is split at the median of the points' projections onto
//! the axis between two far-apart members, and bounded by a ball around the
//! node centroid.

use super::{dense_sq_distance, TopK};

/// Slack on the ball lower bound; centroid and radius carry rounding error.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    centroid: Vec<f64>,
    radius: f64,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct BallTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl BallTree {
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

    fn farthest_from(&self, start: usize, end: usize, from: &[f64]) -> (usize, f64) {
        self.order[start..end]
            .iter()
            .map(|&i| (i, dense_sq_distance(&self.points[i], from)))
            .fold(
                (self.order[start], -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let dim = self.points[self.order[start]].len();
        let count = (end - start) as f64;
        let mut centroid = vec![0.0; dim];
        for &i in &self.order[start..end] {
            for (c, x) in centroid.iter_mut().zip(&self.points[i]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= count);
        let (far_a, radius_sq) = self.farthest_from(start, end, &centroid);

        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            centroid,
            radius: radius_sq.sqrt(),
            children: None,
        });
        if end - start <= leaf_size || radius_sq == 0.0 {
            return id;
        }

        let anchor = self.points[far_a].clone();
        let (far_b, _) = self.farthest_from(start, end, &anchor);
        let axis: Vec<f64> = self.points[far_b].iter().zip(&anchor).map(|(b, a)| b - a).collect();
        let project = |p: &[f64]| p.iter().zip(&axis).map(|(x, a)| x * a).sum::<f64>();
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            project(&points[a]).total_cmp(&project(&points[b])).then(a.cmp(&b))
        });
        let left = self.build_node(start, start + mid, leaf_size);
        let right = self.build_node(start + mid, end, leaf_size);
        self.nodes[id].children = Some((left, right));
        id
    }

    pub fn depth(&self) -> usize {
        fn walk(tree: &BallTree, node: usize) -> usize {
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

    fn lower_bound(&self, node: usize, query: &[f64]) -> f64 {
        let n = &self.nodes[node];
        (dense_sq_distance(&n.centroid, query).sqrt() - n.radius).max(0.0)
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
                let dl = self.lower_bound(l, query);
                let dr = self.lower_bound(r, query);
                let visits = if dl <= dr {
                    [(l, dl), (r, dr)]
                } else {
                    [(r, dr), (l, dl)]
                };
                for (child, lb) in visits {
                    if top.bound().is_some_and(|b| lb > b.sqrt() + BOUND_SLACK) {
                        continue;
                    }
                    self.search_node(child, query, top);
                }
            }
        }
    }
}
