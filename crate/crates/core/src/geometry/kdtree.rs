//! Static k-d tree for exact nearest-neighbour queries.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<const K: usize> {
    points: Vec<[f64; K]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<const K: usize> KdTree<K> {
    pub fn build(points: Vec<[f64; K]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("empty reference set"));
        }
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = tree.points.len();
        tree.build_node(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the axis of widest spread
        let mut lo = [f64::INFINITY; K];
        let mut hi = [f64::NEG_INFINITY; K];
        for &i in &self.order[start..end] {
            for a in 0..K {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..K)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index of the closest point and its squared distance.
    pub fn nearest(&self, q: &[f64; K]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; K], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let p = &self.points[i];
                    let mut d = 0.0;
                    for a in 0..K {
                        let t = p[a] - q[a];
                        d += t * t;
                    }
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Euclidean distance from every query to its closest reference point.
pub fn nearest_distances(queries: &[Vector3<f64>], references: &[Vector3<f64>]) -> Result<Vec<f64>> {
    let tree = KdTree::build(references.iter().map(|p| [p.x, p.y, p.z]).collect())?;
    Ok(queries.iter().map(|q| tree.nearest(&[q.x, q.y, q.z]).1.sqrt()).collect())
}

/// Squared distance from every 2D query to its closest 2D reference point.
pub fn nearest_sq_distances_2d(queries: &[Vector2<f64>], references: &[Vector2<f64>]) -> Result<Vec<f64>> {
    let tree = KdTree::build(references.iter().map(|p| [p.x, p.y]).collect())?;
    Ok(queries.iter().map(|q| tree.nearest(&[q.x, q.y]).1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(queries: &[Vector3<f64>], refs: &[Vector3<f64>]) -> Vec<f64> {
        queries
            .iter()
            .map(|q| refs.iter().map(|r| (q - r).norm()).fold(f64::INFINITY, f64::min))
            .collect()
    }

    #[test]
    fn query_in_set_has_zero_distance() {
        let refs = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.0, 4.0)];
        assert_eq!(nearest_distances(&refs, &refs).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn three_four_five() {
        let d = nearest_distances(&[Vector3::new(3.0, 4.0, 0.0)], &[Vector3::zeros()]).unwrap();
        assert_eq!(d, vec![5.0]);
    }

    #[test]
    fn empty_reference_set_fails() {
        assert!(nearest_distances(&[Vector3::zeros()], &[]).is_err());
    }

    #[test]
    fn matches_brute_force_on_1k_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut cloud = |n| -> Vec<Vector3<f64>> {
            (0..n)
                .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let refs = cloud(1000);
        let queries = cloud(1000);
        let got = nearest_distances(&queries, &refs).unwrap();
        for (g, b) in got.iter().zip(brute(&queries, &refs)) {
            assert!((g - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn duplicate_points_do_not_break_splits() {
        let refs = vec![Vector3::new(1.0, 1.0, 1.0); 100];
        let d = nearest_distances(&[Vector3::zeros()], &refs).unwrap();
        assert!((d[0] - 3f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn brute_force_equivalence(
            refs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..400),
            queries in prop::collection::vec((-12.0f64..12.0, -12.0f64..12.0, -12.0f64..12.0), 1..50),
        ) {
            let refs: Vec<_> = refs.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let queries: Vec<_> = queries.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let got = nearest_distances(&queries, &refs).unwrap();
            for (g, b) in got.iter().zip(brute(&queries, &refs)) {
                prop_assert!((g - b).abs() <= 1e-12);
            }
        }
    }
}
