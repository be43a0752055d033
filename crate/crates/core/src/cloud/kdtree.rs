use super::{CloudError, Point3};
use crate::prelude::*;

/// A nearest-neighbour hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub point: Point3,
    /// Position of the point in the slice the index was built from.
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Node {
    /// Index into `points`.
    point: usize,
    axis: u8,
    left: Option<u32>,
    right: Option<u32>,
}

/// Balanced 3-d tree over a snapshot of points. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct KdIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: Option<u32>,
}

impl KdIndex {
    /// Builds the tree by median splits on the axis of largest spread.
    /// Non-finite points are skipped but keep their index numbering.
    pub fn build(points: &[Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_finite()).collect();
        let mut nodes = Vec::with_capacity(order.len());
        let root = build_rec(points, &mut order, &mut nodes);
        KdIndex { points: points.to_vec(), nodes, root }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` closest points in non-decreasing distance, ties broken by
    /// insertion order.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>, CloudError> {
        let root = self.root.ok_or(CloudError::EmptyIndex)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.knn_rec(root, query, k, &mut best);
        Ok(best.into_iter().map(|(d2, i)| Neighbor { point: self.points[i], index: i, distance: d2.sqrt() }).collect())
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        self.knn(query, 1).ok().and_then(|v| v.into_iter().next())
    }

    /// Distance to the nearest point, `+inf` for an empty index.
    pub fn nearest_distance(&self, query: &Point3) -> f64 {
        self.nearest(query).map_or(f64::INFINITY, |n| n.distance)
    }

    /// Every point within `radius` (inclusive), sorted like [`KdIndex::knn`].
    pub fn radius_search(&self, query: &Point3, radius: f64) -> Vec<Neighbor> {
        let mut hits = Vec::new();
        if let Some(root) = self.root {
            self.radius_rec(root, query, radius * radius, &mut hits);
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(d2, i)| Neighbor { point: self.points[i], index: i, distance: d2.sqrt() }).collect()
    }

    /// True if any point lies within `radius` (inclusive) of `query`.
    pub fn any_within(&self, query: &Point3, radius: f64) -> bool {
        self.nearest_distance(query) <= radius
    }

    /// Indices of points inside the closed box `[lo, hi]`, ascending.
    pub fn within_box(&self, lo: &Point3, hi: &Point3) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(root) = self.root {
            self.box_rec(root, lo, hi, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn knn_rec(&self, n: u32, q: &Point3, k: usize, best: &mut Vec<(f64, usize)>) {
        let node = &self.nodes[n as usize];
        let p = &self.points[node.point];
        let cand = (p.dist_sq(q), node.point);
        let pos = best.iter().position(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)).unwrap_or(best.len());
        if pos < k {
            best.insert(pos, cand);
            best.truncate(k);
        }
        let axis = node.axis as usize;
        let diff = q.coord(axis) - p.coord(axis);
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if let Some(c) = near {
            self.knn_rec(c, q, k, best);
        }
        if let Some(c) = far {
            // Equal distances may still carry a lower insertion index.
            if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                self.knn_rec(c, q, k, best);
            }
        }
    }

    fn radius_rec(&self, n: u32, q: &Point3, r2: f64, out: &mut Vec<(f64, usize)>) {
        let node = &self.nodes[n as usize];
        let p = &self.points[node.point];
        let d2 = p.dist_sq(q);
        if d2 <= r2 {
            out.push((d2, node.point));
        }
        let axis = node.axis as usize;
        let diff = q.coord(axis) - p.coord(axis);
        if let Some(c) = node.left {
            if diff <= 0.0 || diff * diff <= r2 {
                self.radius_rec(c, q, r2, out);
            }
        }
        if let Some(c) = node.right {
            if diff >= 0.0 || diff * diff <= r2 {
                self.radius_rec(c, q, r2, out);
            }
        }
    }

    fn box_rec(&self, n: u32, lo: &Point3, hi: &Point3, out: &mut Vec<usize>) {
        let node = &self.nodes[n as usize];
        let p = &self.points[node.point];
        if (0..3).all(|a| p.coord(a) >= lo.coord(a) && p.coord(a) <= hi.coord(a)) {
            out.push(node.point);
        }
        let axis = node.axis as usize;
        let split = p.coord(axis);
        if let Some(c) = node.left {
            if lo.coord(axis) <= split {
                self.box_rec(c, lo, hi, out);
            }
        }
        if let Some(c) = node.right {
            if hi.coord(axis) >= split {
                self.box_rec(c, lo, hi, out);
            }
        }
    }
}

fn build_rec(points: &[Point3], order: &mut [usize], nodes: &mut Vec<Node>) -> Option<u32> {
    if order.is_empty() {
        return None;
    }
    let axis = widest_axis(points, order);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a].coord(axis).total_cmp(&points[b].coord(axis)).then(a.cmp(&b)));
    let id = nodes.len() as u32;
    nodes.push(Node { point: order[mid], axis: axis as u8, left: None, right: None });
    let (lo, rest) = order.split_at_mut(mid);
    let left = build_rec(points, lo, nodes);
    let right = build_rec(points, &mut rest[1..], nodes);
    let node = &mut nodes[id as usize];
    node.left = left;
    node.right = right;
    Some(id)
}

fn widest_axis(points: &[Point3], order: &[usize]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order {
        for a in 0..3 {
            let c = points[i].coord(a);
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let mut best = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[best] - lo[best] {
            best = a;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scan(points: &[Point3], q: &Point3, k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.dist_sq(q), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect()
    }

    #[test]
    fn nearest_of_two() {
        let idx = KdIndex::build(&[Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]);
        let hit = idx.knn(&Point3::ORIGIN, 1).unwrap();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].point, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(hit[0].distance, 1.0);
    }

    #[test]
    fn k_larger_than_cloud_returns_everything_sorted() {
        let pts = [Point3::new(3.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0)];
        let idx = KdIndex::build(&pts);
        let hits = idx.knn(&Point3::ORIGIN, 10).unwrap();
        let order: Vec<usize> = hits.iter().map(|h| h.index).collect();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn empty_index_is_signalled() {
        let idx = KdIndex::build(&[]);
        assert_eq!(idx.knn(&Point3::ORIGIN, 1), Err(CloudError::EmptyIndex));
        assert_eq!(idx.nearest_distance(&Point3::ORIGIN), f64::INFINITY);
    }

    #[test]
    fn ties_follow_insertion_order() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| {
                let a = i as f64 * core::f64::consts::FRAC_PI_4;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        // Exactly equidistant copies.
        let mut dup = pts.clone();
        dup.extend(pts.iter().copied());
        let idx = KdIndex::build(&dup);
        let hits = idx.knn(&Point3::new(1.0, 0.0, 0.0), 2).unwrap();
        assert_eq!(hits[0].index, 0);
        assert_eq!(hits[1].index, 8);
    }

    #[test]
    fn matches_linear_scan_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 500);
        let idx = KdIndex::build(&pts);
        for _ in 0..100 {
            let q = random_points(&mut rng, 1)[0];
            for k in [1, 5, 17] {
                let got: Vec<(f64, usize)> =
                    idx.knn(&q, k).unwrap().iter().map(|h| (h.point.dist_sq(&q), h.index)).collect();
                assert_eq!(got, scan(&pts, &q, k));
            }
        }
    }

    #[test]
    fn radius_and_box_match_predicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 400);
        let idx = KdIndex::build(&pts);
        let q = Point3::new(0.5, -0.2, 1.0);
        let got: Vec<usize> = idx.radius_search(&q, 2.0).iter().map(|h| h.index).collect();
        let want: Vec<usize> =
            scan(&pts, &q, pts.len()).into_iter().filter(|(d2, _)| *d2 <= 4.0).map(|(_, i)| i).collect();
        assert_eq!(got, want);

        let lo = Point3::new(-1.0, -2.0, -5.0);
        let hi = Point3::new(1.5, 0.0, 5.0);
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| {
                let p = pts[i];
                p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
            })
            .collect();
        assert_eq!(idx.within_box(&lo, &hi), want);
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(
            raw in proptest::collection::vec((-3i32..3, -3i32..3, -3i32..3), 1..60),
            q in (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64),
            k in 1usize..10,
        ) {
            // Integer lattice coordinates produce plenty of exact ties.
            let pts: Vec<Point3> =
                raw.iter().map(|&(x, y, z)| Point3::new(x as f64, y as f64, z as f64)).collect();
            let q = Point3::new(q.0, q.1, q.2);
            let idx = KdIndex::build(&pts);
            let got: Vec<(f64, usize)> =
                idx.knn(&q, k).unwrap().iter().map(|h| (h.point.dist_sq(&q), h.index)).collect();
            prop_assert_eq!(got, scan(&pts, &q, k));
        }
    }
}
