use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CloudError, Point3};
use crate::prelude::*;

/// `a x + b y + c z + d = 0` with `(a, b, c)` of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub inlier_count: usize,
}

impl Plane {
    /// Plane through `point` with the given normal; the normal is normalized
    /// and its sign made canonical (`c > 0`, else `b > 0`, else `a > 0`).
    pub fn from_point_normal(point: &Point3, normal: &Point3) -> Option<Plane> {
        let mut n = normal.normalized()?;
        let flip = if n.z.abs() > 1e-12 {
            n.z < 0.0
        } else if n.y.abs() > 1e-12 {
            n.y < 0.0
        } else {
            n.x < 0.0
        };
        if flip {
            n = -n;
        }
        Some(Plane { a: n.x, b: n.y, c: n.z, d: -n.dot(point), inlier_count: 0 })
    }

    pub fn normal(&self) -> Point3 {
        Point3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.a * p.x + self.b * p.y + self.c * p.z + self.d
    }

    pub fn count_inliers(&self, points: &[Point3], tol: f64) -> usize {
        points.iter().filter(|p| self.signed_distance(p).abs() <= tol).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub inlier_tol: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { inlier_tol: 0.05, iterations: 200, seed: 0 }
    }
}

/// Least-squares plane: through the centroid, normal along the smallest
/// principal axis. `inlier_count` is the number of points used.
pub fn fit_plane_least_squares(points: &[Point3]) -> Result<Plane, CloudError> {
    if points.len() < 3 {
        return Err(CloudError::NotEnoughPoints(points.len()));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Point3::ORIGIN, |acc, p| acc + *p) * (1.0 / n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let v = (*p - centroid).to_vector();
        cov += v * v.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let largest = eig.eigenvalues[order[2]];
    // A line (or a single point) has two vanishing principal spreads.
    if largest <= 0.0 || eig.eigenvalues[order[1]] <= 1e-12 * largest {
        return Err(CloudError::Degenerate);
    }
    let col = eig.eigenvectors.column(order[0]);
    let normal = Point3::new(col[0], col[1], col[2]);
    let mut plane = Plane::from_point_normal(&centroid, &normal).ok_or(CloudError::Degenerate)?;
    plane.inlier_count = points.len();
    Ok(plane)
}

/// Seeded RANSAC followed by a least-squares refit on the consensus set.
/// `inlier_count` is counted against the returned plane.
pub fn fit_plane(points: &[Point3], params: &RansacParams) -> Result<Plane, CloudError> {
    let n = points.len();
    if n < 3 {
        return Err(CloudError::NotEnoughPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations.max(1) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let (p, q, r) = (points[i], points[j], points[k]);
        let normal = (q - p).cross(&(r - p));
        // Reject near-collinear triples relative to their own size.
        let scale = (q - p).norm_sq().max((r - p).norm_sq());
        if normal.norm() <= 1e-9 * scale {
            continue;
        }
        let Some(plane) = Plane::from_point_normal(&p, &normal) else { continue };
        let count = plane.count_inliers(points, params.inlier_tol);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, plane));
        }
    }
    let (_, sampled) = match best {
        Some(b) => b,
        None => {
            // Every sample was collinear; the least-squares check decides.
            let mut plane = fit_plane_least_squares(points)?;
            plane.inlier_count = plane.count_inliers(points, params.inlier_tol);
            return Ok(plane);
        }
    };
    let inliers: Vec<Point3> =
        points.iter().filter(|p| sampled.signed_distance(p).abs() <= params.inlier_tol).copied().collect();
    let mut plane = fit_plane_least_squares(&inliers).unwrap_or(sampled);
    plane.inlier_count = plane.count_inliers(points, params.inlier_tol);
    if plane.inlier_count < sampled.count_inliers(points, params.inlier_tol) {
        plane = sampled;
        plane.inlier_count = plane.count_inliers(points, params.inlier_tol);
    }
    Ok(plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;
    use proptest::{prop_assert, proptest};

    fn grid(f: impl Fn(f64, f64) -> f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let x = i as f64 * 0.1;
                let y = j as f64 * 0.1;
                pts.push(Point3::new(x, y, f(x, y)));
            }
        }
        pts
    }

    #[test]
    fn horizontal_plane() {
        let p = fit_plane(&grid(|_, _| 0.0), &RansacParams::default()).unwrap();
        assert!((p.c - 1.0).abs() < 1e-12 && p.a.abs() < 1e-12 && p.b.abs() < 1e-12 && p.d.abs() < 1e-12);
        assert_eq!(p.inlier_count, 100);
    }

    #[test]
    fn tilted_plane_normal() {
        let p = fit_plane(&grid(|x, _| x), &RansacParams::default()).unwrap();
        // Normal of z = x is (1, 0, -1)/sqrt 2 up to sign.
        assert!((p.a.abs() - FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((p.c.abs() - FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(p.a * p.c < 0.0);
        assert!(p.b.abs() < 1e-9);
    }

    #[test]
    fn too_few_or_collinear() {
        let two = [Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(fit_plane(&two, &RansacParams::default()), Err(CloudError::NotEnoughPoints(2)));
        let line: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(fit_plane(&line, &RansacParams::default()), Err(CloudError::Degenerate));
    }

    #[test]
    fn recovers_inliers_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for _ in 0..400 {
            let x = rng.random_range(-2.0..2.0);
            let y = rng.random_range(-2.0..2.0);
            pts.push(Point3::new(x, y, 0.5 * x - 0.2 * y + 1.0));
        }
        for _ in 0..100 {
            pts.push(Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-3.0..3.0),
            ));
        }
        let plane = fit_plane(&pts, &RansacParams { seed: 9, ..RansacParams::default() }).unwrap();
        let recovered = pts[..400].iter().filter(|p| plane.signed_distance(p).abs() <= 0.05).count();
        assert!(recovered as f64 >= 0.95 * 400.0);
    }

    #[test]
    fn same_seed_same_plane() {
        let mut pts = grid(|x, y| 0.1 * x + 0.3 * y);
        pts.push(Point3::new(0.5, 0.5, 3.0));
        let params = RansacParams { seed: 77, ..RansacParams::default() };
        assert_eq!(fit_plane(&pts, &params), fit_plane(&pts, &params));
    }

    proptest! {
        #[test]
        fn ransac_without_outliers_matches_least_squares(
            a in -1.0..1.0f64, b in -1.0..1.0f64, d in -2.0..2.0f64, seed in 0u64..1000,
        ) {
            let pts = grid(|x, y| a * x + b * y + d);
            let lsq = fit_plane_least_squares(&pts).unwrap();
            let r = fit_plane(&pts, &RansacParams { inlier_tol: 1e-9, iterations: 50, seed }).unwrap();
            let cosang = lsq.normal().dot(&r.normal()).abs().min(1.0);
            prop_assert!(cosang.acos() < 1e-6);
            prop_assert!((r.normal().norm() - 1.0).abs() < 1e-12);
        }
    }
}
