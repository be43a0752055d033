use alloc::collections::BTreeMap;

use super::{Point3, PointCloud};
use crate::prelude::*;

/// Outcome of comparing the raw and processed cloud sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudStatus {
    /// Nothing in view.
    EmptyOk,
    /// Returns existed but every one was filtered out.
    Noisy,
    Usable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DustStatus {
    Filtered,
    /// Some points carried no ring id; the cloud was passed through untouched.
    MissingRings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YSign {
    Pos,
    Neg,
    Any,
}

pub fn classify_cloud_status(raw_size: usize, processed_size: usize) -> CloudStatus {
    if raw_size == 0 {
        CloudStatus::EmptyOk
    } else if processed_size == 0 {
        CloudStatus::Noisy
    } else {
        CloudStatus::Usable
    }
}

/// Replaces every voxel holding at least `min_points` points by their centroid.
///
/// Output follows the order in which voxels are first touched. Non-finite
/// points and points exactly at the origin are dropped first.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64, min_points: usize) -> PointCloud {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    let min_points = min_points.max(1);

    struct Acc {
        first: usize,
        n: usize,
        sum: Point3,
        intensity: f64,
        n_intensity: usize,
        ring: Option<u16>,
    }

    let mut cells: BTreeMap<(i64, i64, i64), Acc> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.is_finite() || (p.x == 0.0 && p.y == 0.0 && p.z == 0.0) {
            continue;
        }
        let key =
            ((p.x / voxel_size).floor() as i64, (p.y / voxel_size).floor() as i64, (p.z / voxel_size).floor() as i64);
        let acc = cells.entry(key).or_insert(Acc {
            first: i,
            n: 0,
            sum: Point3::ORIGIN,
            intensity: 0.0,
            n_intensity: 0,
            ring: p.ring,
        });
        acc.n += 1;
        acc.sum = acc.sum + *p;
        if let Some(v) = p.intensity {
            acc.intensity += v;
            acc.n_intensity += 1;
        }
    }

    let mut kept: Vec<&Acc> = cells.values().filter(|a| a.n >= min_points).collect();
    kept.sort_by_key(|a| a.first);
    let points = kept
        .into_iter()
        .map(|a| {
            let mut c = a.sum * (1.0 / a.n as f64);
            c.intensity = (a.n_intensity > 0).then(|| a.intensity / a.n_intensity as f64);
            c.ring = a.ring;
            c
        })
        .collect();
    cloud.with_points(points)
}

/// Removes every point inside the closed box. A box that is empty along any
/// axis (`min >= max`) leaves the cloud unchanged.
pub fn crop_box_remove(cloud: &PointCloud, box_min: &Point3, box_max: &Point3) -> PointCloud {
    if (0..3).any(|a| box_min.coord(a) >= box_max.coord(a)) {
        return cloud.clone();
    }
    let inside = |p: &Point3| (0..3).all(|a| p.coord(a) >= box_min.coord(a) && p.coord(a) <= box_max.coord(a));
    cloud.with_points(cloud.points.iter().filter(|p| !inside(p)).copied().collect())
}

/// Drops points within `radius` of `center` (boundary included).
pub fn radius_remove(cloud: &PointCloud, center: &Point3, radius: f64) -> PointCloud {
    let r2 = radius * radius;
    cloud.with_points(cloud.points.iter().filter(|p| p.dist_sq(center) > r2).copied().collect())
}

pub fn passthrough_filter(cloud: &PointCloud, z_min: f64, z_max: f64, y_sign: YSign) -> PointCloud {
    let keep = |p: &&Point3| {
        p.z >= z_min
            && p.z <= z_max
            && match y_sign {
                YSign::Pos => p.y > 0.0,
                YSign::Neg => p.y < 0.0,
                YSign::Any => true,
            }
    };
    cloud.with_points(cloud.points.iter().filter(keep).copied().collect())
}

/// Removes returns whose range varies too much along their ring.
///
/// Each ring is ordered by azimuth. A point's windowed variance is the
/// smallest sample variance of range over all runs of `window` consecutive
/// ring points that contain it, so a point on the edge of a solid surface is
/// judged by the run lying on that surface. Points with windowed variance
/// above `variance_threshold` are dropped. Ranges are measured from the
/// origin of the cloud's frame, which should be the sensor.
pub fn dust_filter(cloud: &PointCloud, window: usize, variance_threshold: f64) -> (PointCloud, DustStatus) {
    if cloud.points.iter().any(|p| p.ring.is_none()) {
        return (cloud.clone(), DustStatus::MissingRings);
    }
    let window = window.max(3);

    let mut rings: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        rings.entry(p.ring.unwrap_or(0)).or_default().push(i);
    }

    let mut keep = vec![true; cloud.points.len()];
    for members in rings.values_mut() {
        members.sort_by(|&a, &b| {
            let pa = &cloud.points[a];
            let pb = &cloud.points[b];
            pa.y.atan2(pa.x).total_cmp(&pb.y.atan2(pb.x)).then(a.cmp(&b))
        });
        let ranges: Vec<f64> = members.iter().map(|&i| cloud.points[i].norm()).collect();
        let var = windowed_min_variance(&ranges, window);
        for (slot, &i) in members.iter().enumerate() {
            if var[slot] > variance_threshold {
                keep[i] = false;
            }
        }
    }

    let points = cloud.points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    (cloud.with_points(points), DustStatus::Filtered)
}

/// For each sample, the minimum sample variance over every length-`w` window
/// covering it. Sequences shorter than `w` use one window spanning them.
pub(crate) fn windowed_min_variance(values: &[f64], w: usize) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let w = w.min(n);
    let window_var: Vec<f64> = (0..=n - w).map(|s| sample_variance(&values[s..s + w])).collect();
    (0..n)
        .map(|i| {
            let first = i.saturating_sub(w - 1);
            let last = i.min(n - w);
            window_var[first..=last].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}
