//! Elevation maps and per-cell roughness and slope analysis.

use core::fmt;
use core::str::FromStr;

use crate::cloud::{fit_plane, fit_plane_least_squares, KdIndex, Plane, Point3, PointCloud, RansacParams};
use crate::prelude::*;

/// Cells with more points than this are fitted with RANSAC.
const RANSAC_MIN_POINTS: usize = 50;

/// Slack on the crop boxes so points rounded into a cell are not missed.
const EDGE: f64 = 1e-9;

/// Ground points flattened to a 2D cloud whose intensity is the height.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationMap {
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point3>,
}

impl ElevationMap {
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin_x) / self.resolution).floor();
        let j = ((y - self.origin_y) / self.resolution).floor();
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    /// Heights of the points falling in each cell, row-major.
    pub fn cell_heights(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![Vec::new(); self.width * self.height];
        for p in &self.points {
            if let Some((i, j)) = self.cell_of(p.x, p.y) {
                cells[j * self.width + i].push(p.intensity.unwrap_or(0.0));
            }
        }
        cells
    }

    pub fn cell_means(&self) -> Vec<Option<f64>> {
        self.cell_heights()
            .into_iter()
            .map(|h| (!h.is_empty()).then(|| h.iter().sum::<f64>() / h.len() as f64))
            .collect()
    }
}

/// Keeps the points below the vehicle and buckets them on an `r` grid
/// anchored at their smallest `x` and `y`.
pub fn build_elevation_map(cloud: &PointCloud, vehicle_height: f64, resolution: f64) -> ElevationMap {
    let points: Vec<Point3> = cloud
        .points
        .iter()
        .filter(|p| p.is_finite() && p.z < vehicle_height)
        .map(|p| Point3::new(p.x, p.y, 0.0).with_intensity(p.z))
        .collect();
    if points.is_empty() || resolution.is_nan() || resolution <= 0.0 {
        return ElevationMap { resolution, origin_x: 0.0, origin_y: 0.0, width: 0, height: 0, points };
    }
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &points {
        lo_x = lo_x.min(p.x);
        lo_y = lo_y.min(p.y);
        hi_x = hi_x.max(p.x);
        hi_y = hi_y.max(p.y);
    }
    let width = ((hi_x - lo_x) / resolution).floor() as usize + 1;
    let height = ((hi_y - lo_y) / resolution).floor() as usize + 1;
    ElevationMap { resolution, origin_x: lo_x, origin_y: lo_y, width, height, points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    /// Mean squared point-to-plane distance.
    pub variance: f64,
    /// Angle between the plane normal and the vertical.
    pub slope: f64,
}

pub fn slope_of(plane: &Plane) -> f64 {
    let n = plane.normal();
    let norm = n.norm();
    if norm == 0.0 {
        return core::f64::consts::FRAC_PI_2;
    }
    (n.z.abs() / norm).min(1.0).acos()
}

/// `None` when the cell has fewer than four points.
pub fn analyze_cell(points: &[Point3]) -> Option<CellStats> {
    if points.len() < 4 {
        return None;
    }
    let fitted = if points.len() > RANSAC_MIN_POINTS {
        fit_plane(points, &RansacParams::default())
    } else {
        fit_plane_least_squares(points)
    };
    match fitted {
        Ok(plane) => {
            let variance = points.iter().map(|p| plane.signed_distance(p).powi(2)).sum::<f64>() / points.len() as f64;
            Some(CellStats { variance, slope: slope_of(&plane) })
        }
        // Collinear points lie in some vertical plane.
        Err(_) => Some(CellStats { variance: 0.0, slope: core::f64::consts::FRAC_PI_2 }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerrainClass {
    Easy,
    Difficult,
    Untraversable,
    Unknown,
}

impl TerrainClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerrainClass::Easy => "easy",
            TerrainClass::Difficult => "difficult",
            TerrainClass::Untraversable => "untraversable",
            TerrainClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerrainClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(TerrainClass::Easy),
            "difficult" => Ok(TerrainClass::Difficult),
            "untraversable" => Ok(TerrainClass::Untraversable),
            "unknown" => Ok(TerrainClass::Unknown),
            other => Err(format!("unknown terrain class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub var_easy: f64,
    pub var_max: f64,
    pub slope_easy: f64,
    pub slope_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { var_easy: 0.001, var_max: 0.01, slope_easy: 0.17, slope_max: 0.52 }
    }
}

impl Thresholds {
    pub fn is_ordered(&self) -> bool {
        0.0 <= self.var_easy
            && self.var_easy < self.var_max
            && 0.0 <= self.slope_easy
            && self.slope_easy < self.slope_max
    }
}

pub fn classify(stats: Option<&CellStats>, thr: &Thresholds) -> TerrainClass {
    let Some(s) = stats else { return TerrainClass::Unknown };
    if s.variance > thr.var_max || s.slope > thr.slope_max || s.variance.is_nan() || s.slope.is_nan() {
        TerrainClass::Untraversable
    } else if s.variance < thr.var_easy && s.slope < thr.slope_easy {
        TerrainClass::Easy
    } else {
        TerrainClass::Difficult
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainCell {
    pub stats: Option<CellStats>,
    pub class: TerrainClass,
}

/// Zero for easy ground and `c_col` for untraversable or unknown ground.
/// Difficult ground costs between `0.1 c_col` and `0.9 c_col`, rising with
/// both variance and slope.
pub fn traversability_cost(cell: &TerrainCell, thr: &Thresholds, c_col: f64) -> f64 {
    match (cell.class, cell.stats) {
        (TerrainClass::Easy, _) => 0.0,
        (TerrainClass::Difficult, Some(s)) => {
            let fv = ((s.variance - thr.var_easy) / (thr.var_max - thr.var_easy)).clamp(0.0, 1.0);
            let fs = ((s.slope - thr.slope_easy) / (thr.slope_max - thr.slope_easy)).clamp(0.0, 1.0);
            c_col * (0.1 + 0.4 * fv + 0.4 * fs)
        }
        _ => c_col,
    }
}

/// Row-major grid of classified cells sharing the elevation map's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<TerrainCell>,
}

impl TerrainGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<&TerrainCell> {
        (i < self.width && j < self.height).then(|| &self.cells[j * self.width + i])
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<&TerrainCell> {
        let i = ((x - self.origin_x) / self.resolution).floor();
        let j = ((y - self.origin_y) / self.resolution).floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        self.get(i as usize, j as usize)
    }
}

/// How the points of each grid square are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellExtraction {
    /// One pass over the cloud, then one box query per square.
    #[default]
    Indexed,
    /// Crops the whole cloud once per square.
    Crop,
}

pub fn build_terrain_maps(map: &ElevationMap, thr: &Thresholds) -> TerrainGrid {
    build_terrain_maps_with(map, thr, CellExtraction::Indexed)
}

pub fn build_terrain_maps_with(map: &ElevationMap, thr: &Thresholds, extraction: CellExtraction) -> TerrainGrid {
    let r = map.resolution;
    let index = match extraction {
        CellExtraction::Indexed => Some(KdIndex::build(&map.points)),
        CellExtraction::Crop => None,
    };
    let lift = |p: &Point3| Point3::new(p.x, p.y, p.intensity.unwrap_or(0.0));
    let mut cells = Vec::with_capacity(map.width * map.height);
    for j in 0..map.height {
        for i in 0..map.width {
            let members: Vec<Point3> = match &index {
                Some(index) => {
                    let lo = Point3::new(
                        map.origin_x + i as f64 * r - EDGE,
                        map.origin_y + j as f64 * r - EDGE,
                        f64::NEG_INFINITY,
                    );
                    let hi = Point3::new(lo.x + r + 2.0 * EDGE, lo.y + r + 2.0 * EDGE, f64::INFINITY);
                    index
                        .within_box(&lo, &hi)
                        .into_iter()
                        .map(|k| &index.points()[k])
                        .filter(|p| map.cell_of(p.x, p.y) == Some((i, j)))
                        .map(lift)
                        .collect()
                }
                None => {
                    let (lo_x, lo_y) = (map.origin_x + i as f64 * r - EDGE, map.origin_y + j as f64 * r - EDGE);
                    let (hi_x, hi_y) = (lo_x + r + 2.0 * EDGE, lo_y + r + 2.0 * EDGE);
                    map.points
                        .iter()
                        .filter(|p| p.x >= lo_x && p.x <= hi_x && p.y >= lo_y && p.y <= hi_y)
                        .filter(|p| map.cell_of(p.x, p.y) == Some((i, j)))
                        .map(lift)
                        .collect()
                }
            };
            let stats = analyze_cell(&members);
            cells.push(TerrainCell { stats, class: classify(stats.as_ref(), thr) });
        }
    }
    TerrainGrid {
        resolution: r,
        origin_x: map.origin_x,
        origin_y: map.origin_y,
        width: map.width,
        height: map.height,
        cells,
    }
}
