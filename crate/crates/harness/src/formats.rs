//! Plain-text file formats: `cloudv1` point clouds, `mapv1` voxel dumps,
//! `travv1` terrain grids and hover logs.

use std::fmt::Write as _;
use std::str::FromStr;

use hybridnav_core::cloud::{Frame, Point3, PointCloud};
use hybridnav_core::control::HoverSample;
use hybridnav_core::mapping::LocalMap;
use hybridnav_core::traversability::{CellStats, TerrainCell, TerrainClass, TerrainGrid};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input")]
    Empty,
}

fn err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, FormatError> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| err(line, format!("bad {what} `{tok}`")))
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    magic: &str,
) -> Result<(usize, std::str::SplitWhitespace<'a>), FormatError> {
    let (n, l) = lines.next().ok_or(FormatError::Empty)?;
    let mut toks = l.split_whitespace();
    if toks.next() != Some(magic) {
        return Err(err(n, format!("expected `{magic}` header")));
    }
    Ok((n, toks))
}

pub fn write_cloud(cloud: &PointCloud) -> String {
    let mut s = format!("cloudv1 {} {}\n", cloud.len(), cloud.frame);
    for p in &cloud.points {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        match (p.intensity, p.ring) {
            (Some(i), Some(r)) => {
                let _ = write!(s, " {i} {r}");
            }
            (None, Some(r)) => {
                let _ = write!(s, " 0 {r}");
            }
            (Some(i), None) => {
                let _ = write!(s, " {i}");
            }
            (None, None) => {}
        }
        s.push('\n');
    }
    s
}

pub fn read_cloud(text: &str, stamp: f64) -> Result<PointCloud, FormatError> {
    let mut lines = content_lines(text);
    let (hl, mut toks) = header(&mut lines, "cloudv1")?;
    let n: usize = field(toks.next(), hl, "point count")?;
    let frame_tok: String = field(toks.next(), hl, "frame")?;
    let frame = Frame::from_str(&frame_tok).map_err(|_| err(hl, format!("unknown frame `{frame_tok}`")))?;
    let mut points = Vec::with_capacity(n);
    for (ln, l) in lines {
        let mut t = l.split_whitespace();
        let mut p = Point3::new(field(t.next(), ln, "x")?, field(t.next(), ln, "y")?, field(t.next(), ln, "z")?);
        if let Some(i) = t.next() {
            p = p.with_intensity(field(Some(i), ln, "intensity")?);
        }
        if let Some(r) = t.next() {
            p = p.with_ring(field(Some(r), ln, "ring")?);
        }
        if t.next().is_some() {
            return Err(err(ln, "too many fields"));
        }
        points.push(p);
    }
    if points.len() != n {
        return Err(err(hl, format!("header says {n} points, found {}", points.len())));
    }
    Ok(PointCloud::from_points(points, frame, stamp))
}

/// Occupied voxels in key order.
pub fn write_map(map: &LocalMap) -> String {
    let mut s = format!("mapv1 {}\n", map.resolution);
    for (i, j, k) in &map.occupied {
        let _ = writeln!(s, "{i} {j} {k}");
    }
    s
}

pub fn read_map(text: &str, retain_radius: f64) -> Result<LocalMap, FormatError> {
    let mut lines = content_lines(text);
    let (hl, mut toks) = header(&mut lines, "mapv1")?;
    let res: f64 = field(toks.next(), hl, "resolution")?;
    if !(res > 0.0 && res.is_finite()) {
        return Err(err(hl, "resolution must be positive"));
    }
    let mut map = LocalMap::new(res, retain_radius);
    for (ln, l) in lines {
        let mut t = l.split_whitespace();
        let key = (field(t.next(), ln, "i")?, field(t.next(), ln, "j")?, field(t.next(), ln, "k")?);
        if t.next().is_some() {
            return Err(err(ln, "too many fields"));
        }
        map.occupied.insert(key);
    }
    Ok(map)
}

/// Row-major cells; unknown cells carry `-` for both statistics.
pub fn write_terrain(grid: &TerrainGrid) -> String {
    let mut s = format!("travv1 {} {} {}\n", grid.resolution, grid.width, grid.height);
    for c in &grid.cells {
        match c.stats {
            Some(st) => {
                let _ = writeln!(s, "{} {} {}", st.variance, st.slope, c.class);
            }
            None => {
                let _ = writeln!(s, "- - {}", c.class);
            }
        }
    }
    s
}

/// Reads a grid with its origin at `origin`.
pub fn read_terrain(text: &str, origin: (f64, f64)) -> Result<TerrainGrid, FormatError> {
    let mut lines = content_lines(text);
    let (hl, mut toks) = header(&mut lines, "travv1")?;
    let resolution: f64 = field(toks.next(), hl, "resolution")?;
    let width: usize = field(toks.next(), hl, "width")?;
    let height: usize = field(toks.next(), hl, "height")?;
    let mut cells = Vec::with_capacity(width * height);
    for (ln, l) in lines {
        let mut t = l.split_whitespace();
        let (v, s) = (t.next(), t.next());
        let class: String = field(t.next(), ln, "class")?;
        let class = TerrainClass::from_str(&class).map_err(|e| err(ln, e))?;
        let stats = match (v, s) {
            (Some("-"), Some("-")) => None,
            _ => Some(CellStats { variance: field(v, ln, "variance")?, slope: field(s, ln, "slope")? }),
        };
        if t.next().is_some() {
            return Err(err(ln, "too many fields"));
        }
        cells.push(TerrainCell { stats, class });
    }
    if cells.len() != width * height {
        return Err(err(hl, format!("header says {} cells, found {}", width * height, cells.len())));
    }
    Ok(TerrainGrid { resolution, origin_x: origin.0, origin_y: origin.1, width, height, cells })
}

/// Hover log: one `t thrust_fraction altitude` line per sample.
pub fn read_hover_log(text: &str) -> Result<Vec<HoverSample>, FormatError> {
    content_lines(text)
        .map(|(ln, l)| {
            let mut t = l.split_whitespace();
            let s = HoverSample {
                t: field(t.next(), ln, "time")?,
                thrust_fraction: field(t.next(), ln, "thrust fraction")?,
                altitude: field(t.next(), ln, "altitude")?,
            };
            if t.next().is_some() {
                return Err(err(ln, "too many fields"));
            }
            Ok(s)
        })
        .collect()
}

pub fn write_hover_log(samples: &[HoverSample]) -> String {
    samples.iter().map(|s| format!("{} {} {}\n", s.t, s.thrust_fraction, s.altitude)).collect()
}
