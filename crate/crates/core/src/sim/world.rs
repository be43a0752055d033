use core::f64::consts::TAU;

use crate::cloud::{KdIndex, Point3, Pose};
use crate::prelude::*;

/// Axis-aligned box; obstacles standing on the floor or hanging from the
/// ceiling also shape the ground and ceiling seen by the sonars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }
}

/// Point-sampled obstacles with a prebuilt index, a flat floor at `z = 0`
/// and a flat ceiling, both modified by `boxes`.
#[derive(Debug, Clone)]
pub struct WorldGeometry {
    index: KdIndex,
    pub boxes: Vec<Aabb>,
    pub ceiling_height: f64,
}

impl WorldGeometry {
    pub fn new(points: Vec<Point3>, boxes: Vec<Aabb>, ceiling_height: f64) -> Self {
        Self { index: KdIndex::build(&points), boxes, ceiling_height }
    }

    pub fn points(&self) -> &[Point3] {
        self.index.points()
    }

    pub fn index(&self) -> &KdIndex {
        &self.index
    }

    /// Highest floor surface under `(x, y)` that is not above `z`.
    pub fn ground_z(&self, x: f64, y: f64, z: f64) -> f64 {
        self.boxes.iter().filter(|b| b.contains_xy(x, y) && b.max.z <= z + 1e-9).map(|b| b.max.z).fold(0.0, f64::max)
    }

    /// Lowest ceiling surface over `(x, y)` that is not below `z`.
    pub fn ceiling_z(&self, x: f64, y: f64, z: f64) -> f64 {
        self.boxes
            .iter()
            .filter(|b| b.contains_xy(x, y) && b.min.z >= z - 1e-9)
            .map(|b| b.min.z)
            .fold(self.ceiling_height, f64::min)
    }
}

fn steps(length: f64, spacing: f64) -> usize {
    ((length / spacing).ceil() as usize).max(1)
}

/// Vertical curtain along a polyline from the floor to `height`.
fn sample_curtain(out: &mut Vec<Point3>, polyline: &[(f64, f64)], height: f64, spacing: f64) {
    let nz = steps(height, spacing);
    let mut push_column = |x: f64, y: f64| {
        for k in 0..=nz {
            out.push(Point3::new(x, y, height * k as f64 / nz as f64));
        }
    };
    if let Some(&(x0, y0)) = polyline.first() {
        push_column(x0, y0);
    }
    for w in polyline.windows(2) {
        let ((ax, ay), (bx, by)) = (w[0], w[1]);
        let n = steps((bx - ax).hypot(by - ay), spacing);
        for i in 1..=n {
            let f = i as f64 / n as f64;
            push_column(ax + (bx - ax) * f, ay + (by - ay) * f);
        }
    }
}

fn sample_box(out: &mut Vec<Point3>, b: &Aabb, spacing: f64) {
    let (nx, ny, nz) =
        (steps(b.max.x - b.min.x, spacing), steps(b.max.y - b.min.y, spacing), steps(b.max.z - b.min.z, spacing));
    let lerp = |lo: f64, hi: f64, i: usize, n: usize| lo + (hi - lo) * i as f64 / n as f64;
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let on_face = i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz;
                if on_face {
                    out.push(Point3::new(
                        lerp(b.min.x, b.max.x, i, nx),
                        lerp(b.min.y, b.max.y, j, ny),
                        lerp(b.min.z, b.max.z, k, nz),
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvKind {
    /// Straight corridor along `+x`; the first `bay_length` meters may be
    /// wider than the rest.
    Corridor { width: f64, length: f64, bay_width: f64, bay_length: f64 },
    /// Corridor whose centreline is `y = amplitude sin(2 pi x / period)`,
    /// optionally with a pillar on one wall where the path bends.
    HorizontalSine { width: f64, length: f64, amplitude: f64, period: f64, pillar: bool },
    /// Straight corridor with alternating floor blocks and ceiling blocks.
    VerticalSine { width: f64, length: f64, amplitude: f64, period: f64 },
    /// Straight stem along `+x` ending in a crossbar; the exit is down one arm.
    TJunction { width: f64, stem_length: f64, arm_length: f64, turn: Turn },
    /// Room split by a wall with a door in the middle.
    Doorway { room_width: f64, length: f64, door_width: f64 },
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Corridor { .. } => "corridor",
            EnvKind::HorizontalSine { .. } => "horizontal_sine",
            EnvKind::VerticalSine { .. } => "vertical_sine",
            EnvKind::TJunction { .. } => "t_junction",
            EnvKind::Doorway { .. } => "doorway",
        }
    }

    /// Narrowest gap the vehicle has to pass.
    pub fn narrowest(&self) -> f64 {
        match *self {
            EnvKind::Corridor { width, bay_width, .. } => width.min(bay_width),
            EnvKind::HorizontalSine { width, .. } => width,
            EnvKind::VerticalSine { width, .. } => width,
            EnvKind::TJunction { width, .. } => width,
            EnvKind::Doorway { door_width, room_width, .. } => door_width.min(room_width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub ceiling_height: f64,
    /// Distance between obstacle samples.
    pub spacing: f64,
    pub vehicle_radius: f64,
    pub start_z: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { ceiling_height: 2.5, spacing: 0.05, vehicle_radius: 0.35, start_z: 0.15 }
    }
}

/// Everything a generated course needs besides its name and status.
#[derive(Debug, Clone)]
pub struct Course {
    pub world: WorldGeometry,
    pub start: Pose,
    pub end_x_range: (f64, f64),
    pub end_y_range: (f64, f64),
    /// The narrowest gap is wider than the vehicle.
    pub passable: bool,
}

pub fn generate_environment(kind: &EnvKind, params: &GenParams) -> Course {
    let h = params.ceiling_height;
    let s = params.spacing;
    let mut pts = Vec::new();
    let mut boxes = Vec::new();
    let start = Pose::planar(0.0, 0.0, params.start_z, 0.0);
    let (end_x, end_y);
    match *kind {
        EnvKind::Corridor { width, length, bay_width, bay_length } => {
            let (hw, hb) = (width / 2.0, bay_width / 2.0);
            let bay = bay_length.clamp(0.0, length);
            let x0 = -1.0;
            for sign in [1.0, -1.0] {
                let line = if bay > 0.0 && (bay_width - width).abs() > 1e-12 {
                    vec![(x0, sign * hb), (bay, sign * hb), (bay, sign * hw), (length, sign * hw)]
                } else {
                    vec![(x0, sign * hw), (length, sign * hw)]
                };
                sample_curtain(&mut pts, &line, h, s);
            }
            sample_curtain(&mut pts, &[(x0, -hb.max(hw)), (x0, hb.max(hw))], h, s);
            end_x = (length - 1.0, length + 1.0);
            end_y = (-hw, hw);
        }
        EnvKind::HorizontalSine { width, length, amplitude, period, pillar } => {
            let hw = width / 2.0;
            let n = steps(length + 1.0, s / 2.0);
            for sign in [1.0, -1.0] {
                let line: Vec<(f64, f64)> = (0..=n)
                    .map(|i| {
                        let x = -1.0 + (length + 1.0) * i as f64 / n as f64;
                        let centre = if x < 0.0 { 0.0 } else { amplitude * (TAU * x / period).sin() };
                        (x, centre + sign * hw)
                    })
                    .collect();
                sample_curtain(&mut pts, &line, h, s);
            }
            sample_curtain(&mut pts, &[(-1.0, -hw), (-1.0, hw)], h, s);
            if pillar {
                // On the outside of the first bend, leaving most of the width.
                let x = period / 4.0;
                let y = amplitude + hw - 0.1;
                let b = Aabb::new(Point3::new(x - 0.1, y - 0.1, 0.0), Point3::new(x + 0.1, y + 0.1, h));
                sample_box(&mut pts, &b, s);
            }
            let end_centre = amplitude * (TAU * length / period).sin();
            end_x = (length - 1.0, length + 1.0);
            end_y = (end_centre - hw, end_centre + hw);
        }
        EnvKind::VerticalSine { width, length, amplitude, period } => {
            let hw = width / 2.0;
            sample_curtain(&mut pts, &[(-1.0, hw), (length, hw)], h, s);
            sample_curtain(&mut pts, &[(-1.0, -hw), (length, -hw)], h, s);
            sample_curtain(&mut pts, &[(-1.0, -hw), (-1.0, hw)], h, s);
            let mut x = period / 2.0;
            let mut floor = true;
            while x + period / 4.0 < length - 1.0 {
                let (z0, z1) = if floor { (0.0, amplitude) } else { (h - amplitude, h) };
                let b = Aabb::new(Point3::new(x - period / 8.0, -hw, z0), Point3::new(x + period / 8.0, hw, z1));
                sample_box(&mut pts, &b, s);
                boxes.push(b);
                floor = !floor;
                x += period / 2.0;
            }
            end_x = (length - 1.0, length + 1.0);
            end_y = (-hw, hw);
        }
        EnvKind::TJunction { width, stem_length, arm_length, turn } => {
            let hw = width / 2.0;
            let far = stem_length + width;
            let arm = hw + arm_length;
            let side = if turn == Turn::Left { 1.0 } else { -1.0 };
            sample_curtain(&mut pts, &[(-1.0, -hw), (-1.0, hw)], h, s);
            sample_curtain(&mut pts, &[(-1.0, hw), (stem_length, hw), (stem_length, arm)], h, s);
            sample_curtain(&mut pts, &[(-1.0, -hw), (stem_length, -hw), (stem_length, -arm)], h, s);
            sample_curtain(&mut pts, &[(far, -arm), (far, arm)], h, s);
            end_x = (stem_length, far);
            end_y = if side > 0.0 { (arm - 1.0, arm + 1.0) } else { (-arm - 1.0, -arm + 1.0) };
        }
        EnvKind::Doorway { room_width, length, door_width } => {
            let hw = room_width / 2.0;
            let hd = door_width / 2.0;
            let wall_x = length / 2.0;
            sample_curtain(&mut pts, &[(-1.0, hw), (length, hw)], h, s);
            sample_curtain(&mut pts, &[(-1.0, -hw), (length, -hw)], h, s);
            sample_curtain(&mut pts, &[(-1.0, -hw), (-1.0, hw)], h, s);
            sample_curtain(&mut pts, &[(wall_x, hw), (wall_x, hd)], h, s);
            sample_curtain(&mut pts, &[(wall_x, -hd), (wall_x, -hw)], h, s);
            end_x = (length - 1.0, length + 1.0);
            end_y = (-hw, hw);
        }
    }
    let passable = kind.narrowest() > 2.0 * params.vehicle_radius;
    Course { world: WorldGeometry::new(pts, boxes, h), start, end_x_range: end_x, end_y_range: end_y, passable }
}
