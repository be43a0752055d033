//! Motion primitives: minimum-snap axis polynomials, endpoint fans, collision
//! checking against a KD index and the near-collision cost function.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::cloud::{KdIndex, Point3, Pose};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PrimitiveError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("start point lies inside an obstacle barrier")]
    InfeasibleStart,
}

/// One axis of a primitive: `p(t) = c1 + c2 t + c3 t^2 + c4 t^3 + c5 t^4 + c6 t^5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoly {
    /// `c[0]` is c1. `c[2]` holds half the initial acceleration.
    pub c: [f64; 6],
    pub duration: f64,
}

impl AxisPoly {
    /// Position, velocity and acceleration at `t`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64), PrimitiveError> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(PrimitiveError::TimeOutOfRange { t, duration: self.duration });
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> (f64, f64, f64) {
        let [c1, c2, c3, c4, c5, c6] = self.c;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let p = c1 + c2 * t + c3 * t2 + c4 * t3 + c5 * t4 + c6 * t5;
        let v = c2 + 2.0 * c3 * t + 3.0 * c4 * t2 + 4.0 * c5 * t3 + 5.0 * c6 * t4;
        let a = 2.0 * c3 + 6.0 * c4 * t + 12.0 * c5 * t2 + 20.0 * c6 * t3;
        (p, v, a)
    }

    /// `(x, v, a)` at `t = 0`.
    pub fn initial_state(&self) -> (f64, f64, f64) {
        (self.c[0], self.c[1], 2.0 * self.c[2])
    }
}

/// Quintic meeting position, velocity and acceleration at both ends.
pub fn solve_min_snap_axis(
    x0: f64,
    v0: f64,
    a0: f64,
    xf: f64,
    vf: f64,
    af: f64,
    duration: f64,
) -> Result<AxisPoly, PrimitiveError> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(PrimitiveError::NonPositiveDuration(duration));
    }
    let t = duration;
    let t2 = t * t;
    let dx = xf - (x0 + v0 * t + a0 * t2 / 2.0);
    let dv = vf - (v0 + a0 * t);
    let da = af - a0;
    // Closed-form inverse of [[T^3, T^4, T^5], [3T^2, 4T^3, 5T^4], [6T, 12T^2, 20T^3]].
    let c4 = (10.0 * dx - 4.0 * dv * t + 0.5 * da * t2) / (t2 * t);
    let c5 = (-15.0 * dx + 7.0 * dv * t - da * t2) / (t2 * t2);
    let c6 = (6.0 * dx - 3.0 * dv * t + 0.5 * da * t2) / (t2 * t2 * t);
    Ok(AxisPoly { c: [x0, v0, a0 / 2.0, c4, c5, c6], duration })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionStatus {
    Free,
    NearCollision,
    Colliding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConfig {
    pub c_gw: f64,
    pub collision_buffer: f64,
    pub near_buffer: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { c_gw: 1.0, collision_buffer: 0.3, near_buffer: 0.6 }
    }
}

impl CostConfig {
    pub fn c_ncol(&self) -> f64 {
        self.c_gw * 100.0
    }

    pub fn c_col(&self) -> f64 {
        self.c_ncol() * 100.0
    }

    pub fn status_for(&self, min_dist: f64) -> CollisionStatus {
        if min_dist <= self.collision_buffer {
            CollisionStatus::Colliding
        } else if min_dist <= self.near_buffer {
            CollisionStatus::NearCollision
        } else {
            CollisionStatus::Free
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub polys: [AxisPoly; 3],
    pub endpoint: Point3,
    /// `(position, t)` pairs from `t = 0` to `t = T`.
    pub samples: Vec<(Point3, f64)>,
    pub min_obstacle_dist: f64,
    pub status: CollisionStatus,
    pub goal_angle: f64,
    pub cost: f64,
}

impl Primitive {
    /// Primitive from `start` (moving at `v0`, zero acceleration) that reaches
    /// `endpoint` after `duration` with the average velocity and zero
    /// acceleration. Samples are spaced about `spacing` meters apart.
    pub fn new(
        start: Point3,
        v0: Point3,
        endpoint: Point3,
        duration: f64,
        spacing: f64,
    ) -> Result<Primitive, PrimitiveError> {
        let vf = (endpoint - start) * (1.0 / duration);
        let mut polys = [AxisPoly { c: [0.0; 6], duration }; 3];
        for (axis, poly) in polys.iter_mut().enumerate() {
            *poly = solve_min_snap_axis(
                start.coord(axis),
                v0.coord(axis),
                0.0,
                endpoint.coord(axis),
                vf.coord(axis),
                0.0,
                duration,
            )?;
        }
        let mut prim = Primitive {
            polys,
            endpoint,
            samples: Vec::new(),
            min_obstacle_dist: f64::INFINITY,
            status: CollisionStatus::Free,
            goal_angle: 0.0,
            cost: 0.0,
        };
        prim.samples = prim.discretize(spacing);
        Ok(prim)
    }

    pub fn duration(&self) -> f64 {
        self.polys[0].duration
    }

    pub fn position(&self, t: f64) -> Result<Point3, PrimitiveError> {
        let x = self.polys[0].eval(t)?.0;
        let y = self.polys[1].eval(t)?.0;
        let z = self.polys[2].eval(t)?.0;
        Ok(Point3::new(x, y, z))
    }

    pub fn velocity(&self, t: f64) -> Result<Point3, PrimitiveError> {
        let x = self.polys[0].eval(t)?.1;
        let y = self.polys[1].eval(t)?.1;
        let z = self.polys[2].eval(t)?.1;
        Ok(Point3::new(x, y, z))
    }

    fn pos_unchecked(&self, t: f64) -> Point3 {
        Point3::new(
            self.polys[0].eval_unchecked(t).0,
            self.polys[1].eval_unchecked(t).0,
            self.polys[2].eval_unchecked(t).0,
        )
    }

    /// Approximate arc length from a fine polyline.
    pub fn arc_length(&self) -> f64 {
        const STEPS: usize = 64;
        let dt = self.duration() / STEPS as f64;
        (0..STEPS).map(|i| self.pos_unchecked(i as f64 * dt).dist(&self.pos_unchecked((i + 1) as f64 * dt))).sum()
    }

    /// Uniform in time, with enough samples that no gap exceeds `spacing`
    /// even where the primitive moves fastest.
    fn discretize(&self, spacing: f64) -> Vec<(Point3, f64)> {
        const STEPS: usize = 64;
        let fine = self.duration() / STEPS as f64;
        let peak = (0..=STEPS)
            .map(|i| {
                let t = i as f64 * fine;
                let v = Point3::new(
                    self.polys[0].eval_unchecked(t).1,
                    self.polys[1].eval_unchecked(t).1,
                    self.polys[2].eval_unchecked(t).1,
                );
                v.norm()
            })
            .fold(0.0, f64::max);
        let reach = (peak * self.duration()).max(self.arc_length());
        let n = ((reach * 1.05 / spacing).ceil() as usize).max(1);
        let dt = self.duration() / n as f64;
        (0..=n)
            .map(|i| {
                let t = if i == n { self.duration() } else { i as f64 * dt };
                (self.pos_unchecked(t), t)
            })
            .collect()
    }
}

/// Minimum nearest-obstacle distance over the samples and the resulting status.
pub fn check_collision(prim: &Primitive, index: &KdIndex, cfg: &CostConfig) -> (f64, CollisionStatus) {
    let min_dist = prim.samples.iter().map(|(p, _)| index.nearest_distance(p)).fold(f64::INFINITY, f64::min);
    (min_dist, cfg.status_for(min_dist))
}

/// Collision cost plus goal-angle cost.
pub fn primitive_cost(goal_angle: f64, min_dist: f64, cfg: &CostConfig) -> f64 {
    let collision = if min_dist <= cfg.collision_buffer {
        cfg.c_col()
    } else if min_dist <= cfg.near_buffer {
        cfg.c_ncol() - min_dist
    } else {
        0.0
    };
    collision + goal_angle * cfg.c_gw
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Chosen(usize),
    /// No primitive is free of collision.
    Stuck,
}

/// Lowest cost among non-colliding primitives; ties go to the smaller goal
/// angle, then the lower index.
pub fn select_best(primitives: &[Primitive]) -> Selection {
    primitives
        .iter()
        .enumerate()
        .filter(|(_, p)| p.status != CollisionStatus::Colliding)
        .min_by(|(i, a), (j, b)| {
            a.cost.total_cmp(&b.cost).then(a.goal_angle.abs().total_cmp(&b.goal_angle.abs())).then(i.cmp(j))
        })
        .map_or(Selection::Stuck, |(i, _)| Selection::Chosen(i))
}

/// Endpoints on the horizon sphere around `state`, fanned over `azimuth_fov`
/// centred on the current yaw and repeated for each elevation row. With
/// `yaw_escape` one more level endpoint points straight behind.
pub fn generate_endpoints(
    state: &Pose,
    horizon: f64,
    azimuth_fov: f64,
    n_azimuth: usize,
    elevation_rows: &[f64],
    yaw_escape: bool,
) -> Vec<Point3> {
    let n = n_azimuth.max(1);
    let offsets: Vec<f64> = if azimuth_fov >= core::f64::consts::TAU - 1e-12 {
        (0..n).map(|i| i as f64 * core::f64::consts::TAU / n as f64).collect()
    } else if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -azimuth_fov / 2.0 + azimuth_fov * i as f64 / (n - 1) as f64).collect()
    };
    let at = |az: f64, el: f64| {
        let yaw = state.yaw + az;
        state.position + Point3::new(el.cos() * yaw.cos(), el.cos() * yaw.sin(), el.sin()) * horizon
    };
    let mut out = Vec::with_capacity(offsets.len() * elevation_rows.len() + 1);
    for &el in elevation_rows {
        for &az in &offsets {
            out.push(at(az, el));
        }
    }
    if yaw_escape {
        out.push(at(core::f64::consts::PI, 0.0));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    /// Radius of the barrier around each obstacle point.
    pub radius: f64,
    pub barrier_iters: usize,
    pub newton_iters: usize,
    /// Factor between successive barrier weights after the first nonzero one.
    pub t_growth: f64,
    /// Longest single move, so the trace reads as a path.
    pub max_step: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self { radius: 0.3, barrier_iters: 6, newton_iters: 30, t_growth: 10.0, max_step: 0.2 }
    }
}

/// Interior-point descent from `start` toward `goal` with a log barrier
/// around every obstacle. Returns the trace of accepted iterates, starting
/// with `start`.
pub fn barrier_descent(
    obstacles: &[Point3],
    start: Point3,
    goal: Point3,
    params: &BarrierParams,
) -> Result<Vec<Point3>, PrimitiveError> {
    let r2 = params.radius * params.radius;
    let feasible = |x: &Vector3<f64>| obstacles.iter().all(|o| (x - o.to_vector()).norm_squared() > r2);
    let mut x = start.to_vector();
    if !feasible(&x) {
        return Err(PrimitiveError::InfeasibleStart);
    }
    let g_vec = goal.to_vector();
    let objective = |x: &Vector3<f64>, t: f64| {
        let mut f = 0.5 * t * (x - g_vec).norm_squared();
        for o in obstacles {
            f -= ((x - o.to_vector()).norm_squared() - r2).ln();
        }
        f
    };

    let mut trace = vec![start];
    let mut t = 0.0;
    for _ in 0..params.barrier_iters {
        for _ in 0..params.newton_iters {
            let mut g = (x - g_vec) * t;
            let mut h = Matrix3::identity() * t;
            for o in obstacles {
                let e = x - o.to_vector();
                let s = e.norm_squared() - r2;
                g -= e * (2.0 / s);
                h += Matrix3::identity() * (-2.0 / s) + e * e.transpose() * (4.0 / (s * s));
            }
            if g.norm() < 1e-10 {
                break;
            }
            let mut step = match h.cholesky() {
                Some(c) if h.determinant().abs() > 1e-12 => -c.solve(&g),
                _ => match h.try_inverse() {
                    Some(inv) if h.determinant().abs() > 1e-12 => -(inv * g) * 0.5,
                    _ => -g * 0.5,
                },
            };
            // Indefinite Hessians can point uphill.
            if step.dot(&g) > 0.0 {
                step = -g * 0.5;
            }
            let len = step.norm();
            if len > params.max_step {
                step *= params.max_step / len;
            }
            let f0 = objective(&x, t);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = x + step * alpha;
                if feasible(&cand) && objective(&cand, t) <= f0 {
                    accepted = Some(cand);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(next) = accepted else { break };
            if (next - x).norm() > 1e-12 {
                x = next;
                trace.push(Point3::from_vector(&x));
            } else {
                break;
            }
        }
        t = if t == 0.0 { 1.0 } else { t * params.t_growth };
    }
    Ok(trace)
}
