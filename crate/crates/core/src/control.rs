//! Rolling-mode cascaded controller, angle arithmetic on the circle, a
//! continuous-discrete Kalman filter, thrust-rating identification and step
//! response metrics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cloud::Pose;
use crate::planner::PositionTarget;
#[allow(unused_imports)]
use crate::prelude::Float;
use crate::wrap_angle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("maximum thrust must be positive")]
    NonPositiveThrust,
    #[error("log has no steady hover window")]
    NoHover,
    #[error("measurement covariance is not invertible")]
    SingularR,
    #[error("matrix dimensions do not agree: {0}")]
    Dimension(&'static str),
    #[error("time step must be positive")]
    NonPositiveStep,
}

/// Signed shortest rotation from `b` to `a`, in `(-pi, pi]`.
pub fn angle_dist_s1(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub pos_kp: f64,
    pub yaw_kp: f64,
    pub yaw_kd: f64,
    pub vel_kd: f64,
    pub vel_ki: f64,
    pub pitch_kp: f64,
    pub pitch_kd: f64,
    pub pitch_ki: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            pos_kp: 0.8,
            yaw_kp: 1.5,
            yaw_kd: 0.2,
            vel_kd: 1.2,
            vel_ki: 0.3,
            pitch_kp: 4.0,
            pitch_kd: 0.6,
            pitch_ki: 0.5,
        }
    }
}

/// Vehicle constants the mixer needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingParams {
    pub mass: f64,
    /// Magnitude of the available propeller force.
    pub force: f64,
    /// Bound on both integrator accumulators.
    pub integrator_clamp: f64,
}

impl Default for RollingParams {
    fn default() -> Self {
        Self { mass: 1.5, force: 14.7, integrator_clamp: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    pub chi1: f64,
    pub chi2: f64,
    pub prev_yaw_error: Option<f64>,
}

/// Estimated vehicle state seen by the rolling controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingEstimate {
    pub pose: Pose,
    pub forward_velocity: f64,
    pub pitch_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RollingOutput {
    pub velocity_desired: f64,
    pub yaw_desired: f64,
    pub accel_desired: f64,
    pub pitch_desired: f64,
    pub m_x: f64,
    pub m_y: f64,
    pub m_z: f64,
    /// The mixer asked for more than the available force.
    pub saturated: bool,
}

/// One step of the rolling-mode cascade: position, yaw, velocity, mixer,
/// pitch. The desired position is read in the odometry frame and
/// `desired.velocity.x` is the forward feed-forward.
pub fn rolling_control_step(
    est: &RollingEstimate,
    desired: &PositionTarget,
    gains: &ControllerGains,
    params: &RollingParams,
    cstate: &mut ControllerState,
    dt: f64,
) -> RollingOutput {
    let yaw = est.pose.yaw;
    let ex_w = desired.position.x - est.pose.position.x;
    let ey_w = desired.position.y - est.pose.position.y;
    // World error expressed in the rolling frame.
    let (s, c) = yaw.sin_cos();
    let ex_r = c * ex_w + s * ey_w;
    let velocity_desired = gains.pos_kp * ex_r;

    let yaw_desired = if ex_w.hypot(ey_w) > 1e-9 { ey_w.atan2(ex_w) } else { yaw };
    let e_psi = angle_dist_s1(yaw_desired, yaw);
    let e_psi_dot = match cstate.prev_yaw_error {
        Some(prev) if dt > 0.0 => angle_dist_s1(e_psi, prev) / dt,
        _ => 0.0,
    };
    cstate.prev_yaw_error = Some(e_psi);
    let m_z_r = gains.yaw_kp * e_psi + gains.yaw_kd * e_psi_dot;

    let e_v = velocity_desired + desired.velocity.x - est.forward_velocity;
    let limit = params.integrator_clamp;
    let chi1_next = (cstate.chi1 + e_v * dt).clamp(-limit, limit);
    let a_try = gains.vel_kd * e_v + gains.vel_ki * chi1_next;
    let mf = params.mass * params.force;
    let saturated = a_try.abs() > mf;
    // Conditional integration: hold the accumulator while saturated.
    if !saturated {
        cstate.chi1 = chi1_next;
    }
    let accel_desired = gains.vel_kd * e_v + gains.vel_ki * cstate.chi1;
    let pitch_desired = (accel_desired / mf).clamp(-1.0, 1.0).asin();

    let pitch = est.pose.pitch;
    let m_x = pitch.sin() * m_z_r;
    let m_z = pitch.cos() * m_z_r;

    let e_theta = angle_dist_s1(pitch_desired, pitch);
    if !saturated {
        cstate.chi2 = (cstate.chi2 + e_theta * dt).clamp(-limit, limit);
    }
    let m_y = gains.pitch_kp * e_theta - gains.pitch_kd * est.pitch_rate + gains.pitch_ki * cstate.chi2;

    RollingOutput { velocity_desired, yaw_desired, accel_desired, pitch_desired, m_x, m_y, m_z, saturated }
}

/// Fraction of maximum thrust needed to hover.
pub fn thrust_rating(mass: f64, g: f64, t_max: f64) -> Result<f64, ControlError> {
    if t_max.is_nan() || t_max <= 0.0 {
        return Err(ControlError::NonPositiveThrust);
    }
    Ok(mass * g / t_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverSample {
    pub t: f64,
    pub thrust_fraction: f64,
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverParams {
    /// Largest climb rate still counted as steady.
    pub rate_eps: f64,
    /// Steady stretches on or near the ground are not hovering.
    pub min_altitude: f64,
    pub min_duration: f64,
}

impl Default for HoverParams {
    fn default() -> Self {
        Self { rate_eps: 0.05, min_altitude: 0.2, min_duration: 0.5 }
    }
}

/// Mean thrust fraction over the longest stretch of steady altitude.
pub fn extract_hover_rating(log: &[HoverSample], params: &HoverParams) -> Result<f64, ControlError> {
    let steady = |a: &HoverSample, b: &HoverSample| {
        let dt = b.t - a.t;
        dt > 0.0
            && ((b.altitude - a.altitude) / dt).abs() < params.rate_eps
            && a.altitude > params.min_altitude
            && b.altitude > params.min_altitude
    };
    let mut best: Option<(f64, usize, usize)> = None;
    let mut start = None;
    for k in 0..log.len().saturating_sub(1) {
        if steady(&log[k], &log[k + 1]) {
            let s = *start.get_or_insert(k);
            let dur = log[k + 1].t - log[s].t;
            if best.is_none_or(|(d, _, _)| dur > d) {
                best = Some((dur, s, k + 1));
            }
        } else {
            start = None;
        }
    }
    match best {
        Some((dur, s, e)) if dur >= params.min_duration => {
            let window = &log[s..=e];
            Ok(window.iter().map(|h| h.thrust_fraction).sum::<f64>() / window.len() as f64)
        }
        _ => Err(ControlError::NoHover),
    }
}

/// Linear model with a continuous Riccati covariance update.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x_hat: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EkfSystem {
    pub fn gain(&self) -> Result<DMatrix<f64>, ControlError> {
        let r_inv = self.r.clone().try_inverse().ok_or(ControlError::SingularR)?;
        Ok(&self.cov * self.c.transpose() * r_inv)
    }

    fn check(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<(), ControlError> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.cov.shape() != (n, n) || self.x_hat.len() != n {
            return Err(ControlError::Dimension("state"));
        }
        if self.b.nrows() != n || self.b.ncols() != u.len() {
            return Err(ControlError::Dimension("input"));
        }
        if self.c.ncols() != n || self.c.nrows() != y.len() || self.r.shape() != (y.len(), y.len()) {
            return Err(ControlError::Dimension("measurement"));
        }
        if self.b_w.nrows() != n || self.q.shape() != (self.b_w.ncols(), self.b_w.ncols()) {
            return Err(ControlError::Dimension("disturbance"));
        }
        Ok(())
    }

    /// Integrates the estimate and covariance over `dt` with RK4, holding
    /// `u` and `y` constant, then restores symmetry and positive
    /// semi-definiteness of the covariance.
    pub fn step(&mut self, u: &DVector<f64>, y: &DVector<f64>, dt: f64) -> Result<(), ControlError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(ControlError::NonPositiveStep);
        }
        self.check(u, y)?;
        let r_inv = self.r.clone().try_inverse().ok_or(ControlError::SingularR)?;
        let ct_rinv = self.c.transpose() * &r_inv;
        let diffusion = &self.b_w * &self.q * self.b_w.transpose();
        let bu = &self.b * u;

        let deriv = |x: &DVector<f64>, p: &DMatrix<f64>| {
            let l = p * &ct_rinv;
            let dx = &self.a * x + &bu + &l * (y - &self.c * x);
            let dp = &self.a * p + p * self.a.transpose() + &diffusion - p * &ct_rinv * &self.c * p;
            (dx, dp)
        };

        let (x0, p0) = (self.x_hat.clone(), self.cov.clone());
        let (k1x, k1p) = deriv(&x0, &p0);
        let (k2x, k2p) = deriv(&(&x0 + &k1x * (dt / 2.0)), &(&p0 + &k1p * (dt / 2.0)));
        let (k3x, k3p) = deriv(&(&x0 + &k2x * (dt / 2.0)), &(&p0 + &k2p * (dt / 2.0)));
        let (k4x, k4p) = deriv(&(&x0 + &k3x * dt), &(&p0 + &k3p * dt));
        self.x_hat = &x0 + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (dt / 6.0);
        let p = &p0 + (k1p + &k2p * 2.0 + &k3p * 2.0 + k4p) * (dt / 6.0);
        self.cov = project_psd(&p);
        Ok(())
    }
}

/// `(P + P^T)/2` with negative eigenvalues raised to zero.
fn project_psd(p: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&floored) * v.transpose();
    (&out + out.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Peak excursion past the setpoint, percent of the step size.
    pub overshoot_pct: f64,
    /// Time after the first sample until the response stays within 2% of the
    /// step; `+inf` if it never does.
    pub settling_time: f64,
    /// Number of times the response crosses the setpoint.
    pub oscillations: usize,
}

pub fn step_response_metrics(trace: &[(f64, f64)], setpoint: f64) -> Option<StepMetrics> {
    let (t0, y0) = *trace.first()?;
    let step = setpoint - y0;
    let scale = if step.abs() > 1e-12 { step.abs() } else { setpoint.abs().max(1.0) };
    let sign = if step < 0.0 { -1.0 } else { 1.0 };

    let peak = trace.iter().map(|&(_, y)| sign * (y - setpoint)).fold(0.0, f64::max);
    let overshoot_pct = if step.abs() > 1e-12 { 100.0 * peak / scale } else { 0.0 };

    let band = 0.02 * scale;
    let t_end = trace[trace.len() - 1].0;
    let settling_time = match trace.iter().rposition(|&(_, y)| (y - setpoint).abs() > band) {
        None => 0.0,
        Some(last) if last + 1 < trace.len() => {
            let t_in = trace[last + 1].0;
            // A response that only just touched the band at the end of the
            // record has not been shown to stay there.
            if t_end - t_in >= 0.1 * (t_end - t0) {
                t_in - t0
            } else {
                f64::INFINITY
            }
        }
        Some(_) => f64::INFINITY,
    };

    let mut oscillations = 0;
    let mut prev_side = 0.0;
    for &(_, y) in trace {
        let d = y - setpoint;
        if d == 0.0 {
            continue;
        }
        let side = d.signum();
        if prev_side != 0.0 && side != prev_side {
            oscillations += 1;
        }
        prev_side = side;
    }
    Some(StepMetrics { overshoot_pct, settling_time, oscillations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use crate::planner::Mobility;
    use crate::prelude::*;
    use core::f64::consts::PI;
    use proptest::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s1_distance() {
        assert!((angle_dist_s1(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert!((angle_dist_s1(3.1, -3.1) - (6.2 - 2.0 * PI)).abs() < 1e-12);
        assert!((angle_dist_s1(3.1, -3.1) + 0.0832).abs() < 1e-4);
        assert_eq!(angle_dist_s1(1.7, 1.7), 0.0);
    }

    fn est(x: f64, y: f64, yaw: f64, v: f64) -> RollingEstimate {
        RollingEstimate { pose: Pose::planar(x, y, 0.15, yaw), forward_velocity: v, pitch_rate: 0.0 }
    }

    fn goal(x: f64, y: f64) -> PositionTarget {
        PositionTarget::hold(Mobility::Ground, Point3::new(x, y, 0.15), 0.0)
    }

    #[test]
    fn zero_error_gives_zero_output() {
        let mut cs = ControllerState::default();
        let out = rolling_control_step(
            &est(1.0, 2.0, 0.3, 0.0),
            &goal(1.0, 2.0),
            &ControllerGains::default(),
            &RollingParams::default(),
            &mut cs,
            0.02,
        );
        assert_eq!((out.m_x, out.m_y, out.m_z, out.pitch_desired), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn goal_ahead_pitches_forward() {
        let mut cs = ControllerState::default();
        let out = rolling_control_step(
            &est(0.0, 0.0, 0.0, 0.0),
            &goal(2.0, 0.0),
            &ControllerGains::default(),
            &RollingParams::default(),
            &mut cs,
            0.02,
        );
        assert!(out.pitch_desired > 0.0);
        assert_eq!(out.m_z, 0.0);
        assert!(!out.saturated);
    }

    #[test]
    fn saturation_is_flagged() {
        let mut cs = ControllerState::default();
        let params = RollingParams { mass: 0.1, force: 0.1, ..RollingParams::default() };
        let out = rolling_control_step(
            &est(0.0, 0.0, 0.0, 0.0),
            &goal(50.0, 0.0),
            &ControllerGains::default(),
            &params,
            &mut cs,
            0.02,
        );
        assert!(out.saturated);
        assert_eq!(out.pitch_desired, PI / 2.0);
        assert_eq!(cs.chi1, 0.0);
    }

    /// Hand-coded evaluation of the cascade, written out line by line.
    #[test]
    fn ten_step_trace_matches_hand_evaluation() {
        let g = ControllerGains::default();
        let p = RollingParams::default();
        let mut cs = ControllerState::default();
        let (mut chi1, mut chi2, mut prev_e_psi): (f64, f64, Option<f64>) = (0.0, 0.0, None);
        let dt = 0.05;
        for k in 0..10 {
            let kf = k as f64;
            let (x, y, yaw, v, pitch, prate) = (0.1 * kf, 0.02 * kf, 0.05 * kf, 0.2 + 0.01 * kf, 0.01 * kf, -0.02);
            let e = RollingEstimate {
                pose: Pose::new(Point3::new(x, y, 0.15), 0.0, pitch, yaw),
                forward_velocity: v,
                pitch_rate: prate,
            };
            let mut target = goal(3.0, 1.0);
            target.velocity.x = 0.1;
            let out = rolling_control_step(&e, &target, &g, &p, &mut cs, dt);

            let (ewx, ewy) = (3.0 - x, 1.0 - y);
            let erx = yaw.cos() * ewx + yaw.sin() * ewy;
            let vd = g.pos_kp * erx;
            let psi_d = ewy.atan2(ewx);
            let mut e_psi = psi_d - yaw;
            while e_psi > PI {
                e_psi -= 2.0 * PI;
            }
            while e_psi <= -PI {
                e_psi += 2.0 * PI;
            }
            let e_psi_dot = prev_e_psi.map_or(0.0, |prev| (e_psi - prev) / dt);
            prev_e_psi = Some(e_psi);
            let mz = g.yaw_kp * e_psi + g.yaw_kd * e_psi_dot;
            let edot = vd + 0.1 - v;
            chi1 += edot * dt;
            let ax = g.vel_kd * edot + g.vel_ki * chi1;
            let theta_d = (ax / (p.mass * p.force)).asin();
            let e_theta = theta_d - pitch;
            chi2 += e_theta * dt;
            let my = g.pitch_kp * e_theta - g.pitch_kd * prate + g.pitch_ki * chi2;

            assert!((out.velocity_desired - vd).abs() < 1e-12);
            assert!((out.pitch_desired - theta_d).abs() < 1e-12);
            assert!((out.m_x - pitch.sin() * mz).abs() < 1e-12);
            assert!((out.m_z - pitch.cos() * mz).abs() < 1e-12);
            assert!((out.m_y - my).abs() < 1e-12);
        }
    }

    #[test]
    fn thrust_rating_formula() {
        let tr = thrust_rating(1.5, 9.81, 35.0).unwrap();
        assert!((tr - 1.5 * 9.81 / 35.0).abs() < 1e-15);
        assert!((tr - 0.4204).abs() < 1e-4);
        assert_eq!(thrust_rating(1.0, 9.81, 0.0), Err(ControlError::NonPositiveThrust));
    }

    #[test]
    fn climb_only_log_has_no_hover() {
        let log: Vec<HoverSample> = (0..100)
            .map(|i| HoverSample { t: i as f64 * 0.1, thrust_fraction: 0.7, altitude: i as f64 * 0.02 })
            .collect();
        assert_eq!(extract_hover_rating(&log, &HoverParams::default()), Err(ControlError::NoHover));
    }

    #[test]
    fn ekf_scalar_riccati_steady_state() {
        let (q, r) = (0.4, 0.1);
        let mut sys = EkfSystem {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::zeros(1, 1),
            b_w: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            q: DMatrix::from_element(1, 1, q),
            r: DMatrix::from_element(1, 1, r),
            x_hat: DVector::zeros(1),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let u = DVector::zeros(1);
        let y = DVector::zeros(1);
        for _ in 0..2000 {
            sys.step(&u, &y, 0.01).unwrap();
        }
        // Ricatti: 0 = q - X^2 / r.
        let x_ss = (q * r).sqrt();
        let l_ss = (q / r).sqrt();
        assert!((sys.cov[(0, 0)] - x_ss).abs() / x_ss < 0.01);
        assert!((sys.gain().unwrap()[(0, 0)] - l_ss).abs() / l_ss < 0.01);
    }

    fn cv_system() -> EkfSystem {
        EkfSystem {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::zeros(2, 1),
            b_w: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            q: DMatrix::from_element(1, 1, 0.01),
            r: DMatrix::from_element(1, 1, 0.25),
            x_hat: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        }
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    #[test]
    fn noiseless_model_tracks_truth() {
        let mut sys = cv_system();
        sys.x_hat = DVector::from_vec(vec![0.0, 0.5]);
        let u = DVector::zeros(1);
        for k in 0..500 {
            let t = (k + 1) as f64 * 0.02;
            let y = DVector::from_element(1, 0.5 * t);
            sys.step(&u, &y, 0.02).unwrap();
        }
        assert!((sys.x_hat[0] - 0.5 * 10.0).abs() < 0.02);
        assert!((sys.x_hat[1] - 0.5).abs() < 0.02);
    }

    #[test]
    fn filtered_position_beats_raw_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sys = cv_system();
        let u = DVector::zeros(1);
        let (mut pos, vel, dt) = (0.0, 0.8, 0.02);
        let (mut err_raw, mut err_est) = (0.0, 0.0);
        for _ in 0..1000 {
            pos += vel * dt;
            let meas = pos + 0.5 * gauss(&mut rng);
            sys.step(&u, &DVector::from_element(1, meas), dt).unwrap();
            err_raw += (meas - pos) * (meas - pos);
            err_est += (sys.x_hat[0] - pos) * (sys.x_hat[0] - pos);
        }
        assert!(err_est.sqrt() < err_raw.sqrt());
    }

    #[test]
    fn ekf_rejects_bad_input() {
        let mut sys = cv_system();
        assert_eq!(sys.step(&DVector::zeros(1), &DVector::zeros(1), 0.0), Err(ControlError::NonPositiveStep));
        assert!(sys.step(&DVector::zeros(2), &DVector::zeros(1), 0.1).is_err());
        sys.r = DMatrix::zeros(1, 1);
        assert_eq!(sys.step(&DVector::zeros(1), &DVector::zeros(1), 0.1), Err(ControlError::SingularR));
    }

    fn second_order(zeta: f64, wn: f64, t_end: f64, n: usize) -> Vec<(f64, f64)> {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let phi = zeta.acos();
        (0..=n)
            .map(|i| {
                let t = t_end * i as f64 / n as f64;
                (t, 1.0 - (-zeta * wn * t).exp() / (1.0 - zeta * zeta).sqrt() * (wd * t + phi).sin())
            })
            .collect()
    }

    #[test]
    fn step_metric_cases() {
        let m = step_response_metrics(&second_order(0.5, 2.0, 20.0, 20000), 1.0).unwrap();
        let want = 100.0 * (-PI * 0.5 / (1.0f64 - 0.25).sqrt()).exp();
        assert!((m.overshoot_pct - want).abs() < 0.01, "{}", m.overshoot_pct);
        assert!((m.overshoot_pct - 16.3).abs() < 0.05);
        assert!(m.settling_time.is_finite());

        let crit: Vec<(f64, f64)> = (0..=2000)
            .map(|i| {
                let t = i as f64 * 0.01;
                (t, 1.0 - (1.0 + 2.0 * t) * (-2.0 * t).exp())
            })
            .collect();
        let m = step_response_metrics(&crit, 1.0).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
        assert_eq!(m.oscillations, 0);

        let sine: Vec<(f64, f64)> =
            (0..=1000).map(|i| (i as f64 * 0.01, 1.0 + 0.5 * (i as f64 * 0.05).sin())).collect();
        let m = step_response_metrics(&sine, 1.0).unwrap();
        assert_eq!(m.settling_time, f64::INFINITY);
        assert!(m.oscillations > 3);
    }

    proptest! {
        #[test]
        fn s1_is_antisymmetric_off_the_seam(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let d = angle_dist_s1(a, b);
            prop_assert!(d > -PI && d <= PI);
            if (d.abs() - PI).abs() > 1e-9 {
                prop_assert!((d + angle_dist_s1(b, a)).abs() < 1e-9);
            }
        }

        #[test]
        fn controller_is_yaw_equivariant(
            x in -5.0..5.0f64, y in -5.0..5.0f64, yaw in -3.0..3.0f64,
            gx in -5.0..5.0f64, gy in -5.0..5.0f64, v in -1.0..1.0f64, rot in -3.0..3.0f64,
        ) {
            let (s, c) = rot.sin_cos();
            let r = |px: f64, py: f64| (c * px - s * py, s * px + c * py);
            let gains = ControllerGains::default();
            let params = RollingParams::default();
            let mut c1 = ControllerState::default();
            let mut c2 = ControllerState::default();
            let a = rolling_control_step(&est(x, y, yaw, v), &goal(gx, gy), &gains, &params, &mut c1, 0.02);
            let (rx, ry) = r(x, y);
            let (rgx, rgy) = r(gx, gy);
            let b = rolling_control_step(&est(rx, ry, yaw + rot, v), &goal(rgx, rgy), &gains, &params, &mut c2, 0.02);
            prop_assert!((a.velocity_desired - b.velocity_desired).abs() < 1e-9);
            prop_assert!((a.m_y - b.m_y).abs() < 1e-9);
            prop_assert!((a.m_z - b.m_z).abs() < 1e-9);
            prop_assert!((a.pitch_desired - b.pitch_desired).abs() < 1e-9);
        }

        #[test]
        fn integrators_stay_clamped(gx in 1.0..100.0f64, steps in 10usize..400) {
            let mut cs = ControllerState::default();
            let params = RollingParams::default();
            for _ in 0..steps {
                rolling_control_step(&est(0.0, 0.0, 0.0, 0.0), &goal(gx, 0.0), &ControllerGains::default(), &params, &mut cs, 0.05);
                prop_assert!(cs.chi1.abs() <= params.integrator_clamp);
                prop_assert!(cs.chi2.abs() <= params.integrator_clamp);
            }
        }

        #[test]
        fn covariance_stays_symmetric_psd(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sys = cv_system();
            sys.a = DMatrix::from_row_slice(2, 2, &[rng.random_range(-1.0..0.5), 1.0, rng.random_range(-1.0..0.0), rng.random_range(-1.0..0.0)]);
            for _ in 0..200 {
                let dt = rng.random_range(0.001..0.1);
                let y = DVector::from_element(1, rng.random_range(-3.0..3.0));
                sys.step(&DVector::zeros(1), &y, dt).unwrap();
                let p = &sys.cov;
                prop_assert!((p[(0, 1)] - p[(1, 0)]).abs() < 1e-12);
                let eig = p.clone().symmetric_eigen();
                prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
            }
        }
    }
}
